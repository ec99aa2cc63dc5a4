"""Partially directed graphs and the graph algebra used by the federated engine.

Every graph assigns one mark per unordered node pair: absent, undirected, or
directed one way. Internally a graph is a boolean matrix ``m`` where
``m[i, j]`` says "the mark on {i, j} permits the orientation i -> j", so a
directed edge i -> j has ``m[i, j] and not m[j, i]`` and an undirected edge
has both bits set. All operations are pure; graphs are immutable once built.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class InconsistentPdagError(ValueError):
    """Raised when orientation closure produces a directed cycle."""


class Mark(enum.Enum):
    ABSENT = "absent"
    UNDIRECTED = "undirected"
    FORWARD = "forward"  # i -> j for the queried ordered pair (i, j)
    BACKWARD = "backward"


def _default_labels(d: int) -> tuple[str, ...]:
    return tuple(f"V{k}" for k in range(1, d + 1))


class PDGraph:
    """A partially directed graph over nodes 0..d-1."""

    __slots__ = ("_m", "_labels")

    def __init__(self, matrix: np.ndarray, labels: Sequence[str] | None = None):
        m = np.array(matrix, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("adjacency matrix must be square")
        if m.diagonal().any():
            raise ValueError("self-loops are not allowed")
        m.setflags(write=False)
        self._m = m
        if labels is None:
            labels = _default_labels(m.shape[0])
        labels = tuple(str(s) for s in labels)
        if len(labels) != m.shape[0]:
            raise ValueError("node count differs from label count")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate node labels")
        self._labels = labels

    # -- construction helpers -------------------------------------------------

    @classmethod
    def empty(cls, d: int, labels: Sequence[str] | None = None) -> "PDGraph":
        return cls(np.zeros((d, d), dtype=bool), labels)

    @classmethod
    def from_edges(
        cls,
        d: int,
        directed: Iterable[tuple[int, int]] = (),
        undirected: Iterable[tuple[int, int]] = (),
        labels: Sequence[str] | None = None,
    ) -> "PDGraph":
        m = np.zeros((d, d), dtype=bool)
        for i, j in directed:
            m[i, j] = True
        for i, j in undirected:
            m[i, j] = True
            m[j, i] = True
        return cls(m, labels)

    def _replace(self, matrix: np.ndarray) -> "PDGraph":
        return PDGraph(matrix, self._labels)

    # -- basic queries --------------------------------------------------------

    @property
    def node_count(self) -> int:
        return self._m.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def mark(self, i: int, j: int) -> Mark:
        fwd, bwd = self._m[i, j], self._m[j, i]
        if fwd and bwd:
            return Mark.UNDIRECTED
        if fwd:
            return Mark.FORWARD
        if bwd:
            return Mark.BACKWARD
        return Mark.ABSENT

    def adjacent(self, i: int, j: int) -> bool:
        return bool(self._m[i, j] or self._m[j, i])

    def has_directed(self, i: int, j: int) -> bool:
        return bool(self._m[i, j] and not self._m[j, i])

    def has_undirected(self, i: int, j: int) -> bool:
        return bool(self._m[i, j] and self._m[j, i])

    def parents(self, i: int) -> tuple[int, ...]:
        col = self._m[:, i] & ~self._m[i, :]
        return tuple(np.flatnonzero(col).tolist())

    def children(self, i: int) -> tuple[int, ...]:
        row = self._m[i, :] & ~self._m[:, i]
        return tuple(np.flatnonzero(row).tolist())

    def undirected_neighbors(self, i: int) -> tuple[int, ...]:
        both = self._m[i, :] & self._m[:, i]
        return tuple(np.flatnonzero(both).tolist())

    def neighborhood(self, i: int) -> tuple[int, ...]:
        any_mark = self._m[i, :] | self._m[:, i]
        return tuple(np.flatnonzero(any_mark).tolist())

    def directed_edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self._m & ~self._m.T)
        return list(zip(rows.tolist(), cols.tolist()))

    def undirected_edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self._m & self._m.T))
        return list(zip(rows.tolist(), cols.tolist()))

    def edge_count(self) -> int:
        return len(self.directed_edges()) + len(self.undirected_edges())

    # -- functional updates ----------------------------------------------------

    def orient(self, edges: Iterable[tuple[int, int]]) -> "PDGraph":
        """Return a copy with each undirected {i, j} directed as i -> j.

        Directing an edge that already carries the requested direction is a
        no-op; asking to reverse an existing directed edge is an error.
        """
        m = self._m.copy()
        for i, j in edges:
            if m[i, j] and m[j, i]:
                m[j, i] = False
            elif m[i, j] and not m[j, i]:
                continue
            else:
                raise ValueError(f"cannot orient {i}->{j}: no such undirected edge")
        return self._replace(m)

    def drop_pairs(self, pairs: Iterable[tuple[int, int]]) -> "PDGraph":
        m = self._m.copy()
        for i, j in pairs:
            m[i, j] = False
            m[j, i] = False
        return self._replace(m)

    # -- protocol --------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PDGraph):
            return NotImplemented
        return self._m.shape == other._m.shape and bool(np.array_equal(self._m, other._m))

    def __hash__(self) -> int:
        return hash((self._m.shape[0], self._m.tobytes()))

    def key(self) -> bytes:
        """Canonical byte key, usable as a dict key for memoisation."""
        return self._m.tobytes()

    def __repr__(self) -> str:
        parts = [f"{self._labels[i]}->{self._labels[j]}" for i, j in self.directed_edges()]
        parts += [f"{self._labels[i]}--{self._labels[j]}" for i, j in self.undirected_edges()]
        return f"PDGraph(d={self.node_count}, [{', '.join(sorted(parts))}])"


def _directed_part_acyclic(m: np.ndarray) -> bool:
    return _topological_order(m & ~m.T) is not None


def _topological_order(dir_m: np.ndarray) -> list[int] | None:
    """Kahn's algorithm on a purely directed boolean matrix; None on a cycle."""
    d = dir_m.shape[0]
    indeg = dir_m.sum(axis=0).astype(int)
    ready = sorted(np.flatnonzero(indeg == 0).tolist())
    order: list[int] = []
    indeg = indeg.copy()
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in np.flatnonzero(dir_m[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
        ready.sort()
    return order if len(order) == d else None


class Dag(PDGraph):
    """A fully directed acyclic graph."""

    def __init__(self, matrix: np.ndarray, labels: Sequence[str] | None = None):
        super().__init__(matrix, labels)
        if (self._m & self._m.T).any():
            raise ValueError("a DAG cannot contain undirected edges")
        if _topological_order(self._m) is None:
            raise ValueError("directed cycle")

    @classmethod
    def from_edges(cls, d, directed=(), undirected=(), labels=None) -> "Dag":  # type: ignore[override]
        if tuple(undirected):
            raise ValueError("a DAG cannot contain undirected edges")
        m = np.zeros((d, d), dtype=bool)
        for i, j in directed:
            m[i, j] = True
        return cls(m, labels)

    def topological_order(self) -> list[int]:
        order = _topological_order(self._m)
        assert order is not None
        return order

    def _replace(self, matrix: np.ndarray) -> "Dag":
        return Dag(matrix, self._labels)


class Cpdag(PDGraph):
    """A completed PDAG: the canonical representative of a Markov class.

    Validates that the marks are exactly those recovered from one of its own
    consistent extensions, i.e. the graph is a fixed point of v-structure
    orientation plus Meek closure.
    """

    def __init__(self, matrix: np.ndarray, labels: Sequence[str] | None = None):
        super().__init__(matrix, labels)
        ext = consistent_extension(self)
        if ext is None or not np.array_equal(cpdag_of(ext)._m, self._m):
            raise ValueError("not a completed PDAG")

    @classmethod
    def _trusted(cls, matrix: np.ndarray, labels: Sequence[str] | None = None) -> "Cpdag":
        """Skip revalidation for matrices produced by cpdag_of itself."""
        obj = object.__new__(cls)
        m = np.array(matrix, dtype=bool)
        m.setflags(write=False)
        obj._m = m
        obj._labels = tuple(labels) if labels is not None else _default_labels(m.shape[0])
        return obj

    def _replace(self, matrix: np.ndarray) -> "PDGraph":
        # Edits generally leave completed-PDAG space, so fall back to PDGraph.
        return PDGraph(matrix, self._labels)


# -- intervention families -----------------------------------------------------


@dataclass(frozen=True)
class ClientTargets:
    """Intervention targets of one client.

    ``structural`` maps a target node to the tuple of parent nodes whose
    incoming edges are removed. ``parametric`` lists nodes whose mechanism is
    overridden without touching the graph.
    """

    structural: tuple[tuple[int, tuple[int, ...]], ...] = ()
    parametric: tuple[int, ...] = ()

    @classmethod
    def of(
        cls,
        structural: Mapping[int, Iterable[int]] | None = None,
        parametric: Iterable[int] = (),
    ) -> "ClientTargets":
        items = tuple(
            (int(t), tuple(sorted(int(p) for p in ps)))
            for t, ps in sorted((structural or {}).items())
        )
        return cls(structural=items, parametric=tuple(sorted(set(int(p) for p in parametric))))

    def structural_map(self) -> dict[int, tuple[int, ...]]:
        return {t: ps for t, ps in self.structural}

    @property
    def targets(self) -> tuple[int, ...]:
        return tuple(sorted({t for t, _ in self.structural} | set(self.parametric)))

    @property
    def is_observational(self) -> bool:
        return not self.structural and not self.parametric


@dataclass(frozen=True)
class InterventionFamily:
    """Per-client intervention targets for a federation of K clients."""

    clients: tuple[ClientTargets, ...]

    def __len__(self) -> int:
        return len(self.clients)

    def __iter__(self) -> Iterator[ClientTargets]:
        return iter(self.clients)

    @property
    def has_observational_client(self) -> bool:
        return any(c.is_observational for c in self.clients)

    def validate_for(self, dag: Dag, require_observational: bool = True) -> None:
        d = dag.node_count
        for k, client in enumerate(self.clients):
            for t, ps in client.structural:
                if not 0 <= t < d:
                    raise ValueError(f"client {k}: target {t} out of range")
                for p in ps:
                    if not dag.has_directed(p, t):
                        raise ValueError(f"client {k}: not an incoming edge: {p}->{t}")
            for t in client.parametric:
                if not 0 <= t < d:
                    raise ValueError(f"client {k}: target {t} out of range")
        if require_observational and not self.has_observational_client:
            raise ValueError("no observational client in the family")


# -- graph algebra ---------------------------------------------------------


def skeleton(g: PDGraph) -> PDGraph:
    """The same adjacencies with every mark undirected."""
    return PDGraph(g._m | g._m.T, g.labels)


def v_structures(g: PDGraph) -> frozenset[tuple[int, int, int]]:
    """Unshielded colliders (a, c, b) with a -> c <- b, a < b, {a, b} absent."""
    m = g._m
    directed = m & ~m.T
    adj = m | m.T
    out = set()
    for c in range(g.node_count):
        pars = np.flatnonzero(directed[:, c])
        for x in range(len(pars)):
            for y in range(x + 1, len(pars)):
                a, b = int(pars[x]), int(pars[y])
                if not adj[a, b]:
                    out.add((a, c, b))
    return frozenset(out)


def intersect(g1: PDGraph, g2: PDGraph) -> PDGraph:
    """Pairwise mark intersection.

    A pair absent on either side is absent; agreeing marks are kept; a
    directed mark meeting an undirected one keeps the direction; two opposite
    directions collapse to undirected. Commutative by construction.
    """
    if g1.node_count != g2.node_count:
        raise ValueError("node count differs")
    a, b = g1._m, g2._m
    conflict = (a & ~a.T) & (b.T & ~b)
    m = (a & b) | conflict | conflict.T
    return PDGraph(m, g1.labels)


def includes(sup: PDGraph, sub: PDGraph) -> bool:
    """Whether every edge of ``sub`` is included in ``sup``.

    A directed i -> j is included in a directed i -> j or an undirected i - j;
    an undirected edge is included in any present mark on the same pair.
    """
    if sup.node_count != sub.node_count:
        raise ValueError("node count differs")
    a, b = sub._m, sup._m
    dir_sub = a & ~a.T
    und_sub = a & a.T
    if (dir_sub & ~b).any():
        return False
    if (und_sub & ~(b | b.T)).any():
        return False
    return True


def mutilate(dag: Dag, structural: Mapping[int, Iterable[int]] | ClientTargets) -> Dag:
    """Remove the listed incoming edges of each structural target."""
    if isinstance(structural, ClientTargets):
        structural = structural.structural_map()
    m = dag._m.copy()
    for t, ps in structural.items():
        for p in ps:
            if not (m[p, t] and not m[t, p]):
                raise ValueError(f"not an incoming edge: {p}->{t}")
            m[p, t] = False
    return Dag(m, dag.labels)


def complete_pdag(g: PDGraph) -> PDGraph:
    """Meek-rule closure: orient every undirected edge whose direction is
    forced by the existing directed marks, to a fixed point.

    Rules, for an undirected a - b:
      R1: some x -> a with x, b non-adjacent        => a -> b
      R2: a directed path a -> x -> b               => a -> b
      R3: non-adjacent x, y with a - x, a - y and x -> b, y -> b  => a -> b
      R4: x, y with a - x, x -> y, y -> b, a adjacent to y, x, b non-adjacent
                                                    => a -> b
    Raises InconsistentPdagError if the input or the closure carries a
    directed cycle. Input directions are never reversed.
    """
    m = g._m.copy()
    if not _directed_part_acyclic(m):
        raise InconsistentPdagError("inconsistent PDAG")
    changed = True
    while changed:
        changed = False
        directed = m & ~m.T
        und = m & m.T
        adj = m | m.T
        nonadj = ~adj
        np.fill_diagonal(nonadj, False)
        for a, b in np.argwhere(und):
            a, b = int(a), int(b)
            if not (m[a, b] and m[b, a]):
                continue  # already oriented earlier in this sweep
            # R1: x -> a, x not adjacent to b
            if (directed[:, a] & nonadj[:, b]).any():
                m[b, a] = False
                changed = True
                continue
            # R2: a -> x -> b
            if (directed[a, :] & directed[:, b]).any():
                m[b, a] = False
                changed = True
                continue
            # R3: a - x, a - y, x -> b, y -> b, x and y non-adjacent
            cand = und[a, :] & directed[:, b]
            idx = np.flatnonzero(cand)
            if len(idx) >= 2 and nonadj[np.ix_(idx, idx)].any():
                m[b, a] = False
                changed = True
                continue
            # R4: a - x, x -> y, y -> b, a adjacent to y, x and b non-adjacent
            xs = np.flatnonzero(und[a, :] & nonadj[:, b])
            if len(xs):
                ys = np.flatnonzero(directed[:, b] & adj[a, :])
                if len(ys) and directed[np.ix_(xs, ys)].any():
                    m[b, a] = False
                    changed = True
    if not _directed_part_acyclic(m):
        raise InconsistentPdagError("inconsistent PDAG")
    return PDGraph(m, g.labels)


def consistent_extension(g: PDGraph) -> Dag | None:
    """A DAG with the same skeleton that preserves every directed mark and
    creates no v-structure absent from the input; None when impossible.

    Classic peeling procedure: repeatedly remove a node with no outgoing
    directed edge whose undirected neighbours are adjacent to all of its
    other neighbours, orienting its undirected edges inward. Deterministic
    via lowest-index choice.
    """
    m = g._m.copy()
    if not _directed_part_acyclic(m):
        return None
    out = g._m.copy()
    alive = np.ones(g.node_count, dtype=bool)
    remaining = g.node_count
    while remaining:
        pick = -1
        live = np.flatnonzero(alive)
        for x in live:
            directed_out = (m[x, :] & ~m[:, x]) & alive
            if directed_out.any():
                continue
            und = m[x, :] & m[:, x] & alive
            nbr = (m[x, :] | m[:, x]) & alive
            ok = True
            for y in np.flatnonzero(und):
                others = nbr.copy()
                others[y] = False
                if (others & ~(m[y, :] | m[:, y])).any():
                    ok = False
                    break
            if ok:
                pick = int(x)
                break
        if pick < 0:
            return None
        for y in np.flatnonzero(m[pick, :] & m[:, pick] & alive):
            out[pick, y] = False  # orient y -> pick
        alive[pick] = False
        m[pick, :] = False
        m[:, pick] = False
        remaining -= 1
    return Dag(out, g.labels)


def cpdag_of(dag: Dag) -> Cpdag:
    """The completed PDAG of the DAG's Markov equivalence class: keep
    v-structure edges directed, undirect the rest, close under Meek rules."""
    d = dag.node_count
    m = dag._m | dag._m.T
    keep = np.zeros((d, d), dtype=bool)
    for a, c, b in v_structures(dag):
        keep[a, c] = True
        keep[b, c] = True
    m = m & ~(keep.T)
    closed = complete_pdag(PDGraph(m, dag.labels))
    return Cpdag._trusted(closed._m, dag.labels)


def novel_v_structures(dag: Dag, family: InterventionFamily) -> frozenset[tuple[int, int, int]]:
    """V-structures appearing in some client's mutilated graph but not in the
    base DAG."""
    base = v_structures(dag)
    out: set[tuple[int, int, int]] = set()
    for client in family:
        cut = mutilate(dag, client)
        out |= set(v_structures(cut)) - base
    return frozenset(out)


def refined_cpdag(dag: Dag, family: InterventionFamily) -> PDGraph:
    """The CPDAG tightened with every orientation revealed by the clients'
    structural interventions.

    Every v-structure of every mutilated graph is oriented inside the CPDAG
    as it is in the base DAG, then Meek closure propagates the consequences.
    The result has the CPDAG's skeleton and at least its directed marks.
    """
    c = cpdag_of(dag)
    m = c._m.copy()
    for client in family:
        cut = mutilate(dag, client)
        for a, mid, b in v_structures(cut):
            m[mid, a] = False
            m[mid, b] = False
    return complete_pdag(PDGraph(m, dag.labels))


def intervention_equivalent(
    g1: Dag,
    f1: InterventionFamily,
    g2: Dag,
    f2: InterventionFamily,
) -> bool:
    """Graphical test for equivalence of two (DAG, intervention family)
    pairs: same skeleton, same v-structures, and the same set of extra
    v-structures appearing only under mutilation."""
    if g1.node_count != g2.node_count:
        raise ValueError("node count differs")
    if not np.array_equal(g1._m | g1._m.T, g2._m | g2._m.T):
        return False
    if v_structures(g1) != v_structures(g2):
        return False
    return novel_v_structures(g1, f1) == novel_v_structures(g2, f2)
