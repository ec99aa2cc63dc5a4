"""Greedy equivalence search over CPDAGs with Gaussian BIC.

Implements the standard two-phase search: a forward sweep applying the best
valid insert operator while the score improves, then a backward sweep of
delete operators. The operator definitions and validity conditions follow
Chickering's formulation. The operator enumeration is reused by the
federated server, which ranks the same candidates by worst-case regret
instead of a local score.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .graphs import Cpdag, Dag, PDGraph, cpdag_of, consistent_extension
from .scoring import LocalScoreCache, local_bic
from .sem import Dataset


@dataclass(frozen=True)
class InsertOp:
    """Add x -> y (non-adjacent pair) and orient t - y as t -> y for t in T."""

    x: int
    y: int
    t: tuple[int, ...]

    def describe(self) -> str:
        extra = f" T={list(self.t)}" if self.t else ""
        return f"insert {self.x}->{self.y}{extra}"


@dataclass(frozen=True)
class DeleteOp:
    """Remove the edge between x and y and orient y - h as y -> h for h in H
    (plus x - h as x -> h where still undirected)."""

    x: int
    y: int
    h: tuple[int, ...]

    def describe(self) -> str:
        extra = f" H={list(self.h)}" if self.h else ""
        return f"delete {self.x}*{self.y}{extra}"


@dataclass
class GesConfig:
    penalty: float = 1.0
    max_parents: int | None = None
    forward_tolerance: float = 0.0
    backward_tolerance: float = 0.0
    max_steps: int | None = None

    def step_cap(self, d: int) -> int:
        return self.max_steps if self.max_steps is not None else 10 * d * d


@dataclass
class GesResult:
    cpdag: Cpdag
    score: float
    forward_steps: int
    backward_steps: int
    cache: LocalScoreCache


def _is_clique(g: PDGraph, nodes: set[int]) -> bool:
    return all(g.adjacent(a, b) for a, b in itertools.combinations(sorted(nodes), 2))


def _blocks_semi_directed(g: PDGraph, y: int, x: int, blocked: set[int]) -> bool:
    """True when every semi-directed path y ~> x passes through `blocked`."""
    seen = {y} | blocked
    stack = [y]
    while stack:
        u = stack.pop()
        for w in range(g.node_count):
            if w in seen or not (g.has_directed(u, w) or g.has_undirected(u, w)):
                continue
            if w == x:
                return False
            seen.add(w)
            stack.append(w)
    return True


def _na(g: PDGraph, y: int, x: int) -> set[int]:
    """Undirected neighbours of y that are adjacent to x."""
    return {w for w in g.undirected_neighbors(y) if g.adjacent(w, x)}


def _subsets(pool: set[int]) -> list[tuple[int, ...]]:
    items = sorted(pool)
    out: list[tuple[int, ...]] = []
    for r in range(len(items) + 1):
        out.extend(itertools.combinations(items, r))
    return out


def insert_operators(g: PDGraph, max_parents: int | None = None) -> list[InsertOp]:
    """All valid insert operators, in deterministic (x, y, T) order."""
    d = g.node_count
    cap = d - 1 if max_parents is None else max_parents
    ops: list[InsertOp] = []
    for x in range(d):
        for y in range(d):
            if x == y or g.adjacent(x, y):
                continue
            na = _na(g, y, x)
            pool = {w for w in g.undirected_neighbors(y) if not g.adjacent(w, x)}
            n_parents = len(g.parents(y))
            for t in _subsets(pool):
                if n_parents + len(na) + len(t) + 1 > cap:
                    continue
                union = na | set(t)
                if not _is_clique(g, union):
                    continue
                if not _blocks_semi_directed(g, y, x, union):
                    continue
                ops.append(InsertOp(x, y, t))
    return ops


def delete_operators(g: PDGraph) -> list[DeleteOp]:
    """All valid delete operators, in deterministic (x, y, H) order."""
    d = g.node_count
    ops: list[DeleteOp] = []
    for x in range(d):
        for y in range(d):
            if x == y:
                continue
            if not (g.has_directed(x, y) or (x < y and g.has_undirected(x, y))):
                continue
            na = _na(g, y, x)
            for h in _subsets(na):
                if _is_clique(g, na - set(h)):
                    ops.append(DeleteOp(x, y, h))
    return ops


def _recompose(m, labels) -> Cpdag | None:
    ext = consistent_extension(PDGraph(m, labels))
    if ext is None:
        return None
    return cpdag_of(ext)


def apply_insert(g: PDGraph, op: InsertOp) -> Cpdag | None:
    """Modified graph completed back to a CPDAG; None when the edit does not
    admit a consistent extension (the operator was not valid)."""
    m = g.matrix.copy()
    m[op.x, op.y] = True
    for t in op.t:
        m[op.y, t] = False
    return _recompose(m, g.labels)


def apply_delete(g: PDGraph, op: DeleteOp) -> Cpdag | None:
    m = g.matrix.copy()
    m[op.x, op.y] = False
    m[op.y, op.x] = False
    for h in op.h:
        m[h, op.y] = False
        if m[op.x, h] and m[h, op.x]:
            m[h, op.x] = False
    return _recompose(m, g.labels)


def insert_delta(data: Dataset, g: PDGraph, op: InsertOp, cache: LocalScoreCache, penalty: float) -> float:
    base = set(g.parents(op.y)) | _na(g, op.y, op.x) | set(op.t)
    before = local_bic(data, op.y, tuple(sorted(base)), cache, penalty)
    after = local_bic(data, op.y, tuple(sorted(base | {op.x})), cache, penalty)
    return after - before


def delete_delta(data: Dataset, g: PDGraph, op: DeleteOp, cache: LocalScoreCache, penalty: float) -> float:
    na = _na(g, op.y, op.x)
    base = (set(g.parents(op.y)) - {op.x}) | (na - set(op.h))
    with_x = local_bic(data, op.y, tuple(sorted(base | {op.x})), cache, penalty)
    without = local_bic(data, op.y, tuple(sorted(base)), cache, penalty)
    return without - with_x


def ges_fit(data: Dataset, cfg: GesConfig | None = None, labels=None) -> GesResult:
    """Two-phase greedy equivalence search from the empty graph.

    Deterministic: candidates are enumerated in sorted order and ties on the
    score improvement keep the earliest candidate.
    """
    cfg = cfg or GesConfig()
    d = data.d
    cache = LocalScoreCache(data, cfg.penalty)
    current: Cpdag = Cpdag(PDGraph.empty(d, labels or data.labels).matrix, labels or data.labels)
    cap = cfg.step_cap(d)

    forward = 0
    while forward < cap:
        best_delta = cfg.forward_tolerance
        best: Cpdag | None = None
        for op in insert_operators(current, cfg.max_parents):
            delta = insert_delta(data, current, op, cache, cfg.penalty)
            if delta > best_delta:
                applied = apply_insert(current, op)
                if applied is None:
                    continue
                best_delta = delta
                best = applied
        if best is None:
            break
        current = best
        forward += 1

    backward = 0
    while backward < cap:
        best_delta = cfg.backward_tolerance
        best = None
        for op in delete_operators(current):
            delta = delete_delta(data, current, op, cache, cfg.penalty)
            if delta > best_delta:
                applied = apply_delete(current, op)
                if applied is None:
                    continue
                best_delta = delta
                best = applied
        if best is None:
            break
        current = best
        backward += 1

    ext = consistent_extension(current)
    score = sum(local_bic(data, i, ext.parents(i), cache, cfg.penalty) for i in range(d))
    return GesResult(current, float(score), forward, backward, cache)


def local_discovery(
    data: Dataset,
    method: str = "ges",
    cfg: GesConfig | None = None,
    oracle_dag: Dag | None = None,
) -> Cpdag:
    """Client-side structure learning entry point.

    "ges" fits from the data; "oracle" shortcuts to the completed class of a
    known generating graph (for exactness tests and protocol validation).
    """
    if method == "ges":
        return ges_fit(data, cfg).cpdag
    if method == "oracle":
        if oracle_dag is None:
            raise ValueError("oracle method needs the generating graph")
        return cpdag_of(oracle_dag)
    if method == "pc":
        raise NotImplementedError("pc is not implemented; use ges or oracle")
    raise ValueError(f"unknown discovery method: {method!r}")
