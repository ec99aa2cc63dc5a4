"""Gaussian BIC scoring of DAGs and partially directed graphs.

Local scores come from an OLS fit with intercept, solved on the dataset's
precomputed Gram matrix, so a score costs O(p^3) after the first call.
"""

from __future__ import annotations

import threading
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graphs import (
    Dag,
    InconsistentPdagError,
    PDGraph,
    complete_pdag,
    consistent_extension,
    _topological_order,
)
from .sem import Dataset

VARIANCE_FLOOR = 1e-12
RIDGE = 1e-10


class CollinearParentsError(ValueError):
    """Raised when the design matrix stays singular even after the ridge
    fallback."""


class LocalScoreCache:
    """Memo of local scores keyed by (node, sorted parent tuple).

    Bound to one dataset through its fingerprint; lookups against a different
    dataset are rejected by the score functions. Reads never block, inserts
    are serialized, and inserting a present key is a no-op, so concurrent use
    is safe and replay is bit-identical.

    Best-orientation values of connected subgraphs are memoized here too,
    keyed by the subgraph's canonical edge signature, since they are equally
    a pure function of the data and the penalty.
    """

    def __init__(self, data: Dataset, penalty: float = 1.0):
        self.fingerprint = data.fingerprint
        self.penalty = float(penalty)
        self.hits = 0
        self.misses = 0
        self._map: dict[tuple[int, tuple[int, ...]], float] = {}
        self._parts: dict[bytes, float] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._map)

    def lookup(self, node: int, parents: tuple[int, ...]) -> float | None:
        value = self._map.get((node, parents))
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def store(self, node: int, parents: tuple[int, ...], value: float) -> None:
        with self._lock:
            self._map.setdefault((node, parents), value)

    def lookup_part(self, key: bytes) -> float | None:
        return self._parts.get(key)

    def store_part(self, key: bytes, value: float) -> None:
        with self._lock:
            self._parts.setdefault(key, value)


def _check_cache(data: Dataset, cache: LocalScoreCache | None, penalty: float) -> None:
    if cache is None:
        return
    if cache.fingerprint != data.fingerprint:
        raise ValueError("cache fingerprint mismatch")
    if cache.penalty != penalty:
        raise ValueError("cache penalty mismatch")


def _sigma2(data: Dataset, node: int, parents: tuple[int, ...]) -> float:
    n, sums, xtx = data.gram()
    p = len(parents)
    idx = list(parents)
    a = np.empty((p + 1, p + 1))
    a[0, 0] = n
    a[0, 1:] = sums[idx]
    a[1:, 0] = sums[idx]
    a[1:, 1:] = xtx[np.ix_(idx, idx)]
    b = np.empty(p + 1)
    b[0] = sums[node]
    b[1:] = xtx[idx, node]
    try:
        factor = cho_factor(a, check_finite=False)
    except np.linalg.LinAlgError:
        try:
            factor = cho_factor(a + RIDGE * np.eye(p + 1), check_finite=False)
        except np.linalg.LinAlgError:
            raise CollinearParentsError(f"collinear parents for node {node}") from None
    beta = cho_solve(factor, b, check_finite=False)
    rss = float(xtx[node, node] - b @ beta)
    return max(rss / n, VARIANCE_FLOOR)


def local_bic(
    data: Dataset,
    node: int,
    parents: Sequence[int],
    cache: LocalScoreCache | None = None,
    penalty: float = 1.0,
) -> float:
    """Gaussian BIC contribution of one node given its parents.

    -(n/2) ln(sigma_hat^2) - (penalty/2) (|parents| + 2) ln(n), where the
    parameter count covers the weights, the intercept and the variance.
    """
    key = tuple(sorted(int(p) for p in parents))
    if node in key:
        raise ValueError("node cannot be its own parent")
    _check_cache(data, cache, penalty)
    if cache is not None:
        hit = cache.lookup(node, key)
        if hit is not None:
            return hit
    n = data.n
    sigma2 = _sigma2(data, node, key)
    score = -(n / 2.0) * np.log(sigma2) - (penalty / 2.0) * (len(key) + 2) * np.log(n)
    score = float(score)
    if cache is not None:
        cache.store(node, key, score)
    return score


def score_dag(
    data: Dataset,
    g: Dag,
    cache: LocalScoreCache | None = None,
    penalty: float = 1.0,
) -> float:
    """Sum of local scores; decomposable and equal across a Markov class."""
    if g.node_count != data.d:
        raise ValueError("node count differs")
    return float(sum(local_bic(data, i, g.parents(i), cache, penalty) for i in range(g.node_count)))


def _fallback_orientation(g: PDGraph) -> Dag:
    """Orient leftover undirected edges low -> high, flipping only when the
    preferred direction would close a directed cycle."""
    m = g.matrix.copy()
    for i, j in sorted(g.undirected_edges()):
        m[j, i] = False
        if _topological_order(m & ~m.T) is None:
            m[j, i] = True
            m[i, j] = False
    return Dag(m, g.labels)


def score_pdag(
    data: Dataset,
    g: PDGraph,
    cache: LocalScoreCache | None = None,
    penalty: float = 1.0,
) -> float:
    """Score a partially directed graph through one of its extensions.

    Meek-close the input, then take a consistent extension; score
    equivalence makes the choice of extension irrelevant up to
    floating-point noise. Graphs with no consistent extension (closure
    contradicts itself, or it survives but every orientation adds a
    collider) fall back to the deterministic orientation, which always
    succeeds while the directed part is acyclic. Intersections of
    estimated graphs routinely land in that territory, so this path is
    ordinary, not exceptional.

    A directed cycle in the input violates the contract; rather than fail
    mid-protocol the graph is scored node by node, each on its directed
    parents plus undirected neighbours.
    """
    try:
        closed = complete_pdag(g)
    except InconsistentPdagError:
        closed = None
    if closed is not None:
        ext = consistent_extension(closed)
        if ext is None:
            ext = _fallback_orientation(closed)
        return score_dag(data, ext, cache, penalty)
    if _topological_order(g.matrix & ~g.matrix.T) is not None:
        return score_dag(data, _fallback_orientation(g), cache, penalty)
    total = 0.0
    for i in range(g.node_count):
        pa = tuple(sorted(set(g.parents(i)) | set(g.undirected_neighbors(i))))
        total += local_bic(data, i, pa, cache, penalty)
    return float(total)


def regret(
    data: Dataset,
    h_effective: PDGraph,
    baseline: float,
    cache: LocalScoreCache | None = None,
    penalty: float = 1.0,
) -> float:
    """How much worse the effective graph explains the data than the client's
    own graph: baseline minus score_pdag of the effective graph. Exactly zero
    when the effective graph is the client's own CPDAG and the baseline was
    computed by score_pdag on it (score equivalence across the class)."""
    return float(baseline - score_pdag(data, h_effective, cache, penalty))


def _bit_indices(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _component_best(
    data: Dataset,
    nodes: list[int],
    m: np.ndarray,
    cache: LocalScoreCache | None,
    penalty: float,
) -> float:
    """Subset dynamic program for one connected component.

    f(S) is the best total score of the nodes in S when they form the first
    |S| positions of an ordering; a node may close S only if none of its
    directed marks point back into S, and its parents are then exactly its
    neighbours inside S. Runs in O(2^c * c) score lookups for c nodes.
    """
    c = len(nodes)
    nb = [0] * c
    outm = [0] * c
    for x in range(c):
        i = nodes[x]
        for y in range(c):
            if x == y:
                continue
            j = nodes[y]
            if m[i, j] or m[j, i]:
                nb[x] |= 1 << y
                if m[i, j] and not m[j, i]:
                    outm[x] |= 1 << y
    tables: list[dict[int, float]] = [{} for _ in range(c)]
    neg = float("-inf")
    f = [neg] * (1 << c)
    f[0] = 0.0
    for s in range(1, 1 << c):
        best = neg
        t = s
        while t:
            vbit = t & -t
            t ^= vbit
            rest = s ^ vbit
            fr = f[rest]
            if fr == neg:
                continue
            v = vbit.bit_length() - 1
            if outm[v] & rest:
                continue
            pa = rest & nb[v]
            sc = tables[v].get(pa)
            if sc is None:
                parents = tuple(nodes[k] for k in _bit_indices(pa))
                sc = local_bic(data, nodes[v], parents, cache, penalty)
                tables[v][pa] = sc
            val = fr + sc
            if val > best:
                best = val
        f[s] = best
    return f[(1 << c) - 1]


def max_orientation_score(
    data: Dataset,
    g: PDGraph,
    cache: LocalScoreCache | None = None,
    penalty: float = 1.0,
) -> float:
    """Best attainable DAG score over the orientations of a partial graph.

    Maximum of score_dag over every acyclic orientation of g's skeleton that
    keeps each directed mark of g. The value is a total, deterministic
    function of the mark pattern: a directed mark can only shrink the set of
    orientations, so it never raises the value, and it leaves the value
    unchanged exactly when some best orientation already agrees with it.
    That asymmetry is what lets a regret comparison act as a consistency
    test for a proposed mark. No extension procedure is involved; if the
    directed marks themselves close a cycle no orientation exists and -inf
    is returned.

    Factorizes over connected components of the skeleton (isolated nodes
    contribute their empty-parent score), so the subset dynamic program is
    exponential only in the largest component. Component values are memoized
    in the cache.
    """
    if g.node_count != data.d:
        raise ValueError("node count differs")
    _check_cache(data, cache, penalty)
    m = g.matrix
    d = g.node_count
    seen = [False] * d
    total = 0.0
    for root in range(d):
        if seen[root]:
            continue
        seen[root] = True
        comp = [root]
        stack = [root]
        while stack:
            u = stack.pop()
            for v in range(d):
                if not seen[v] and (m[u, v] or m[v, u]):
                    seen[v] = True
                    comp.append(v)
                    stack.append(v)
        if len(comp) == 1:
            total += local_bic(data, root, (), cache, penalty)
            continue
        comp.sort()
        key = None
        if cache is not None:
            sig = []
            for x in range(len(comp)):
                i = comp[x]
                for y in range(x + 1, len(comp)):
                    j = comp[y]
                    code = (1 if m[i, j] else 0) | (2 if m[j, i] else 0)
                    if code:
                        sig.append((i, j, code))
            key = repr((tuple(comp), tuple(sig))).encode()
            hit = cache.lookup_part(key)
            if hit is not None:
                total += hit
                continue
        val = _component_best(data, comp, m, cache, penalty)
        if key is not None:
            cache.store_part(key, val)
        total += val
    return float(total)


def per_node_regret(
    data: Dataset,
    h_effective: PDGraph,
    baseline_graph: PDGraph,
    cache: LocalScoreCache | None = None,
    penalty: float = 1.0,
) -> np.ndarray:
    """Per-node mismatch magnitudes between a candidate and a reference.

    Each node is scored on its directed parents plus undirected neighbours
    in both graphs; the entry is the absolute difference, so it is zero
    exactly at nodes whose neighbourhoods agree and positive wherever the
    candidate changes what the node is regressed on. A diagnostic for move
    logs and worked examples, not a decomposition of regret()."""
    out = np.zeros(h_effective.node_count)
    for i in range(h_effective.node_count):
        base_pa = tuple(sorted(set(baseline_graph.parents(i)) | set(baseline_graph.undirected_neighbors(i))))
        eff_pa = tuple(sorted(set(h_effective.parents(i)) | set(h_effective.undirected_neighbors(i))))
        gap = local_bic(data, i, base_pa, cache, penalty) - local_bic(data, i, eff_pa, cache, penalty)
        out[i] = abs(gap)
    return out
