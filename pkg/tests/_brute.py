"""Brute-force oracles shared by the test suite.

Everything here trades time for independence: the functions work on plain
boolean matrices (m[i, j] means the pair permits i -> j, an undirected edge
sets both m[i, j] and m[j, i]) and use only enumeration, never Meek rules or
compelled-edge reasoning from the package under test. They are feasible for
five nodes and below.
"""

import itertools
from functools import lru_cache

import numpy as np


def acyclic(dir_m: np.ndarray) -> bool:
    """Whether the strictly directed part has no cycle, by repeated removal
    of sink nodes."""
    m = (dir_m & ~dir_m.T).copy()
    alive = list(range(m.shape[0]))
    while alive:
        for v in alive:
            if not any(m[v, w] for w in alive):
                alive.remove(v)
                break
        else:
            return False
    return True


@lru_cache(maxsize=None)
def _all_dags_cached(d: int) -> tuple[bytes, ...]:
    pairs = list(itertools.combinations(range(d), 2))
    out = []
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        m = np.zeros((d, d), dtype=bool)
        for (i, j), s in zip(pairs, states):
            if s == 1:
                m[i, j] = True
            elif s == 2:
                m[j, i] = True
        if acyclic(m):
            out.append(m.tobytes())
    return tuple(out)


def all_dags(d: int) -> list[np.ndarray]:
    """Every DAG on d labelled nodes (25 for d=3, 543 for d=4)."""
    return [
        np.frombuffer(b, dtype=bool).reshape(d, d).copy()
        for b in _all_dags_cached(d)
    ]


def skeleton_of(m: np.ndarray) -> np.ndarray:
    return m | m.T


def v_structures_of(m: np.ndarray) -> frozenset:
    """Unshielded colliders (a, c, b) with a < b over the directed part."""
    directed = m & ~m.T
    adj = m | m.T
    d = m.shape[0]
    out = set()
    for c in range(d):
        pars = [p for p in range(d) if directed[p, c]]
        for a, b in itertools.combinations(pars, 2):
            if not adj[a, b]:
                out.add((min(a, b), c, max(a, b)))
    return frozenset(out)


def mec_members(m: np.ndarray) -> list[np.ndarray]:
    """All DAGs with the same skeleton and v-structures."""
    skel = skeleton_of(m)
    vs = v_structures_of(m)
    return [
        g
        for g in all_dags(m.shape[0])
        if np.array_equal(skeleton_of(g), skel) and v_structures_of(g) == vs
    ]


def brute_cpdag(m: np.ndarray) -> np.ndarray:
    """CPDAG as the mark-wise union over the equivalence class: an edge is
    directed exactly when every member orients it the same way."""
    out = np.zeros_like(m)
    for g in mec_members(m):
        out |= g
    return out


def extensions(p: np.ndarray) -> list[np.ndarray]:
    """Acyclic orientations of p's skeleton keeping every directed mark and
    introducing no v-structure beyond those of p's directed part."""
    und = [(i, j) for i, j in zip(*np.nonzero(p & p.T)) if i < j]
    base_dir = p & ~p.T
    vs = v_structures_of(p)
    out = []
    for states in itertools.product((0, 1), repeat=len(und)):
        m = base_dir.copy()
        for (i, j), s in zip(und, states):
            if s:
                m[i, j] = True
            else:
                m[j, i] = True
        if acyclic(m) and v_structures_of(m) == vs:
            out.append(m)
    return out


def brute_closure(p: np.ndarray) -> np.ndarray | None:
    """Maximal orientation by unanimity over consistent extensions: an
    undirected edge becomes directed when every extension agrees on it.
    None when no extension exists."""
    exts = extensions(p)
    if not exts:
        return None
    out = p.copy()
    for i, j in zip(*np.nonzero(p & p.T)):
        if all(e[i, j] for e in exts):
            out[j, i] = False
    return out


def mutilate_matrix(m: np.ndarray, structural: dict) -> np.ndarray:
    out = m.copy()
    for t, ps in structural.items():
        for p in ps:
            out[p, t] = False
    return out


def novel_vs_of(m: np.ndarray, plans: list[dict]) -> frozenset:
    """V-structures appearing in some mutilated graph but not in the base."""
    base = v_structures_of(m)
    out = set()
    for plan in plans:
        out |= v_structures_of(mutilate_matrix(m, plan)) - base
    return frozenset(out)


def brute_phi_cpdag(m: np.ndarray, plans: list[dict]) -> np.ndarray | None:
    """Definition-level oracle: orient every v-structure of every mutilated
    graph inside the brute CPDAG, then close by extension unanimity."""
    out = brute_cpdag(m)
    for plan in plans:
        for a, c, b in v_structures_of(mutilate_matrix(m, plan)):
            out[c, a] = False
            out[c, b] = False
    return brute_closure(out)


def _ancestors(dir_m: np.ndarray, seeds: set[int]) -> set[int]:
    out = set(seeds)
    frontier = list(seeds)
    while frontier:
        v = frontier.pop()
        for p in np.flatnonzero(dir_m[:, v]):
            if int(p) not in out:
                out.add(int(p))
                frontier.append(int(p))
    return out


def d_separated(m: np.ndarray, x: int, y: int, z: frozenset) -> bool:
    """Classic moralized-ancestral-graph test on a DAG matrix."""
    keep = _ancestors(m, {x, y} | set(z))
    d = m.shape[0]
    moral = np.zeros((d, d), dtype=bool)
    for v in keep:
        for p in np.flatnonzero(m[:, v]):
            if int(p) in keep:
                moral[p, v] = moral[v, p] = True
        pars = [int(p) for p in np.flatnonzero(m[:, v]) if int(p) in keep]
        for a, b in itertools.combinations(pars, 2):
            moral[a, b] = moral[b, a] = True
    seen = {x}
    frontier = [x]
    while frontier:
        v = frontier.pop()
        if v == y:
            return False
        for w in np.flatnonzero(moral[v]):
            w = int(w)
            if w not in seen and w not in z:
                seen.add(w)
                frontier.append(w)
    return True


def same_d_separations(m1: np.ndarray, m2: np.ndarray) -> bool:
    d = m1.shape[0]
    for x, y in itertools.combinations(range(d), 2):
        rest = [v for v in range(d) if v not in (x, y)]
        for r in range(len(rest) + 1):
            for z in itertools.combinations(rest, r):
                if d_separated(m1, x, y, frozenset(z)) != d_separated(m2, x, y, frozenset(z)):
                    return False
    return True
