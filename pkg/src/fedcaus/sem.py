"""Linear Gaussian structural models and the simulated client data they emit."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graphs import ClientTargets, Dag, InterventionFamily, mutilate, v_structures

DEFAULT_MEAN_SHIFT = 1.0
DEFAULT_NOISE_STD = 2.0


class Dataset:
    """An n x d matrix of finite observations, column order = node order."""

    __slots__ = ("_values", "_labels", "_fingerprint", "_gram")

    def __init__(self, values: np.ndarray, labels: Sequence[str] | None = None):
        arr = np.array(values, dtype=float)
        if arr.ndim != 2:
            raise ValueError("dataset must be a 2-d array")
        if not np.isfinite(arr).all():
            raise ValueError("dataset contains non-finite values")
        arr.setflags(write=False)
        self._values = arr
        if labels is None:
            labels = tuple(f"V{k}" for k in range(1, arr.shape[1] + 1))
        labels = tuple(str(s) for s in labels)
        if len(labels) != arr.shape[1]:
            raise ValueError("label count does not match column count")
        self._labels = labels
        self._fingerprint: str | None = None
        self._gram: tuple | None = None

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def n(self) -> int:
        return self._values.shape[0]

    @property
    def d(self) -> int:
        return self._values.shape[1]

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            h = hashlib.sha1()
            h.update(repr(self._values.shape).encode())
            h.update(self._values.tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def gram(self) -> tuple[int, np.ndarray, np.ndarray]:
        """(n, column sums, X'X), computed once; the basis for every OLS fit."""
        if self._gram is None:
            x = self._values
            self._gram = (x.shape[0], x.sum(axis=0), x.T @ x)
        return self._gram


@dataclass(frozen=True)
class LinearSem:
    """X_i = sum_j w[j, i] X_j + noise_std[i] * N(0, 1) over a DAG."""

    dag: Dag
    weights: np.ndarray
    noise_std: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        s = np.array(self.noise_std, dtype=float)
        d = self.dag.node_count
        if w.shape != (d, d):
            raise ValueError("weight matrix shape does not match the DAG")
        support = w != 0.0
        edges = self.dag.matrix & ~self.dag.matrix.T
        if (support & ~edges).any():
            raise ValueError("weight on a non-edge")
        if (edges & ~support).any():
            raise ValueError("edge with zero weight")
        if s.shape != (d,) or (s <= 0).any():
            raise ValueError("noise_std must be positive per node")
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise_std", s)


@dataclass(frozen=True)
class ClientScenario:
    """One client's sampling recipe: sample count, targets, private seed."""

    client_id: int
    sample_count: int
    structural: tuple[tuple[int, tuple[int, ...]], ...]
    parametric: tuple[tuple[int, tuple[float, float]], ...]
    rng_seed: int

    @classmethod
    def of(
        cls,
        client_id: int,
        sample_count: int,
        structural: Mapping[int, Sequence[int]] | None = None,
        parametric: Mapping[int, tuple[float, float]] | None = None,
        rng_seed: int = 0,
    ) -> "ClientScenario":
        if sample_count <= 0:
            raise ValueError("sample_count must be positive")
        s = tuple(
            (int(t), tuple(sorted(int(p) for p in ps)))
            for t, ps in sorted((structural or {}).items())
        )
        p = tuple(
            (int(t), (float(ms), float(ns)))
            for t, (ms, ns) in sorted((parametric or {}).items())
        )
        return cls(client_id, int(sample_count), s, p, int(rng_seed))

    def structural_map(self) -> dict[int, tuple[int, ...]]:
        return {t: ps for t, ps in self.structural}

    def parametric_map(self) -> dict[int, tuple[float, float]]:
        return {t: v for t, v in self.parametric}

    def targets(self) -> ClientTargets:
        return ClientTargets.of(self.structural_map(), self.parametric_map().keys())


def family_of(clients: Sequence[ClientScenario]) -> InterventionFamily:
    return InterventionFamily(tuple(c.targets() for c in clients))


def derive_seed(root_seed: int, k: int) -> int:
    """Stable per-client seed from a root seed; independent streams per k."""
    h = hashlib.sha256(f"{root_seed}:{k}".encode()).digest()
    return int.from_bytes(h[:8], "big")


def erdos_renyi_dag(d: int, expected_edges: float, rng_seed: int,
                    labels: Sequence[str] | None = None) -> Dag:
    """Random DAG: draw a topological order uniformly, then keep each forward
    pair with probability expected_edges / C(d, 2)."""
    if d < 1:
        raise ValueError("need at least one node")
    pairs = d * (d - 1) / 2
    p = min(1.0, max(0.0, expected_edges / pairs)) if pairs else 0.0
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(d)
    m = np.zeros((d, d), dtype=bool)
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < p:
                m[order[a], order[b]] = True
    return Dag(m, labels)


def sample_weights(dag: Dag, rng_seed: int) -> LinearSem:
    """Edge weights with magnitude uniform on [0.1, 1.0] and a fair random
    sign; unit noise everywhere."""
    rng = np.random.default_rng(rng_seed)
    d = dag.node_count
    w = np.zeros((d, d))
    for j, i in sorted(dag.directed_edges()):
        sign = 1.0 if rng.random() < 0.5 else -1.0
        w[j, i] = sign * rng.uniform(0.1, 1.0)
    return LinearSem(dag, w, np.ones(d))


def sample_client(sem: LinearSem, scenario: ClientScenario) -> Dataset:
    """Draw the client's dataset under its interventions.

    Structural targets lose the removed incoming edges (weights zeroed).
    Parametric targets keep their parents but get a shifted mean and an
    overridden noise scale. Deterministic in the scenario seed.
    """
    dag = mutilate(sem.dag, scenario.structural_map())
    w = sem.weights.copy()
    for t, ps in scenario.structural:
        for p in ps:
            w[p, t] = 0.0
    shift = np.zeros(sem.dag.node_count)
    std = sem.noise_std.copy()
    for t, (mean_shift, noise_std) in scenario.parametric:
        shift[t] = mean_shift
        std[t] = noise_std
    rng = np.random.default_rng(scenario.rng_seed)
    n, d = scenario.sample_count, sem.dag.node_count
    noise = rng.standard_normal((n, d))
    data = np.zeros((n, d))
    for i in dag.topological_order():
        pars = dag.parents(i)
        col = noise[:, i] * std[i] + shift[i]
        if pars:
            col = col + data[:, pars] @ w[list(pars), i]
        data[:, i] = col
    return Dataset(data, labels=sem.dag.labels)


class PopulationDataset:
    """Exact moments of a client's sampling distribution at a nominal n.

    Quacks like :class:`Dataset` as far as scoring goes (``n``, ``d``,
    ``labels``, ``fingerprint``, ``gram``), but the Gram matrix comes from
    the model-implied mean and covariance instead of a finite draw. Scores
    computed against it carry no sampling noise, so graphs that should tie
    really do tie and exact-recovery runs are reproducible bit for bit.
    """

    __slots__ = ("_mean", "_cov", "_n", "_labels", "_fingerprint")

    def __init__(self, mean: np.ndarray, cov: np.ndarray, n: int,
                 labels: Sequence[str] | None = None):
        mean = np.array(mean, dtype=float)
        cov = np.array(cov, dtype=float)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError("mean and covariance sizes disagree")
        if n <= 0:
            raise ValueError("nominal sample count must be positive")
        mean.setflags(write=False)
        cov.setflags(write=False)
        self._mean = mean
        self._cov = cov
        self._n = int(n)
        if labels is None:
            labels = tuple(f"V{k}" for k in range(1, d + 1))
        self._labels = tuple(str(s) for s in labels)
        if len(self._labels) != d:
            raise ValueError("label count does not match moment size")
        self._fingerprint: str | None = None

    @property
    def n(self) -> int:
        return self._n

    @property
    def d(self) -> int:
        return self._mean.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            h = hashlib.sha1()
            h.update(b"population")
            h.update(repr((self._n, self._mean.shape)).encode())
            h.update(self._mean.tobytes())
            h.update(self._cov.tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def gram(self) -> tuple[int, np.ndarray, np.ndarray]:
        n, mu = self._n, self._mean
        return (n, n * mu, n * (self._cov + np.outer(mu, mu)))


def population_moments(sem: LinearSem, scenario: ClientScenario) -> PopulationDataset:
    """Mean and covariance that :func:`sample_client` draws from, exactly.

    Structural targets lose the removed incoming weights and parametric
    targets get their shift and noise override, mirroring the sampler; the
    linear system is then solved in closed form.
    """
    d = sem.dag.node_count
    w = sem.weights.copy()
    for t, ps in scenario.structural:
        for p in ps:
            w[p, t] = 0.0
    shift = np.zeros(d)
    std = sem.noise_std.astype(float).copy()
    for t, (mean_shift, noise_std) in scenario.parametric:
        shift[t] = mean_shift
        std[t] = noise_std
    a = np.linalg.inv(np.eye(d) - w.T)
    mean = a @ shift
    cov = a @ np.diag(std ** 2) @ a.T
    return PopulationDataset(mean, cov, scenario.sample_count, sem.dag.labels)


def shielded_colliders(dag: Dag) -> list[tuple[int, int, int]]:
    """Triangles u -> c <- v with the shielding edge u -> v present, listed
    as (u, c, v) in deterministic (c, u, v) order."""
    out = []
    for c in range(dag.node_count):
        pars = dag.parents(c)
        for x in range(len(pars)):
            for y in range(x + 1, len(pars)):
                a, b = pars[x], pars[y]
                if dag.has_directed(a, b):
                    out.append((a, c, b))
                elif dag.has_directed(b, a):
                    out.append((b, c, a))
    out.sort(key=lambda t: (t[1], t[0], t[2]))
    return out


def plan_interventions(
    dag: Dag,
    clients: int,
    structural_fraction: float = 1.0,
    rng_seed: int = 0,
    prioritize_shielded: bool = True,
    require_observational: bool = True,
) -> InterventionFamily:
    """Assign structural targets to clients.

    Client 1 always stays observational. The remaining budget
    (round(structural_fraction * (K - 1)) clients) receives one structural
    target each. With prioritization on, shielded colliders u -> c <- v that
    carry a shielding edge u -> v are handled first: the target is v and only
    the shielding edge is removed, so the client's mutilated graph gains the
    v-structure (u, c, v). Whatever budget remains falls back to uniformly
    random targets that drop all incoming edges.
    """
    if clients < 1:
        raise ValueError("need at least one client")
    rng = np.random.default_rng(rng_seed)
    budget = int(round(structural_fraction * (clients - 1)))
    budget = max(0, min(budget, clients - 1))
    assignments: list[ClientTargets] = [ClientTargets.of()]
    plans: list[dict[int, tuple[int, ...]]] = []
    if prioritize_shielded:
        used: set[tuple[int, int]] = set()
        for u, c, v in shielded_colliders(dag):
            if len(plans) >= budget:
                break
            if (u, v) in used:
                continue
            used.add((u, v))
            plans.append({v: (u,)})
    with_parents = [i for i in range(dag.node_count) if dag.parents(i)]
    while len(plans) < budget:
        if not with_parents:
            plans.append({})
            continue
        t = int(rng.choice(with_parents))
        plans.append({t: tuple(dag.parents(t))})
    for plan in plans:
        assignments.append(ClientTargets.of({t: ps for t, ps in plan.items() if ps}))
    while len(assignments) < clients:
        assignments.append(ClientTargets.of())
    fam = InterventionFamily(tuple(assignments))
    fam.validate_for(dag, require_observational=require_observational)
    return fam
