"""Benchmark orchestration: sweep definitions, scenario builds, single runs,
result aggregation and plot-data emission.

A sweep varies one axis (per-client sample count, variable count, or client
count) over a grid of cells; every cell runs over independent seeds. Each
run is reproducible in isolation from (cell, seed), and all randomness
derives from the root seed through named substreams.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .federation import ClientState, DpConfig, FederationConfig, run_federated_discovery
from .formats import ResultRow, append_result, serialize_round_log
from .ges import GesConfig, local_discovery
from .graphs import mutilate
from .metrics import evaluate
from .sem import (
    ClientScenario,
    LinearSem,
    derive_seed,
    erdos_renyi_dag,
    plan_interventions,
    population_moments,
    sample_client,
    sample_weights,
)

HETEROGENEOUS_SIZES = (1000, 2000, 5000)
AXES = ("samples", "variables", "clients")


@dataclass(frozen=True)
class Cell:
    """One sweep point: fixed dimensions, client count and sampling regime."""

    axis: str
    d: int
    k: int
    n: int | None
    heterogeneous: bool

    @property
    def x(self) -> int:
        if self.axis == "samples":
            return int(self.n)
        if self.axis == "variables":
            return self.d
        return self.k

    def tag(self) -> str:
        n = "het" if self.heterogeneous else str(self.n)
        return f"{self.axis}-d{self.d}-k{self.k}-n{n}"


@dataclass
class ExperimentConfig:
    axis: str = "samples"
    method: str = "ges"
    seeds: int = 20
    root_seed: int = 0
    out_dir: str = "results"
    jobs: int = 1
    d: int = 10
    k: int = 5
    samples_grid: tuple[int, ...] = (500, 1000, 2000, 5000)
    variables_grid: tuple[int, ...] = (10, 20, 30)
    clients_grid: tuple[int, ...] = (3, 5, 10)
    expected_edges: float | None = None
    structural_fraction: float = 1.0
    dp_epsilon: float | None = None
    dp_sensitivity: float | None = None
    tolerance: float = 1e-6
    penalty: float = 1.0
    write_logs: bool = True
    svg: bool = False

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        if self.method not in ("ges", "oracle"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.seeds < 0:
            raise ValueError("seeds must be >= 0")
        if (self.dp_epsilon is None) != (self.dp_sensitivity is None):
            raise ValueError("dp_epsilon and dp_sensitivity must be set together")

    def cells(self) -> list[Cell]:
        if self.axis == "samples":
            return [Cell("samples", self.d, self.k, n, False) for n in self.samples_grid]
        if self.axis == "variables":
            return [Cell("variables", d, self.k, None, True) for d in self.variables_grid]
        return [Cell("clients", self.d, k, None, True) for k in self.clients_grid]

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("samples_grid", "variables_grid", "clients_grid"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def build_scenario(
    cell: Cell,
    seed: int,
    expected_edges: float | None = None,
    structural_fraction: float = 1.0,
) -> tuple[LinearSem, list[ClientScenario]]:
    """Generating model plus per-client sampling recipes for one run."""
    edges = float(cell.d) if expected_edges is None else expected_edges
    dag = erdos_renyi_dag(cell.d, edges, derive_seed(seed, "dag"))
    sem = sample_weights(dag, derive_seed(seed, "weights"))
    family = plan_interventions(dag, cell.k, structural_fraction, derive_seed(seed, "plan"))
    if cell.heterogeneous:
        rng = np.random.default_rng(derive_seed(seed, "sizes"))
        sizes = [int(rng.choice(HETEROGENEOUS_SIZES)) for _ in range(cell.k)]
    else:
        sizes = [int(cell.n)] * cell.k
    clients = []
    for i, targets in enumerate(family):
        clients.append(
            ClientScenario.of(
                i + 1,
                sizes[i],
                structural=targets.structural_map(),
                rng_seed=derive_seed(seed, f"client:{i + 1}"),
            )
        )
    return sem, clients


def make_client_states(
    sem: LinearSem,
    clients: list[ClientScenario],
    method: str,
    seed: int,
    dp_epsilon: float | None = None,
    dp_sensitivity: float | None = None,
    penalty: float = 1.0,
) -> list[ClientState]:
    states = []
    for sc in clients:
        if method == "oracle":
            data = population_moments(sem, sc)
            local = local_discovery(data, "oracle", oracle_dag=mutilate(sem.dag, sc.structural_map()))
        else:
            data = sample_client(sem, sc)
            local = local_discovery(data, method, GesConfig(penalty=penalty))
        dp = None
        if dp_epsilon is not None:
            dp = DpConfig(dp_epsilon, dp_sensitivity, derive_seed(seed, f"dp:{sc.client_id}"))
        states.append(ClientState(sc.client_id, data, local, dp, penalty))
    return states


def run_cell_seed(cell: Cell, seed: int, cfg: ExperimentConfig):
    """One complete run: generate, discover locally, federate, evaluate.

    Returns (ResultRow, candidate log). Failures come back as a row with
    status "failed" and empty metric cells rather than an exception, so a
    sweep finishes even when single runs blow up.
    """
    start = time.perf_counter()
    try:
        sem, clients = build_scenario(cell, seed, cfg.expected_edges, cfg.structural_fraction)
        states = make_client_states(
            sem, clients, cfg.method, seed, cfg.dp_epsilon, cfg.dp_sensitivity, cfg.penalty
        )
        fed = run_federated_discovery(states, FederationConfig(tolerance=cfg.tolerance), labels=sem.dag.labels)
        ev_c = evaluate(fed.cpdag, sem.dag)
        ev_r = evaluate(fed.refined, sem.dag)
        row = ResultRow(
            axis=cell.axis,
            d=cell.d,
            n="het" if cell.heterogeneous else int(cell.n),
            k=cell.k,
            heterogeneous=cell.heterogeneous,
            method=cfg.method,
            seed=seed,
            status="ok",
            shd_cpdag=float(ev_c.shd),
            f1_cpdag=ev_c.f1,
            shd_refined=float(ev_r.shd),
            f1_refined=ev_r.f1,
            rounds=fed.rounds,
            queries=fed.queries,
            wall_ms=(time.perf_counter() - start) * 1000.0,
        )
        return row, fed.log
    except Exception as exc:  # noqa: BLE001 - sweep robustness requires catching everything
        row = ResultRow(
            axis=cell.axis,
            d=cell.d,
            n="het" if cell.heterogeneous else int(cell.n),
            k=cell.k,
            heterogeneous=cell.heterogeneous,
            method=cfg.method,
            seed=seed,
            status=f"failed: {type(exc).__name__}",
            wall_ms=(time.perf_counter() - start) * 1000.0,
        )
        return row, []


def _pool_task(args):
    cell, seed, cfg = args
    return run_cell_seed(cell, seed, cfg)


def run_experiment(cfg: ExperimentConfig, results_path: str | None = None) -> tuple[int, int, str]:
    """Execute the full sweep, appending rows to the results file.

    Returns (ok_count, failed_count, results_path). Rows land in grid order
    regardless of worker scheduling, so reruns produce identical files apart
    from wall-clock columns.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = results_path or os.path.join(cfg.out_dir, "results.csv")
    # The seed stream is cell-independent so cells of one sweep see paired
    # scenario draws wherever their dimensions coincide.
    tasks = [
        (cell, derive_seed(cfg.root_seed, f"seed:{i}"), cfg)
        for cell in cfg.cells()
        for i in range(cfg.seeds)
    ]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(_pool_task, tasks))
    else:
        outcomes = [_pool_task(t) for t in tasks]
    ok = failed = 0
    log_dir = os.path.join(cfg.out_dir, "logs")
    if cfg.write_logs:
        os.makedirs(log_dir, exist_ok=True)
    for (cell, seed, _), (row, log) in zip(tasks, outcomes):
        append_result(path, row)
        if row.status == "ok":
            ok += 1
        else:
            failed += 1
        if cfg.write_logs and log:
            log_path = os.path.join(log_dir, f"{cell.tag()}-s{seed}.jsonl")
            with open(log_path, "w", encoding="utf-8") as fh:
                fh.write(serialize_round_log(log))
    return ok, failed, path


# -- reporting ---------------------------------------------------------------


@dataclass
class CellSummary:
    axis: str
    method: str
    x: int
    d: int
    k: int
    n: str
    seeds: int = 0
    failed: int = 0
    metrics: dict = field(default_factory=dict)


def _x_of(rec: dict) -> int:
    if rec["axis"] == "samples":
        return int(rec["n"])
    if rec["axis"] == "variables":
        return int(rec["d"])
    return int(rec["k"])


def summarize_records(records: list[dict]) -> list[CellSummary]:
    """Group result rows by sweep cell; mean and population std per metric."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        key = (rec["axis"], rec["method"], _x_of(rec), rec["d"], rec["k"], str(rec["n"]))
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups):
        axis, method, x, d, k, n = key
        rows = groups[key]
        ok = [r for r in rows if r["status"] == "ok"]
        summary = CellSummary(axis, method, x, d, k, n, seeds=len(ok), failed=len(rows) - len(ok))
        for metric in ("shd_cpdag", "shd_refined", "f1_cpdag", "f1_refined"):
            values = np.array([r[metric] for r in ok if r[metric] is not None], dtype=float)
            if values.size:
                summary.metrics[metric] = (float(values.mean()), float(values.std()))
            else:
                summary.metrics[metric] = (float("nan"), float("nan"))
        out.append(summary)
    return out


def write_report(records: list[dict], out_dir: str, svg: bool = False) -> list[str]:
    """Summary table plus per-axis plot CSVs (and optional SVG charts).

    Plot files carry one row per swept x value with mean and population std
    for both pipeline outputs, one file per metric.
    """
    os.makedirs(out_dir, exist_ok=True)
    summaries = summarize_records(records)
    written = []

    lines = ["sweep summary: mean +/- population std over seeds", ""]
    for s in summaries:
        sc, ss = s.metrics["shd_cpdag"], s.metrics["shd_refined"]
        fc, fr = s.metrics["f1_cpdag"], s.metrics["f1_refined"]
        lines.append(
            f"axis={s.axis} method={s.method} d={s.d} k={s.k} n={s.n} seeds={s.seeds}"
            + (f" failed={s.failed}" if s.failed else "")
        )
        lines.append(
            f"  shd: cpdag {sc[0]:.3f}+/-{sc[1]:.3f}  refined {ss[0]:.3f}+/-{ss[1]:.3f}"
        )
        lines.append(
            f"  f1:  cpdag {fc[0]:.3f}+/-{fc[1]:.3f}  refined {fr[0]:.3f}+/-{fr[1]:.3f}"
        )
    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(summary_path)

    for axis in sorted({s.axis for s in summaries}):
        rows = [s for s in summaries if s.axis == axis]
        for metric in ("shd", "f1"):
            plot_path = os.path.join(out_dir, f"plot_{axis}_{metric}.csv")
            with open(plot_path, "w", encoding="utf-8") as fh:
                fh.write("x,cpdag_mean,cpdag_std,refined_mean,refined_std\n")
                for s in rows:
                    c = s.metrics[f"{metric}_cpdag"]
                    r = s.metrics[f"{metric}_refined"]
                    fh.write(f"{s.x},{c[0]:.6g},{c[1]:.6g},{r[0]:.6g},{r[1]:.6g}\n")
            written.append(plot_path)
        if svg:
            written.extend(_write_svg(axis, rows, out_dir))
    return written


def _write_svg(axis: str, rows: list[CellSummary], out_dir: str) -> list[str]:
    try:
        import matplotlib

        matplotlib.use("svg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise RuntimeError("svg output needs matplotlib installed") from exc
    written = []
    xs = [s.x for s in rows]
    for metric, label in (("shd", "SHD"), ("f1", "orientation F1")):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for kind, style in (("cpdag", "o-"), ("refined", "s-")):
            means = [s.metrics[f"{metric}_{kind}"][0] for s in rows]
            stds = [s.metrics[f"{metric}_{kind}"][1] for s in rows]
            ax.errorbar(xs, means, yerr=stds, fmt=style, capsize=3, label=kind)
        ax.set_xlabel(axis)
        ax.set_ylabel(label)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"plot_{axis}_{metric}.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


# -- worked fixtures -----------------------------------------------------------


def fixture_scenario(name: str, n: int = 5000, root_seed: int = 0) -> tuple[LinearSem, list[ClientScenario]]:
    """Small hand-built scenarios used across tests and demos.

    "triangle": three nodes A, B, C with A->B, B->C, A->C; one observational
    client and one client whose intervention on B removes A->B. Its refined
    graph directs B->C and A->C while A-B stays undirected.

    "five_node" extends the same construction with a second shielded
    collider: edges A->B, A->C, B->C, B->D, B->E, D->E and three clients
    (observational, intervene on B removing A->B, intervene on D removing
    B->D).
    """
    from .graphs import Dag

    if name == "triangle":
        dag = Dag.from_edges(3, directed=[(0, 1), (1, 2), (0, 2)], labels=("A", "B", "C"))
        plans: list[dict[int, tuple[int, ...]]] = [{}, {1: (0,)}]
    elif name == "five_node":
        dag = Dag.from_edges(
            5,
            directed=[(0, 1), (0, 2), (1, 2), (1, 3), (1, 4), (3, 4)],
            labels=("A", "B", "C", "D", "E"),
        )
        plans = [{}, {1: (0,)}, {3: (1,)}]
    else:
        raise ValueError(f"unknown fixture {name!r}; expected 'triangle' or 'five_node'")
    sem = sample_weights(dag, derive_seed(root_seed, "weights"))
    clients = [
        ClientScenario.of(i + 1, n, structural=plan, rng_seed=derive_seed(root_seed, f"client:{i + 1}"))
        for i, plan in enumerate(plans)
    ]
    return sem, clients
