"""Command-line front end.

Subcommands cover the experiment life cycle: ``generate`` materializes
scenario files, ``discover-local`` fits one client graph from a dataset,
``run`` executes a sweep (or replays a single cell and seed), ``report``
aggregates a results file into tables and plot data, and ``fixture`` emits
the small worked scenarios used in the tests and docs.

Exit codes: 0 on success, 1 when some runs failed, 2 on configuration
errors. The root seed defaults to the FEDCAUS_SEED environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .experiments import (
    Cell,
    ExperimentConfig,
    build_scenario,
    fixture_scenario,
    run_cell_seed,
    run_experiment,
    write_report,
)
from .formats import (
    ParseError,
    parse_dag,
    parse_dataset,
    parse_results,
    results_header,
    serialize_dataset,
    serialize_graph,
    serialize_scenario,
)
from .ges import GesConfig, local_discovery
from .sem import derive_seed, sample_client


def _root_seed_default() -> int:
    return int(os.environ.get("FEDCAUS_SEED", "0"))


def _build_config(args) -> ExperimentConfig:
    """Config file first, explicit flags on top."""
    kwargs: dict = {}
    if getattr(args, "config", None):
        kwargs.update(json.loads(open(args.config, encoding="utf-8").read()))
        for key in ("samples_grid", "variables_grid", "clients_grid"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
    overrides = {
        "axis": getattr(args, "axis", None),
        "method": getattr(args, "method", None),
        "seeds": getattr(args, "seeds", None),
        "out_dir": getattr(args, "out", None),
        "jobs": getattr(args, "jobs", None),
        "dp_epsilon": getattr(args, "dp_epsilon", None),
        "dp_sensitivity": getattr(args, "dp_sensitivity", None),
        "root_seed": getattr(args, "root_seed", None),
        "svg": getattr(args, "svg", None) or None,
    }
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    kwargs.setdefault("root_seed", _root_seed_default())
    return ExperimentConfig(**kwargs)


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def cmd_generate(args) -> int:
    cfg = _build_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    if args.fixture:
        return cmd_fixture(args)
    for cell in cfg.cells():
        for i in range(cfg.seeds):
            seed = derive_seed(cfg.root_seed, f"seed:{i}")
            sem, clients = build_scenario(cell, seed, cfg.expected_edges, cfg.structural_fraction)
            base = os.path.join(cfg.out_dir, f"{cell.tag()}-s{i}")
            _write(base + ".scenario.json", serialize_scenario(sem, clients))
            for sc in clients:
                data = sample_client(sem, sc)
                _write(f"{base}-client{sc.client_id}.csv", serialize_dataset(data))
    return 0


def cmd_fixture(args) -> int:
    name = args.fixture if getattr(args, "fixture", None) else args.name
    out_dir = args.out or "fixtures"
    os.makedirs(out_dir, exist_ok=True)
    sem, clients = fixture_scenario(name, n=args.n, root_seed=getattr(args, "root_seed", None) or _root_seed_default())
    base = os.path.join(out_dir, name)
    _write(base + ".scenario.json", serialize_scenario(sem, clients))
    _write(base + ".graph.txt", serialize_graph(sem.dag))
    for sc in clients:
        _write(f"{base}-client{sc.client_id}.csv", serialize_dataset(sample_client(sem, sc)))
    print(f"wrote {name} scenario to {out_dir}/")
    return 0


def cmd_discover_local(args) -> int:
    with open(args.data, encoding="utf-8") as fh:
        data = parse_dataset(fh.read())
    oracle = None
    if args.truth:
        with open(args.truth, encoding="utf-8") as fh:
            oracle = parse_dag(fh.read())
    g = local_discovery(data, args.method, GesConfig(penalty=args.penalty), oracle_dag=oracle)
    text = serialize_graph(g)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_cell(pairs: list[str]) -> Cell:
    kv: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"cell spec {pair!r} is not KEY=VAL")
        key, val = pair.split("=", 1)
        kv[key] = val
    axis = kv.pop("axis", "samples")
    d = int(kv.pop("d", "10"))
    k = int(kv.pop("k", "5"))
    het = kv.pop("het", kv.pop("heterogeneous", "0")).lower() in ("1", "true", "yes")
    n_raw = kv.pop("n", None)
    if kv:
        raise ValueError(f"unknown cell keys: {sorted(kv)}")
    if het:
        n = None
    elif n_raw is None or n_raw == "het":
        raise ValueError("cell needs n=<int> unless het=1")
    else:
        n = int(n_raw)
    return Cell(axis, d, k, n, het)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    if args.cell:
        cell = _parse_cell(args.cell)
        seed = args.seed if args.seed is not None else cfg.root_seed
        row, _ = run_cell_seed(cell, seed, cfg)
        sys.stdout.write(results_header())
        sys.stdout.write(",".join(row.cells()) + "\n")
        return 0 if row.status == "ok" else 1
    ok, failed, path = run_experiment(cfg)
    print(f"{ok} runs ok, {failed} failed -> {path}")
    if failed == 0 and ok >= 0:
        written = write_report(_load_records(path), cfg.out_dir, svg=cfg.svg)
        for p in written:
            print(f"wrote {p}")
        return 0
    return 1


def _load_records(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return parse_results(fh.read())


def cmd_report(args) -> int:
    records = _load_records(args.results)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.results))
    for path in write_report(records, out_dir, svg=args.svg):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedcaus",
        description="Federated causal discovery from interventional data, simulated locally.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def sweep_flags(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seeds", type=int, help="seeds per sweep cell")
        p.add_argument("--axis", choices=("samples", "variables", "clients"))
        p.add_argument("--method", choices=("ges", "oracle"))
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--dp-epsilon", type=float, dest="dp_epsilon")
        p.add_argument("--dp-sensitivity", type=float, dest="dp_sensitivity")
        p.add_argument("--root-seed", type=int, dest="root_seed",
                       help="root seed (default: FEDCAUS_SEED env or 0)")

    g = sub.add_parser("generate", help="write scenario and dataset files for a sweep")
    sweep_flags(g)
    g.add_argument("--fixture", choices=("triangle", "five_node"),
                   help="emit a worked fixture instead of sweep scenarios")
    g.add_argument("--n", type=int, default=5000, help="samples per fixture client")
    g.set_defaults(func=cmd_generate)

    dl = sub.add_parser("discover-local", help="fit one client graph from a dataset CSV")
    dl.add_argument("--data", required=True, help="dataset CSV path")
    dl.add_argument("--method", default="ges", choices=("ges", "oracle"))
    dl.add_argument("--truth", help="true-graph file, required for --method oracle")
    dl.add_argument("--penalty", type=float, default=1.0)
    dl.add_argument("--out", help="write the graph here instead of stdout")
    dl.set_defaults(func=cmd_discover_local)

    r = sub.add_parser("run", help="run a sweep, or one cell with --cell/--seed")
    sweep_flags(r)
    r.add_argument("--svg", action="store_true", help="also draw SVG charts")
    r.add_argument("--cell", nargs="+", metavar="KEY=VAL",
                   help="replay one cell, e.g. --cell axis=samples d=10 k=5 n=500")
    r.add_argument("--seed", type=int, help="seed for the --cell replay")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="aggregate a results CSV into tables and plot data")
    rep.add_argument("--results", required=True, help="results CSV path")
    rep.add_argument("--out", help="output directory (default: beside the results file)")
    rep.add_argument("--svg", action="store_true")
    rep.set_defaults(func=cmd_report)

    f = sub.add_parser("fixture", help="emit a worked example scenario")
    f.add_argument("name", choices=("triangle", "five_node"))
    f.add_argument("--out", help="output directory (default fixtures/)")
    f.add_argument("--n", type=int, default=5000, help="samples per client")
    f.add_argument("--root-seed", type=int, dest="root_seed")
    f.set_defaults(func=cmd_fixture, fixture=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
