"""File formats: edge-list graph text, dataset CSV, scenario JSON, results CSV.

All parsers are strict: malformed input raises ParseError with a line and
column, never an arbitrary exception. All writers are deterministic, so a
parse/serialize round trip is byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graphs import Dag, PDGraph, _default_labels
from .sem import ClientScenario, Dataset, LinearSem

SCENARIO_FORMAT = "fedcaus-scenario/1"
RESULTS_FORMAT = "# fedcaus-results/1"

RESULT_COLUMNS = (
    "axis",
    "d",
    "n",
    "k",
    "heterogeneous",
    "method",
    "seed",
    "status",
    "shd_cpdag",
    "f1_cpdag",
    "shd_refined",
    "f1_refined",
    "rounds",
    "queries",
    "wall_ms",
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


# -- graph text ------------------------------------------------------------


def serialize_graph(g: PDGraph) -> str:
    """Edge-list text: a `pdag d=<n>` header, then one `i -> j` or `i -- j`
    line per edge in sorted pair order. Non-default labels go in the header."""
    labels = g.labels
    header = f"pdag d={g.node_count}"
    if labels != _default_labels(g.node_count):
        header += " labels=" + ",".join(labels)
    lines = [header]
    entries = []
    for i, j in g.directed_edges():
        entries.append(((min(i, j), max(i, j)), f"{labels[i]} -> {labels[j]}"))
    for i, j in g.undirected_edges():
        entries.append(((i, j), f"{labels[i]} -- {labels[j]}"))
    entries.sort()
    lines += [text for _, text in entries]
    return "\n".join(lines) + "\n"


def _resolve_node(token: str, labels: Sequence[str], lineno: int, col: int) -> int:
    if token in labels:
        return labels.index(token)
    # Single capital letters name nodes positionally, matching textbook figures.
    if len(token) == 1 and "A" <= token <= "Z":
        idx = ord(token) - ord("A")
        if idx < len(labels):
            return idx
    if token.isdigit():
        idx = int(token)
        if 1 <= idx <= len(labels):
            return idx - 1
        raise ParseError(f"node index out of range 1..{len(labels)}: {token}", lineno, col)
    raise ParseError(f"unknown node {token!r}", lineno, col)


def parse_graph(text: str) -> PDGraph:
    """Parse the edge-list format. Rejects missing/bad headers, unknown
    nodes, self-loops and duplicate pairs."""
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise ParseError("missing 'pdag d=<n>' header", 1)
    head = lines[0].split()
    if head[0] != "pdag" or len(head) < 2 or not head[1].startswith("d="):
        raise ParseError("missing 'pdag d=<n>' header", 1)
    try:
        d = int(head[1][2:])
    except ValueError:
        raise ParseError(f"bad node count {head[1][2:]!r}", 1, len("pdag ") + 1) from None
    if d < 0:
        raise ParseError("node count must be non-negative", 1)
    labels: Sequence[str] = _default_labels(d)
    for extra in head[2:]:
        if extra.startswith("labels="):
            labels = extra[len("labels=") :].split(",") if d else []
            if len(labels) != d or len(set(labels)) != d:
                raise ParseError("label list does not match node count", 1)
        else:
            raise ParseError(f"unexpected header field {extra!r}", 1)

    m = np.zeros((d, d), dtype=bool)
    seen: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[1] not in ("->", "--"):
            raise ParseError("expected '<node> -> <node>' or '<node> -- <node>'", lineno)
        col_j = raw.index(parts[2], raw.index(parts[1]) + len(parts[1])) + 1
        i = _resolve_node(parts[0], labels, lineno, raw.index(parts[0]) + 1)
        j = _resolve_node(parts[2], labels, lineno, col_j)
        if i == j:
            raise ParseError(f"self-loop on {parts[0]}", lineno)
        pair = (min(i, j), max(i, j))
        if pair in seen:
            raise ParseError(f"duplicate pair {parts[0]}, {parts[2]}", lineno)
        seen.add(pair)
        m[i, j] = True
        if parts[1] == "--":
            m[j, i] = True
    try:
        return PDGraph(m, labels)
    except ValueError as e:  # pragma: no cover - guarded above
        raise ParseError(str(e), 1) from None


def parse_dag(text: str) -> Dag:
    g = parse_graph(text)
    try:
        return Dag(g.matrix, g.labels)
    except ValueError as e:
        raise ParseError(str(e), 1) from None


# -- dataset CSV -------------------------------------------------------------


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def serialize_dataset(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(data.labels)
    for row in data.values:
        writer.writerow([format_float(v) for v in row])
    return buf.getvalue()


def parse_dataset(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty dataset file", 1) from None
    if not header or any(not h for h in header):
        raise ParseError("bad column header", 1)
    rows: list[list[float]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} values, found {len(row)}", lineno
            )
        vals = []
        for colno, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"bad number {cell!r}", lineno, colno) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite value {cell!r}", lineno, colno)
            vals.append(v)
        rows.append(vals)
    values = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
    try:
        return Dataset(values, labels=header)
    except ValueError as e:
        raise ParseError(str(e), 1) from None


# -- scenario JSON ------------------------------------------------------------


def serialize_scenario(sem: LinearSem, clients: Sequence[ClientScenario]) -> str:
    weights = []
    for j, i in sem.dag.directed_edges():
        weights.append([int(j), int(i), float(sem.weights[j, i])])
    weights.sort(key=lambda t: (t[0], t[1]))
    doc = {
        "format": SCENARIO_FORMAT,
        "dag": serialize_graph(sem.dag),
        "weights": weights,
        "noise_std": [float(s) for s in sem.noise_std],
        "clients": [
            {
                "id": c.client_id,
                "n": c.sample_count,
                "structural": {str(t): list(ps) for t, ps in c.structural},
                "parametric": {
                    str(t): [c.parametric_map()[t][0], c.parametric_map()[t][1]]
                    for t in sorted(c.parametric_map())
                },
                "seed": c.rng_seed,
            }
            for c in clients
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def parse_scenario(text: str) -> tuple[LinearSem, list[ClientScenario]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"bad JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(doc, dict) or doc.get("format") != SCENARIO_FORMAT:
        raise ParseError(f"unknown scenario format {doc.get('format')!r}", 1)
    try:
        dag = parse_dag(doc["dag"])
        d = dag.node_count
        w = np.zeros((d, d))
        for j, i, val in doc["weights"]:
            w[int(j), int(i)] = float(val)
        noise = np.array([float(s) for s in doc["noise_std"]], dtype=float)
        sem = LinearSem(dag, w, noise)
        clients = []
        for entry in doc["clients"]:
            clients.append(
                ClientScenario.of(
                    client_id=int(entry["id"]),
                    sample_count=int(entry["n"]),
                    structural={int(t): tuple(ps) for t, ps in entry.get("structural", {}).items()},
                    parametric={
                        int(t): (float(ms), float(ns))
                        for t, (ms, ns) in entry.get("parametric", {}).items()
                    },
                    rng_seed=int(entry["seed"]),
                )
            )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad scenario document: {e}", 1) from None
    return sem, clients


# -- results CSV ---------------------------------------------------------------


@dataclass
class ResultRow:
    axis: str
    d: int
    n: object  # int or the string "het"
    k: int
    heterogeneous: bool
    method: str
    seed: int
    status: str
    shd_cpdag: float | None = None
    f1_cpdag: float | None = None
    shd_refined: float | None = None
    f1_refined: float | None = None
    rounds: int | None = None
    queries: int | None = None
    wall_ms: float | None = None

    def cells(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "1" if v else "0"
            if isinstance(v, float):
                return format_float(v)
            return str(v)

        return [fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def results_header() -> str:
    return RESULTS_FORMAT + "\n" + ",".join(RESULT_COLUMNS) + "\n"


def append_result(path, row: ResultRow) -> None:
    import os

    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8") as fh:
        if fresh:
            fh.write(results_header())
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(row.cells())


def parse_results(text: str) -> list[dict]:
    lines = text.split("\n")
    if not lines or lines[0].strip() != RESULTS_FORMAT.strip():
        raise ParseError(f"unknown results format; expected {RESULTS_FORMAT!r}", 1)
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing column header", 2) from None
    if tuple(header) != RESULT_COLUMNS:
        raise ParseError("unexpected result columns", 2)
    out = []
    for lineno, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", lineno)
        rec: dict = dict(zip(header, row))
        for key in ("d", "k", "seed"):
            try:
                rec[key] = int(rec[key])
            except ValueError:
                raise ParseError(f"bad integer in column {key}: {rec[key]!r}", lineno) from None
        rec["heterogeneous"] = rec["heterogeneous"] == "1"
        for key in ("shd_cpdag", "f1_cpdag", "shd_refined", "f1_refined", "wall_ms"):
            if rec[key] != "":
                try:
                    rec[key] = float(rec[key])
                except ValueError:
                    raise ParseError(f"bad number in column {key}: {rec[key]!r}", lineno) from None
            else:
                rec[key] = None
        out.append(rec)
    return out


# -- candidate log (JSON lines) --------------------------------------------------


def serialize_round_log(records: Iterable[Mapping]) -> str:
    lines = []
    for rec in records:
        lines.append(json.dumps(dict(rec), sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")
