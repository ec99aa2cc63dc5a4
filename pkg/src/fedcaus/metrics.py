"""Structural accuracy metrics for partially directed estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Dag, PDGraph


@dataclass(frozen=True)
class EvalResult:
    shd: int
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    oriented_estimate: int
    oriented_truth: int


def shd(estimate: PDGraph, truth: PDGraph) -> int:
    """Structural Hamming distance over unordered pairs.

    Each pair carries one of four marks (absent, undirected, or one of the
    two directions); any mismatch costs one unit, so a reversal and a
    directed-versus-undirected disagreement both count once.
    """
    if estimate.node_count != truth.node_count:
        raise ValueError("node count differs")
    diff = estimate.matrix != truth.matrix
    both = diff | diff.T
    return int(np.triu(both, 1).sum())


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def orientation_f1(estimate: PDGraph, truth: Dag, skeleton_only: bool = False) -> EvalResult:
    """Precision, recall and F1 of the directed edge claims.

    Only edges the estimate actually directs can score: a true edge left
    undirected is a missed orientation (a false negative), never a true
    positive. With skeleton_only the comparison drops directions entirely;
    that variant is informative but it is not the headline number.
    """
    if estimate.node_count != truth.node_count:
        raise ValueError("node count differs")
    truth_dir = set(truth.directed_edges())
    if skeleton_only:
        est_pairs = {tuple(sorted(e)) for e in estimate.directed_edges()} | set(estimate.undirected_edges())
        truth_pairs = {tuple(sorted(e)) for e in truth_dir}
        tp = len(est_pairs & truth_pairs)
        fp = len(est_pairs - truth_pairs)
        fn = len(truth_pairs - est_pairs)
    else:
        est_dir = set(estimate.directed_edges())
        tp = len(est_dir & truth_dir)
        fp = len(est_dir - truth_dir)
        fn = len(truth_dir - est_dir)
    precision, recall, f1 = _prf(tp, fp, fn)
    return EvalResult(
        shd=shd(estimate, truth),
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        oriented_estimate=len(estimate.directed_edges()),
        oriented_truth=len(truth_dir),
    )


def evaluate(estimate: PDGraph, truth: Dag) -> EvalResult:
    """Headline evaluation: pairwise SHD plus orientation F1 against the
    generating graph."""
    return orientation_f1(estimate, truth)
