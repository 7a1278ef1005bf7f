"""Structure-recovery scoring: SHD, F1, AUDRC."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError, MetricError


@dataclass(frozen=True)
class MetricsReport:
    shd: int
    f1: float
    audrc: float
    tau: float


def threshold(weights, tau):
    """Binary adjacency: entry true iff |w_ij| >= tau and i != j.

    The comparison is >=, so a weight exactly at tau is kept.
    """
    if tau < 0:
        raise ConfigError("tau must be >= 0")
    w = np.asarray(weights, dtype=np.float64)
    binary = np.abs(w) >= tau
    np.fill_diagonal(binary, False)
    return binary


def _as_binary(mat):
    b = np.asarray(mat)
    if b.dtype != bool:
        b = b != 0
    b = b.copy()
    np.fill_diagonal(b, False)
    return b


def shd(b_true, b_est):
    """Count of disagreeing off-diagonal entries; a reversed edge scores 2."""
    bt, be = _as_binary(b_true), _as_binary(b_est)
    if bt.shape != be.shape:
        raise DataError(f"dimension mismatch: {bt.shape} vs {be.shape}")
    return int(np.sum(bt != be))


def f1(b_true, b_est):
    """Directed-edge F1. Undefined (raises) when the true graph is empty;
    returns 0 when no edges are predicted."""
    bt, be = _as_binary(b_true), _as_binary(b_est)
    if bt.shape != be.shape:
        raise DataError(f"dimension mismatch: {bt.shape} vs {be.shape}")
    n_true = int(bt.sum())
    if n_true == 0:
        raise MetricError("F1 is undefined for an empty true graph")
    n_pred = int(be.sum())
    if n_pred == 0:
        return 0.0
    tp = int(np.sum(bt & be))
    precision = tp / n_pred
    recall = tp / n_true
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def edge_ranking(weights):
    """All d(d-1) off-diagonal slots as (i, j, |w|), descending by magnitude.

    Equal magnitudes are ordered by (i, j) lexicographic so the ranking is
    deterministic.
    """
    w = np.asarray(weights, dtype=np.float64)
    d = w.shape[0]
    slots = [(i, j, abs(w[i, j])) for i in range(d) for j in range(d) if i != j]
    slots.sort(key=lambda s: (-s[2], s[0], s[1]))
    return slots


def audrc(b_true, ranking):
    """Mean precision over all top-m prefixes of the ranked edge list."""
    bt = _as_binary(b_true)
    d = bt.shape[0]
    m_total = d * (d - 1)
    if len(ranking) != m_total:
        raise DataError(f"ranking must cover all {m_total} slots, got {len(ranking)}")
    hits = 0
    total = 0.0
    for m, (i, j, _) in enumerate(ranking, start=1):
        hits += int(bt[i, j])
        total += hits / m
    return total / m_total


def score(b_true_weights, b_est_weights, tau=0.3) -> MetricsReport:
    """Threshold at tau and compute all three metrics."""
    bt = threshold(b_true_weights, tau=np.finfo(float).tiny)
    be = threshold(b_est_weights, tau)
    return MetricsReport(
        shd=shd(bt, be),
        f1=f1(bt, be),
        audrc=audrc(bt, edge_ranking(b_est_weights)),
        tau=tau,
    )
