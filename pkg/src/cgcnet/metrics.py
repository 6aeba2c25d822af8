"""Treatment-effect error metrics and constrained/unconstrained ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

METRICS = ("sqrt_pehe", "ate_error", "att_error")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    sqrt_pehe: float | None
    ate_error: float | None
    att_error: float | None
    n_eval: int
    split: str = "test"

    def get(self, metric: str) -> float | None:
        return getattr(self, metric)


def _vectors(*arrays):
    out = [np.asarray(a, dtype=np.float64).ravel() for a in arrays]
    n = len(out[0])
    if any(len(a) != n for a in out):
        raise MetricError(f"length mismatch: {[len(a) for a in out]}")
    if n == 0:
        raise MetricError("empty input")
    return out


def sqrt_pehe(ite_hat, mu1, mu0) -> float:
    """Root mean squared error between predicted and true individual effects."""
    ite_hat, mu1, mu0 = _vectors(ite_hat, mu1, mu0)
    err = ite_hat - (mu1 - mu0)
    return float(np.sqrt(np.mean(err * err)))


def ate_error(ite_hat, mu1, mu0) -> float:
    ite_hat, mu1, mu0 = _vectors(ite_hat, mu1, mu0)
    return float(abs(ite_hat.mean() - (mu1 - mu0).mean()))


def att_error(ds, ite_hat) -> float:
    """
    ATT error on the experimental subsample.

    The true ATT is the difference of observed outcome means between treated
    and control experimental rows; the estimate averages ``ite_hat`` over
    treated experimental rows.
    """
    if ds.exp is None:
        raise MetricError("dataset has no experimental flag; ATT error is undefined")
    (ite_hat,) = _vectors(ite_hat)
    if len(ite_hat) != len(ds.t):
        raise MetricError(f"length mismatch: {len(ite_hat)} predictions for {len(ds.t)} rows")
    exp = ds.exp == 1
    treated = exp & (ds.t == 1)
    control = exp & (ds.t == 0)
    if not treated.any() or not control.any():
        raise MetricError("experimental subset lacks a treated or a control row")
    att_true = ds.y[treated].mean() - ds.y[control].mean()
    return float(abs(att_true - ite_hat[treated].mean()))


def evaluate(ds, ite_hat, split: str = "test") -> EvalReport:
    """Every metric the dataset supports."""
    pehe = ate = att = None
    if ds.mu0 is not None and ds.mu1 is not None:
        pehe = sqrt_pehe(ite_hat, ds.mu1, ds.mu0)
        ate = ate_error(ite_hat, ds.mu1, ds.mu0)
    if ds.exp is not None:
        att = att_error(ds, ite_hat)
    return EvalReport(pehe, ate, att, len(ite_hat), split)


def ratio_report(
    constrained: Sequence[EvalReport], unconstrained: Sequence[EvalReport]
) -> dict[str, float | None]:
    """
    Mean constrained metric over mean unconstrained metric, per metric.

    A metric missing from either side, or with a zero unconstrained mean,
    maps to ``None`` (undefined).
    """
    if not constrained or not unconstrained:
        raise MetricError("ratio_report needs non-empty report lists")
    out: dict[str, float | None] = {}
    for m in METRICS:
        c = [r.get(m) for r in constrained]
        u = [r.get(m) for r in unconstrained]
        if any(v is None for v in c + u):
            out[m] = None
            continue
        den = float(np.mean(u))
        out[m] = None if den == 0 else float(np.mean(c)) / den
    return out


def mean_sd_sem(values: Sequence[float]) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    if len(v) < 2:
        return mean, math.nan, math.nan
    sd = float(v.std(ddof=1))
    return mean, sd, sd / math.sqrt(len(v))
