"""
ICA-based linear non-Gaussian causal discovery.

Used to recover a causal graph from data when no expert graph is supplied.
The graph only feeds group construction, so variables that end up without
retained edges are absorbed later by the leftover group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .graph import CausalGraph, normalize_discovered

EXHAUSTIVE_MAX_VARS = 8


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class MixingEstimate:
    """Unmixing matrix acting on column-standardized data (rows unit norm)."""

    unmixing: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class DiscoveryFailure:
    reason: str
    iterations: int = 0


def _column_name(names, j):
    return names[j] if names is not None else f"column {j}"


def standardize(data: np.ndarray, names: Sequence[str] | None = None) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    sd = data.std(axis=0)
    for j in np.flatnonzero(sd == 0):
        raise RankDeficiencyError(f"{_column_name(names, j)} has zero variance")
    return (data - data.mean(axis=0)) / sd


def _dependent_column(cov: np.ndarray) -> int:
    for j in range(1, cov.shape[0] + 1):
        if np.linalg.matrix_rank(cov[:j, :j], tol=1e-10) < j:
            return j - 1
    return cov.shape[0] - 1


def fast_ica(
    data: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> MixingEstimate:
    """
    Deflation FastICA with the tanh contrast.

    Parameters
    ----------
    data : ndarray, shape (n, k)
        Observations; standardized internally.
    tol : float
        Convergence threshold on ``| |w_new . w| - 1 |`` per component.
    max_iter : int
        Iteration cap per component. Hitting it marks the estimate as not
        converged.
    seed : int
        Seed for the random starting rows.
    names : sequence of str, optional
        Column names used in error messages.

    Returns
    -------
    MixingEstimate
        ``unmixing @ standardized_data.T`` are the recovered sources.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be a 2-d array")
    n, k = data.shape
    if k < 2 or n <= k:
        raise ValueError(f"need n > k >= 2, got n={n}, k={k}")
    xs = standardize(data, names)
    cov = xs.T @ xs / n
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] < 1e-10 * evals[-1]:
        j = _dependent_column(cov)
        raise RankDeficiencyError(
            f"covariance is rank deficient: {_column_name(names, j)} is linearly dependent on earlier columns"
        )
    whitening = (evecs / np.sqrt(evals)).T
    z = np.ascontiguousarray(whitening @ xs.T)

    rng = np.random.default_rng(seed)
    w_white = np.zeros((k, k))
    converged = True
    total = 0
    for p in range(k):
        w = rng.standard_normal(k)
        w /= np.linalg.norm(w)
        for it in range(1, max_iter + 1):
            w_new = _kernels.ica_update(w, z)
            w_new -= w_white[:p].T @ (w_white[:p] @ w_new)
            w_new /= np.linalg.norm(w_new)
            lim = abs(abs(w_new @ w) - 1.0)
            w = w_new
            if lim < tol:
                break
        else:
            converged = False
        total += it
        w_white[p] = w
    unmixing = w_white @ whitening
    unmixing /= np.linalg.norm(unmixing, axis=1, keepdims=True)
    return MixingEstimate(unmixing, converged, total)


def greedy_order(b2: np.ndarray) -> np.ndarray:
    """Repeatedly take the variable with the least squared inflow from the rest."""
    k = b2.shape[0]
    remaining = list(range(k))
    order = []
    while remaining:
        sub = b2[np.ix_(remaining, remaining)]
        inflow = sub.sum(axis=1) - np.diag(sub)
        pick = remaining[int(np.argmin(inflow))]
        order.append(pick)
        remaining.remove(pick)
    return np.array(order, dtype=np.int64)


def causal_order(b: np.ndarray) -> np.ndarray:
    b2 = np.ascontiguousarray(b * b)
    if b.shape[0] <= EXHAUSTIVE_MAX_VARS:
        return np.asarray(_kernels.best_order(b2), dtype=np.int64)
    return greedy_order(b2)


def refit_along_order(xs: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of each variable on its causal predecessors."""
    k = xs.shape[1]
    b = np.zeros((k, k))
    for pos in range(1, k):
        target, preds = order[pos], order[:pos]
        coef, *_ = np.linalg.lstsq(xs[:, preds], xs[:, target], rcond=None)
        b[target, preds] = coef
    return b


def lingam_matrix(
    est: MixingEstimate, prune_threshold: float = 0.1, xs: np.ndarray | None = None
) -> np.ndarray:
    """
    Strictly lower-triangular (up to permutation) coefficient matrix from an
    unmixing estimate; ``b[i, j]`` is the effect of variable ``j`` on ``i``.

    When the standardized data ``xs`` is given, the coefficients allowed by
    the causal order are re-estimated by least squares before pruning.
    """
    w = est.unmixing
    k = w.shape[0]
    with np.errstate(divide="ignore"):
        cost = -np.log(np.abs(w))
    cost[~np.isfinite(cost)] = 1e12
    rows, cols = linear_sum_assignment(cost)
    w_perm = np.empty_like(w)
    w_perm[cols] = w[rows]
    w_perm /= np.diag(w_perm)[:, None]
    b = np.eye(k) - w_perm
    order = causal_order(b)
    pos = np.empty(k, dtype=np.int64)
    pos[order] = np.arange(k)
    # keep b[i, j] only if j precedes i in the causal order
    keep = pos[None, :] < pos[:, None]
    b = refit_along_order(xs, order) if xs is not None else np.where(keep, b, 0.0)
    b[np.abs(b) < prune_threshold] = 0.0
    return b


def ica_lingam(
    data: np.ndarray,
    names: Sequence[str],
    treatment: str,
    outcome: str,
    prune_threshold: float = 0.1,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 500,
    refit: bool = True,
) -> CausalGraph | DiscoveryFailure:
    """
    Discover a DAG over ``names`` and orient every outcome edge into the
    outcome. Returns :class:`DiscoveryFailure` when ICA does not converge.

    With ``refit`` the edge weights are least-squares estimates given the
    recovered causal order; otherwise they come straight from the
    normalized unmixing matrix.
    """
    names = list(names)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(names):
        raise ValueError(f"data has {np.shape(data)[-1]} columns but {len(names)} names")
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    est = fast_ica(data, tol=tol, max_iter=max_iter, seed=seed, names=names)
    if not est.converged:
        return DiscoveryFailure(f"FastICA did not converge within {max_iter} iterations", est.iterations)
    b = lingam_matrix(est, prune_threshold, standardize(data) if refit else None)
    edges = {(names[j], names[i]) for i, j in zip(*np.nonzero(b))}
    g = CausalGraph(tuple(names), frozenset(edges), treatment, outcome)
    return normalize_discovered(g)
