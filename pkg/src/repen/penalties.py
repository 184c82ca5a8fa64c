"""Model selection criteria for histogram regression.

Every resampling penalty is ``C`` times the sum over cells of

    E_W[(p_hat + p_hat * Wbar) * (beta_hat^W - beta_hat)^2 | Wbar > 0]

where ``beta_hat^W`` is the weighted mean of the cell.  Exchangeable schemes
have the closed form ``(C / n) * sum (R1 + R2) * S / (n_cell - 1)``; the same
expectation can be evaluated over any explicit set of weight vectors (Monte
Carlo draws, exhaustive subsets, the V leave-one-block-out vectors).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import resampling
from .exceptions import DegenerateConditioningError, UndefinedModelError
from .histmodels import empirical_risk, fit as fit_histogram

__all__ = [
    "PenaltyEstimate",
    "CriterionValue",
    "resampling_penalty_closed",
    "resampling_penalty_mc",
    "penalty_from_weights",
    "vfold_penalty",
    "ideal_penalty",
    "mallows_penalty",
    "estimate_sigma2",
    "vfcv_criterion",
    "criterion",
    "block_stats",
]


@dataclass(frozen=True)
class PenaltyEstimate:
    value: float
    method: str  # "closed-form", "monte-carlo", "exact-vfold" or "enumeration"
    constant: float
    draws: int | None = None
    se: float | None = None


@dataclass(frozen=True)
class CriterionValue:
    model_id: str
    dim: int
    empirical_risk: float
    penalty: float
    total: float
    defined: bool = True


def _require_defined(fitted):
    if not fitted.defined:
        raise UndefinedModelError(f"model {fitted.partition.model_id} has an empty cell")


def _residuals(fitted, data):
    return data.y - fitted.means[fitted.cells]


def resampling_penalty_closed(fitted, scheme, C):
    """Exact resampling penalty for an exchangeable weight scheme."""
    _require_defined(fitted)
    if isinstance(scheme, resampling.VFold):
        raise TypeError("V-fold weights are not exchangeable; use vfold_penalty")
    n = fitted.n
    terms = []
    for n_cell, s in zip(fitted.counts.tolist(), fitted.sumsq.tolist()):
        if n_cell <= 1 or s == 0.0:
            continue
        m = resampling.weight_moments(scheme, n, n_cell)
        terms.append((m.r1 + m.r2) * s / (n_cell - 1))
    return PenaltyEstimate(C * math.fsum(terms) / n, "closed-form", float(C))


def _cell_weight_sums(fitted, data, weights):
    """Per-cell sums of w and of w * residual, shape (B, D)."""
    order = np.argsort(fitted.cells, kind="stable")
    starts = np.searchsorted(fitted.cells[order], np.arange(fitted.dim))
    r = _residuals(fitted, data)[order]
    w = weights[:, order]
    sw = np.add.reduceat(w, starts, axis=1)
    swr = np.add.reduceat(w * r, starts, axis=1)
    return sw, swr


def penalty_from_weights(fitted, data, weights, C, probs=None):
    """Penalty averaged over explicit weight vectors (rows of ``weights``).

    With ``probs=None`` rows are equally likely and the result carries a
    Monte-Carlo standard error; otherwise ``probs`` gives the exact law.
    Draws where a cell's weights vanish are dropped from that cell only.
    Returns ``(value, se)``.
    """
    _require_defined(fitted)
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    n = fitted.n
    sw, swr = _cell_weight_sums(fitted, data, weights)
    valid = sw > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.where(valid, swr / sw, 0.0)
    term = (fitted.counts[None, :] + sw) / n * diff * diff
    if probs is None:
        probs = np.full(weights.shape[0], 1.0 / weights.shape[0])
        with_se = True
    else:
        probs = np.asarray(probs, dtype=float)
        with_se = False
    mass = probs @ valid
    if np.any(mass == 0):
        raise DegenerateConditioningError("some cell has zero weight in every draw")
    cell_means = (probs @ np.where(valid, term, 0.0)) / mass
    value = C * math.fsum(cell_means)
    se = None
    if with_se:
        B = weights.shape[0]
        # linearized contribution of each draw to the ratio estimator
        z = np.where(valid, term - cell_means, 0.0) / mass
        z = z.sum(axis=1)
        se = C * float(np.std(z, ddof=1) / math.sqrt(B)) if B > 1 else math.inf
    return value, se


def resampling_penalty_mc(fitted, data, scheme, C, B, rng, chunk=10_000):
    """Monte-Carlo resampling penalty from ``B`` weight draws."""
    _require_defined(fitted)
    if B < 1:
        raise ValueError("B must be >= 1")
    rng = np.random.default_rng(rng)
    n = fitted.n
    blocks = None
    if isinstance(scheme, resampling.VFold):
        blocks = resampling.make_blocks(n, scheme.V, rng)
    sw_all, swr_all = [], []
    for start in range(0, B, chunk):
        m = min(chunk, B - start)
        w = resampling.draw_weights(scheme, n, rng, size=m, blocks=blocks)
        sw, swr = _cell_weight_sums(fitted, data, w)
        sw_all.append(sw)
        swr_all.append(swr)
    sw = np.concatenate(sw_all)
    swr = np.concatenate(swr_all)
    valid = sw > 0
    if np.any(~valid.any(axis=0)):
        raise DegenerateConditioningError("some cell has zero weight in every draw")
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.where(valid, swr / sw, 0.0)
    term = np.where(valid, (fitted.counts[None, :] + sw) / n * diff * diff, 0.0)
    frac = valid.mean(axis=0)
    cell_means = term.mean(axis=0) / frac
    z = (np.where(valid, term - cell_means, 0.0) / frac).sum(axis=1)
    se = C * float(np.std(z, ddof=1) / math.sqrt(B)) if B > 1 else math.inf
    return PenaltyEstimate(C * math.fsum(cell_means), "monte-carlo", float(C), B, se)


def block_stats(fitted, data, blocks, V=None):
    """Per (cell, block) counts, residual sums and residual sums of squares."""
    blocks = np.asarray(blocks)
    V = int(blocks.max()) + 1 if V is None else V
    D = fitted.dim
    r = _residuals(fitted, data)
    key = fitted.cells * V + blocks
    size = D * V
    cnt = np.bincount(key, minlength=size).reshape(D, V)
    rsum = np.bincount(key, weights=r, minlength=size).reshape(D, V)
    rsq = np.bincount(key, weights=r * r, minlength=size).reshape(D, V)
    return cnt, rsum, rsq


def vfold_penalty(fitted, data, blocks, C=None, stats=None):
    """Exact V-fold penalty: average over the V leave-one-block-out vectors.

    ``C`` defaults to V - 1.
    """
    _require_defined(fitted)
    blocks = np.asarray(blocks)
    V = int(blocks.max()) + 1
    if C is None:
        C = V - 1.0
    cnt, rsum, _ = stats if stats is not None else block_stats(fitted, data, blocks, V)
    n = fitted.n
    c = V / (V - 1)
    n_cell = fitted.counts[:, None]
    kept = n_cell - cnt
    valid = kept > 0
    if np.any(~valid.any(axis=1)):
        raise DegenerateConditioningError("some cell is emptied by every fold")
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.where(valid, rsum / kept, 0.0)
    term = (n_cell + c * kept) / n * diff * diff
    cell_means = term.sum(axis=1) / valid.sum(axis=1)
    return PenaltyEstimate(C * math.fsum(cell_means), "exact-vfold", float(C))


def ideal_penalty(fitted, truth):
    """Estimable part of the ideal penalty, sum (p + p_hat)(beta_hat - beta)^2."""
    _require_defined(fitted)
    p_hat = fitted.counts / fitted.n
    return math.fsum((truth.p + p_hat) * (fitted.means - truth.beta) ** 2)


def mallows_penalty(fitted, sigma2_hat, n):
    if sigma2_hat < 0:
        raise ValueError("sigma2_hat must be nonnegative")
    return 2.0 * sigma2_hat * fitted.dim / n


def estimate_sigma2(data, family):
    """Residual variance of the largest model whose cells all hold >= 2 points.

    Returns n * risk / (n - D) for that model.
    """
    admissible = [f for f in family if f.counts.min() >= 2]
    if not admissible:
        raise ValueError("no model with every cell count >= 2")
    best = max(admissible, key=lambda f: f.dim)
    n = best.n
    return math.fsum(best.sumsq) / (n - best.dim)


def vfcv_criterion(partition, data, blocks, fitted=None, stats=None):
    """Classical V-fold cross-validation estimate of the prediction risk.

    Infinite (and flagged undefined) when a training fold empties a cell.
    """
    blocks = np.asarray(blocks)
    V = int(blocks.max()) + 1
    if fitted is None:
        fitted = fit_histogram(partition, data)
    if not fitted.defined:
        return CriterionValue(partition.model_id, partition.dim, math.inf, math.inf, math.inf, False)
    risk = empirical_risk(fitted)
    cnt, rsum, rsq = stats if stats is not None else block_stats(fitted, data, blocks, V)
    kept = fitted.counts[:, None] - cnt
    if np.any(kept == 0):
        return CriterionValue(partition.model_id, partition.dim, risk, math.inf, math.inf, False)
    shift = rsum / kept
    held_out = rsq + 2.0 * shift * rsum + cnt * shift * shift
    fold_sizes = cnt.sum(axis=0)
    value = math.fsum(held_out.sum(axis=0) / fold_sizes) / V
    return CriterionValue(partition.model_id, partition.dim, risk, value - risk, value, True)


def criterion(fitted, penalty):
    """Penalized criterion P_n gamma(s_m) + pen(m); undefined models get +inf."""
    pid = fitted.partition.model_id
    if not fitted.defined:
        return CriterionValue(pid, fitted.dim, math.inf, math.inf, math.inf, False)
    risk = empirical_risk(fitted)
    pen = penalty.value if isinstance(penalty, PenaltyEstimate) else float(penalty)
    return CriterionValue(pid, fitted.dim, risk, pen, risk + pen, True)
