"""Penalized model selection and slope-heuristic calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import penalties, resampling
from .exceptions import DegeneratePathError, EmptyModelSetError

__all__ = [
    "Mallows",
    "ClassicalVFCV",
    "SelectionConfig",
    "SelectionPath",
    "theoretical_threshold",
    "filter_models",
    "select",
    "compute_criteria",
    "selection_path",
    "slope_select",
]


@dataclass(frozen=True)
class Mallows:
    """Mallows' Cp, 2 sigma2_hat D / n."""


@dataclass(frozen=True)
class ClassicalVFCV:
    V: int


@dataclass(frozen=True)
class SelectionConfig:
    """How to score candidate models.

    ``method`` is a weight scheme from :mod:`repen.resampling`, ``Mallows()``
    or ``ClassicalVFCV(V)``.  ``constant=None`` uses the scheme's default
    normalizing constant.  ``mc_draws`` switches exchangeable schemes from
    the closed form to a Monte-Carlo estimate.
    """

    method: object
    constant: float | None = None
    overpen_factor: float = 1.0
    threshold: int = 2
    mc_draws: int | None = None

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if not self.overpen_factor > 0:
            raise ValueError("overpen_factor must be positive")
        if self.constant is not None and not self.constant > 0:
            raise ValueError("constant must be positive")

    def effective_constant(self, n):
        if isinstance(self.method, ClassicalVFCV):
            return math.nan
        if isinstance(self.method, Mallows):
            base = 1.0 if self.constant is None else self.constant
        else:
            base = self.constant
            if base is None:
                base = resampling.default_constant(self.method, n)
        return base * self.overpen_factor


def theoretical_threshold(n, alpha_m=0.0):
    """Threshold (26 + 7 alpha_M) ln n from the oracle-inequality regime."""
    return int(math.ceil((26.0 + 7.0 * alpha_m) * math.log(n)))


def filter_models(fits, threshold):
    """Keep the fits whose smallest cell holds at least ``threshold`` points."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    kept = [f for f in fits if f.min_count >= threshold]
    if not kept:
        raise EmptyModelSetError(f"no model has every cell count >= {threshold}")
    return kept


def select(criteria):
    """Model id minimizing the total; ties go to smaller dimension, then id."""
    defined = [c for c in criteria if c.defined and not math.isnan(c.total)]
    if not defined:
        raise EmptyModelSetError("every candidate criterion is undefined")
    return min(defined, key=lambda c: (c.total, c.dim, c.model_id)).model_id


def compute_criteria(fits, data, config, rng=None, blocks=None, family=None):
    """Criterion values of every fit under ``config``.

    ``blocks`` are the V-fold labels (drawn from ``rng`` when missing);
    ``family`` is the pool used for Mallows' variance estimate.
    """
    n = data.n
    method = config.method
    if isinstance(method, (ClassicalVFCV, resampling.VFold)) and blocks is None:
        blocks = resampling.make_blocks(n, method.V, rng)
    if isinstance(method, ClassicalVFCV):
        return [penalties.vfcv_criterion(f.partition, data, blocks, f) for f in fits]
    C = config.effective_constant(n)
    if isinstance(method, Mallows):
        sigma2 = penalties.estimate_sigma2(data, family if family is not None else fits)
        return [penalties.criterion(f, penalties.mallows_penalty(f, C * sigma2, n)) for f in fits]
    out = []
    for f in fits:
        if not f.defined:
            out.append(penalties.criterion(f, math.inf))
        elif isinstance(method, resampling.VFold):
            out.append(penalties.criterion(f, penalties.vfold_penalty(f, data, blocks, C)))
        elif config.mc_draws:
            pen = penalties.resampling_penalty_mc(f, data, method, C, config.mc_draws, rng)
            out.append(penalties.criterion(f, pen))
        else:
            out.append(penalties.criterion(f, penalties.resampling_penalty_closed(f, method, C)))
    return out


@dataclass(frozen=True)
class SelectionPath:
    """Piecewise-constant map C -> argmin_m {risk(m) + C pen0(m)}.

    ``segments`` are ``(c_low, c_high, model_id)`` in increasing C, covering
    (0, inf).
    """

    segments: tuple

    def model_at(self, C):
        if not C > 0:
            raise ValueError("C must be positive")
        for lo, hi, mid in self.segments:
            if C < hi:
                return mid
        return self.segments[-1][2]

    @property
    def breakpoints(self):
        return [hi for _, hi, _ in self.segments[:-1]]

    def __len__(self):
        return len(self.segments)


def selection_path(model_ids, risks, pen0, dims=None):
    """Exact regularization path from the lower convex hull of (pen0, risk)."""
    model_ids = list(model_ids)
    if not model_ids:
        raise EmptyModelSetError("no model to build a path from")
    risks = np.asarray(risks, dtype=float)
    pen0 = np.asarray(pen0, dtype=float)
    if np.any(pen0 < 0):
        raise ValueError("base penalties must be nonnegative")
    dims = np.zeros(len(model_ids), dtype=int) if dims is None else np.asarray(dims)

    # one candidate per pen0 value: least risk, then the select() tie-break
    order = sorted(range(len(model_ids)), key=lambda i: (pen0[i], risks[i], dims[i], model_ids[i]))
    pts = []
    for i in order:
        if pts and pen0[pts[-1]] == pen0[i]:
            continue
        pts.append(i)

    hull = []
    for i in pts:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (pen0[b] - pen0[a]) * (risks[i] - risks[a]) - (risks[b] - risks[a]) * (pen0[i] - pen0[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)

    # keep the decreasing part of the hull: up to the least-risk vertex
    k = int(np.argmin([risks[i] for i in hull]))
    chain = hull[: k + 1]

    # chain[0] wins for large C, chain[-1] as C -> 0
    segments = []
    hi = math.inf
    for a, b in zip(chain[:-1], chain[1:]):
        c = (risks[a] - risks[b]) / (pen0[b] - pen0[a])
        segments.append((c, hi, model_ids[a]))
        hi = c
    segments.append((0.0, hi, model_ids[chain[-1]]))
    segments.reverse()
    return SelectionPath(tuple(segments))


def slope_select(path, dims):
    """Dimension-jump calibration: returns ``(C_hat, model_id)``.

    ``C_hat`` is the breakpoint with the largest drop of the selected
    dimension, and the returned model is the one selected at 2 * C_hat.
    ``dims`` maps model ids to dimensions.
    """
    seq = [dims[mid] for _, _, mid in path.segments]
    jumps = [seq[i] - seq[i + 1] for i in range(len(seq) - 1)]
    if not jumps or max(jumps) <= 0:
        raise DegeneratePathError("the selected dimension never drops along the path")
    i = int(np.argmax(jumps))
    c_hat = path.segments[i][1]
    return c_hat, path.model_at(2.0 * c_hat)
