"""Histogram model families on [0, 1] and their least-squares fits.

Cells are half-open ``[b_k, b_{k+1})`` except the last, which is closed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import UndefinedModelError

__all__ = [
    "Partition",
    "FittedHistogram",
    "TruthCellStats",
    "Regular",
    "TwoBinSizes",
    "DyadicRegular",
    "DyadicTwoBin",
    "build_family",
    "fit",
    "empirical_risk",
    "truth_stats",
    "excess_loss",
    "integrate_squared_error",
]

GL_NODES = 32


@dataclass(frozen=True, eq=False)
class Partition:
    breakpoints: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("a partition needs at least two breakpoints")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        b.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)

    @property
    def dim(self):
        return self.breakpoints.size - 1

    @property
    def lengths(self):
        return np.diff(self.breakpoints)

    def cell_index(self, x):
        """Index of the cell containing each point of ``x``."""
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, self.dim - 1)

    def __repr__(self):
        return f"Partition({self.model_id!r}, D={self.dim})"


@dataclass(frozen=True, eq=False)
class FittedHistogram:
    """Per-cell count, mean and centered sum of squares.

    ``means`` is NaN for empty cells.
    """

    partition: Partition
    counts: np.ndarray
    means: np.ndarray
    sumsq: np.ndarray
    cells: np.ndarray = field(repr=False, default=None)

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def dim(self):
        return self.partition.dim

    @property
    def defined(self):
        return bool(np.all(self.counts > 0))

    @property
    def min_count(self):
        return int(self.counts.min())

    def predict(self, x):
        return self.means[self.partition.cell_index(x)]


@dataclass(frozen=True, eq=False)
class TruthCellStats:
    p: np.ndarray
    beta: np.ndarray
    bias: np.ndarray
    sigma2: np.ndarray

    @property
    def approximation_error(self):
        return float(math.fsum(self.bias))


# -- model families ----------------------------------------------------------


@dataclass(frozen=True)
class Regular:
    """Regular histograms with ``d_min <= D <= d_max`` pieces.

    ``d_max=None`` caps at ``floor(n / ln n)``.
    """

    d_min: int = 1
    d_max: int | None = None


@dataclass(frozen=True)
class TwoBinSizes:
    """Regular on [0, 1/2) with D1 pieces and on [1/2, 1] with D2 pieces.

    ``None`` caps default to ``floor(n / (2 ln n))``.
    """

    d1_max: int | None = None
    d2_max: int | None = None
    plus_constant: bool = True


@dataclass(frozen=True)
class DyadicRegular:
    """Regular histograms with 2**k pieces, ``0 <= k <= k_max``.

    ``k_max=None`` means ``floor(log2 n) - 1``.
    """

    k_max: int | None = None


@dataclass(frozen=True)
class DyadicTwoBin:
    """2**k1 pieces on [0, 1/2) and 2**k2 pieces on [1/2, 1]."""

    k_max: int | None = None
    plus_constant: bool = True


def _regular(D):
    return np.linspace(0.0, 1.0, D + 1)


def _two_halves(D1, D2):
    left = np.linspace(0.0, 0.5, D1 + 1)
    right = np.linspace(0.5, 1.0, D2 + 1)
    return np.concatenate([left, right[1:]])


def _dyadic_kmax(n):
    return int(math.floor(math.log2(n))) - 1


def build_family(spec, n):
    """Enumerate the partitions of a model family for sample size ``n``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    models = []
    if isinstance(spec, Regular):
        d_max = spec.d_max if spec.d_max is not None else max(1, int(n / math.log(n)))
        if spec.d_min < 1 or d_max < spec.d_min:
            raise ValueError(f"invalid dimension range [{spec.d_min}, {d_max}]")
        models = [Partition(_regular(D), f"reg{D}") for D in range(spec.d_min, d_max + 1)]
    elif isinstance(spec, TwoBinSizes):
        cap = max(1, int(n / (2 * math.log(n))))
        d1 = spec.d1_max if spec.d1_max is not None else cap
        d2 = spec.d2_max if spec.d2_max is not None else cap
        if d1 < 1 or d2 < 1:
            raise ValueError("D1_max and D2_max must be >= 1")
        models = [
            Partition(_two_halves(a, b), f"two{a},{b}")
            for a in range(1, d1 + 1)
            for b in range(1, d2 + 1)
        ]
        if spec.plus_constant:
            models.append(Partition(_regular(1), "const"))
    elif isinstance(spec, DyadicRegular):
        k_max = spec.k_max if spec.k_max is not None else _dyadic_kmax(n)
        if k_max < 0:
            raise ValueError("k_max must be >= 0")
        models = [Partition(_regular(2**k), f"dyad{k}") for k in range(k_max + 1)]
    elif isinstance(spec, DyadicTwoBin):
        k_max = spec.k_max if spec.k_max is not None else _dyadic_kmax(n)
        if k_max < 0:
            raise ValueError("k_max must be >= 0")
        models = [
            Partition(_two_halves(2**a, 2**b), f"dyad2_{a},{b}")
            for a in range(k_max + 1)
            for b in range(k_max + 1)
        ]
        if spec.plus_constant:
            models.append(Partition(_regular(1), "const"))
    else:
        raise TypeError(f"unknown model family {spec!r}")
    return models


# -- fitting -----------------------------------------------------------------


def fit(partition, data):
    """Least-squares histogram fit; empty cells get a NaN mean."""
    D = partition.dim
    cells = partition.cell_index(data.x)
    y = data.y
    counts = np.bincount(cells, minlength=D)
    # shift by an observed value of each cell: constant cells stay exact
    ref = np.zeros(D)
    ref[cells] = y
    shifted = np.bincount(cells, weights=y - ref[cells], minlength=D)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, ref + shifted / counts, np.nan)
    resid = y - means[cells]
    sumsq = np.bincount(cells, weights=resid * resid, minlength=D)
    sumsq[counts <= 1] = 0.0
    return FittedHistogram(partition, counts, means, sumsq, cells)


def empirical_risk(fitted, data=None):
    """Mean squared residual of the fitted histogram on its training data."""
    if not fitted.defined:
        raise UndefinedModelError(f"model {fitted.partition.model_id} has an empty cell")
    return math.fsum(fitted.sumsq) / fitted.n


# -- truth -------------------------------------------------------------------


@lru_cache(maxsize=8)
def _gauss_legendre(k):
    return np.polynomial.legendre.leggauss(k)


def _quadrature_grid(breakpoints, discontinuities, nodes):
    """Nodes/weights per cell, with cells split at interior discontinuities.

    Returns (cell_of_node, x, w).
    """
    t, wt = _gauss_legendre(nodes)
    lo_all, hi_all, owner = [], [], []
    for k in range(breakpoints.size - 1):
        a, b = breakpoints[k], breakpoints[k + 1]
        cuts = [c for c in discontinuities if a < c < b]
        edges = [a, *cuts, b]
        lo_all.extend(edges[:-1])
        hi_all.extend(edges[1:])
        owner.extend([k] * (len(edges) - 1))
    lo = np.asarray(lo_all)[:, None]
    hi = np.asarray(hi_all)[:, None]
    half = 0.5 * (hi - lo)
    x = (lo + hi) * 0.5 + half * t[None, :]
    w = half * wt[None, :]
    cell = np.repeat(np.asarray(owner), nodes)
    return cell, x.ravel(), w.ravel()


def truth_stats(partition, spec, nodes=GL_NODES):
    """Exact per-cell probabilities, means, bias and noise variance.

    The design is uniform on [0, 1], so ``p`` is the cell length.
    """
    D = partition.dim
    disc = tuple(getattr(spec.regression, "discontinuities", ()))
    cell, x, w = _quadrature_grid(partition.breakpoints, disc, nodes)
    s = spec.regression(x)
    sig2 = spec.noise(x) ** 2
    p = partition.lengths.astype(float)
    # shift by the first node value so constant pieces integrate exactly
    first = np.searchsorted(cell, np.arange(D))
    s_ref = s[first]
    wsum = np.bincount(cell, weights=w, minlength=D)
    beta = s_ref + np.bincount(cell, weights=w * (s - s_ref[cell]), minlength=D) / wsum
    bias = np.bincount(cell, weights=w * (s - beta[cell]) ** 2, minlength=D)
    sigma2 = np.bincount(cell, weights=w * sig2, minlength=D) / wsum
    return TruthCellStats(p=p, beta=beta, bias=bias, sigma2=sigma2)


def excess_loss(fitted, truth):
    """Squared L2(P) distance between the fitted histogram and s.

    Returns ``inf`` when the fit is undefined (some empty cell).
    """
    if not fitted.defined:
        return math.inf
    est = truth.p * (fitted.means - truth.beta) ** 2
    return math.fsum(np.concatenate([truth.bias, est]))


def integrate_squared_error(fitted, spec, nodes=GL_NODES):
    """Direct quadrature of the integral of (fitted - s)^2 over [0, 1]."""
    if not fitted.defined:
        return math.inf
    disc = tuple(getattr(spec.regression, "discontinuities", ()))
    cell, x, w = _quadrature_grid(fitted.partition.breakpoints, disc, nodes)
    diff = fitted.means[cell] - spec.regression(x)
    return math.fsum(w * diff * diff)
