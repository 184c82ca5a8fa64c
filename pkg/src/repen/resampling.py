"""Resampling weight schemes and their conditional moments.

For a cell holding ``n_cell`` of the ``n`` observations, the penalty only
depends on the weights through

    R_k = E[(W_i - Wbar)^2 / Wbar^(3 - k) | Wbar > 0],   k = 1, 2,

where ``Wbar`` is the mean weight over the cell.  For the exchangeable
schemes these are computed exactly by summing over the law of the cell's
total weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

__all__ = [
    "Efron",
    "Rademacher",
    "RandomHoldOut",
    "LeaveOneOut",
    "VFold",
    "WeightMoments",
    "resolve",
    "make_blocks",
    "draw_weights",
    "weight_moments",
    "normalizing_constant",
    "default_constant",
]

MAX_ENUMERATION_STATES = 10_000
FALLBACK_DRAWS = 100_000


@dataclass(frozen=True)
class Efron:
    """Multinomial(q; 1/n, ..., 1/n) counts scaled by n/q.  ``q=None`` means n."""

    q: int | None = None


@dataclass(frozen=True)
class Rademacher:
    """Independent weights equal to 0 or 2 with probability 1/2."""


@dataclass(frozen=True)
class RandomHoldOut:
    """(n/q) times the indicator of a uniform q-subset.  ``q=None`` means n // 2."""

    q: int | None = None


@dataclass(frozen=True)
class LeaveOneOut:
    """Random hold-out with q = n - 1."""


@dataclass(frozen=True)
class VFold:
    """Leave-one-block-out weights V/(V-1) on a partition into V blocks."""

    V: int

    def __post_init__(self):
        if self.V < 2:
            raise ValueError("V-fold needs V >= 2")


EXCHANGEABLE = (Efron, Rademacher, RandomHoldOut, LeaveOneOut)


@dataclass(frozen=True)
class WeightMoments:
    r1: float
    r2: float
    method: str  # "closed-form", "enumeration" or "monte-carlo"
    se: float | None = None

    @property
    def delta(self):
        """Relative gap r1 / r2 - 1 (NaN when r2 vanishes)."""
        return self.r1 / self.r2 - 1.0 if self.r2 > 0 else math.nan


def resolve(scheme, n):
    """Fill in ``n``-dependent defaults and check parameters against ``n``."""
    if isinstance(scheme, Efron):
        q = n if scheme.q is None else int(scheme.q)
        if q < 1:
            raise ValueError("Efron(q) needs q >= 1")
        return Efron(q)
    if isinstance(scheme, RandomHoldOut):
        q = n // 2 if scheme.q is None else int(scheme.q)
        if not 1 <= q <= n - 1:
            raise ValueError(f"RandomHoldOut(q) needs 1 <= q <= n-1, got q={q}, n={n}")
        return RandomHoldOut(q)
    if isinstance(scheme, LeaveOneOut):
        if n < 2:
            raise ValueError("leave-one-out needs n >= 2")
        return RandomHoldOut(n - 1)
    if isinstance(scheme, VFold):
        if scheme.V > n:
            raise ValueError(f"V={scheme.V} exceeds n={n}")
        return scheme
    if isinstance(scheme, Rademacher):
        return scheme
    raise TypeError(f"unknown weight scheme {scheme!r}")


def make_blocks(n, V, rng=None):
    """Block label of each index for a V-fold split as regular as possible.

    Indices are shuffled with ``rng`` (no shuffle when ``rng`` is None) and
    cut into blocks of sizes ceil(n/V) then floor(n/V).
    """
    if not 2 <= V <= n:
        raise ValueError(f"need 2 <= V <= n, got V={V}, n={n}")
    order = np.arange(n) if rng is None else np.random.default_rng(rng).permutation(n)
    labels = np.empty(n, dtype=np.intp)
    for j, idx in enumerate(np.array_split(order, V)):
        labels[idx] = j
    return labels


def draw_weights(scheme, n, rng, size=None, blocks=None):
    """Draw weight vectors; shape ``(n,)`` or ``(size, n)``.

    For ``VFold`` the block labels may be given, otherwise a random
    regular split is drawn from ``rng`` first.
    """
    rng = np.random.default_rng(rng)
    scheme = resolve(scheme, n)
    shape = (n,) if size is None else (size, n)
    m = 1 if size is None else size
    if isinstance(scheme, Efron):
        w = rng.multinomial(scheme.q, np.full(n, 1.0 / n), size=m) * (n / scheme.q)
    elif isinstance(scheme, Rademacher):
        w = 2.0 * rng.integers(0, 2, size=(m, n))
    elif isinstance(scheme, RandomHoldOut):
        order = np.argsort(rng.random((m, n)), axis=1)
        w = np.zeros((m, n))
        np.put_along_axis(w, order[:, : scheme.q], n / scheme.q, axis=1)
    else:
        if blocks is None:
            blocks = make_blocks(n, scheme.V, rng)
        blocks = np.asarray(blocks)
        J = rng.integers(0, scheme.V, size=m)
        w = np.where(blocks[None, :] == J[:, None], 0.0, scheme.V / (scheme.V - 1))
    return w.astype(float).reshape(shape)


def _cell_total_law(scheme, n, n_cell):
    """pmf of the cell statistic K and the top of its support.

    K is the multinomial count (Efron), the number of unit draws
    (Rademacher) or of retained indices (hold-out) falling in the cell.
    """
    if isinstance(scheme, Efron):
        return (lambda k: stats.binom.pmf(k, scheme.q, n_cell / n)), scheme.q
    if isinstance(scheme, Rademacher):
        return (lambda k: stats.binom.pmf(k, n_cell, 0.5)), n_cell
    return (lambda k: stats.hypergeom.pmf(k, n, scheme.q, n_cell)), min(scheme.q, n_cell)


def _sample_cell_total(scheme, n, n_cell, size, rng):
    if isinstance(scheme, Efron):
        return rng.binomial(scheme.q, n_cell / n, size)
    if isinstance(scheme, Rademacher):
        return rng.binomial(n_cell, 0.5, size)
    return rng.hypergeometric(scheme.q, n - scheme.q, n_cell, size)


def _moment_terms(scheme, n, n_cell, k):
    """Conditional-on-K values of the two moment integrands (K >= 1)."""
    k = np.asarray(k, dtype=float)
    if isinstance(scheme, Efron):
        # given K the cell counts are Multinomial(K; 1/n_cell each)
        t1 = (n_cell - 1) / k
        t2 = np.full_like(k, (n / scheme.q) * (n_cell - 1) / n_cell)
    elif isinstance(scheme, Rademacher):
        t1 = (n_cell - k) / k
        t2 = 2.0 * (n_cell - k) / n_cell
    else:
        t1 = (n_cell - k) / k
        t2 = (n / scheme.q) * (n_cell - k) / n_cell
    return t1, t2


@lru_cache(maxsize=65536)
def _exchangeable_moments(scheme, n, n_cell):
    if n_cell == 1:
        return WeightMoments(0.0, 0.0, "closed-form")
    pmf, hi = _cell_total_law(scheme, n, n_cell)
    if hi + 1 <= MAX_ENUMERATION_STATES:
        k = np.arange(1, hi + 1)
        prob = pmf(k)
        prob = prob / prob.sum()
        t1, t2 = _moment_terms(scheme, n, n_cell, k)
        return WeightMoments(float(prob @ t1), float(prob @ t2), "enumeration")
    rng = np.random.default_rng([n, n_cell, FALLBACK_DRAWS])
    k = _sample_cell_total(scheme, n, n_cell, 4 * FALLBACK_DRAWS, rng)
    k = k[k > 0][:FALLBACK_DRAWS]
    t1, t2 = _moment_terms(scheme, n, n_cell, k)
    se = float(np.std(t1 + t2, ddof=1) / math.sqrt(k.size))
    return WeightMoments(float(t1.mean()), float(t2.mean()), "monte-carlo", se)


def _vfold_moments(scheme, n, n_cell):
    V = scheme.V
    if n % V:
        raise ValueError("V-fold moments need blocks of equal size (V must divide n)")
    size = n // V
    if n_cell % size:
        raise ValueError("V-fold moments are only defined for cells made of whole blocks")
    blocks_in_cell = n_cell // size
    if blocks_in_cell < 2:
        return WeightMoments(0.0, 0.0, "closed-form")
    c = V / (V - 1)
    b = blocks_in_cell
    # with probability b/V a block of the cell is held out; otherwise weights are flat
    prob = b / V
    wbar = c * (b - 1) / b
    spread = c * c * (b - 1) / (b * b)
    return WeightMoments(prob * spread / wbar**2, prob * spread / wbar, "closed-form")


def weight_moments(scheme, n, n_cell):
    """Conditional moments (R1, R2) for a cell of ``n_cell`` indices among ``n``."""
    if not 1 <= n_cell <= n:
        raise ValueError(f"need 1 <= n_cell <= n, got {n_cell}, {n}")
    scheme = resolve(scheme, n)
    if isinstance(scheme, VFold):
        return _vfold_moments(scheme, n, n_cell)
    return _exchangeable_moments(scheme, int(n), int(n_cell))


def normalizing_constant(scheme, n, threshold):
    """(sup, inf) of 2 / (R1 + R2) over cell counts >= ``threshold``.

    Cells with vanishing moments (a single index) are skipped.
    """
    if not 1 <= threshold <= n:
        raise ValueError("threshold must lie in [1, n]")
    scheme = resolve(scheme, n)
    if isinstance(scheme, VFold):
        size = n // scheme.V
        counts = [c for c in range(size, n + 1, size) if c >= threshold]
    else:
        counts = range(threshold, n + 1)
    vals = []
    for c in counts:
        m = weight_moments(scheme, n, c)
        if m.r1 + m.r2 > 0:
            vals.append(2.0 / (m.r1 + m.r2))
    if not vals:
        raise ValueError("no cell count above the threshold has nonzero moments")
    return max(vals), min(vals)


def default_constant(scheme, n):
    """The constant C used in the simulation study for each scheme."""
    if isinstance(scheme, LeaveOneOut):
        return float(n - 1)
    if isinstance(scheme, VFold):
        return float(scheme.V - 1)
    if isinstance(scheme, Rademacher):
        return 1.0
    if isinstance(scheme, Efron):
        return resolve(scheme, n).q / n
    if isinstance(scheme, RandomHoldOut):
        q = resolve(scheme, n).q
        return q / (n - q)
    raise TypeError(f"unknown weight scheme {scheme!r}")
