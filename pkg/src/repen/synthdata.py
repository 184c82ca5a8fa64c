"""Synthetic heteroscedastic regression data on [0, 1].

Observations follow ``Y = s(X) + sigma(X) * eps`` with ``X`` uniform on
[0, 1] and ``eps`` standard Gaussian, independent of ``X``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SinPi",
    "HeaviSine",
    "Constant",
    "ConstantSigma",
    "LinearSigma",
    "RegressionSpec",
    "DataSet",
    "eval_regression",
    "eval_noise",
    "generate",
    "replication_seed",
]


def _check_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise ValueError("x must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class SinPi:
    """s(x) = sin(pi x)."""

    discontinuities = ()

    def __call__(self, x):
        return np.sin(np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class HeaviSine:
    """Donoho-Johnstone HeaviSine, 4 sin(4 pi x) - sgn(x - 0.3) - sgn(0.72 - x)."""

    discontinuities = (0.3, 0.72)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * np.sin(4.0 * np.pi * x) - np.sign(x - 0.3) - np.sign(0.72 - x)


@dataclass(frozen=True)
class Constant:
    level: float = 0.0

    discontinuities = ()

    def __call__(self, x):
        return np.full(np.shape(x), float(self.level))


@dataclass(frozen=True)
class ConstantSigma:
    level: float = 1.0

    def __post_init__(self):
        if not self.level >= 0:
            raise ValueError("noise level must be nonnegative")

    def __call__(self, x):
        return np.full(np.shape(x), float(self.level))


@dataclass(frozen=True)
class LinearSigma:
    """sigma(x) = x."""

    def __call__(self, x):
        return np.asarray(x, dtype=float).copy()


@dataclass(frozen=True)
class RegressionSpec:
    regression: object
    noise: object
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("sample size n must be an integer >= 2")


@dataclass(frozen=True, eq=False)
class DataSet:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        _check_unit_interval(x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[0]


def eval_regression(f, x):
    """Evaluate the regression function ``f`` at ``x`` (scalar or array)."""
    x = _check_unit_interval(x)
    out = f(x)
    return float(out) if out.ndim == 0 else out


def eval_noise(p, x):
    """Evaluate the noise standard deviation ``p`` at ``x``."""
    x = _check_unit_interval(x)
    out = p(x)
    return float(out) if out.ndim == 0 else out


def replication_seed(master_seed, r):
    """Stream seed for replication ``r`` of an experiment seeded by ``master_seed``.

    Independent of execution order: the seed depends only on the pair.
    """
    return np.random.SeedSequence([int(master_seed), int(r)])


def _as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate(spec, seed):
    """Draw ``spec.n`` observations; a pure function of ``(spec, seed)``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.  Gaussian
    noise uses numpy's ziggurat sampler on a PCG64 stream.
    """
    rng = _as_generator(seed)
    x = rng.random(spec.n)
    eps = rng.standard_normal(spec.n)
    y = spec.regression(x) + spec.noise(x) * eps
    return DataSet(x, y)
