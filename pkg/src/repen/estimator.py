"""scikit-learn compatible front end for penalized histogram selection."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import histmodels, penalties, resampling
from .selection import (
    ClassicalVFCV,
    Mallows,
    SelectionConfig,
    compute_criteria,
    filter_models,
    select,
    selection_path,
    slope_select,
)
from .synthdata import DataSet

__all__ = ["HistogramSelector", "make_family", "make_method"]

_FAMILIES = {
    "regular": histmodels.Regular,
    "two-bin": histmodels.TwoBinSizes,
    "dyadic": histmodels.DyadicRegular,
    "dyadic-two-bin": histmodels.DyadicTwoBin,
}


def make_family(family):
    """Family spec from a name such as ``"regular"`` or ``"two-bin:1,1"``.

    Integers after the colon are passed positionally to the spec class.
    """
    if not isinstance(family, str):
        return family
    name, _, args = family.partition(":")
    cls = _FAMILIES.get(name.strip().lower().replace("_", "-"))
    if cls is None:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(_FAMILIES)}")
    try:
        values = [int(a) for a in args.split(",")] if args.strip() else []
    except ValueError:
        raise ValueError(f"family arguments must be integers, got {args!r}") from None
    return cls(*values)


def make_method(method, V=5, q=None):
    """Turn a method name into a weight scheme or baseline tag."""
    if not isinstance(method, str):
        return method
    key = method.lower().replace("_", "-")
    table = {
        "efron": lambda: resampling.Efron(q),
        "rademacher": resampling.Rademacher,
        "hold-out": lambda: resampling.RandomHoldOut(q),
        "rho": lambda: resampling.RandomHoldOut(q),
        "loo": resampling.LeaveOneOut,
        "vfold": lambda: resampling.VFold(V),
        "mallows": Mallows,
        "vfcv": lambda: ClassicalVFCV(V),
    }
    if key not in table:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(table)}")
    return table[key]()


def _check_unit(x):
    if np.any((x < 0) | (x > 1)):
        raise ValueError("features must lie in [0, 1]")


class HistogramSelector(RegressorMixin, BaseEstimator):
    """Least-squares histogram regression with a data-driven partition.

    Every model of ``family`` is fitted, models with a cell holding fewer
    than ``threshold`` points are dropped, and the partition minimizing the
    penalized empirical risk is kept.

    Parameters
    ----------
    family : str or model family spec, default="regular"
        One of ``"regular"``, ``"two-bin"``, ``"dyadic"``,
        ``"dyadic-two-bin"``, or an instance from :mod:`repen.histmodels`.
    method : str or scheme, default="rademacher"
        Resampling weights (``"efron"``, ``"rademacher"``, ``"hold-out"``,
        ``"loo"``, ``"vfold"``), ``"mallows"`` or ``"vfcv"``.
    V : int, default=5
        Number of blocks for ``"vfold"`` and ``"vfcv"``.
    constant : float, optional
        Penalty constant; defaults to the scheme's normalizing constant.
    overpen_factor : float, default=1.0
        Multiplies the penalty constant.
    threshold : int, default=2
        Minimum number of points per cell.
    slope_heuristics : bool, default=False
        Calibrate the constant by the dimension-jump rule instead.
    mc_draws : int, optional
        Estimate exchangeable penalties from this many weight draws rather
        than in closed form.
    random_state : int or None
        Seeds V-fold blocks and Monte-Carlo draws.
    """

    def __init__(
        self,
        family="regular",
        method="rademacher",
        V=5,
        constant=None,
        overpen_factor=1.0,
        threshold=2,
        slope_heuristics=False,
        mc_draws=None,
        random_state=None,
    ):
        self.family = family
        self.method = method
        self.V = V
        self.constant = constant
        self.overpen_factor = overpen_factor
        self.threshold = threshold
        self.slope_heuristics = slope_heuristics
        self.mc_draws = mc_draws
        self.random_state = random_state

    def _config(self):
        return SelectionConfig(
            make_method(self.method, self.V),
            constant=self.constant,
            overpen_factor=self.overpen_factor,
            threshold=self.threshold,
            mc_draws=self.mc_draws,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError(f"expected a single feature, got {X.shape[1]}")
        _check_unit(X[:, 0])
        self.n_features_in_ = 1
        data = DataSet(X[:, 0], y)
        config = self._config()
        rng = np.random.default_rng(self.random_state)

        partitions = histmodels.build_family(make_family(self.family), data.n)
        fits = [histmodels.fit(q, data) for q in partitions]
        candidates = filter_models(fits, config.threshold)
        blocks = None
        if hasattr(config.method, "V"):
            blocks = resampling.make_blocks(data.n, config.method.V, rng)

        if self.slope_heuristics:
            if isinstance(config.method, ClassicalVFCV):
                raise ValueError("slope heuristics need a penalty, not cross-validation")
            base = SelectionConfig(config.method, constant=1.0, threshold=config.threshold,
                                   mc_draws=config.mc_draws)
            crit = compute_criteria(candidates, data, base, rng, blocks, family=fits)
            self.path_ = selection_path(
                [c.model_id for c in crit],
                [c.empirical_risk for c in crit],
                [c.penalty for c in crit],
                [c.dim for c in crit],
            )
            self.C_hat_, chosen = slope_select(self.path_, {c.model_id: c.dim for c in crit})
            self.criteria_ = crit
        else:
            self.criteria_ = compute_criteria(candidates, data, config, rng, blocks, family=fits)
            chosen = select(self.criteria_)

        by_id = {f.partition.model_id: f for f in candidates}
        self.fit_ = by_id[chosen]
        self.selected_model_ = chosen
        self.breakpoints_ = self.fit_.partition.breakpoints
        self.means_ = self.fit_.means
        self.candidate_ids_ = [f.partition.model_id for f in candidates]
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} feature, got {X.shape[1]}")
        return self.fit_.predict(X[:, 0])

    def penalty_table(self):
        """(model_id, dim, risk, penalty, total) rows for every candidate."""
        check_is_fitted(self, "fit_")
        return [(c.model_id, c.dim, c.empirical_risk, c.penalty, c.total) for c in self.criteria_]


# re-exported for callers that score a single fitted model
criterion = penalties.criterion
