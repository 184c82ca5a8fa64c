"""Replication engine for the oracle-ratio simulation study.

Each replication draws a data set, fits every model of the family, scores
the candidates with every algorithm and records the true excess loss of
each selected model next to the oracle loss.  All models are handled in a
single vectorized pass: cells of all partitions are laid out in one global
index space and per-model reductions use ``np.add.reduceat``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import resampling
from .histmodels import (
    DyadicRegular,
    DyadicTwoBin,
    Regular,
    TwoBinSizes,
    build_family,
    truth_stats,
)
from .selection import ClassicalVFCV, Mallows, SelectionConfig
from .synthdata import (
    ConstantSigma,
    HeaviSine,
    LinearSigma,
    RegressionSpec,
    SinPi,
    generate,
    replication_seed,
)

__all__ = [
    "Algorithm",
    "ExperimentConfig",
    "ReplicationRecord",
    "AlgorithmResult",
    "BenchReport",
    "paper_algorithms",
    "experiment",
    "EXPERIMENTS",
    "run_replication",
    "run_experiment",
    "summarize",
    "SummaryTable",
]

OVERPEN = 1.25
VFOLD_VALUES = (2, 5, 10, 20)
SIGMA2_ESTIMATOR = "residual variance n*risk/(n-D) of the largest model with all cell counts >= 2"


@dataclass(frozen=True)
class Algorithm:
    name: str
    config: SelectionConfig


def paper_algorithms(vfolds=VFOLD_VALUES, overpen=OVERPEN):
    """The algorithms of the simulation study, in table order."""
    base = [Algorithm("Mal", SelectionConfig(Mallows()))]
    base_plus = [Algorithm("Mal+", SelectionConfig(Mallows(), overpen_factor=overpen))]
    fcv = [Algorithm(f"{V}-FCV", SelectionConfig(ClassicalVFCV(V))) for V in vfolds]
    schemes = [
        ("penEfr", resampling.Efron()),
        ("penRad", resampling.Rademacher()),
        ("penRHO", resampling.RandomHoldOut()),
        ("penLOO", resampling.LeaveOneOut()),
    ]
    schemes += [(f"pen{V}-FCV", resampling.VFold(V)) for V in vfolds]
    pens = [Algorithm(name, SelectionConfig(s)) for name, s in schemes]
    pens_plus = [Algorithm(name + "+", SelectionConfig(s, overpen_factor=overpen)) for name, s in schemes]
    return tuple(base + base_plus + fcv + pens + pens_plus)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    spec: RegressionSpec
    family: object
    n_reps: int = 1000
    master_seed: int = 0
    algorithms: tuple = field(default_factory=paper_algorithms)
    threshold: int = 2
    mc_draws: int | None = None
    keep_model_losses: bool = False

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError("algorithm names must be unique")

    def echo(self):
        return {
            "name": self.name,
            "regression": repr(self.spec.regression),
            "noise": repr(self.spec.noise),
            "n": self.spec.n,
            "family": repr(self.family),
            "n_reps": self.n_reps,
            "master_seed": self.master_seed,
            "threshold": self.threshold,
            "mc_draws": self.mc_draws,
            "algorithms": [a.name for a in self.algorithms],
            "vfold_blocks": "redrawn per replication, shared by V-FCV and penV-FCV",
        }


EXPERIMENTS = {
    "S1": (SinPi(), ConstantSigma(1.0), 200, Regular()),
    "S2": (SinPi(), LinearSigma(), 200, TwoBinSizes()),
    "HSd1": (HeaviSine(), ConstantSigma(1.0), 2048, DyadicRegular()),
    "HSd2": (HeaviSine(), LinearSigma(), 2048, DyadicTwoBin()),
}


def experiment(name, n_reps=1000, master_seed=0, n=None, **kwargs):
    """Configuration of a named experiment (S1, S2, HSd1, HSd2)."""
    try:
        s, sigma, n0, family = EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    spec = RegressionSpec(s, sigma, n0 if n is None else n)
    return ExperimentConfig(name, spec, family, n_reps=n_reps, master_seed=master_seed, **kwargs)


@dataclass(frozen=True)
class ReplicationRecord:
    index: int
    losses: dict
    selected: dict
    oracle_loss: float
    oracle_model: str
    model_losses: dict | None = None
    failed: str | None = None


# -- vectorized family evaluation ---------------------------------------------


@dataclass(frozen=True, eq=False)
class _Prepared:
    ids: list
    dims: np.ndarray
    offsets: np.ndarray  # start of each model's cells in the global index
    breakpoints: list
    p: np.ndarray
    beta: np.ndarray
    bias_total: np.ndarray  # per model
    id_rank: np.ndarray


@lru_cache(maxsize=16)
def _prepare(spec, family):
    parts = build_family(family, spec.n)
    dims = np.array([q.dim for q in parts])
    offsets = np.concatenate([[0], np.cumsum(dims)[:-1]])
    truths = [truth_stats(q, spec) for q in parts]
    ids = [q.model_id for q in parts]
    rank = np.empty(len(ids), dtype=int)
    rank[sorted(range(len(ids)), key=ids.__getitem__)] = np.arange(len(ids))
    return _Prepared(
        ids=ids,
        dims=dims,
        offsets=offsets,
        breakpoints=[q.breakpoints for q in parts],
        p=np.concatenate([t.p for t in truths]),
        beta=np.concatenate([t.beta for t in truths]),
        bias_total=np.array([math.fsum(t.bias) for t in truths]),
        id_rank=rank,
    )


class _FamilyFit:
    """Cell statistics of a set of models of the family on one data set.

    ``models`` selects a subset of the family (all models by default);
    per-model outputs follow that order.
    """

    def __init__(self, prep, data, models=None, cells=None):
        n = data.n
        models = np.arange(len(prep.ids)) if models is None else np.asarray(models)
        dims = prep.dims[models]
        offsets = np.concatenate([[0], np.cumsum(dims)[:-1]])
        M = models.size
        self.prep = prep
        self.models = models
        self.dims = dims
        self.offsets = offsets
        self.n = n
        if cells is None:
            cells = np.empty((M, n), dtype=np.intp)
            for row, m in enumerate(models.tolist()):
                b = prep.breakpoints[m]
                idx = np.searchsorted(b, data.x, side="right") - 1
                np.clip(idx, 0, b.size - 2, out=idx)
                cells[row] = idx
        self.cells = cells
        G = int(offsets[-1] + dims[-1])
        self.G = G
        flat = (cells + offsets[:, None]).ravel()
        y = np.broadcast_to(data.y, (M, n)).ravel()
        counts = np.bincount(flat, minlength=G)
        ref = np.zeros(G)
        ref[flat] = y
        shifted = np.bincount(flat, weights=y - ref[flat], minlength=G)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(counts > 0, ref + shifted / counts, np.nan)
        resid = y - means[flat]
        sumsq = np.bincount(flat, weights=resid * resid, minlength=G)
        sumsq[counts <= 1] = 0.0
        self.flat = flat
        self.resid = resid
        self.counts = counts
        self.means = means
        self.sumsq = sumsq
        self.min_count = np.minimum.reduceat(counts, offsets)
        self.defined = self.min_count > 0
        self.risk = np.add.reduceat(sumsq, offsets) / n

    def subset(self, data, rows):
        """Fit restricted to the models at positions ``rows``."""
        rows = np.asarray(rows)
        return _FamilyFit(self.prep, data, self.models[rows], self.cells[rows])

    def reduce(self, cell_values):
        return np.add.reduceat(cell_values, self.offsets, axis=0)

    def excess_losses(self):
        if self.models.size != len(self.prep.ids):
            raise ValueError("excess losses need the full family")
        est = np.where(self.counts > 0, self.prep.p * (self.means - self.prep.beta) ** 2, 0.0)
        loss = self.prep.bias_total + self.reduce(est)
        return np.where(self.defined, loss, np.inf)

    def block_stats(self, blocks, V):
        key = self.flat * V + np.tile(blocks, self.models.size)
        size = self.G * V
        cnt = np.bincount(key, minlength=size).reshape(self.G, V)
        rsum = np.bincount(key, weights=self.resid, minlength=size).reshape(self.G, V)
        rsq = np.bincount(key, weights=self.resid * self.resid, minlength=size).reshape(self.G, V)
        return cnt, rsum, rsq

    def closed_penalty(self, scheme):
        """Resampling penalty with C = 1 for an exchangeable scheme."""
        coef = np.zeros(self.G)
        for c in np.unique(self.counts[self.counts >= 2]).tolist():
            m = resampling.weight_moments(scheme, self.n, c)
            coef[self.counts == c] = (m.r1 + m.r2) / (c - 1)
        return self.reduce(coef * self.sumsq) / self.n

    def vfold_penalty(self, stats, V):
        """Exact V-fold penalty with C = 1."""
        cnt, rsum, _ = stats
        kept = self.counts[:, None] - cnt
        valid = kept > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            diff = np.where(valid, rsum / kept, 0.0)
        term = (self.counts[:, None] + V / (V - 1) * kept) / self.n * diff * diff
        nvalid = valid.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cell = np.where(nvalid > 0, term.sum(axis=1) / nvalid, 0.0)
        return self.reduce(cell)

    def vfcv(self, stats, V):
        cnt, rsum, rsq = stats
        kept = self.counts[:, None] - cnt
        with np.errstate(invalid="ignore", divide="ignore"):
            shift = np.where(kept > 0, rsum / kept, 0.0)
        held = rsq + 2.0 * shift * rsum + cnt * shift * shift
        per_fold = self.reduce(held)  # (M, V)
        fold_sizes = cnt[: self.dims[0]].sum(axis=0)  # the first model covers every point
        crit = (per_fold / fold_sizes).mean(axis=1)
        ok = np.minimum.reduceat(kept.min(axis=1), self.offsets) > 0
        return np.where(ok, crit, np.inf)


def _mallows_sigma2(ff):
    admissible = np.flatnonzero(ff.min_count >= 2)
    if admissible.size == 0:
        raise ValueError("no model with every cell count >= 2")
    dims = ff.dims[admissible]
    m = admissible[np.flatnonzero(dims == dims.max())[0]]
    return ff.risk[m] * ff.n / (ff.n - ff.dims[m])


def _argmin(totals, ff, rows):
    """Position (in ``ff``) of the best model among ``rows``, or None."""
    order = np.lexsort((ff.prep.id_rank[ff.models[rows]], ff.dims[rows], totals[rows]))
    best = rows[order[0]]
    if not np.isfinite(totals[best]):
        return None
    return best


def _mc_penalties(config, ff, data, scheme, seed):
    from .histmodels import Partition, fit as fit_histogram
    from .penalties import resampling_penalty_mc

    out = np.full(ff.models.size, np.nan)
    for row, m in enumerate(ff.models.tolist()):
        part = Partition(ff.prep.breakpoints[m], ff.prep.ids[m])
        f = fit_histogram(part, data)
        rng = np.random.default_rng(seed.spawn(1)[0])
        out[row] = resampling_penalty_mc(f, data, scheme, 1.0, config.mc_draws, rng).value
    return out


def run_replication(config, r):
    """Simulate replication ``r`` of ``config`` and score every algorithm.

    Candidates are the models whose cells all hold at least
    ``config.threshold`` points; this threshold applies to every algorithm.
    """
    prep = _prepare(config.spec, config.family)
    data_seed, block_seed, mc_seed = replication_seed(config.master_seed, r).spawn(3)
    data = generate(config.spec, data_seed)
    full = _FamilyFit(prep, data)
    n = data.n

    losses_all = full.excess_losses()
    oracle = int(np.argmin(losses_all))
    model_losses = dict(zip(prep.ids, losses_all.tolist())) if config.keep_model_losses else None

    candidates = np.flatnonzero(full.min_count >= config.threshold)
    if candidates.size == 0:
        return ReplicationRecord(r, {}, {}, float(losses_all[oracle]), prep.ids[oracle],
                                 model_losses, failed="empty candidate set")
    ff = full.subset(data, candidates)
    rows = np.arange(candidates.size)

    vfold_seeds = {}
    for V in sorted({a.config.method.V for a in config.algorithms if hasattr(a.config.method, "V")}):
        vfold_seeds[V] = np.random.SeedSequence(block_seed.entropy, spawn_key=(*block_seed.spawn_key, V))
    bstats, pens = {}, {}

    def folds(V):
        if V not in bstats:
            blocks = resampling.make_blocks(n, V, np.random.default_rng(vfold_seeds[V]))
            bstats[V] = ff.block_stats(blocks, V)
        return bstats[V]

    def base_penalty(method):
        if method not in pens:
            if isinstance(method, resampling.VFold):
                pens[method] = ff.vfold_penalty(folds(method.V), method.V)
            elif isinstance(method, Mallows):
                pens[method] = 2.0 * _mallows_sigma2(full) * ff.dims / n
            elif config.mc_draws:
                pens[method] = _mc_penalties(config, ff, data, method, mc_seed)
            else:
                pens[method] = ff.closed_penalty(method)
        return pens[method]

    losses, selected = {}, {}
    for alg in config.algorithms:
        cfg = alg.config
        if isinstance(cfg.method, ClassicalVFCV):
            totals = ff.vfcv(folds(cfg.method.V), cfg.method.V)
        else:
            totals = ff.risk + cfg.effective_constant(n) * base_penalty(cfg.method)
        best = _argmin(totals, ff, rows)
        if best is None:
            losses[alg.name] = math.nan
            selected[alg.name] = None
        else:
            m = int(candidates[best])
            losses[alg.name] = float(losses_all[m])
            selected[alg.name] = prep.ids[m]
    return ReplicationRecord(r, losses, selected, float(losses_all[oracle]), prep.ids[oracle], model_losses)


# -- aggregation ---------------------------------------------------------------


@dataclass(frozen=True)
class AlgorithmResult:
    algorithm: str
    c_or: float
    c_or_se: float
    c_path_or: float
    c_path_or_se: float
    n_reps: int
    n_path_excluded: int = 0


@dataclass(frozen=True)
class BenchReport:
    rows: tuple
    n_reps: int
    config: dict
    failures: int = 0
    oracle_mean: float = math.nan
    sigma2_estimator: str = SIGMA2_ESTIMATOR

    def row(self, name):
        for row in self.rows:
            if row.algorithm == name:
                return row
        raise KeyError(name)

    @property
    def algorithms(self):
        return [row.algorithm for row in self.rows]


def _mean(v):
    return math.fsum(v) / len(v)


def _std(v):
    if len(v) < 2:
        return 0.0
    mu = _mean(v)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in v) / (len(v) - 1))


def _ratios(losses, oracle):
    """C_or and C_path-or with standard errors for one algorithm."""
    N = len(losses)
    mo = _mean(oracle)
    ml = _mean(losses)
    if mo > 0:
        c_or = ml / mo
        # delta method for a ratio of means
        c_or_se = _std([l - c_or * o for l, o in zip(losses, oracle)]) / (math.sqrt(N) * mo)
    else:
        c_or = 1.0 if ml == 0 else math.inf
        c_or_se = 0.0
    path, excluded = [], 0
    for l, o in zip(losses, oracle):
        if o > 0:
            path.append(l / o)
        elif l == 0:
            path.append(1.0)
        else:
            excluded += 1
    if path:
        c_path = _mean(path)
        c_path_se = _std(path) / math.sqrt(len(path))
    else:
        c_path, c_path_se = math.nan, math.nan
    return c_or, c_or_se, c_path, c_path_se, excluded


def aggregate(config, records):
    records = sorted(records, key=lambda rec: rec.index)
    ok = [rec for rec in records if rec.failed is None]
    rows = []
    for alg in config.algorithms:
        pairs = [(rec.losses[alg.name], rec.oracle_loss) for rec in ok if not math.isnan(rec.losses[alg.name])]
        if not pairs:
            rows.append(AlgorithmResult(alg.name, math.nan, math.nan, math.nan, math.nan, 0))
            continue
        losses, oracle = zip(*pairs)
        c_or, c_or_se, c_path, c_path_se, excl = _ratios(losses, oracle)
        rows.append(AlgorithmResult(alg.name, c_or, c_or_se, c_path, c_path_se, len(pairs), excl))
    oracle_mean = _mean([rec.oracle_loss for rec in ok]) if ok else math.nan
    return BenchReport(tuple(rows), len(ok), config.echo(), len(records) - len(ok), oracle_mean)


def default_workers():
    env = os.environ.get("REPEN_WORKERS")
    return int(env) if env else 1


def _run_chunk(args):
    config, indices = args
    return [run_replication(config, r) for r in indices]


def run_experiment(config, workers=None, return_records=False):
    """Run all replications of ``config`` and aggregate the oracle ratios.

    The report does not depend on ``workers``: every replication has its
    own seed stream and aggregation uses exactly rounded sums.
    """
    workers = default_workers() if workers is None else int(workers)
    indices = list(range(config.n_reps))
    if workers <= 1:
        records = [run_replication(config, r) for r in indices]
    else:
        chunks = [indices[i::workers * 4] for i in range(workers * 4)]
        chunks = [(config, c) for c in chunks if c]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [rec for part in pool.map(_run_chunk, chunks) for rec in part]
    report = aggregate(config, records)
    return (report, records) if return_records else report


# -- summary table -------------------------------------------------------------


@dataclass(frozen=True)
class SummaryTable:
    columns: tuple
    algorithms: tuple
    cells: dict  # (algorithm, column) -> (value, se, bold)

    def to_text(self, digits=3):
        head = ["Algorithm", *self.columns]
        lines = []
        for alg in self.algorithms:
            row = [alg]
            for col in self.columns:
                v, se, bold = self.cells[(alg, col)]
                txt = f"{v:.{digits}f} ± {se:.{digits}f}"
                row.append(f"*{txt}*" if bold else txt)
            lines.append(row)
        widths = [max(len(str(r[i])) for r in [head, *lines]) for i in range(len(head))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        out = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
        out += [fmt.format(*r) for r in lines]
        return "\n".join(out)


def _bold_column(values, ses):
    finite = [i for i, v in enumerate(values) if math.isfinite(v)]
    if not finite:
        return [False] * len(values)
    best = min(finite, key=lambda i: values[i])
    return [
        math.isfinite(v) and abs(v - values[best]) <= se + ses[best]
        for v, se in zip(values, ses)
    ]


def summarize(reports, names=None):
    """One row per algorithm, one column per experiment, best entries marked.

    An entry is marked when it is within the sum of the two uncertainties of
    the column's smallest C_or.
    """
    if not reports:
        raise ValueError("no report to summarize")
    algs = tuple(reports[0].algorithms)
    for rep in reports[1:]:
        if tuple(rep.algorithms) != algs:
            raise ValueError("reports have different algorithm sets")
    if names is None:
        names = [rep.config.get("name", f"exp{i}") for i, rep in enumerate(reports)]
    names = tuple(names)
    if len(set(names)) != len(names):
        names = tuple(f"{nm}#{i}" for i, nm in enumerate(names))
    cells = {}
    for rep, col in zip(reports, names):
        vals = [rep.row(a).c_or for a in algs]
        ses = [rep.row(a).c_or_se for a in algs]
        for a, v, se, b in zip(algs, vals, ses, _bold_column(vals, ses)):
            cells[(a, col)] = (v, se, b)
    return SummaryTable(names, algs, cells)


def report_as_dict(report):
    return asdict(report)
