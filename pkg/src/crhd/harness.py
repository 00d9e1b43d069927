"""Monte Carlo experiment drivers: rank recovery against the dense-curve
ranking of the true trajectories, and size/power of the depth-based
two-sample test.

Replicates are the parallel unit; each owns derived RNG substreams keyed by
(experiment tag, cell index, replicate index), so results are bit-identical
for a fixed (config, seed) regardless of worker count. Failed replicates
are dropped and counted.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml
from scipy.stats import chi2

from .depth import DepthRequest, DepthRow, depth_batch, dense_rhd_values
from .dgp import TrueModel, gen_true_curves, sparsify
from .directions import (
    RegularizationSpec,
    default_pool_size,
    filter_pool,
    lambda_from_quantile,
    sample_direction_pool,
)
from .exceptions import CrhdError
from .inference import kw_statistic, rank_min_ties, spearman
from .io import read_model_json, read_sample_csv
from .numerics import Grid, derive_seed, substream
from .smoothing import fit_model, model_from_dense

__all__ = [
    "ExperimentConfig",
    "ResultCell",
    "ResultTable",
    "run_rank_recovery",
    "run_size_power",
    "run_single_depth",
]

_TAG_RANK = 301
_TAG_TEST = 302
_STREAM_CURVES = 0
_STREAM_SPARSIFY = 1
_STREAM_TRUE_POOL = 2

RANK_METHODS = ("acrhd", "pcrhd", "two_stage_rhd")
TEST_METHODS = ("acrhd", "pcrhd", "two_stage_rhd", "two_stage_thd")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full factorial experiment description.

    For size_power, the two groups have n/2 curves each; the control group
    always uses mean zero and decay rate 5, and the test group differs by
    mean slope c (meandiff) or decay rate 5 - c (covdiff).
    """

    experiment: str
    n: int = 100
    decay_a: float = 5.0
    k_star: int = 15
    score_dist: str = "nn"
    error_dist: str = "chi2"
    noise_vars: tuple = (0.1,)
    mean_slope: float = 0.0
    alternative: str = "meandiff"
    degrees: tuple = (0, 1, 2, 3)
    us: tuple = (0.95,)
    ks: tuple = (6,)
    l_rule: int = 1000
    methods: tuple = TEST_METHODS
    m_replicates: int = 500
    seed: int = 0
    alpha: float = 0.05
    grid_size: int = 51
    n_obs_min: int = 2
    n_obs_max: int = 9

    def __post_init__(self) -> None:
        if self.experiment not in ("rank_recovery", "size_power"):
            raise CrhdError(f"unknown experiment {self.experiment!r}")
        if self.m_replicates < 1:
            raise CrhdError("need at least one replicate")
        if self.alternative not in ("meandiff", "covdiff"):
            raise CrhdError("alternative must be 'meandiff' or 'covdiff'")
        for name in ("noise_vars", "degrees", "us", "ks", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not all(m in TEST_METHODS for m in self.methods):
            raise CrhdError("unknown method in config")
        if self.experiment == "size_power" and self.n % 2:
            raise CrhdError("size_power needs an even total sample size")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise CrhdError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            payload = yaml.safe_load(fh)
        if not isinstance(payload, dict):
            raise CrhdError(f"{path}: config must be a mapping")
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResultCell:
    method: str
    u: float
    k: int
    noise_var: float
    degree: int | None
    mean: float
    sd: float
    se: float
    count: int
    dropped: int


@dataclass
class ResultTable:
    experiment: str
    criterion: str
    cells: list = field(default_factory=list)

    def get(self, method: str, u: float, k: int, noise_var: float, degree=None) -> ResultCell:
        for cell in self.cells:
            if (
                cell.method == method
                and cell.k == k
                and np.isclose(cell.u, u)
                and np.isclose(cell.noise_var, noise_var)
                and (degree is None or cell.degree == degree)
            ):
                return cell
        raise KeyError((method, u, k, noise_var, degree))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["method", "u", "K", "noise_var", "degree", self.criterion, "sd", "se", "count", "dropped"]
            )
            for c in self.cells:
                writer.writerow(
                    [c.method, c.u, c.k, c.noise_var, "" if c.degree is None else c.degree,
                     repr(c.mean), repr(c.sd), repr(c.se), c.count, c.dropped]
                )


def _grid(config: ExperimentConfig) -> Grid:
    return Grid.uniform(config.grid_size)


def _summarize(values: np.ndarray) -> tuple[float, float, float]:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return mean, sd, sd / np.sqrt(values.size) if values.size else 0.0


def _requests(config: ExperimentConfig, methods) -> list[DepthRequest]:
    reg = RegularizationSpec.quantiles(*config.us)
    reqs = []
    for k in config.ks:
        for method in methods:
            reqs.append(
                DepthRequest(
                    method=method,
                    k=k,
                    reg=None if method == "two_stage_thd" else reg,
                    l_target=config.l_rule * k,
                    n_proj=config.l_rule * k,
                )
            )
    return reqs


def _rows_by_cell(rows: list[DepthRow], n_eval: int) -> dict:
    out: dict[tuple, np.ndarray] = {}
    for start in range(0, len(rows), n_eval):
        block = rows[start : start + n_eval]
        first = block[0]
        u = first.u if first.u is not None else np.inf
        out[(first.method, u, first.k)] = np.array([r.depth for r in block])
    return out


def _rank_recovery_replicate(config: ExperimentConfig, noise_idx: int, rep: int):
    noise_var = config.noise_vars[noise_idx]
    grid = _grid(config)
    true_model = TrueModel.make(
        grid=grid,
        decay_a=config.decay_a,
        k_star=config.k_star,
        mean_slope=config.mean_slope,
        score_dist=config.score_dist,
        error_dist=config.error_dist,
        noise_var=noise_var,
    )
    values, _ = gen_true_curves(
        config.n,
        true_model,
        substream(config.seed, _TAG_RANK, noise_idx, rep, _STREAM_CURVES),
    )
    dense_model = model_from_dense(values, grid)

    # reference ranking: dense depth of the true curves among themselves
    d_true: dict[tuple, np.ndarray] = {}
    for k in config.ks:
        pool = sample_direction_pool(
            dense_model,
            k,
            default_pool_size(config.l_rule * k),
            substream(config.seed, _TAG_RANK, noise_idx, rep, _STREAM_TRUE_POOL, k),
        )
        for u in config.us:
            accepted = filter_pool(pool, lambda_from_quantile(pool, u), config.l_rule * k)
            d_true[(u, k)] = dense_rhd_values(values, values, dense_model, pool, accepted, k)

    sample = sparsify(
        values,
        grid,
        config.error_dist,
        noise_var,
        substream(config.seed, _TAG_RANK, noise_idx, rep, _STREAM_SPARSIFY),
        n_obs_range=(config.n_obs_min, config.n_obs_max),
    )
    fitted = fit_model(sample, grid, seed=config.seed)
    methods = [m for m in config.methods if m in RANK_METHODS]
    rows = depth_batch(
        sample,
        sample,
        fitted,
        _requests(config, methods),
        seed=derive_seed(config.seed, _TAG_RANK, noise_idx, rep),
    )
    by_cell = _rows_by_cell(rows, config.n)
    out = {}
    for (method, u, k), depths in by_cell.items():
        out[(method, u, k, noise_var, None)] = spearman(depths, d_true[(u, k)])
    return out


def _size_power_replicate(config: ExperimentConfig, noise_idx: int, degree_idx: int, rep: int):
    noise_var = config.noise_vars[noise_idx]
    c = config.degrees[degree_idx]
    grid = _grid(config)
    null_kwargs = dict(
        grid=grid,
        decay_a=5.0,
        k_star=config.k_star,
        mean_slope=0.0,
        score_dist=config.score_dist,
        error_dist=config.error_dist,
        noise_var=noise_var,
    )
    model0 = TrueModel.make(**null_kwargs)
    if config.alternative == "meandiff":
        model1 = TrueModel.make(**{**null_kwargs, "mean_slope": float(c)})
    else:
        model1 = TrueModel.make(**{**null_kwargs, "decay_a": 5.0 - float(c)})

    n_half = config.n // 2
    groups = []
    for g, tm in enumerate((model0, model1)):
        vals, _ = gen_true_curves(
            n_half,
            tm,
            substream(config.seed, _TAG_TEST, noise_idx, degree_idx, rep, g, _STREAM_CURVES),
        )
        groups.append(
            sparsify(
                vals,
                grid,
                config.error_dist,
                noise_var,
                substream(
                    config.seed, _TAG_TEST, noise_idx, degree_idx, rep, g, _STREAM_SPARSIFY
                ),
                n_obs_range=(config.n_obs_min, config.n_obs_max),
            )
        )
    fits = [fit_model(s, grid, seed=config.seed) for s in groups]

    curves = list(groups[0].curves) + list(groups[1].curves)
    labels = np.array([0] * n_half + [1] * n_half)
    requests = _requests(config, config.methods)
    h_parts: dict[tuple, list[float]] = {}
    for g in range(2):
        rows = depth_batch(
            groups[g],
            curves,
            fits[g],
            requests,
            seed=derive_seed(config.seed, _TAG_TEST, noise_idx, degree_idx, rep, g),
        )
        for cell, depths in _rows_by_cell(rows, len(curves)).items():
            h_parts.setdefault(cell, []).append(kw_statistic(rank_min_ties(depths), labels))
    crit = float(chi2.ppf(1.0 - config.alpha, df=1))
    out = {}
    for (method, u, k), parts in h_parts.items():
        h = float(np.mean(parts))
        out[(method, u, k, noise_var, int(c))] = 1.0 if h > crit else 0.0
    return out


def _run_cells(config: ExperimentConfig, tasks, worker, threads: int):
    """Execute replicate tasks, dropping failed replicates per cell."""
    results = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_safe_call, worker, config, *task) for task in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_safe_call(worker, config, *task) for task in tasks]
    collected: dict[tuple, list[float]] = {}
    dropped: dict[tuple, int] = {}
    for task, res in zip(tasks, results):
        if res is None:
            key = task[:-1]  # all cell coordinates except the replicate index
            dropped[key] = dropped.get(key, 0) + 1
            continue
        for cell, value in res.items():
            collected.setdefault(cell, []).append(value)
    return collected, dropped


def _safe_call(worker, config, *task):
    try:
        return worker(config, *task)
    except CrhdError:
        return None


def run_rank_recovery(config: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Mean Spearman correlation between sparse depths and the dense-truth
    ranking, per (method, u, K, noise level) cell."""
    if config.experiment != "rank_recovery":
        raise CrhdError("config is not a rank_recovery experiment")
    tasks = [
        (noise_idx, rep)
        for noise_idx in range(len(config.noise_vars))
        for rep in range(config.m_replicates)
    ]
    collected, dropped = _run_cells(config, tasks, _rank_recovery_replicate, threads)
    table = ResultTable(experiment=config.experiment, criterion="mean_spearman")
    for cell, values in sorted(collected.items(), key=lambda kv: str(kv[0])):
        method, u, k, noise_var, degree = cell
        noise_idx = config.noise_vars.index(noise_var)
        mean, sd, se = _summarize(np.array(values))
        table.cells.append(
            ResultCell(
                method=method, u=u, k=k, noise_var=noise_var, degree=degree,
                mean=mean, sd=sd, se=se, count=len(values),
                dropped=dropped.get((noise_idx,), 0),
            )
        )
    return table


def run_size_power(config: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Empirical rejection rate of the depth KW test per cell."""
    if config.experiment != "size_power":
        raise CrhdError("config is not a size_power experiment")
    tasks = [
        (noise_idx, degree_idx, rep)
        for noise_idx in range(len(config.noise_vars))
        for degree_idx in range(len(config.degrees))
        for rep in range(config.m_replicates)
    ]
    collected, dropped = _run_cells(config, tasks, _size_power_replicate, threads)
    table = ResultTable(experiment=config.experiment, criterion="rejection_rate")
    for cell, values in sorted(collected.items(), key=lambda kv: str(kv[0])):
        method, u, k, noise_var, degree = cell
        key = (config.noise_vars.index(noise_var), config.degrees.index(degree))
        mean, sd, se = _summarize(np.array(values))
        table.cells.append(
            ResultCell(
                method=method, u=u, k=k, noise_var=noise_var, degree=degree,
                mean=mean, sd=sd, se=se, count=len(values),
                dropped=dropped.get(key, 0),
            )
        )
    return table


def run_single_depth(
    sample_file,
    model_file,
    eval_file,
    method: str,
    k: int,
    u: float | None = None,
    lam: float | None = None,
    l_target: int | None = None,
    seed: int = 0,
) -> list[DepthRow]:
    """File-level depth evaluation shared by the CLI and ad-hoc scripts."""
    if (u is None) == (lam is None) and method != "two_stage_thd":
        raise CrhdError("give exactly one of a quantile level or a lambda")
    sample = read_sample_csv(sample_file)
    model = read_model_json(model_file)
    evals = read_sample_csv(eval_file)
    if method == "two_stage_thd":
        reg = None
    elif u is not None:
        reg = RegularizationSpec.quantiles(u)
    else:
        reg = RegularizationSpec.lambdas(lam)
    request = DepthRequest(method=method, k=k, reg=reg, l_target=l_target, n_proj=l_target)
    return depth_batch(sample, list(evals.curves), model, [request], seed=seed)
