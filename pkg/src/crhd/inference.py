"""Depth-induced rankings, Spearman correlation, and the depth-based
two-sample Kruskal-Wallis test.

The test fits a depth reference on each group alone, evaluates every curve
from both groups under that reference, ranks the pooled depths (minimum
rank on ties), computes the tie-corrected Kruskal-Wallis statistic under
each reference, and averages the two statistics against a chi-square(1)
rejection region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, rankdata

from .depth import DepthRequest, depth_batch
from .dgp import SparseSample
from .exceptions import CrhdError, UndefinedCorrelationError
from .smoothing import FittedModel, fit_model

__all__ = [
    "TestResult",
    "rank_min_ties",
    "spearman",
    "kw_statistic",
    "depth_kw_test",
]


def rank_min_ties(values) -> np.ndarray:
    """Ranks with the minimum convention: rank(v) = 1 + #{strictly smaller}."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise CrhdError("ranks need finite values")
    return rankdata(v, method="min").astype(np.int64)


def spearman(x, y) -> float:
    """Spearman correlation: Pearson correlation of average-tie ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise CrhdError("need two equal-length sequences of length >= 2")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise UndefinedCorrelationError("correlation undefined for a constant input")
    return float(np.corrcoef(rx, ry)[0, 1])


def kw_statistic(values, groups) -> float:
    """Tie-corrected Kruskal-Wallis statistic of pooled values by group.

    All observations tied yields 0 by convention (the tie divisor vanishes).
    """
    v = np.asarray(values, dtype=np.float64)
    g = np.asarray(groups)
    if v.size != g.size or v.size == 0:
        raise CrhdError("values and group labels must align")
    labels = np.unique(g)
    if labels.size < 2:
        raise CrhdError("need at least two groups")
    n_total = v.size
    r = rankdata(v, method="average")
    h = 0.0
    for lab in labels:
        sel = g == lab
        if not sel.any():
            raise CrhdError("each group must be non-empty")
        h += sel.sum() * (r[sel].mean() - (n_total + 1) / 2.0) ** 2
    h *= 12.0 / (n_total * (n_total + 1))
    _, counts = np.unique(v, return_counts=True)
    tie = 1.0 - np.sum(counts**3 - counts) / (n_total**3 - n_total)
    if tie <= 0:
        return 0.0
    return float(h / tie)


@dataclass(frozen=True)
class TestResult:
    """Averaged two-reference Kruskal-Wallis test outcome."""

    statistic_h: float
    p_value: float
    reject: bool
    components: tuple[float, float]
    alpha: float


def _depth_values(
    reference: SparseSample,
    eval_curves,
    model: FittedModel,
    request: DepthRequest,
    seed: int,
) -> np.ndarray:
    rows = depth_batch(reference, eval_curves, model, [request], seed=seed)
    if len(rows) != len(eval_curves):
        raise CrhdError("expected exactly one regularization level for the test")
    return np.array([row.depth for row in rows])


def kw_from_models(
    group0: SparseSample,
    group1: SparseSample,
    model0: FittedModel,
    model1: FittedModel,
    request: DepthRequest,
    alpha: float = 0.05,
    seed: int = 0,
) -> TestResult:
    """The averaged KW test with pre-fitted per-group reference models."""
    if not 0 < alpha < 1:
        raise CrhdError("alpha must lie in (0, 1)")
    curves = list(group0.curves) + list(group1.curves)
    labels = np.array([0] * len(group0) + [1] * len(group1))
    components = []
    for ref_sample, ref_model in ((group0, model0), (group1, model1)):
        depths = _depth_values(ref_sample, curves, ref_model, request, seed)
        ranks = rank_min_ties(depths)
        components.append(kw_statistic(ranks, labels))
    h = float(np.mean(components))
    crit = float(chi2.ppf(1.0 - alpha, df=1))
    return TestResult(
        statistic_h=h,
        p_value=float(chi2.sf(h, df=1)),
        reject=bool(h > crit),
        components=(components[0], components[1]),
        alpha=alpha,
    )


def depth_kw_test(
    group0: SparseSample,
    group1: SparseSample,
    request: DepthRequest,
    alpha: float = 0.05,
    seed: int = 0,
) -> TestResult:
    """Depth-based two-sample test: fit each group's reference, rank all
    curves under both references, average the two KW statistics."""
    model0 = fit_model(group0, seed=seed)
    model1 = fit_model(group1, seed=seed)
    return kw_from_models(group0, group1, model0, model1, request, alpha=alpha, seed=seed)
