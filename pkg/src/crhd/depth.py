"""The four depth engines for sparse functional data.

* ``acrhd`` - averaged conditional depth: minimum over directions of the
  average conditional probability that a sample trajectory projects at or
  above the evaluation trajectory, both conditioned on their observations.
* ``pcrhd`` - plug-in conditional depth: same minimum with the sample
  average replaced by the marginal law of the process.
* ``two_stage_rhd`` - dense-curve depth of conditional-expectation
  predictions, with halfspace probabilities replaced by sample proportions.
* ``two_stage_thd`` - random-projection halfspace depth of the
  conditional-expectation score vectors.

``depth_batch`` amortizes observation designs and direction pools across
methods and regularization levels; sharing one pool across levels is what
makes the conditional depths monotone in lambda.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from ._kernels import min_avg_gauss_batch, min_count_batch
from .conditioning import (
    PSI_SUM_FLOOR,
    ObsDesign,
    build_design,
    conditional_moment_arrays,
    stack_designs,
)
from .dgp import SparseCurve, SparseSample
from .directions import (
    AcceptedDirections,
    DirectionPool,
    RegularizationSpec,
    default_pool_size,
    filter_pool,
    sample_direction_pool,
)
from .exceptions import CrhdError, EmptyDirectionSetError
from .numerics import DenseCurve, substream
from .smoothing import FittedModel

__all__ = [
    "DepthResult",
    "DepthRequest",
    "DepthRow",
    "acrhd",
    "pcrhd",
    "dense_rhd",
    "two_stage_rhd",
    "two_stage_thd",
    "depth_batch",
]

METHODS = ("acrhd", "pcrhd", "two_stage_rhd", "two_stage_thd")

_STREAM_POOL = 201
_STREAM_THD = 202


@dataclass(frozen=True)
class DepthResult:
    """One depth value with the minimizing pool direction."""

    value: float
    argmin_direction: int
    n_directions_used: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise CrhdError("depth values must lie in [0, 1]")


@dataclass(frozen=True)
class DepthRequest:
    """Method plus tuning for a batch evaluation.

    ``reg`` is ignored for two_stage_thd, which uses the unfiltered
    isotropic law. ``l_target`` defaults to 1000 * k accepted directions,
    as does ``n_proj`` for the score-depth projections.
    """

    method: str
    k: int
    reg: RegularizationSpec | None = None
    l_target: int | None = None
    n_proj: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise CrhdError(f"unknown depth method {self.method!r}")
        if self.k < 1:
            raise CrhdError("truncation must be at least 1")
        if self.method != "two_stage_thd" and self.reg is None:
            raise CrhdError(f"{self.method} requires a regularization spec")

    @property
    def directions_target(self) -> int:
        return self.l_target if self.l_target is not None else 1000 * self.k

    @property
    def projections_target(self) -> int:
        return self.n_proj if self.n_proj is not None else 1000 * self.k


@dataclass(frozen=True)
class DepthRow:
    """One (evaluation curve, method, lambda) cell of a batch result."""

    subject_id: object
    method: str
    lam: float
    u: float | None
    k: int
    depth: float
    argmin_direction: int
    n_directions: int


def _as_curve_list(obj) -> list[SparseCurve]:
    if isinstance(obj, SparseSample):
        return list(obj.curves)
    if isinstance(obj, SparseCurve):
        return [obj]
    return list(obj)


def _subset_coords(pool: DirectionPool, accepted: AcceptedDirections) -> np.ndarray:
    if len(accepted) == 0:
        raise EmptyDirectionSetError("accepted direction set is empty")
    return pool.coords[accepted.indices]


def _crhd_arrays(designs: Sequence[ObsDesign], coords: np.ndarray, model: FittedModel, k: int):
    xi, q = stack_designs(designs, k)
    return conditional_moment_arrays(coords, model.eigenvalues[:k], xi, q)


def _acrhd_batch(
    sample_designs: Sequence[ObsDesign],
    eval_designs: Sequence[ObsDesign],
    coords: np.ndarray,
    model: FittedModel,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    eta_s, psi_s, gka = _crhd_arrays(sample_designs, coords, model, k)
    eta_e, psi_e, _ = _crhd_arrays(eval_designs, coords, model, k)
    floors = PSI_SUM_FLOOR * gka
    n_eval = eta_e.shape[1]
    values = np.empty(n_eval)
    args = np.empty(n_eval, dtype=np.int64)
    min_avg_gauss_batch(eta_s, psi_s, eta_e, psi_e, floors, values, args)
    return values, args


def _pcrhd_batch(
    eval_designs: Sequence[ObsDesign],
    coords: np.ndarray,
    model: FittedModel,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    eta_e, psi_e, gka = _crhd_arrays(eval_designs, coords, model, k)
    terms = ndtr(-eta_e / np.sqrt(psi_e + gka[:, None]))
    args = np.argmin(terms, axis=0)
    values = terms[args, np.arange(terms.shape[1])]
    return values, args


def _count_batch(proj_s: np.ndarray, proj_e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    proj_sorted = np.sort(proj_s, axis=1)
    n_eval = proj_e.shape[1]
    values = np.empty(n_eval)
    args = np.empty(n_eval, dtype=np.int64)
    min_count_batch(proj_sorted, proj_e, values, args)
    return values, args


def _dense_coords(values: np.ndarray, model: FittedModel, k: int) -> np.ndarray:
    """Quadrature projections of dense curves onto the first k eigenfunctions."""
    values = np.atleast_2d(values)
    if values.shape[1] != len(model.grid):
        raise CrhdError("curves do not share the model grid")
    basis = model.eigenfunctions[:k] * model.grid.weights
    return values @ basis.T


def _result(values, args, accepted_indices, n_used) -> DepthResult:
    pool_index = int(accepted_indices[args[0]]) if args[0] >= 0 else -1
    return DepthResult(
        value=float(values[0]), argmin_direction=pool_index, n_directions_used=n_used
    )


def acrhd(
    x0: SparseCurve,
    sample: SparseSample,
    model: FittedModel,
    pool: DirectionPool,
    accepted: AcceptedDirections,
    k: int,
) -> DepthResult:
    """Averaged conditional depth of one sparse curve within a sample."""
    coords = _subset_coords(pool, accepted)[:, :k]
    sample_designs = [build_design(c, model) for c in sample]
    eval_design = build_design(x0, model)
    values, args = _acrhd_batch(sample_designs, [eval_design], coords, model, k)
    return _result(values, args, accepted.indices, len(accepted))


def pcrhd(
    x0: SparseCurve,
    model: FittedModel,
    pool: DirectionPool,
    accepted: AcceptedDirections,
    k: int,
) -> DepthResult:
    """Plug-in conditional depth of one sparse curve."""
    coords = _subset_coords(pool, accepted)[:, :k]
    eval_design = build_design(x0, model)
    values, args = _pcrhd_batch([eval_design], coords, model, k)
    return _result(values, args, accepted.indices, len(accepted))


def dense_rhd(
    x,
    sample_values,
    model: FittedModel,
    pool: DirectionPool,
    accepted: AcceptedDirections,
    k: int,
) -> DepthResult:
    """Sample-proportion halfspace depth of a dense curve among dense curves.

    Ties (projection difference exactly zero) count toward the depth, per
    the weak inequality in the halfspace definition.
    """
    x_values = x.values if isinstance(x, DenseCurve) else np.asarray(x, dtype=np.float64)
    if isinstance(sample_values, (list, tuple)) and sample_values and isinstance(
        sample_values[0], DenseCurve
    ):
        sample_values = np.vstack([c.values for c in sample_values])
    coords = _subset_coords(pool, accepted)[:, :k]
    c_s = _dense_coords(sample_values, model, k)
    c_e = _dense_coords(x_values, model, k)
    values, args = _count_batch(coords @ c_s.T, coords @ c_e.T)
    return _result(values, args, accepted.indices, len(accepted))


def dense_rhd_values(
    sample_values: np.ndarray,
    eval_values: np.ndarray,
    model: FittedModel,
    pool: DirectionPool,
    accepted: AcceptedDirections,
    k: int,
) -> np.ndarray:
    """Dense depths of many curves at once (rows of eval_values)."""
    coords = _subset_coords(pool, accepted)[:, :k]
    values, _ = _count_batch(
        coords @ _dense_coords(sample_values, model, k).T,
        coords @ _dense_coords(eval_values, model, k).T,
    )
    return values


def two_stage_rhd(
    x0: SparseCurve,
    sample: SparseSample,
    model: FittedModel,
    pool: DirectionPool,
    accepted: AcceptedDirections,
    k: int,
) -> DepthResult:
    """Dense depth of conditional-expectation predictions.

    All curves, including the evaluation point, are predicted with the full
    retained spectrum; the depth itself uses directions truncated at k.
    """
    coords = _subset_coords(pool, accepted)[:, :k]
    pred_s = _predictions([build_design(c, model) for c in sample], model)
    pred_e = _predictions([build_design(x0, model)], model)
    values, args = _count_batch(
        coords @ _dense_coords(pred_s, model, k).T,
        coords @ _dense_coords(pred_e, model, k).T,
    )
    return _result(values, args, accepted.indices, len(accepted))


def _predictions(designs: Sequence[ObsDesign], model: FittedModel) -> np.ndarray:
    xi = np.vstack([d.xi for d in designs])
    return model.mu + xi @ model.eigenfunctions


def _thd_projections(k: int, n_proj: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n_proj, k))
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms < 1e-300):
        redo = norms < 1e-300
        z[redo] = rng.standard_normal((int(redo.sum()), k))
        norms = np.linalg.norm(z, axis=1)
    return z / norms[:, None]


def two_stage_thd(
    x0: SparseCurve,
    sample: SparseSample,
    model: FittedModel,
    k: int,
    n_proj: int | None = None,
    rng: np.random.Generator | None = None,
    projections: np.ndarray | None = None,
) -> DepthResult:
    """Random-projection halfspace depth of conditional-expectation scores.

    Projections are uniform unit vectors (normalized isotropic normals),
    drawn from ``rng`` unless an explicit set is supplied.
    """
    if projections is None:
        if rng is None:
            raise CrhdError("two_stage_thd needs an rng or explicit projections")
        n_proj = n_proj if n_proj is not None else 1000 * k
        if n_proj < 1:
            raise CrhdError("need at least one projection")
        projections = _thd_projections(k, n_proj, rng)
    xi_s = np.vstack([build_design(c, model).xi[:k] for c in sample])
    xi_e = build_design(x0, model).xi[:k]
    values, args = _count_batch(projections @ xi_s.T, projections @ xi_e[:, None])
    return DepthResult(
        value=float(values[0]),
        argmin_direction=int(args[0]),
        n_directions_used=projections.shape[0],
    )


def depth_batch(
    sample: SparseSample,
    evals,
    model: FittedModel,
    requests: Sequence[DepthRequest],
    seed: int = 0,
) -> list[DepthRow]:
    """Evaluate depth requests for every evaluation curve against a sample.

    One observation design is built per curve, one direction pool per
    truncation level (seeded substream), and every regularization level of
    a request filters the same pool, so accepted sets are nested in lambda.
    Results are bit-identical to the pointwise operations for fixed pools.
    """
    eval_curves = _as_curve_list(evals)
    sample_curves = _as_curve_list(sample)
    sample_designs = [build_design(c, model) for c in sample_curves]
    if eval_curves is sample_curves or (
        len(eval_curves) == len(sample_curves)
        and all(a is b for a, b in zip(eval_curves, sample_curves))
    ):
        eval_designs = sample_designs
    else:
        eval_designs = [build_design(c, model) for c in eval_curves]

    ks = sorted({r.k for r in requests})
    pools: dict[int, DirectionPool] = {}
    thd_projections: dict[tuple[int, int], np.ndarray] = {}
    for k in ks:
        target = max(
            (r.directions_target for r in requests if r.k == k and r.method != "two_stage_thd"),
            default=0,
        )
        if target > 0:
            pools[k] = sample_direction_pool(
                model, k, default_pool_size(target), substream(seed, _STREAM_POOL, k)
            )

    pred_s = pred_e = None
    rows: list[DepthRow] = []
    for req in requests:
        k = req.k
        if req.method == "two_stage_thd":
            key = (k, req.projections_target)
            if key not in thd_projections:
                thd_projections[key] = _thd_projections(
                    k, req.projections_target, substream(seed, _STREAM_THD, k)
                )
            proj = thd_projections[key]
            xi_s = np.vstack([d.xi[:k] for d in sample_designs])
            xi_e = np.vstack([d.xi[:k] for d in eval_designs])
            values, args = _count_batch(proj @ xi_s.T, proj @ xi_e.T)
            for j, c in enumerate(eval_curves):
                rows.append(
                    DepthRow(
                        subject_id=c.subject_id,
                        method=req.method,
                        lam=np.inf,
                        u=None,
                        k=k,
                        depth=float(values[j]),
                        argmin_direction=int(args[j]),
                        n_directions=proj.shape[0],
                    )
                )
            continue

        pool = pools[k]
        lams = req.reg.resolve(pool)
        us = req.reg.values if req.reg.mode == "quantile" else [None] * len(lams)
        for lam, u in zip(lams, us):
            accepted = filter_pool(pool, lam, req.directions_target)
            coords = pool.coords[accepted.indices][:, :k]
            if req.method == "acrhd":
                values, args = _acrhd_batch(sample_designs, eval_designs, coords, model, k)
            elif req.method == "pcrhd":
                values, args = _pcrhd_batch(eval_designs, coords, model, k)
            else:  # two_stage_rhd
                if pred_s is None:
                    pred_s = _predictions(sample_designs, model)
                if pred_e is None:
                    pred_e = (
                        pred_s
                        if eval_designs is sample_designs
                        else _predictions(eval_designs, model)
                    )
                values, args = _count_batch(
                    coords @ _dense_coords(pred_s, model, k).T,
                    coords @ _dense_coords(pred_e, model, k).T,
                )
            for j, c in enumerate(eval_curves):
                pool_index = int(accepted.indices[args[j]]) if args[j] >= 0 else -1
                rows.append(
                    DepthRow(
                        subject_id=c.subject_id,
                        method=req.method,
                        lam=float(lam),
                        u=u,
                        k=k,
                        depth=float(values[j]),
                        argmin_direction=pool_index,
                        n_directions=len(accepted),
                    )
                )
    return rows
