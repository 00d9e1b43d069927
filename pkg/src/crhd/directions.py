"""Direction pools on the unit sphere of the retained eigenspace.

Directions are unit coefficient vectors a in R^K drawn by normalizing
N(0, Gamma_K) vectors; the anisotropic proposal raises the acceptance rate
of the RKHS-norm filter ||Gamma_K^{-1/2} a|| <= lambda. One shared pool
serves every regularization level, which keeps accepted sets nested in
lambda and therefore keeps the depths monotone in lambda.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import CrhdError, EmptyDirectionSetError
from .numerics import _readonly
from .smoothing import FittedModel

__all__ = [
    "DirectionPool",
    "AcceptedDirections",
    "RegularizationSpec",
    "sample_direction_pool",
    "pool_from_coords",
    "lambda_from_quantile",
    "filter_pool",
    "default_pool_size",
]


@dataclass(frozen=True)
class DirectionPool:
    """Unit coefficient vectors with their cached RKHS norms."""

    k: int
    coords: np.ndarray  # (L0, k)
    rkhs_norms: np.ndarray  # (L0,)
    model_fingerprint: str

    def __post_init__(self) -> None:
        coords = _readonly(self.coords)
        norms = _readonly(self.rkhs_norms)
        if coords.ndim != 2 or coords.shape[1] != self.k or coords.shape[0] < 1:
            raise CrhdError("coordinate matrix must be (L0, k) with L0 >= 1")
        if norms.shape != (coords.shape[0],):
            raise CrhdError("one RKHS norm per direction required")
        lengths = np.linalg.norm(coords, axis=1)
        if np.max(np.abs(lengths - 1.0)) > 1e-12:
            raise CrhdError("directions must be unit vectors")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "rkhs_norms", norms)

    def __len__(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class AcceptedDirections:
    """Indices into a pool accepted at one regularization level."""

    indices: np.ndarray
    lam: float
    shortfall: bool

    def __len__(self) -> int:
        return self.indices.size


def _rkhs_norms(coords: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    return np.sqrt(coords * coords @ (1.0 / eigenvalues))


def sample_direction_pool(
    model: FittedModel, k: int, l0: int, rng: np.random.Generator
) -> DirectionPool:
    """Draw l0 directions from the normalized N(0, Gamma_K) law."""
    if not 1 <= k <= model.n_components:
        raise CrhdError("truncation exceeds the retained spectrum")
    if l0 < 1:
        raise CrhdError("pool size must be positive")
    gam = model.eigenvalues[:k]
    z = rng.standard_normal((l0, k)) * np.sqrt(gam)
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms < 1e-300):
        redo = norms < 1e-300
        z[redo] = rng.standard_normal((int(redo.sum()), k)) * np.sqrt(gam)
        norms = np.linalg.norm(z, axis=1)
    coords = z / norms[:, None]
    return DirectionPool(
        k=k,
        coords=coords,
        rkhs_norms=_rkhs_norms(coords, gam),
        model_fingerprint=model.fingerprint,
    )


def pool_from_coords(model: FittedModel, coords: np.ndarray) -> DirectionPool:
    """Wrap explicit unit coefficient vectors as a pool (testing, diagnostics)."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    k = coords.shape[1]
    if k > model.n_components:
        raise CrhdError("truncation exceeds the retained spectrum")
    return DirectionPool(
        k=k,
        coords=coords,
        rkhs_norms=_rkhs_norms(coords, model.eigenvalues[:k]),
        model_fingerprint=model.fingerprint,
    )


def lambda_from_quantile(pool: DirectionPool, u: float) -> float:
    """Nearest-rank empirical u-quantile of the pool's RKHS norms."""
    if not 0 < u < 1:
        raise CrhdError("quantile level must lie in (0, 1)")
    rank = math.ceil(u * len(pool))
    return float(np.sort(pool.rkhs_norms)[rank - 1])


def filter_pool(pool: DirectionPool, lam: float, l_target: int) -> AcceptedDirections:
    """First l_target pool indices with RKHS norm at most lam, in pool order.

    Fewer than l_target acceptances over the whole pool is a warned-about
    shortfall, not an error; zero acceptances means lambda was below the
    smallest attainable norm and raises.
    """
    if lam <= 0:
        raise CrhdError("regularization must be positive")
    if l_target < 1:
        raise CrhdError("need a positive direction target")
    idx = np.flatnonzero(pool.rkhs_norms <= lam)
    if idx.size == 0:
        raise EmptyDirectionSetError(
            f"no direction has RKHS norm <= {lam:.6g}; "
            "lambda must exceed 1/sqrt(gamma_1)"
        )
    shortfall = idx.size < l_target
    if shortfall:
        warnings.warn(
            f"direction shortfall: {idx.size} accepted of {l_target} requested",
            stacklevel=2,
        )
    return AcceptedDirections(indices=idx[:l_target], lam=float(lam), shortfall=shortfall)


@dataclass(frozen=True)
class RegularizationSpec:
    """Regularization given either as explicit lambdas or quantile levels."""

    mode: str  # "lambda" | "quantile"
    values: tuple

    def __post_init__(self) -> None:
        if self.mode not in ("lambda", "quantile"):
            raise CrhdError("mode must be 'lambda' or 'quantile'")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise CrhdError("at least one regularization value required")
        if self.mode == "quantile" and not all(0 < v < 1 for v in vals):
            raise CrhdError("quantile levels must lie in (0, 1)")
        if self.mode == "lambda" and not all(v > 0 for v in vals):
            raise CrhdError("lambdas must be positive")
        object.__setattr__(self, "values", vals)

    def resolve(self, pool: DirectionPool) -> tuple[float, ...]:
        if self.mode == "lambda":
            return self.values
        return tuple(lambda_from_quantile(pool, u) for u in self.values)

    @classmethod
    def quantiles(cls, *us: float) -> "RegularizationSpec":
        return cls(mode="quantile", values=us)

    @classmethod
    def lambdas(cls, *lams: float) -> "RegularizationSpec":
        return cls(mode="lambda", values=lams)


def default_pool_size(l_target: int, cap: int = 1_000_000) -> int:
    """Pool size heuristic: ten times the largest requested acceptance count."""
    return min(10 * l_target, cap)
