"""Simulation ground truth: truncated Karhunen-Loeve curve generation and
sparse, noisy observation sampling.

Eigenvalues follow the polynomial eigengap decay
``gamma_j - gamma_{j+1} = 2 j^{-a}`` with ``gamma_1 = 2 sum_j j^{-a}``,
eigenfunctions are the first Fourier basis functions on [0, 1], and scores
are built from a shared latent factor so the Gaussian / NN / UU families
all have unit-variance (possibly dependent) coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from .exceptions import CrhdError
from .numerics import Grid, _readonly, interp_linear

__all__ = [
    "SparseCurve",
    "SparseSample",
    "TrueModel",
    "eigenvalues_from_decay",
    "fourier_basis",
    "sample_scores",
    "sample_error",
    "gen_true_curves",
    "sparsify",
]

SCORE_DISTS = ("gaussian", "nn", "uu")
ERROR_DISTS = ("normal", "chi2")


@dataclass(frozen=True)
class SparseCurve:
    """One subject's irregular observation times and noisy values."""

    times: np.ndarray
    values: np.ndarray
    subject_id: object

    def __post_init__(self) -> None:
        t = _readonly(self.times)
        v = _readonly(self.values)
        if t.size < 1 or t.shape != v.shape:
            raise CrhdError("curve needs matching, non-empty times and values")
        if np.any(np.diff(t) <= 0):
            raise CrhdError("observation times must be sorted without duplicates")
        if np.any((t < 0) | (t > 1)):
            raise CrhdError("observation times must lie in [0, 1]")
        if not np.all(np.isfinite(v)):
            raise CrhdError("observed values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class SparseSample:
    """A collection of sparse curves with unique subject ids."""

    curves: tuple

    def __post_init__(self) -> None:
        curves = tuple(self.curves)
        if not curves:
            raise CrhdError("sample must contain at least one curve")
        ids = [c.subject_id for c in curves]
        if len(set(ids)) != len(ids):
            raise CrhdError("subject ids must be unique")
        object.__setattr__(self, "curves", curves)

    def __len__(self) -> int:
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)


def eigenvalues_from_decay(a: float, k_star: int) -> np.ndarray:
    """Eigenvalues gamma_k = 2 * sum_{j>=k} j^{-a} for decay rate a > 1."""
    if a <= 1:
        raise CrhdError("eigengap decay rate must exceed 1 for a summable series")
    if k_star < 1:
        raise CrhdError("k_star must be at least 1")
    ks = np.arange(1, k_star + 1, dtype=np.float64)
    return 2.0 * zeta(a, ks)


def fourier_basis(points: np.ndarray, k: int) -> np.ndarray:
    """First k orthonormal Fourier basis functions on [0, 1], one row each.

    Row 1 is the constant 1; rows 2m and 2m+1 are sqrt(2) sin(2 pi m t) and
    sqrt(2) cos(2 pi m t).
    """
    t = np.asarray(points, dtype=np.float64)
    out = np.empty((k, t.size))
    out[0] = 1.0
    for j in range(2, k + 1):
        m = j // 2
        if j % 2 == 0:
            out[j - 1] = np.sqrt(2.0) * np.sin(2.0 * np.pi * m * t)
        else:
            out[j - 1] = np.sqrt(2.0) * np.cos(2.0 * np.pi * m * t)
    return out


@dataclass(frozen=True)
class TrueModel:
    """Ground-truth data generating process on a grid."""

    grid: Grid
    mean_slope: float
    decay_a: float
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    score_dist: str
    error_dist: str
    noise_var: float

    def __post_init__(self) -> None:
        ev = _readonly(self.eigenvalues)
        ef = _readonly(self.eigenfunctions)
        if np.any(ev <= 0) or np.any(np.diff(ev) >= 0):
            raise CrhdError("eigenvalues must be positive and strictly decreasing")
        if ef.shape != (ev.size, len(self.grid)):
            raise CrhdError("eigenfunction matrix shape mismatch")
        gram = (ef * self.grid.weights) @ ef.T
        if np.max(np.abs(gram - np.eye(ev.size))) > 1e-6:
            raise CrhdError("eigenfunctions are not orthonormal under the grid quadrature")
        if self.score_dist not in SCORE_DISTS:
            raise CrhdError(f"unknown score distribution {self.score_dist!r}")
        if self.error_dist not in ERROR_DISTS:
            raise CrhdError(f"unknown error distribution {self.error_dist!r}")
        if self.noise_var < 0:
            raise CrhdError("noise variance must be non-negative")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "eigenfunctions", ef)

    @property
    def k_star(self) -> int:
        return self.eigenvalues.size

    @property
    def mean(self) -> np.ndarray:
        return self.mean_slope * self.grid.points

    @classmethod
    def make(
        cls,
        grid: Grid | None = None,
        decay_a: float = 5.0,
        k_star: int = 15,
        mean_slope: float = 0.0,
        score_dist: str = "nn",
        error_dist: str = "chi2",
        noise_var: float = 0.1,
    ) -> "TrueModel":
        grid = grid or Grid.uniform()
        return cls(
            grid=grid,
            mean_slope=mean_slope,
            decay_a=decay_a,
            eigenvalues=eigenvalues_from_decay(decay_a, k_star),
            eigenfunctions=fourier_basis(grid.points, k_star),
            score_dist=score_dist,
            error_dist=error_dist,
            noise_var=noise_var,
        )


def sample_scores(
    dist: str, k_star: int, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw score vectors xi_k = xi * W_k with unit variance coordinates.

    gaussian: xi = 1, W_k ~ N(0,1);  nn: xi ~ N(0,1), W_k ~ N(0,1);
    uu: xi ~ U(-sqrt 3, sqrt 3), W_k ~ U(-sqrt 3, sqrt 3).
    Returns shape (k_star,) when size is None, else (size, k_star).
    """
    n = 1 if size is None else size
    s3 = np.sqrt(3.0)
    if dist == "gaussian":
        latent = np.ones((n, 1))
        w = rng.standard_normal((n, k_star))
    elif dist == "nn":
        latent = rng.standard_normal((n, 1))
        w = rng.standard_normal((n, k_star))
    elif dist == "uu":
        latent = rng.uniform(-s3, s3, (n, 1))
        w = rng.uniform(-s3, s3, (n, k_star))
    else:
        raise CrhdError(f"unknown score distribution {dist!r}")
    out = latent * w
    return out[0] if size is None else out


def sample_error(
    dist: str, noise_var: float, rng: np.random.Generator, size: int | None = None
) -> np.ndarray | float:
    """Draw mean-zero measurement errors with variance ``noise_var``.

    chi2 draws a centered chi-square with df nu = noise_var / 2, realized
    as gamma(shape=nu/2, scale=2) - nu so fractional df are valid.
    """
    if noise_var <= 0:
        raise CrhdError("noise variance must be positive for error sampling")
    n = 1 if size is None else size
    if dist == "normal":
        out = rng.normal(0.0, np.sqrt(noise_var), n)
    elif dist == "chi2":
        nu = noise_var / 2.0
        out = rng.gamma(nu / 2.0, 2.0, n) - nu
    else:
        raise CrhdError(f"unknown error distribution {dist!r}")
    return float(out[0]) if size is None else out


def gen_true_curves(
    n: int, model: TrueModel, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Generate n dense curves X_i = mu + sum_k sqrt(gamma_k) xi_ik phi_k.

    Returns (values, scores): the (n, M) value matrix on the model grid and
    the (n, k_star) score matrix, so tests can reconstruct curves exactly.
    """
    if n < 1:
        raise CrhdError("need at least one curve")
    scores = sample_scores(model.score_dist, model.k_star, rng, size=n)
    values = model.mean + (scores * np.sqrt(model.eigenvalues)) @ model.eigenfunctions
    return values, scores


def _dedupe_times(t: np.ndarray) -> np.ndarray:
    # duplicate draws have probability zero but matter in floating point;
    # bump repeats by one ulp so Sigma_i stays non-singular
    for j in range(1, t.size):
        if t[j] <= t[j - 1]:
            t[j] = np.nextafter(t[j - 1], 1.0)
    return t


def sparsify(
    values: np.ndarray,
    grid: Grid,
    error_dist: str,
    noise_var: float,
    rng: np.random.Generator,
    n_obs_range: tuple[int, int] = (2, 9),
) -> SparseSample:
    """Observe dense curves at few uniform times with additive noise.

    Per curve, n_i is uniform on {lo, ..., hi}, times are U(0, 1) sorted,
    and observed values are the linear interpolation of the dense curve at
    those times plus a draw from the error law.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    lo, hi = n_obs_range
    if lo < 1 or hi < lo:
        raise CrhdError("invalid observation count range")
    curves = []
    for i in range(values.shape[0]):
        n_i = int(rng.integers(lo, hi + 1))
        times = _dedupe_times(np.sort(rng.random(n_i)))
        obs = interp_linear(grid, values[i], times)
        if noise_var > 0:
            obs = obs + sample_error(error_dist, noise_var, rng, size=n_i)
        curves.append(SparseCurve(times=times, values=np.asarray(obs), subject_id=i))
    return SparseSample(curves=tuple(curves))
