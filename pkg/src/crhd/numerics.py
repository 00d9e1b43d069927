"""Grids, quadrature, interpolation, the standard normal CDF, and seeded
RNG substreams shared by every other module.

All containers are immutable after construction (arrays are marked
read-only) so they can be shared freely across threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import CrhdError

__all__ = [
    "Grid",
    "DenseCurve",
    "trapezoid_weights",
    "inner_product",
    "interp_linear",
    "interp_bilinear",
    "std_normal_cdf",
    "substream",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature weights for strictly increasing points.

    w_1 = (t_2 - t_1)/2, interior w_m = (t_{m+1} - t_{m-1})/2,
    w_M = (t_M - t_{M-1})/2.
    """
    t = np.asarray(points, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise CrhdError("grid needs at least 2 points")
    if np.any(np.diff(t) <= 0):
        raise CrhdError("grid points must be strictly increasing")
    w = np.empty_like(t)
    w[0] = (t[1] - t[0]) / 2.0
    w[-1] = (t[-1] - t[-2]) / 2.0
    w[1:-1] = (t[2:] - t[:-2]) / 2.0
    return w


@dataclass(frozen=True)
class Grid:
    """Ordered time stamps on [0, 1] with their trapezoid quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = _readonly(self.points)
        w = _readonly(self.weights)
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise CrhdError("grid must start at 0 and end at 1")
        if np.any(np.diff(pts) <= 0):
            raise CrhdError("grid points must be strictly increasing")
        if np.any(w <= 0):
            raise CrhdError("quadrature weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Grid":
        return cls(np.asarray(points, dtype=np.float64), trapezoid_weights(points))

    @classmethod
    def uniform(cls, m: int = 51) -> "Grid":
        """Default evaluation grid: m equally spaced points on [0, 1]."""
        return cls.from_points(np.linspace(0.0, 1.0, m))

    def __len__(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class DenseCurve:
    """Function values observed at every point of a shared grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = _readonly(self.values)
        if v.shape != self.grid.points.shape:
            raise CrhdError("values length must equal grid length")
        if not np.all(np.isfinite(v)):
            raise CrhdError("curve values must be finite")
        object.__setattr__(self, "values", v)


def _same_grid(f: DenseCurve, g: DenseCurve) -> None:
    if f.grid is not g.grid and not np.array_equal(f.grid.points, g.grid.points):
        raise CrhdError("curves do not share a grid")


def inner_product(f: DenseCurve, g: DenseCurve) -> float:
    """Quadrature L2 inner product of two curves on the same grid."""
    _same_grid(f, g)
    return float(np.sum(f.grid.weights * f.values * g.values))


def _bracket(grid: Grid, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = grid.points
    i = np.clip(np.searchsorted(pts, t, side="right") - 1, 0, pts.size - 2)
    w = (t - pts[i]) / (pts[i + 1] - pts[i])
    return i, w


def interp_linear(grid: Grid, values: np.ndarray, t) -> np.ndarray | float:
    """Piecewise-linear interpolation of grid values at t in [0, 1].

    Exact at grid points and for constant values (slope form, with the
    right cell edge patched to the stored value).
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise CrhdError("interpolation point outside [0, 1]")
    i, w = _bracket(grid, np.atleast_1d(t_arr))
    out = values[i] + (values[i + 1] - values[i]) * w
    right = w == 1.0
    if right.any():
        out[right] = values[i[right] + 1]
    return float(out[0]) if np.isscalar(t) or t_arr.ndim == 0 else out


def interp_rows(grid: Grid, rows: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation of each row of an (R, M) matrix at times t.

    Returns an (R, len(t)) matrix; shares the bracket search across rows.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise CrhdError("interpolation point outside [0, 1]")
    i, w = _bracket(grid, t)
    out = rows[:, i] + (rows[:, i + 1] - rows[:, i]) * w
    right = w == 1.0
    if right.any():
        out[:, right] = rows[:, i[right] + 1]
    return out


def interp_bilinear(grid: Grid, surface: np.ndarray, s, t) -> np.ndarray | float:
    """Bilinear interpolation of an M x M surface at coordinate pairs (s, t).

    For a separable surface sum_k c_k f_k(s) f_k(t) this agrees with the
    product of linear interpolations of the f_k.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any((s_arr < 0) | (s_arr > 1) | (t_arr < 0) | (t_arr > 1)):
        raise CrhdError("interpolation point outside [0, 1]")
    pts = grid.points
    i = np.clip(np.searchsorted(pts, s_arr, side="right") - 1, 0, len(pts) - 2)
    j = np.clip(np.searchsorted(pts, t_arr, side="right") - 1, 0, len(pts) - 2)
    ds = (s_arr - pts[i]) / (pts[i + 1] - pts[i])
    dt = (t_arr - pts[j]) / (pts[j + 1] - pts[j])
    out = (
        surface[i, j] * (1 - ds) * (1 - dt)
        + surface[i + 1, j] * ds * (1 - dt)
        + surface[i, j + 1] * (1 - ds) * dt
        + surface[i + 1, j + 1] * ds * dt
    )
    return float(out[0]) if np.isscalar(s) and np.isscalar(t) else out


def std_normal_cdf(z) -> np.ndarray | float:
    """Standard normal CDF, absolute error below 1e-12."""
    out = ndtr(z)
    return float(out) if np.isscalar(z) else out


def substream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator for the substream addressed by ``path``.

    Identical (seed, path) values reproduce identical draws regardless of
    how many other substreams were consumed, so per-replicate and per-pool
    streams stay stable under any execution order.
    """
    if seed < 0:
        raise CrhdError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A stable 63-bit integer seed for the substream addressed by ``path``."""
    if seed < 0:
        raise CrhdError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0] >> 1)
