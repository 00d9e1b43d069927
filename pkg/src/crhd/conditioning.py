"""Per-curve Gaussian conditional machinery.

Given a fitted model and one sparse curve, the joint law of the observed
vector and any projection onto the retained eigenspace is Gaussian with a
closed-form conditional mean and variance. Everything a depth engine needs
per curve reduces to two cached quantities:

* ``xi``   - conditional-expectation (BLUP) scores, Gamma Phi' Sigma^-1 (X - mu)
* ``gain`` - Gamma Phi' Sigma^-1 Phi Gamma, the variance explained by the
  observations, so the conditional variance of a'xi is a' (Gamma - gain) a.

The observation covariance Sigma uses the positive part of the estimated
spectrum, which coincides with bilinear interpolation of the retained-
spectrum surface because that surface is separable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .dgp import SparseCurve
from .exceptions import CrhdError
from .numerics import _readonly, interp_linear, interp_rows
from .smoothing import FittedModel

__all__ = [
    "ObsDesign",
    "ConditionalMoments",
    "build_design",
    "cond_moments",
    "blup_scores",
    "predict_curve",
]

logger = logging.getLogger(__name__)

_RIDGE_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

# relative floor applied to Psi_0 + Psi_i before division, per direction
PSI_SUM_FLOOR = 1e-12


class ConditionalMoments(NamedTuple):
    eta: float
    psi: float


@dataclass(frozen=True)
class ObsDesign:
    """Cached per-curve quantities for conditional-moment evaluation."""

    subject_id: object
    times: np.ndarray
    mu_obs: np.ndarray
    centered: np.ndarray
    sigma: np.ndarray
    phi: np.ndarray  # (n_i, K_full) eigenfunctions at the observation times
    xi: np.ndarray  # (K_full,) BLUP scores
    gain: np.ndarray  # (K_full, K_full) explained score covariance
    ridge: float

    def __post_init__(self) -> None:
        for name in ("times", "mu_obs", "centered", "sigma", "phi", "xi", "gain"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def build_design(curve: SparseCurve, model: FittedModel, k: int | None = None) -> ObsDesign:
    """Assemble the observation design for one curve under a fitted model.

    ``k`` caps the cached spectrum (defaults to every retained component);
    conditional moments for any truncation at or below the cap slice the
    cached arrays. Factorization failures escalate a relative ridge on the
    diagonal of Sigma.
    """
    if len(curve) == 0:
        raise CrhdError("cannot build a design for an empty curve")
    k_full = model.n_components if k is None else int(k)
    if not 1 <= k_full <= model.n_components:
        raise CrhdError("truncation exceeds the retained spectrum")
    grid = model.grid
    mu_obs = np.asarray(interp_linear(grid, model.mu, curve.times))
    phi = interp_rows(grid, model.eigenfunctions, curve.times).T
    gam = model.eigenvalues
    sigma = (phi * gam) @ phi.T
    sigma[np.diag_indices_from(sigma)] += model.sigma2
    sigma = (sigma + sigma.T) / 2.0

    n_i = len(curve)
    base = np.trace(sigma) / n_i
    chol = None
    ridge_used = 0.0
    for tau in _RIDGE_LADDER:
        try:
            trial = sigma + tau * base * np.eye(n_i)
            chol = scipy.linalg.cho_factor(trial, lower=True)
            sigma = trial
            ridge_used = tau * base
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise CrhdError("observation covariance could not be factorized")
    if ridge_used > 0:
        logger.debug(
            "ridge %.3e applied to curve %r observation covariance",
            ridge_used,
            curve.subject_id,
        )
    centered = curve.values - mu_obs
    # solve once against [centered | Phi]: gives Sigma^-1 c and Sigma^-1 Phi
    rhs = np.column_stack([centered, phi[:, :k_full]])
    sol = scipy.linalg.cho_solve(chol, rhs)
    gam_k = gam[:k_full]
    xi = gam_k * (phi[:, :k_full].T @ sol[:, 0])
    gain = (gam_k[:, None] * (phi[:, :k_full].T @ sol[:, 1:])) * gam_k[None, :]
    gain = (gain + gain.T) / 2.0
    return ObsDesign(
        subject_id=curve.subject_id,
        times=curve.times,
        mu_obs=mu_obs,
        centered=centered,
        sigma=sigma,
        phi=phi[:, :k_full],
        xi=xi,
        gain=gain,
        ridge=ridge_used,
    )


def _check_k(design: ObsDesign, model: FittedModel, k: int) -> None:
    if k < 1 or k > design.xi.size or k > model.n_components:
        raise CrhdError("direction dimension exceeds the cached spectrum")


def cond_moments(a: np.ndarray, design: ObsDesign, model: FittedModel) -> ConditionalMoments:
    """Conditional mean and variance of the projection onto sum_k a_k phi_k.

    eta = (projected mean)'a + a'xi and psi = a' (Gamma_K - gain) a, with
    psi clamped into [0, a' Gamma_K a]; plug-in estimates can breach the
    population bounds by rounding, and downstream needs psi >= 0.
    """
    a = np.asarray(a, dtype=np.float64)
    k = a.size
    _check_k(design, model, k)
    gam = model.eigenvalues[:k]
    eta = float(model.mu_scores[:k] @ a + design.xi[:k] @ a)
    gka = float(np.sum(gam * a * a))
    psi_raw = gka - float(a @ design.gain[:k, :k] @ a)
    if psi_raw < -1e-8 * gka or psi_raw > gka * (1 + 1e-8):
        logger.debug("conditional variance clamp of %.3e at k=%d", psi_raw - gka, k)
    psi = min(max(psi_raw, 0.0), gka)
    return ConditionalMoments(eta=eta, psi=psi)


def blup_scores(design: ObsDesign, model: FittedModel, k: int) -> np.ndarray:
    """First k conditional-expectation scores of the curve."""
    _check_k(design, model, k)
    return design.xi[:k].copy()


def predict_curve(
    curve: SparseCurve, model: FittedModel, k: int | None = None
) -> np.ndarray:
    """Predicted dense trajectory mu + sum_k xi_k phi_k on the model grid."""
    k = model.n_components if k is None else int(k)
    design = build_design(curve, model, k)
    return model.mu + design.xi[:k] @ model.eigenfunctions[:k]


def stack_designs(
    designs: Sequence[ObsDesign], k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-curve BLUP scores and conditional score covariances.

    Returns (xi, q): shapes (n, k) and (n, k, k) with q_i = Gamma_K - gain_i,
    the conditional covariance of the first k scores given curve i.
    """
    n = len(designs)
    xi = np.empty((n, k))
    q = np.empty((n, k, k))
    for i, d in enumerate(designs):
        if d.xi.size < k:
            raise CrhdError("design cached fewer components than requested")
        xi[i] = d.xi[:k]
        q[i] = -d.gain[:k, :k]
    return xi, q


def conditional_moment_arrays(
    coords: np.ndarray,
    gamma_k: np.ndarray,
    xi: np.ndarray,
    q: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Innovation means and clamped variances for a block of directions.

    coords: (L, k) unit direction coefficients; xi: (n, k); q: (n, k, k)
    holding -gain_i. Returns (eta, psi, gka): eta (L, n) innovation part of
    the conditional means, psi (L, n) conditional variances clamped to
    [0, a' Gamma_K a], and gka (L,).
    """
    gka = np.einsum("lk,k,lk->l", coords, gamma_k, coords)
    eta = coords @ xi.T
    psi = gka[:, None] + np.einsum("lk,ikj,lj->li", coords, q, coords, optimize=True)
    np.clip(psi, 0.0, gka[:, None], out=psi)
    return eta, psi, gka
