"""Independent oracles used to derive expected values.

Each oracle deliberately avoids the code path it checks: quadrature of the
normal density instead of erfc, dense joint-covariance conditioning instead
of cached per-curve solves, bounded direct series summation instead of
library zeta evaluation, and explicit weighted least squares instead of the
vectorized smoother.
"""

import numpy as np
from scipy.integrate import quad

from crhd.numerics import Grid, interp_linear


def normal_cdf_quadrature(z: float) -> float:
    """Phi(z) by adaptive quadrature of the density from -40."""
    density = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi)
    val, _ = quad(density, -40.0, z, epsabs=1e-13, limit=400)
    return val


def zeta_direct(a: float, k: int, tol: float = 1e-12) -> float:
    """sum_{j>=k} j^-a by direct summation with an integral tail bound.

    Stops once the remainder bound J^(1-a)/(a-1) falls below tol.
    """
    total = 0.0
    j = k
    while True:
        total += j ** (-a)
        j += 1
        if j ** (1.0 - a) / (a - 1.0) < tol:
            return total + 0.5 * j ** (1.0 - a) / (a - 1.0)


def joint_conditional(a, times, x_obs, mu_fun, eigenvalues, eigenfunctions_fun, sigma2):
    """Brute-force Gaussian conditioning of a projection on observed values.

    Assembles the (n_i + 1) joint covariance of (X_obs, <X, v>) for
    v = sum_k a_k phi_k and conditions by a dense linear solve. Returns the
    innovation part of the conditional mean (add <mu, v> for the full mean)
    and the conditional variance.
    """
    a = np.asarray(a, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    phi = eigenfunctions_fun(times)  # (k, n_i)
    gam = np.asarray(eigenvalues, dtype=np.float64)
    mu_obs = mu_fun(times)
    sigma = phi.T @ (gam[:, None] * phi) + sigma2 * np.eye(times.size)
    cross = phi.T @ (gam * a)  # cov(X_obs, <X, v>)
    marg_var = float(np.sum(gam * a * a))
    sol = np.linalg.solve(sigma, x_obs - mu_obs)
    eta_innovation = float(cross @ sol)
    psi = marg_var - float(cross @ np.linalg.solve(sigma, cross))
    return eta_innovation, psi


def local_linear_wls(x, y, h, point):
    """Direct weighted least squares local-linear estimate at one point."""
    u = (x - point) / h
    w = 0.75 * np.maximum(1 - u * u, 0.0)
    design = np.column_stack([np.ones_like(x), x - point])
    wd = design * w[:, None]
    beta = np.linalg.lstsq(wd.T @ design, wd.T @ y, rcond=None)[0]
    return float(beta[0])


def dense_rhd_counting(x_values, sample_values, grid: Grid, directions_on_grid):
    """Sign-counting depth oracle: explicit loops over directions and curves."""
    best = np.inf
    for v in directions_on_grid:
        cnt = 0
        for row in sample_values:
            proj = float(np.sum(grid.weights * (row - x_values) * v))
            if proj >= 0.0:
                cnt += 1
        best = min(best, cnt / len(sample_values))
    return best
