"""Mesh-free sampler of the solution at finitely many points.

In Fourier variables the convected kernel is ``e^{-i m tau xi1} sin(tau k)/k``
with ``k = |xi|``, so the covariance of the solution at two space-time points is

    int mu(dxi) cos(xi . dx - m xi1 dt) J(k; T, D),
    J = int_0^T sin((u + D) k) sin(u k) du / k^2,

with ``T`` the smaller time, ``D`` the time gap and ``mu`` the spectral measure
of the noise. Each replicate draws one frequency per stratum (log-spaced
annuli times angular sectors), which gives an unbiased random estimate of the
covariance matrix, then samples a Gaussian vector with that covariance. The
ensemble therefore has exactly the solution's covariance, free of any grid
smoothing, which matters for increments shorter than a grid cell.
"""

from __future__ import annotations

import numpy as np

from .covariance import CovarianceModel

__all__ = ["SpectralPlan", "pair_time_factor", "spectral_covariance", "SPECTRAL_TAG"]

SPECTRAL_TAG = 0x5F01
K_MIN = 1e-3
K_MAX = 1e6
N_ANNULI = 160
N_SECTORS = 8
# below this k (T + D) the closed form of J loses digits to cancellation
_SERIES_CUT = 1e-2


def pair_time_factor(k, T, D):
    """``J(k; T, D)``, the time integral of two kernel transforms.

    Broadcasts over all arguments. Uses a two-term series for small ``k``.
    """
    k = np.asarray(k, float)
    T = np.asarray(T, float)
    D = np.asarray(D, float)
    series = T**3 / 3.0 + D * T**2 / 2.0 - (k * k / 6.0) * (
        0.4 * T**5 + D * T**4 + D * D * T**3 + 0.5 * D**3 * T**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ks = np.where(k > 0.0, k, 1.0)
        exact = (T * np.cos(D * ks) - (np.sin((2.0 * T + D) * ks) - np.sin(D * ks)) / (2.0 * ks)) / (2.0 * ks * ks)
    return np.where(k * (T + D) < _SERIES_CUT, series, exact)


class SpectralPlan:
    """Strata of the spectral measure: ``N_ANNULI`` log annuli plus the inner disc, times sectors."""

    def __init__(self, model: CovarianceModel, k_min: float = K_MIN, k_max: float = K_MAX,
                 n_annuli: int = N_ANNULI, n_sectors: int = N_SECTORS):
        if not getattr(model, "has_spectrum", False):
            raise ValueError(f"model {model.kind} has no closed-form spectrum for the spectral sampler")
        self.model = model
        self.n_sectors = n_sectors
        self.edges = np.concatenate([[0.0], np.geomspace(k_min, k_max, n_annuli + 1)])
        self.mass_edges = np.asarray(model.spectral_mass(self.edges), float)
        self.shell_mass = np.diff(self.mass_edges)
        self.atom = float(model.spectral_atom)
        self.live = self.shell_mass > 0.0

    def draw(self, rng: np.random.Generator):
        """One frequency per stratum: arrays ``(xi1, xi2, weight)``."""
        lo = self.mass_edges[:-1][self.live]
        dm = self.shell_mass[self.live]
        S = self.n_sectors
        u = rng.random((dm.size, S))
        v = rng.random((dm.size, S))
        k = np.asarray(self.model.spectral_radius(lo[:, None] + u * dm[:, None]), float)
        theta = (np.arange(S)[None, :] + v) * (np.pi / S)
        w = np.repeat(dm[:, None] / S, S, axis=1)
        return (k * np.cos(theta)).ravel(), (k * np.sin(theta)).ravel(), w.ravel()


def spectral_covariance(points, m: float, plan: SpectralPlan, rng: np.random.Generator | None):
    """Covariance matrix of the solution at ``points`` ``(t, x1, x2)``.

    With ``rng`` the matrix is one stratified random estimate (unbiased);
    without it only the zero-frequency atom contributes.
    """
    P = np.asarray(points, float)
    t, x1, x2 = P[:, 0], P[:, 1], P[:, 2]
    T = np.minimum(t[:, None], t[None, :])
    D = np.abs(t[:, None] - t[None, :])
    dt = t[:, None] - t[None, :]
    dx1 = x1[:, None] - x1[None, :]
    dx2 = x2[:, None] - x2[None, :]
    cov = plan.atom * pair_time_factor(0.0, T, D)
    if rng is not None and plan.live.any():
        xi1, xi2, w = plan.draw(rng)
        k = np.hypot(xi1, xi2)[:, None, None]
        phase = xi1[:, None, None] * (dx1 - m * dt)[None] + xi2[:, None, None] * dx2[None]
        J = pair_time_factor(k, T[None], D[None])
        cov = cov + np.einsum("k,kpq->pq", w, np.cos(phase) * J)
    return 0.5 * (cov + cov.T)
