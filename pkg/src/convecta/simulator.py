"""Monte Carlo realisation of the mild solution on a grid.

Each replicate approximates

    X(t, x) = sum_j sum_A  Gbar(t - s_j, x; A) dF_j(A),   s_j = (j - 1/2) dt,

where ``Gbar`` is the cell average of the convected kernel and ``dF_j`` the
cell-integrated noise increment of step ``j``. Cell integrals of the kernel are
exact: in the moving frame the kernel is classical, and its integral over a
rectangle has a closed form (see :func:`_corner`).

Two samplers share this scheme:

* ``"field"`` materialises every ``dF_j`` and sums, as written above;
* ``"projected"`` (default) uses that steps are independent and the map is
  linear: the evaluation-point vector is Gaussian with covariance
  ``dt sum_j Gbar_j C Gbar_j^T`` where ``C`` is the realised cell covariance.
  This is the exact law of the scheme at a cost independent of the replicate
  count; each replicate then draws from it with its own stream.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .covariance import CovarianceModel
from .geometry import FlowConfig
from .noise import NOISE_TAG, GridSpec, NoiseOperator, build_operator, stream
from .quadrature import require_existence
from .records import config_hash
from .spectral import SPECTRAL_TAG, SpectralPlan, spectral_covariance

__all__ = [
    "Discretization",
    "EnsembleResult",
    "SnapshotResult",
    "green_cell_weight",
    "green_cell_weights",
    "domain_inside",
    "simulate_ensemble",
    "simulate_field_snapshot",
    "config_hash",
]

SAMPLE_TAG = 0x5A01
CHUNK = 64


@dataclass(frozen=True)
class Discretization:
    grid: GridSpec
    dt: float
    replicates: int
    master_seed: int = 0

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.grid.cell_size / 4.0 * (1.0 + 1e-12):
            raise ValueError(
                f"dt={self.dt} exceeds a quarter cell ({self.grid.cell_size / 4.0}); "
                "the wavefront would cross more than a quarter cell per step"
            )
        if self.replicates < 2:
            raise ValueError("at least two replicates are required")
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError("master seed must be a 64-bit unsigned integer")

    @classmethod
    def for_flow(cls, cfg: FlowConfig, n: int, replicates: int, master_seed: int = 0,
                 dt: float | None = None, times=()) -> "Discretization":
        """Grid covering the wavefront reach ``t0/(1-m)`` plus two cells.

        The default ``dt`` is the largest step of at most a quarter cell that
        divides ``t0`` and every entry of ``times``.
        """
        grid = GridSpec.covering(cfg.reach, n)
        if dt is None:
            dt = _common_step([cfg.t0, *times], grid.cell_size / 4.0)
        return cls(grid, dt, replicates, master_seed)

    def to_json(self):
        return {"grid": self.grid.to_json(), "dt": self.dt, "replicates": self.replicates,
                "master_seed": int(self.master_seed)}


def _common_step(times, cap):
    """Largest step ``<= cap`` dividing every time, via their rational gcd."""
    fr = [Fraction(float(t)).limit_denominator(1 << 30) for t in times]
    for t, q in zip(times, fr):
        if abs(float(q) - float(t)) > 1e-12 * abs(float(t)):
            raise ValueError(f"time {t} has no short rational form; pass dt explicitly")
    g = Fraction(0)
    for q in fr:
        g = Fraction(math.gcd(g.numerator * q.denominator, q.numerator * g.denominator),
                     g.denominator * q.denominator)
    return float(g) / math.ceil(float(g) / cap - 1e-9)


# -- cell weights ----------------------------------------------------------------

def _corner(a, b, tau):
    """``int_0^a int_0^b du dv / sqrt(tau^2 - u^2 - v^2)`` restricted to the disc.

    For ``a, b >= 0`` inside the disc it is
    ``a asin(b/sqrt(tau^2-a^2)) + b asin(a/sqrt(tau^2-b^2)) - tau atan(ab/(tau sqrt(tau^2-a^2-b^2)))``;
    once the corner leaves the disc it saturates to ``(a' + b' - tau) pi/2`` with
    ``a', b'`` clamped to ``tau``. Odd in each argument.
    """
    sa, sb = np.sign(a), np.sign(b)
    a = np.minimum(np.abs(a), tau)
    b = np.minimum(np.abs(b), tau)
    q = (tau - a) * (tau + a) - b * b
    inside = q > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        qa = np.sqrt(np.maximum((tau - a) * (tau + a), 0.0))
        qb = np.sqrt(np.maximum((tau - b) * (tau + b), 0.0))
        t1 = a * np.arcsin(np.clip(np.where(qa > 0, b / qa, 1.0), -1.0, 1.0))
        t2 = b * np.arcsin(np.clip(np.where(qb > 0, a / qb, 1.0), -1.0, 1.0))
        t3 = tau * np.arctan2(a * b, tau * np.sqrt(np.maximum(q, 0.0)))
    val = np.where(inside, t1 + t2 - t3, 0.5 * np.pi * (a + b - tau))
    return sa * sb * val


def green_cell_weights(t_lag: float, x1: float, x2: float, grid: GridSpec, m: float) -> np.ndarray:
    """``int_A G(t_lag, x - y, m) dy`` for every cell ``A`` of the grid.

    In the moving frame this is the classical kernel over the cell
    ``c - A`` with ``c = x - m t_lag e1``, a signed sum of four corner integrals.
    """
    if not t_lag > 0.0:
        raise ValueError(f"lag must be positive, got {t_lag}")
    e = grid.edges
    c1, c2 = x1 - m * t_lag, x2
    # u = c - y runs over [c - e_hi, c - e_lo]; corners only enter via differences
    u1 = c1 - e
    u2 = c2 - e
    I = _corner(u1[:, None], u2[None, :], t_lag)
    cell = I[:-1, :-1] - I[1:, :-1] - I[:-1, 1:] + I[1:, 1:]
    return cell / (2.0 * np.pi)


def green_cell_weight(t_lag: float, cell, cfg) -> float:
    """Kernel mass of one cell ``((y1_lo, y1_hi), (y2_lo, y2_hi))`` seen from the origin."""
    m = cfg.m if isinstance(cfg, FlowConfig) else float(cfg)
    if not t_lag > 0.0:
        raise ValueError(f"lag must be positive, got {t_lag}")
    (a1, b1), (a2, b2) = cell
    c1 = -m * t_lag
    u1 = np.array([c1 - a1, c1 - b1])
    u2 = np.array([-a2, -b2])
    I = _corner(u1[:, None], u2[None, :], t_lag)
    return float((I[0, 0] - I[1, 0] - I[0, 1] + I[1, 1]) / (2.0 * np.pi))


def domain_inside(t: float, x1: float, x2: float, m: float, grid: GridSpec) -> bool:
    """Whether every source point that can reach ``(t, x)`` lies on the grid."""
    L = grid.half_extent
    lo1, hi1 = x1 - (1.0 + m) * t, x1 + (1.0 - m) * t
    return lo1 >= -L and hi1 <= L and x2 - t >= -L and x2 + t <= L


# -- results -------------------------------------------------------------------

@dataclass
class EnsembleResult:
    points: list
    samples: np.ndarray
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.shape != (self.samples.shape[0], len(self.points)):
            raise ValueError("samples must be replicates x points")

    @property
    def replicates(self) -> int:
        return self.samples.shape[0]

    def index(self, point) -> int:
        key = tuple(float(v) for v in point)
        for i, p in enumerate(self.points):
            if all(abs(a - b) <= 1e-12 * max(1.0, abs(b)) for a, b in zip(key, p)):
                return i
        raise KeyError(f"point {point} not in ensemble")

    def column(self, point) -> np.ndarray:
        return self.samples[:, self.index(point)]

    def rows(self):
        """``(replicate, point_index, t, x1, x2, value)`` in replicate-major order."""
        for r in range(self.samples.shape[0]):
            for i, (t, x1, x2) in enumerate(self.points):
                yield r, i, t, x1, x2, float(self.samples[r, i])


@dataclass
class SnapshotResult:
    t: float
    centers: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    manifest: dict = field(default_factory=dict)


# -- simulation ----------------------------------------------------------------

def _check_points(points, cfg, disc, on_grid=True):
    pts = [tuple(float(v) for v in p) for p in points]
    if not pts:
        raise ValueError("no evaluation points")
    for t, x1, x2 in pts:
        if not (0.0 < t <= cfg.t0 * (1.0 + 1e-12)):
            raise ValueError(f"point time {t} outside (0, t0={cfg.t0}]")
        if not on_grid:
            continue
        steps = t / disc.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"point time {t} is not a multiple of dt={disc.dt}")
        if not domain_inside(t, x1, x2, cfg.m, disc.grid):
            raise ValueError(f"domain of dependence of {(t, x1, x2)} leaves the grid")
    return pts


def _steps(t, dt):
    return int(round(t / dt))


def _projected_covariance(pts, cfg, op: NoiseOperator, dt):
    P = len(pts)
    J = max(_steps(t, dt) for t, _, _ in pts)
    cov = np.zeros((P, P))
    for j in range(1, J + 1):
        s = (j - 0.5) * dt
        live = [i for i, p in enumerate(pts) if p[0] > s]
        rows = {i: green_cell_weights(pts[i][0] - s, pts[i][1], pts[i][2], op.grid, cfg.m) / op.grid.cell_area
                for i in live}
        applied = {i: op.apply_covariance(rows[i]) for i in live}
        for a in live:
            for b in live:
                if b < a:
                    continue
                v = float(np.sum(rows[a] * applied[b]))
                cov[a, b] += dt * v
                if a != b:
                    cov[b, a] += dt * v
    return 0.5 * (cov + cov.T)


def _sqrt_psd(cov):
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.maximum(w, 0.0))[None, :]


def _draw_projected(factor, seed, replicates, threads):
    P = factor.shape[0]

    def chunk(c0):
        c1 = min(c0 + CHUNK, replicates)
        out = np.empty((c1 - c0, P))
        for r in range(c0, c1):
            z = stream(seed, r, SAMPLE_TAG).standard_normal(P)
            out[r - c0] = (factor * z[None, :]).sum(axis=1)
        return c0, out

    starts = list(range(0, replicates, CHUNK))
    samples = np.empty((replicates, P))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        for c0, out in ex.map(chunk, starts):
            samples[c0:c0 + out.shape[0]] = out
    return samples


def _draw_spectral(pts, cfg, plan, seed, replicates, threads):
    P = len(pts)

    def chunk(c0):
        c1 = min(c0 + CHUNK, replicates)
        out = np.empty((c1 - c0, P))
        for r in range(c0, c1):
            rng = stream(seed, r, SPECTRAL_TAG)
            cov = spectral_covariance(pts, cfg.m, plan, rng)
            z = rng.standard_normal(P)
            out[r - c0] = (_sqrt_psd(cov) * z[None, :]).sum(axis=1)
        return c0, out

    samples = np.empty((replicates, P))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        for c0, out in ex.map(chunk, range(0, replicates, CHUNK)):
            samples[c0:c0 + out.shape[0]] = out
    return samples


def _draw_field(pts, cfg, op, disc, threads):
    P = len(pts)
    dt = disc.dt
    J = max(_steps(t, dt) for t, _, _ in pts)
    area = op.grid.cell_area
    kernels = []
    for j in range(1, J + 1):
        s = (j - 0.5) * dt
        kernels.append({i: green_cell_weights(pts[i][0] - s, pts[i][1], pts[i][2], op.grid, cfg.m) / area
                        for i, p in enumerate(pts) if p[0] > s})
    sq = math.sqrt(dt)

    def one(r):
        acc = np.zeros(P)
        for j in range(1, J + 1):
            dF = sq * op.sample(stream(disc.master_seed, r, j, NOISE_TAG))
            for i, k in kernels[j - 1].items():
                acc[i] += float(np.sum(k * dF))
        return acc

    samples = np.empty((disc.replicates, P))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        for r, acc in enumerate(ex.map(one, range(disc.replicates))):
            samples[r] = acc
    return samples


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("CONVECTA_THREADS", "1") or 1)
    return max(1, int(threads))


def simulate_ensemble(points, cfg: FlowConfig, model: CovarianceModel, disc: Discretization,
                      sampler: str = "projected", threads: int | None = None,
                      operator: NoiseOperator | None = None) -> EnsembleResult:
    """Replicates of ``X`` at every ``(t, x1, x2)`` in ``points`` under shared noise.

    Samplers: ``"projected"`` and ``"field"`` realise the grid scheme;
    ``"spectral"`` is mesh-free and uses only the replicate count and seed of
    ``disc``. Refuses covariances without a real-valued solution before any
    sampling. ``threads`` changes wall time only, never the samples.
    """
    require_existence(model)
    if sampler not in ("projected", "field", "spectral"):
        raise ValueError(f"unknown sampler {sampler!r}")
    pts = _check_points(points, cfg, disc, on_grid=sampler != "spectral")
    n_threads = _threads(threads)
    diag = {}
    op = None
    if sampler != "spectral":
        op = operator if operator is not None else build_operator(disc.grid, model, disc.dt)
    if sampler == "spectral":
        plan = SpectralPlan(model)
        samples = _draw_spectral(pts, cfg, plan, disc.master_seed, disc.replicates, n_threads)
        diag["spectral"] = {"annuli": int(plan.shell_mass.size), "sectors": plan.n_sectors,
                            "k_max": float(plan.edges[-1])}
    elif sampler == "projected":
        cov = _projected_covariance(pts, cfg, op, disc.dt)
        samples = _draw_projected(_sqrt_psd(cov), disc.master_seed, disc.replicates, n_threads)
        diag["scheme_variance"] = [float(v) for v in np.diag(cov)]
    else:
        samples = _draw_field(pts, cfg, op, disc, n_threads)
    config = {
        "points": [list(p) for p in pts],
        "flow": {"m": cfg.m, "t0": cfg.t0},
        "model": model.to_json(),
        "discretization": disc.to_json(),
        "sampler": sampler,
    }
    manifest = {
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "master_seed": int(disc.master_seed),
        "noise": {"method": op.method, "clip_mass": op.clip_mass} if op is not None else None,
        "grid_margin": "half_extent = reach / (1 - 4/n), reach = t0 / (1 - m)",
        **diag,
    }
    return EnsembleResult(pts, samples, manifest)


def simulate_field_snapshot(t: float, cfg: FlowConfig, model: CovarianceModel, disc: Discretization,
                            replicate: int = 0) -> SnapshotResult:
    """One replicate of ``X(t, .)`` at every grid centre.

    Each step's noise is convolved with the cell-weight kernel by FFT. Centres
    whose domain of dependence leaves the grid miss some noise and are marked
    invalid.
    """
    require_existence(model)
    grid = disc.grid
    n = grid.n
    centers = grid.centers
    if t == 0.0:
        return SnapshotResult(0.0, centers, np.zeros((n, n)), np.ones((n, n), bool))
    if not (0.0 < t <= cfg.t0 * (1.0 + 1e-12)):
        raise ValueError(f"t must lie in [0, t0={cfg.t0}]")
    steps = t / disc.dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ValueError(f"t={t} is not a multiple of dt={disc.dt}")
    J = int(round(steps))
    op = build_operator(grid, model, disc.dt)
    h = grid.cell_size
    # kernel on offsets (k1, k2) in [-(n-1), n-1]: cell centred at offset k h seen from the origin
    offs = h * np.arange(-(n - 1), n)
    K = 2 * n - 1
    N = 2 * n
    out = np.zeros((n, n))
    sq = math.sqrt(disc.dt)
    edges_off = np.concatenate([offs - 0.5 * h, [offs[-1] + 0.5 * h]])
    for j in range(1, J + 1):
        tau = t - (j - 0.5) * disc.dt
        c1 = -cfg.m * tau
        I = _corner((c1 + edges_off)[:, None], edges_off[None, :], tau)
        # weight of source cell at offset -d from the target: int over [d - h/2, d + h/2]
        ker = (I[1:, 1:] - I[:-1, 1:] - I[1:, :-1] + I[:-1, :-1]) / (2.0 * np.pi * grid.cell_area)
        dF = sq * op.sample(stream(disc.master_seed, replicate, j, NOISE_TAG))
        # X(c_i) = sum_a ker(c_i - a) dF(a): linear convolution through zero padding
        fk = np.zeros((N, N))
        fk[:K, :K] = ker
        fd = np.zeros((N, N))
        fd[:n, :n] = dF
        conv = np.fft.irfft2(np.fft.rfft2(fk) * np.fft.rfft2(fd), s=(N, N))
        out += conv[n - 1:2 * n - 1, n - 1:2 * n - 1]
    valid = np.array([[domain_inside(t, a, b, cfg.m, grid) for b in centers] for a in centers])
    config = {"t": t, "flow": {"m": cfg.m, "t0": cfg.t0}, "model": model.to_json(),
              "discretization": disc.to_json(), "replicate": replicate}
    manifest = {"version": __version__, "config": config, "config_hash": config_hash(config),
                "master_seed": int(disc.master_seed)}
    return SnapshotResult(t, centers, out, valid, manifest)
