"""Long-run covariance kernel and the Gaussian limit of the sequential process.

The limit is a centred Gaussian field on ``[0,1] x [0,1]^d`` with covariance
``(s ^ t) * Gamma(u, v)``, where ``Gamma`` sums the lagged covariances of the
indicators ``1{U_i <= u}``. On a grid it is simulated exactly by summing
independent spatial increments ``sqrt(s_k - s_{k-1}) * xi_k``,
``xi_k ~ N(0, Gamma)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .empirical import EvaluationGrid, eval_sequential, regular_grid
from .generators import ParameterError, SequenceSpec, StationarySample, generate
from .rng import stream

log = logging.getLogger(__name__)

KERNELS = ("bartlett", "truncated")
FUNCTIONALS = ("sup", "cvm")
JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
#: replications drawn from one counter-based stream in :func:`simulate_limit_array`
CHUNK = 256


class NumericalError(RuntimeError):
    """Factorisation failed even with the largest jitter."""


@dataclass
class CovKernelEstimate:
    u_points: list
    gamma: np.ndarray
    bandwidth: int = 0
    kernel: str = "analytic"

    @property
    def grid_shape(self) -> tuple:
        return tuple(len(p) for p in self.u_points)


@dataclass
class LimitField:
    values: np.ndarray
    grid: EvaluationGrid
    seed: int
    rep: int = 0


def psd_clip(matrix: np.ndarray) -> np.ndarray:
    """Symmetrise and set negative eigenvalues to zero."""
    sym = 0.5 * (matrix + matrix.T)
    w, v = linalg.eigh(sym)
    out = (v * np.clip(w, 0.0, None)) @ v.T
    return 0.5 * (out + out.T)


def indicator_matrix(data: np.ndarray, u_points) -> np.ndarray:
    """``1{U_i <= u}`` for every row and lattice point, shape ``(n, lattice)``."""
    out = np.ones((data.shape[0], 1))
    for j, p in enumerate(u_points):
        ind = (data[:, j][:, None] <= np.asarray(p)[None, :]).astype(float)
        out = (out[:, :, None] * ind[:, None, :]).reshape(data.shape[0], -1)
    return out


def lag_weights(bandwidth: int, kernel: str = "bartlett") -> np.ndarray:
    """Weights for lags ``0..bandwidth``; Bartlett is ``1 - i/(L+1)``."""
    if kernel not in KERNELS:
        raise ParameterError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    lags = np.arange(bandwidth + 1)
    if kernel == "truncated":
        return np.ones_like(lags, dtype=float)
    return 1.0 - lags / (bandwidth + 1.0)


def default_bandwidth(n: int) -> int:
    return int(math.floor(n ** (1.0 / 3.0) + 1e-9))


def estimate_gamma(sample: StationarySample, u_points, bandwidth: int | None = None,
                   kernel: str = "bartlett") -> CovKernelEstimate:
    """Lag-window estimate of ``Gamma`` on the lattice of ``u_points``.

    The indicators are centred at the full-sample empirical CDF and the
    lag-``i`` cross-covariances are normalised by ``n``. The sum is
    symmetrised and projected onto the PSD cone by eigenvalue clipping.
    """
    n = sample.n
    if bandwidth is None:
        bandwidth = default_bandwidth(n)
    if int(bandwidth) != bandwidth or not 0 <= bandwidth < n:
        raise ParameterError(f"bandwidth must be an integer in [0, n), got {bandwidth}")
    w = lag_weights(int(bandwidth), kernel)
    x = indicator_matrix(sample.data, u_points)
    x -= x.mean(axis=0)
    gamma = w[0] * (x.T @ x) / n
    for lag in range(1, int(bandwidth) + 1):
        c = x[:-lag].T @ x[lag:] / n
        gamma += w[lag] * (c + c.T)
    u_points = [np.asarray(p, dtype=float) for p in u_points]
    return CovKernelEstimate(u_points, psd_clip(gamma), int(bandwidth), kernel)


def gamma_analytic_iid(u_points, spec: SequenceSpec | None = None) -> CovKernelEstimate:
    """``Gamma(u, v) = C(u ^ v) - C(u) C(v)`` with ``C`` the product CDF."""
    if spec is not None and (spec.family != "iid" or not spec.independent_coordinates):
        raise ParameterError("the analytic kernel needs an iid spec with independent coordinates")
    u_points = [np.asarray(p, dtype=float) for p in u_points]
    if spec is not None and len(u_points) != spec.dim:
        raise ParameterError("u_points dimension does not match spec")
    gamma = np.ones((1, 1))
    cdf = np.ones(1)
    for p in u_points:
        gamma = np.kron(gamma, np.minimum.outer(p, p))
        cdf = np.kron(cdf, p)
    gamma = gamma - np.outer(cdf, cdf)
    return CovKernelEstimate(u_points, gamma, 0, "analytic")


def factorize(gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky factor on the positive-variance lattice points.

    Returns ``(active, R)`` with ``gamma[active][:, active] ~= R @ R.T``.
    Points with zero variance are left out; the limit vanishes there.
    """
    diag = np.diag(gamma)
    active = np.flatnonzero(diag > 1e-14)
    if active.size == 0:
        return active, np.zeros((0, 0))
    sub = gamma[np.ix_(active, active)]
    for jitter in JITTERS:
        try:
            r = linalg.cholesky(sub + jitter * np.eye(active.size), lower=True)
        except linalg.LinAlgError:
            continue
        if jitter:
            log.debug("cholesky needed jitter %.0e", jitter)
        return active, r
    raise NumericalError(f"covariance not factorisable with jitter up to {JITTERS[-1]:.0e}")


def simulate_limit_array(kernel: CovKernelEstimate, s_points, reps: int, seed: int,
                         factor=None) -> np.ndarray:
    """Limit draws as an array of shape ``(reps, |s|, lattice)``.

    Replications are generated in blocks of ``CHUNK`` from
    ``stream(seed, block)``, so the result does not depend on how the work is
    split.
    """
    s = np.asarray(s_points, dtype=float)
    if np.any(np.diff(s) < 0) or s[0] < 0:
        raise ParameterError("s_points must be sorted in [0, 1]")
    active, r = factor if factor is not None else factorize(kernel.gamma)
    scale = np.sqrt(np.diff(s, prepend=0.0))
    size = kernel.gamma.shape[0]
    out = np.zeros((reps, s.size, size))
    if active.size == 0:
        return out
    for start in range(0, reps, CHUNK):
        stop = min(start + CHUNK, reps)
        rng = stream(seed, start // CHUNK)
        xi = rng.standard_normal((stop - start, s.size, active.size)) @ r.T
        out[start:stop][:, :, active] = np.cumsum(xi * scale[None, :, None], axis=1)
    return out


def simulate_limit(kernel: CovKernelEstimate, s_points, reps: int, seed: int) -> list[LimitField]:
    values = simulate_limit_array(kernel, s_points, reps, seed)
    grid = EvaluationGrid(s_points, kernel.u_points)
    return [LimitField(v, grid, seed, i) for i, v in enumerate(values)]


def apply_functional(values: np.ndarray, functional: str) -> np.ndarray:
    """Functional over the trailing grid axes; leading axis indexes replications."""
    flat = values.reshape(values.shape[0], -1)
    if functional == "sup":
        return np.max(np.abs(flat), axis=1)
    if functional == "cvm":
        return np.mean(flat**2, axis=1)
    raise ParameterError(f"functional must be one of {FUNCTIONALS}, got {functional!r}")


@dataclass
class DiagnosticReport:
    functional: str
    n_list: list
    reps: int
    ks: list
    ks_pvalue: list
    process_mean: list
    limit_mean: float
    decreasing: bool
    grid: dict = field(default_factory=dict)

    def rows(self):
        for n, d, p, m in zip(self.n_list, self.ks, self.ks_pvalue, self.process_mean):
            yield {"n": n, "ks": d, "ks_pvalue": p, "process_mean": m, "limit_mean": self.limit_mean}


def weak_convergence_diagnostic(spec: SequenceSpec, functional: str = "sup", n_list=(128, 2048),
                                reps: int = 2000, seed: int = 0, m_s: int = 64,
                                m_u: int | None = None) -> DiagnosticReport:
    """Compare a functional of ``B_n`` and of the limit on a common grid.

    Both fields live on ``s = j/m_s``, ``u = j/m_u``. The limit kernel is the
    analytic one for iid data with independent coordinates and otherwise a
    Bartlett estimate from a pilot sample of length ``20 * max(n_list)``.
    The report holds the two-sample KS distance for each ``n`` and flags
    whether the last distance is within 0.02 of the first.
    """
    if reps < 100:
        raise ParameterError("reps must be at least 100")
    if m_u is None:
        m_u = 64 if spec.dim == 1 else 16 if spec.dim == 2 else 6
    grid = regular_grid(m_s, m_u, spec.dim)
    if spec.family == "iid" and spec.independent_coordinates:
        kernel = gamma_analytic_iid(grid.u_points, spec)
    else:
        pilot = generate(spec, 20 * max(n_list), seed, rep=(1,))
        kernel = estimate_gamma(pilot, grid.u_points)
    limit_vals = apply_functional(simulate_limit_array(kernel, grid.s_points, reps, seed), functional)
    ks, pv, means = [], [], []
    for n in n_list:
        vals = np.empty(reps)
        for r in range(reps):
            sample = generate(spec, n, seed, rep=(2, n, r))
            vals[r] = apply_functional(eval_sequential(sample, "true", grid).values[None], functional)[0]
        res = stats.ks_2samp(vals, limit_vals)
        ks.append(float(res.statistic))
        pv.append(float(res.pvalue))
        means.append(float(vals.mean()))
    return DiagnosticReport(functional, list(n_list), reps, ks, pv, means, float(limit_vals.mean()),
                            bool(ks[-1] <= ks[0] + 0.02), {"m_s": m_s, "m_u": m_u})
