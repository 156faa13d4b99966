"""Change-point test and self-normalised confidence intervals.

Both procedures are built on the sequential empirical process:

* :func:`changepoint_test` takes the sup of the tied-down process
  ``B_n(s, u) - (floor(sn)/n) B_n(1, u)`` with empirical-CDF centering and
  calibrates it against simulated tied-down limit fields, whose spatial
  covariance is estimated from the sample.
* :func:`selfnorm_ci` studentises the running integral of the empirical CDF
  with a normaliser built from its own partial estimates, so no long-run
  variance has to be estimated.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .empirical import EvaluationGrid, cusum_field, eval_sequential, sup_norm
from .generators import ParameterError, SequenceSpec, StationarySample, sample_from_array
from .limit import apply_functional, estimate_gamma, simulate_limit_array
from .rng import stream

SELFNORM_REPS = 100_000
SELFNORM_GRID = 10_000
SELFNORM_SEED = 20140101


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    critical_value: float
    p_value: float
    level: float
    reject: bool
    calibration: dict = field(default_factory=dict)


@dataclass
class SelfNormCI:
    theta_hat: float
    interval: tuple
    level: float
    normalizer: float
    critical_value: float
    degenerate: bool = False

    def covers(self, theta: float) -> bool:
        return self.interval[0] <= theta <= self.interval[1]


def changepoint_grid(n: int, dim: int, m_s: int = 128, m_u: int = 16) -> EvaluationGrid:
    """``s = k/n`` at (about) ``m_s`` evenly spaced ``k``, ``u = j/m_u`` per coordinate."""
    k = np.unique(np.floor(np.arange(m_s + 1) * n / m_s).astype(int))
    return EvaluationGrid(k / n, [np.arange(m_u + 1) / m_u] * dim)


def changepoint_test(sample: StationarySample, level: float = 0.05, reps: int = 500, seed: int = 0,
                     bandwidth: int | None = None, m_s: int = 128, m_u: int = 16) -> TestResult:
    """CUSUM-type test for a change in the distribution of a stationary sequence.

    The statistic is the grid sup of the tied-down empirical-centred process.
    Its null law is approximated by ``reps`` draws of ``B(s, u) - s B(1, u)``
    for the Gaussian limit ``B`` on the same grid, with the kernel estimated
    by :func:`estimate_gamma`. The p-value is the fraction of simulated values
    at least as large as the statistic.
    """
    if not 0 < level < 1:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    if sample.n < 32:
        raise ParameterError("changepoint_test needs n >= 32")
    grid = changepoint_grid(sample.n, sample.dim, m_s, m_u)
    stat = sup_norm(cusum_field(eval_sequential(sample, "empirical", grid)))
    kernel = estimate_gamma(sample, grid.u_points, bandwidth)
    calib = {"reps": reps, "seed": seed, "bandwidth": kernel.bandwidth, "m_s": m_s, "m_u": m_u}
    if np.all(sample.data == sample.data[0]):
        return TestResult(0.0, 0.0, 1.0, level, False, calib)
    s = grid.s_points
    sims = simulate_limit_array(kernel, s, reps, seed)
    tied = sims - s[None, :, None] * sims[:, -1:, :]
    null = apply_functional(tied, "sup")
    crit = float(np.quantile(null, 1.0 - level))
    p_value = float(np.mean(null >= stat))
    return TestResult(stat, crit, p_value, level, bool(stat > crit), calib)


def half_distorted_sample(n: int, seed: int, rep=()) -> StationarySample:
    """Uniform first half, ``V**(1/3)`` second half, then ranks ``/(n+1)``."""
    rep = (rep,) if isinstance(rep, int) else tuple(rep)
    rng = stream(seed, *rep)
    v = rng.random(n)
    v[n // 2:] = v[n // 2:] ** (1.0 / 3.0)
    ranks = np.argsort(np.argsort(v)) + 1
    return sample_from_array(ranks / (n + 1.0), SequenceSpec(), seed)


def integral_functional(sample: StationarySample) -> np.ndarray:
    """Running ``theta_k = (1/k) sum_{i<=k} prod_j (1 - U_ij)``.

    ``theta_k`` is the integral over the unit cube of the empirical CDF of the
    first ``k`` rows.
    """
    terms = np.prod(1.0 - sample.data, axis=1)
    return np.cumsum(terms) / np.arange(1, sample.n + 1)


def selfnorm_normalizer(theta: np.ndarray) -> float:
    """``n**-2 * sum_k k**2 (theta_k - theta_n)**2``."""
    n = theta.size
    k = np.arange(1, n + 1)
    return float(np.sum((k * (theta - theta[-1])) ** 2) / n**2)


def simulate_selfnorm_statistic(reps: int, grid: int, seed: int, chunk: int = 500) -> np.ndarray:
    """Draws of ``W(1)**2 / int_0^1 (W(s) - s W(1))**2 ds`` on ``grid`` points."""
    t = np.arange(1, grid + 1) / grid
    out = []
    for c, start in enumerate(range(0, reps, chunk)):
        rows = min(chunk, reps - start)
        w = np.cumsum(stream(seed, c).standard_normal((rows, grid)), axis=1) / math.sqrt(grid)
        bridge = np.mean((w - t * w[:, -1:]) ** 2, axis=1)
        out.append(w[:, -1] ** 2 / bridge)
    return np.concatenate(out)


def _cache_key(level: float, reps: int, grid: int, seed: int) -> str:
    return f"level={level!r};reps={reps};grid={grid};seed={seed}"


def _shipped_cache() -> dict:
    try:
        text = resources.files("seqmix").joinpath("data/selfnorm_quantiles.json").read_text()
    except FileNotFoundError:
        return {}
    return json.loads(text)


@functools.lru_cache(maxsize=None)
def selfnorm_critical_value(level: float = 0.05, reps: int = SELFNORM_REPS, grid: int = SELFNORM_GRID,
                            seed: int = SELFNORM_SEED) -> float:
    """``(1 - level)`` quantile of the self-normalised limit statistic.

    Values for the default simulation settings ship with the package; other
    settings are simulated on first use and memoised per process.
    """
    key = _cache_key(level, reps, grid, seed)
    cached = _shipped_cache().get(key)
    if cached is not None:
        return float(cached)
    return float(np.quantile(simulate_selfnorm_statistic(reps, grid, seed), 1.0 - level))


def selfnorm_ci(sample: StationarySample, level: float = 0.05, reps: int = SELFNORM_REPS,
                seed: int = SELFNORM_SEED, grid: int = SELFNORM_GRID) -> SelfNormCI:
    """Interval ``theta_n +- sqrt(c * V_n / n)`` for the integral functional.

    ``level`` is the miscoverage; ``c`` is the matching critical value of the
    limit statistic (:func:`selfnorm_critical_value`).
    """
    if not 0 < level < 1:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    if sample.n < 32:
        raise ParameterError("selfnorm_ci needs n >= 32")
    theta = integral_functional(sample)
    terms = np.prod(1.0 - sample.data, axis=1)
    # a constant series has V_n = 0 exactly; the running mean would leave rounding residue
    v_n = 0.0 if np.all(terms == terms[0]) else selfnorm_normalizer(theta)
    crit = selfnorm_critical_value(level, reps, grid, seed)
    half = math.sqrt(crit * v_n / sample.n)
    t = float(theta[-1])
    return SelfNormCI(t, (t - half, t + half), level, v_n, crit, degenerate=v_n == 0)
