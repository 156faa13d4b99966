"""Stationary sequences with standard-uniform marginals.

Three serial-dependence families are available, each combined with either
independent coordinates or an equicorrelated Gaussian copula across the
``d`` coordinates of one observation:

* ``iid``: independent rows.
* ``mdependent``: coordinatewise maximum over a window of ``m + 1`` iid
  innovation rows, mapped back to uniform through ``x -> x**(m + 1)``.
* ``ar1``: a stationary Gaussian AR(1) latent series with coefficient
  ``phi``, mapped to uniforms by the standard normal CDF.

The families are a modelling choice; each one carries a documented upper
bound on its strong mixing coefficients (see :func:`mixing_bound`).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, signal, special

from .rng import RNG_ALGORITHM, stream

FAMILIES = ("iid", "mdependent", "ar1")

#: absolute tolerance requested from the Gaussian-copula quadrature
CDF_TOL = 1e-10


class ParameterError(ValueError):
    """Invalid parameters for a generator, grid or estimator."""


class DomainError(ValueError):
    """Argument outside the unit cube."""


@dataclass(frozen=True)
class SequenceSpec:
    """Generator configuration.

    ``rho=None`` means independent coordinates; a float in ``[0, 1)`` selects
    the equicorrelated Gaussian copula across coordinates.
    """

    family: str = "iid"
    dim: int = 1
    m: int = 1
    phi: float = 0.0
    rho: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer, got {self.dim}")
        if self.family == "mdependent" and (int(self.m) != self.m or self.m < 1):
            raise ParameterError(f"m must be a positive integer, got {self.m}")
        if self.family == "ar1" and not abs(self.phi) < 1:
            raise ParameterError(f"|phi| must be < 1, got {self.phi}")
        if self.rho is not None and not 0 <= self.rho < 1:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")

    @property
    def independent_coordinates(self) -> bool:
        return self.rho is None

    def to_dict(self) -> dict:
        out = {"family": self.family, "dim": self.dim}
        if self.family == "mdependent":
            out["m"] = self.m
        if self.family == "ar1":
            out["phi"] = self.phi
        out["rho"] = self.rho
        return out


@dataclass
class StationarySample:
    data: np.ndarray
    spec: SequenceSpec
    seed: int
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def prefix(self, k: int) -> "StationarySample":
        return StationarySample(self.data[:k], self.spec, self.seed, self.rng_algorithm)


def sample_from_array(data, spec: SequenceSpec | None = None, seed: int = 0) -> StationarySample:
    """Wrap user data (rows are observations) as a sample."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ParameterError("data must be a nonempty n x d array")
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("observations must lie in [0, 1]")
    if spec is None:
        spec = SequenceSpec(dim=arr.shape[1])
    return StationarySample(arr, spec, seed)


def _latent_normals(spec: SequenceSpec, rows: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((rows, spec.dim))
    if spec.rho:
        common = rng.standard_normal((rows, 1))
        z = math.sqrt(spec.rho) * common + math.sqrt(1.0 - spec.rho) * z
    return z


def generate(spec: SequenceSpec, n: int, seed: int, rep=()) -> StationarySample:
    """Draw ``n`` consecutive rows of the stationary sequence.

    The output is a deterministic function of ``(spec, n, seed, rep)``;
    ``rep`` (an int or a tuple of ints) selects an independent replication
    stream.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    rep = (rep,) if isinstance(rep, (int, np.integer)) else tuple(rep)
    rng = stream(seed, *rep)
    if spec.family == "iid":
        data = special.ndtr(_latent_normals(spec, n, rng))
    elif spec.family == "mdependent":
        m = spec.m
        innov = special.ndtr(_latent_normals(spec, n + m, rng))
        window = np.lib.stride_tricks.sliding_window_view(innov, m + 1, axis=0)
        data = window.max(axis=-1) ** (m + 1)
    else:
        e = _latent_normals(spec, n, rng)
        e[1:] *= math.sqrt(1.0 - spec.phi**2)
        z = signal.lfilter([1.0], [1.0, -spec.phi], e, axis=0)
        data = special.ndtr(z)
    return StationarySample(np.clip(data, 0.0, 1.0), spec, seed)


def _check_unit(u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise DomainError(f"point {u} is outside the unit cube")
    return u


@functools.lru_cache(maxsize=65536)
def _equicorr_copula(u: tuple, rho: float) -> float:
    u = np.asarray(u)
    if np.any(u == 0):
        return 0.0
    u = u[u < 1]
    if u.size == 0:
        return 1.0
    if u.size == 1:
        return float(u[0])
    if rho == 0:
        return float(np.prod(u))
    z = special.ndtri(u)
    a, b = math.sqrt(rho), math.sqrt(1.0 - rho)

    def integrand(w):
        return math.exp(-0.5 * w * w) / math.sqrt(2 * math.pi) * np.prod(special.ndtr((z - a * w) / b))

    # integrand is negligible beyond |w| = 12
    val, _ = integrate.quad(integrand, -12.0, 12.0, epsabs=CDF_TOL / 10, epsrel=1e-12, limit=400)
    return float(min(max(val, 0.0), 1.0))


def true_cdf(spec: SequenceSpec, u) -> float:
    """Joint CDF of one observation at ``u``.

    Independent coordinates give the product of the coordinates for every
    family. With the Gaussian copula the value is obtained by adaptive
    quadrature over the common factor (absolute tolerance ``CDF_TOL``); for the
    m-dependent family the copula is evaluated at ``u**(1/(m+1))`` and raised
    to the power ``m + 1``.
    """
    u = _check_unit(u)
    if u.size != spec.dim:
        raise DomainError(f"expected a point of dimension {spec.dim}, got {u.size}")
    if spec.independent_coordinates:
        return float(np.prod(u))
    if spec.family == "mdependent":
        p = spec.m + 1
        return _equicorr_copula(tuple(u ** (1.0 / p)), float(spec.rho)) ** p
    return _equicorr_copula(tuple(u), float(spec.rho))


def true_cdf_lattice(spec: SequenceSpec, u_points) -> np.ndarray:
    """``true_cdf`` on the tensor lattice of ``u_points``, flattened C-order."""
    axes = [np.asarray(p, dtype=float) for p in u_points]
    for p in axes:
        _check_unit(p)
    if spec.independent_coordinates:
        out = axes[0]
        for p in axes[1:]:
            out = np.multiply.outer(out, p)
        return np.asarray(out, dtype=float).ravel()
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return np.array([true_cdf(spec, row) for row in mesh])


def mixing_bound(spec: SequenceSpec, ell: int) -> float:
    """Documented upper bound on the strong mixing coefficient at lag ``ell``.

    * lag 0: 1/2 by convention, for every family;
    * ``iid``: 0 for ``ell >= 1``;
    * ``mdependent``: 1/4 (the universal bound on alpha) up to lag ``m``, 0 after;
    * ``ar1``: ``|phi|**ell``. The Gaussian AR(1) has maximal correlation
      ``|phi|**ell`` and alpha never exceeds it; the constant 1 is
      conservative.
    """
    if int(ell) != ell or ell < 0:
        raise ParameterError(f"lag must be a nonnegative integer, got {ell}")
    if ell == 0:
        return 0.5
    if spec.family == "iid":
        return 0.0
    if spec.family == "mdependent":
        return 0.25 if ell <= spec.m else 0.0
    return min(abs(spec.phi) ** ell, 0.5)


@dataclass(frozen=True)
class MixingProfile:
    spec: SequenceSpec
    bound: Callable[[int], float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bound", functools.partial(mixing_bound, self.spec))

    def __call__(self, ell: int) -> float:
        return self.bound(ell)
