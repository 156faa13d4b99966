"""Sequential empirical process on finite grids.

For a sample ``U_1..U_n`` in ``[0,1]^d`` the sequential process is

    B_n(s, u) = n**-0.5 * sum_{i <= floor(s n)} (1{U_i <= u} - c(u))

with ``c`` either the true joint CDF or the full-sample empirical CDF. Fields
are evaluated on a tensor lattice of ``u`` points for a list of ``s`` points.

The evaluation is a dominance count: each observation is binned at the first
lattice cell that dominates it and at the first ``s`` slab that contains it,
and cumulative sums along every axis turn the histogram into exact integer
counts ``#{i <= floor(s n): U_i <= u}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .generators import ParameterError, StationarySample, true_cdf_lattice

CENTERINGS = ("true", "empirical")


def floor_sn(s_points, n: int) -> np.ndarray:
    """``floor(s * n)`` robust to ``s = k/n`` being stored inexactly."""
    s = np.asarray(s_points, dtype=float)
    return np.floor(np.round(s * n, 9)).astype(np.int64)


@dataclass
class EvaluationGrid:
    s_points: np.ndarray
    u_points: list

    def __post_init__(self):
        self.s_points = np.asarray(self.s_points, dtype=float).ravel()
        self.u_points = [np.asarray(p, dtype=float).ravel() for p in self.u_points]
        if self.s_points.size == 0 or not self.u_points:
            raise ParameterError("empty grid")
        for name, p in [("s_points", self.s_points)] + [(f"u_points[{j}]", p) for j, p in enumerate(self.u_points)]:
            if p.size == 0:
                raise ParameterError(f"{name} is empty")
            if np.any(np.diff(p) <= 0):
                raise ParameterError(f"{name} must be strictly increasing")
            if p[0] < 0 or p[-1] > 1:
                raise ParameterError(f"{name} must lie in [0, 1]")
        for j, p in enumerate(self.u_points):
            if p[0] != 0 or p[-1] != 1:
                raise ParameterError(f"u_points[{j}] must include 0 and 1")

    @property
    def dim(self) -> int:
        return len(self.u_points)

    @property
    def u_shape(self) -> tuple:
        return tuple(p.size for p in self.u_points)

    @property
    def lattice_size(self) -> int:
        return int(np.prod(self.u_shape))

    def lattice(self) -> np.ndarray:
        """All lattice points as a ``(lattice_size, d)`` array, C-order."""
        mesh = np.meshgrid(*self.u_points, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)


def regular_grid(m_s: int, m_u: int, dim: int = 1) -> EvaluationGrid:
    """``s = j/m_s`` and ``u = j/m_u`` per coordinate, endpoints included."""
    return EvaluationGrid(np.arange(m_s + 1) / m_s, [np.arange(m_u + 1) / m_u] * dim)


def default_grid(sample: StationarySample) -> EvaluationGrid:
    """``s = k/n`` for all k and, per coordinate, the sample values plus 0 and 1.

    On this lattice the supremum over ``u`` of an indicator-based field at
    fixed ``s`` is attained at a grid point.
    """
    n = sample.n
    u_points = [np.union1d(sample.data[:, j], [0.0, 1.0]) for j in range(sample.dim)]
    return EvaluationGrid(np.arange(n + 1) / n, u_points)


@dataclass
class ProcessField:
    """Values of a process on ``grid``; rows are ``s`` points, columns lattice points."""

    values: np.ndarray
    grid: EvaluationGrid
    n: int
    centering: str
    center: np.ndarray | None = None
    sample: StationarySample | None = None

    @property
    def cube(self) -> np.ndarray:
        return self.values.reshape((self.grid.s_points.size,) + self.grid.u_shape)

    @property
    def k_points(self) -> np.ndarray:
        return floor_sn(self.grid.s_points, self.n)

    def row_for_k(self, k: int) -> np.ndarray:
        hits = np.flatnonzero(self.k_points == k)
        if hits.size == 0:
            raise ParameterError(f"no s point with floor(s n) = {k} in the grid")
        return self.values[hits[-1]]


def _lattice_cells(sample: StationarySample, grid: EvaluationGrid) -> np.ndarray:
    """Flat index of the smallest lattice point dominating each observation."""
    if sample.dim != grid.dim:
        raise ParameterError(f"sample has dimension {sample.dim}, grid has {grid.dim}")
    idx = [np.searchsorted(p, sample.data[:, j], side="left") for j, p in enumerate(grid.u_points)]
    return np.ravel_multi_index(idx, grid.u_shape)


def _prefix_sums(hist: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    for ax in axes:
        hist = np.cumsum(hist, axis=ax)
    return hist


def dominance_counts(sample: StationarySample, grid: EvaluationGrid) -> np.ndarray:
    """Integer counts ``#{i <= floor(s n): U_i <= u}`` of shape ``(|s|, lattice)``."""
    n = sample.n
    cells = _lattice_cells(sample, grid)
    k_pts = floor_sn(grid.s_points, n)
    # first s slab whose prefix contains observation i (1-based)
    slab = np.searchsorted(k_pts, np.arange(1, n + 1), side="left")
    keep = slab < k_pts.size
    n_s, size = k_pts.size, grid.lattice_size
    flat = np.bincount(slab[keep] * size + cells[keep], minlength=n_s * size)
    hist = flat.reshape((n_s,) + grid.u_shape)
    counts = _prefix_sums(hist, range(grid.dim + 1))
    return counts.reshape(n_s, size)


def _full_counts(sample: StationarySample, grid: EvaluationGrid) -> np.ndarray:
    cells = _lattice_cells(sample, grid)
    hist = np.bincount(cells, minlength=grid.lattice_size).reshape(grid.u_shape)
    return _prefix_sums(hist, range(grid.dim)).ravel()


def centering_values(sample: StationarySample, centering: str, grid: EvaluationGrid) -> np.ndarray:
    if centering == "true":
        return true_cdf_lattice(sample.spec, grid.u_points)
    if centering == "empirical":
        return _full_counts(sample, grid) / sample.n
    raise ParameterError(f"centering must be one of {CENTERINGS}, got {centering!r}")


def eval_sequential(sample: StationarySample, centering: str = "true",
                    grid: EvaluationGrid | None = None) -> ProcessField:
    """Evaluate ``B_n`` on ``grid`` (default: :func:`default_grid`)."""
    if grid is None:
        grid = default_grid(sample)
    center = centering_values(sample, centering, grid)
    counts = dominance_counts(sample, grid)
    k = floor_sn(grid.s_points, sample.n)
    values = (counts - k[:, None] * center[None, :]) / math.sqrt(sample.n)
    return ProcessField(values, grid, sample.n, centering, center, sample)


def eval_nonsequential(sample: StationarySample, centering: str = "true", u_points=None) -> np.ndarray:
    """``D_n(u) = B_n(1, u)`` on the lattice of ``u_points``."""
    if u_points is None:
        u_points = default_grid(sample).u_points
    grid = EvaluationGrid([1.0], u_points)
    return eval_sequential(sample, centering, grid).values[0]


def rescale_identity_check(field: ProcessField, k: int) -> np.ndarray:
    """``B_n(k/n, .) - sqrt(k/n) * D_k(.)`` with ``D_k`` built from the first k rows.

    Vanishes up to rounding for true-CDF centering.
    """
    if field.centering != "true":
        raise ParameterError("the rescaling identity needs true-CDF centering")
    if not 1 <= k <= field.n:
        raise ParameterError(f"k must lie in [1, {field.n}], got {k}")
    if field.sample is None:
        raise ParameterError("field carries no sample reference")
    d_k = eval_nonsequential(field.sample.prefix(k), "true", field.grid.u_points)
    return field.row_for_k(k) - math.sqrt(k / field.n) * d_k


def _range_extreme(a: np.ndarray, lo: np.ndarray, hi: np.ndarray, axis: int, op) -> np.ndarray:
    """``op`` over ``a[lo[i]:hi[i]]`` along ``axis`` for each ``i`` via a sparse table."""
    a = np.moveaxis(a, axis, 0)
    length = hi - lo
    table = [a]
    span = 1
    while 2 * span <= length.max():
        prev = table[-1]
        table.append(op(prev[:-span], prev[span:]))
        span *= 2
    level = np.floor(np.log2(length)).astype(int)
    out = np.empty_like(a)
    for lv in np.unique(level):
        sel = np.flatnonzero(level == lv)
        t = table[lv]
        out[sel] = op(t[lo[sel]], t[hi[sel] - (1 << lv)])
    return np.moveaxis(out, 0, axis)


def grid_modulus(values: np.ndarray, axes: Sequence[np.ndarray], delta: float) -> float:
    """Largest ``|f(x) - f(y)|`` over grid points with ``max_j |x_j - y_j| <= delta``.

    ``values`` has one axis per entry of ``axes``. On a finite grid this is a
    lower bound for the modulus of continuity over the continuum.
    """
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    values = np.asarray(values, dtype=float)
    hi_val, lo_val = values, values
    tol = 1e-12
    for ax, p in enumerate(axes):
        p = np.asarray(p, dtype=float)
        lo = np.searchsorted(p, p - delta - tol, side="left")
        hi = np.searchsorted(p, p + delta + tol, side="right")
        hi_val = _range_extreme(hi_val, lo, hi, ax, np.maximum)
        lo_val = _range_extreme(lo_val, lo, hi, ax, np.minimum)
    return float(max(np.max(hi_val - values), np.max(values - lo_val)))


def modulus_of_continuity(field: ProcessField, delta: float) -> float:
    """Max-norm modulus of continuity of ``field`` jointly over ``(s, u)``."""
    axes = [field.grid.s_points] + list(field.grid.u_points)
    return grid_modulus(field.cube, axes, delta)


def cusum_field(field: ProcessField) -> ProcessField:
    """Tied-down field ``B(s, u) - (floor(s n)/n) B(1, u)``."""
    last = field.row_for_k(field.n)
    k = field.k_points
    values = field.values - (k / field.n)[:, None] * last[None, :]
    return ProcessField(values, field.grid, field.n, field.centering, field.center, field.sample)


def sup_norm(field) -> float:
    values = field.values if isinstance(field, ProcessField) else np.asarray(field)
    return float(np.max(np.abs(values))) if values.size else 0.0
