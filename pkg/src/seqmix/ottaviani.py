"""Ottaviani-type maximal inequality under strong mixing.

For partial sums ``S_k = Y_1 + ... + Y_k`` of elements of ``l^inf(T)`` and
``1 <= ell < n`` the inequality reads

    P(max_k ||S_k|| > 3 eps) * (1 - max_k P(||S_n - S_k|| > eps))
        <= P(||S_n|| > eps)
         + P(max_{1 <= j < k <= n, k - j <= 2 ell} ||S_k - S_j|| > eps)
         + floor(n / ell) * alpha_ell.

Two checks are provided. :func:`verify_inequality_mc` estimates both sides by
Monte Carlo for the empirical-process increments of a generated sequence.
:func:`verify_inequality_exact` enumerates every path of a finite-alphabet
iid or Markov sequence and compares the two sides in exact rational
arithmetic.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .generators import MixingProfile, ParameterError, SequenceSpec, StationarySample, generate, true_cdf_lattice
from .limit import indicator_matrix

#: Monte Carlo pass margin, in combined standard errors
MC_SIGMAS = 3.0
#: largest number of enumerated paths
MAX_PATHS = 600_000


@dataclass
class PartialSumFamily:
    """Index set ``T`` and increments ``Y_i(t) = n**-0.5 * G_i(t)``.

    ``kind="singletons"`` uses ``G_i(u) = 1{U_i <= u} - C(u)`` over the lattice
    of ``u_points``; ``kind="pairs"`` uses ``G_i(u) - G_i(v)`` over lattice pairs
    with ``max_j |u_j - v_j| <= delta``.
    """

    kind: str
    u_points: list
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("singletons", "pairs"):
            raise ParameterError(f"kind must be 'singletons' or 'pairs', got {self.kind!r}")
        self.u_points = [np.asarray(p, dtype=float) for p in self.u_points]

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        mesh = np.stack(np.meshgrid(*self.u_points, indexing="ij"), axis=-1).reshape(-1, len(self.u_points))
        a, b = np.triu_indices(mesh.shape[0], k=1)
        keep = np.max(np.abs(mesh[a] - mesh[b]), axis=1) <= self.delta + 1e-12
        return a[keep], b[keep]

    def increments(self, sample: StationarySample) -> np.ndarray:
        """``Y_i(t)`` for all ``i`` and ``t``, shape ``(n, |T|)``."""
        g = indicator_matrix(sample.data, self.u_points) - true_cdf_lattice(sample.spec, self.u_points)[None, :]
        if self.kind == "pairs":
            a, b = self.pairs()
            g = g[:, a] - g[:, b]
        return g / math.sqrt(sample.n)

    def block_bound(self, ell: int, n: int) -> float:
        """Deterministic bound on the ``2 ell`` block maximum: ``4 ell/sqrt(n)``, doubled for pairs."""
        return (8.0 if self.kind == "pairs" else 4.0) * ell / math.sqrt(n)


def partial_sums(y: np.ndarray) -> np.ndarray:
    """``S_0 = 0, S_1, ..., S_n`` along the step axis (second to last)."""
    s = np.cumsum(y, axis=-2)
    zero = np.zeros(s.shape[:-2] + (1, s.shape[-1]), dtype=s.dtype)
    return np.concatenate([zero, s], axis=-2)


def sup_partial_sums(family: PartialSumFamily, sample: StationarySample, j: int, k: int) -> float:
    """``sup_t |S_k(t) - S_j(t)|``."""
    n = sample.n
    if not 0 <= j < k <= n:
        raise IndexError(f"need 0 <= j < k <= n, got j={j}, k={k}, n={n}")
    y = family.increments(sample)
    return float(np.max(np.abs(y[j:k].sum(axis=0)))) if y.shape[1] else 0.0


def path_statistics(s: np.ndarray, ell: int) -> dict:
    """Norm statistics of partial-sum paths ``s`` of shape ``(paths, n+1, |T|)``.

    ``norm`` is the sup over ``T``. Returns per-path ``max_norm``
    (``max_k ||S_k||``), ``end_norm`` (``||S_n||``), ``tail`` (``||S_n - S_k||``
    for ``k = 1..n``, shape ``(paths, n)``) and ``block`` (the maximum of
    ``||S_k - S_j||`` over ``1 <= j < k <= n`` with ``k - j <= 2 ell``).
    """
    n = s.shape[1] - 1
    norms = np.max(np.abs(s), axis=2)
    tail = np.max(np.abs(s[:, -1:, :] - s[:, 1:, :]), axis=2)
    block = np.zeros(s.shape[0], dtype=s.dtype)
    for h in range(1, min(2 * ell, n - 1) + 1):
        diff = np.max(np.abs(s[:, 1 + h:, :] - s[:, 1:n + 1 - h, :]), axis=(1, 2))
        block = np.maximum(block, diff)
    return {"max_norm": norms[:, 1:].max(axis=1), "end_norm": norms[:, -1], "tail": tail, "block": block}


@dataclass
class InequalityReport:
    n: int
    ell: int
    epsilon: float
    reps: int
    lhs: float
    lhs_se: float
    max_exceed: float
    max_exceed_se: float
    denominator: float
    denominator_se: float
    rhs_sup: float
    rhs_sup_se: float
    rhs_block: float
    rhs_block_se: float
    rhs_mixing: float
    rhs: float
    rhs_se: float
    margin: float
    passed: bool
    exact: bool = False

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, Fraction) else v) for k, v in asdict(self).items()}


def _se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def report_from_statistics(stats: dict, n: int, ell: int, epsilon: float, mixing_term: float,
                           inner: dict | None = None) -> InequalityReport:
    """Monte Carlo report for one ``epsilon``.

    ``inner`` optionally supplies statistics from an independent replication
    set for the ``max_k P(||S_n - S_k|| > eps)`` factor.
    """
    reps = stats["max_norm"].size
    inner = stats if inner is None else inner
    r_in = inner["tail"].shape[0]
    p_max = float(np.mean(stats["max_norm"] > 3 * epsilon))
    tail_p = np.mean(inner["tail"] > epsilon, axis=0)
    k_star = int(np.argmax(tail_p))
    q = float(tail_p[k_star])
    denom = 1.0 - q
    lhs = p_max * denom
    se_p, se_q = _se(p_max, reps), _se(q, r_in)
    lhs_se = math.sqrt((denom * se_p) ** 2 + (p_max * se_q) ** 2)
    e_sup = stats["end_norm"] > epsilon
    e_blk = stats["block"] > epsilon
    both = e_sup.astype(float) + e_blk.astype(float)
    rhs_sup, rhs_blk = float(e_sup.mean()), float(e_blk.mean())
    rhs_se = float(both.std(ddof=0) / math.sqrt(reps))
    rhs = rhs_sup + rhs_blk + mixing_term
    margin = MC_SIGMAS * math.sqrt(lhs_se**2 + rhs_se**2)
    return InequalityReport(
        n=n, ell=ell, epsilon=float(epsilon), reps=reps,
        lhs=lhs, lhs_se=lhs_se, max_exceed=p_max, max_exceed_se=se_p,
        denominator=denom, denominator_se=se_q,
        rhs_sup=rhs_sup, rhs_sup_se=_se(rhs_sup, reps),
        rhs_block=rhs_blk, rhs_block_se=_se(rhs_blk, reps),
        rhs_mixing=mixing_term, rhs=rhs, rhs_se=rhs_se, margin=margin,
        passed=bool(lhs <= rhs + margin),
    )


def mc_path_statistics(spec: SequenceSpec, family: PartialSumFamily, n: int, ell: int,
                       reps: int, seed: int, stream_tag: int = 0, chunk: int = 250) -> dict:
    """Path statistics over ``reps`` generated samples, in replication order."""
    parts = []
    for start in range(0, reps, chunk):
        ys = [family.increments(generate(spec, n, seed, rep=(stream_tag, r)))
              for r in range(start, min(start + chunk, reps))]
        parts.append(path_statistics(partial_sums(np.stack(ys)), ell))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def verify_inequality_grid(spec: SequenceSpec, family: PartialSumFamily, n: int, ell: int,
                           epsilons: Sequence[float], reps: int = 2000, seed: int = 0,
                           independent_inner: bool = False,
                           profile: MixingProfile | None = None) -> list[InequalityReport]:
    """Monte Carlo check on a grid of ``epsilon`` values sharing one replication set."""
    if not 1 <= ell < n:
        raise ParameterError(f"need 1 <= ell < n, got ell={ell}, n={n}")
    if reps < 100:
        raise ParameterError("reps must be at least 100")
    profile = profile or MixingProfile(spec)
    mixing_term = (n // ell) * profile(ell)
    stats = mc_path_statistics(spec, family, n, ell, reps, seed)
    inner = mc_path_statistics(spec, family, n, ell, reps, seed, stream_tag=1) if independent_inner else None
    return [report_from_statistics(stats, n, ell, eps, mixing_term, inner) for eps in epsilons]


def verify_inequality_mc(spec: SequenceSpec, family: PartialSumFamily, n: int, ell: int, epsilon: float,
                         reps: int = 2000, seed: int = 0, independent_inner: bool = False) -> InequalityReport:
    return verify_inequality_grid(spec, family, n, ell, [epsilon], reps, seed, independent_inner)[0]


@dataclass
class BlockingPlan:
    eta: float
    kappa: float
    ell: int
    n: int

    def decay_witness(self, profile) -> float:
        """``floor(n / ell) * alpha_ell``."""
        return (self.n // self.ell) * profile(self.ell)


def blocking_plan(n: int, eta: float) -> BlockingPlan:
    """``kappa = eta/8`` and block length ``floor(n**(1/2 - kappa))``."""
    if n < 4:
        raise ParameterError("blocking plan needs n >= 4")
    if eta <= 0:
        raise ParameterError("eta must be positive")
    if eta >= 1:
        warnings.warn(f"eta={eta} is outside (0, 1); proceeding with kappa = eta/8", stacklevel=2)
    kappa = eta / 8.0
    ell = int(math.floor(n ** (0.5 - kappa) + 1e-9))
    if not 1 <= ell < n:
        raise ParameterError(f"block length {ell} is not in [1, n)")
    return BlockingPlan(eta, kappa, ell, n)


# --------------------------------------------------------------------------
# exact enumeration
# --------------------------------------------------------------------------


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass
class FiniteModel:
    """Finite-alphabet step model.

    ``values[a][t]`` is ``Y_i(t)`` when ``X_i = a``. Steps are iid with law
    ``probs``, or a stationary Markov chain with transition matrix
    ``transition`` when that is given (``probs`` is then ignored and replaced
    by the stationary law).
    """

    values: list
    probs: list | None = None
    transition: list | None = None

    def __post_init__(self):
        self.values = [[_frac(v) for v in row] for row in self.values]
        a = len(self.values)
        if a < 1 or len({len(r) for r in self.values}) != 1:
            raise ParameterError("values must be a nonempty rectangular table")
        if self.transition is not None:
            self.transition = [[_frac(p) for p in row] for row in self.transition]
            if len(self.transition) != a or any(len(r) != a for r in self.transition):
                raise ParameterError("transition matrix shape does not match the alphabet")
            if any(p < 0 for r in self.transition for p in r) or any(sum(r) != 1 for r in self.transition):
                raise ParameterError("transition rows must be probability vectors")
            self.probs = stationary_law(self.transition)
        else:
            if self.probs is None or len(self.probs) != a:
                raise ParameterError("probs must have one entry per state")
            self.probs = [_frac(p) for p in self.probs]
            if any(p < 0 for p in self.probs) or sum(self.probs) != 1:
                raise ParameterError("probs must be a probability vector")

    @property
    def markov(self) -> bool:
        return self.transition is not None

    @property
    def alphabet(self) -> int:
        return len(self.values)

    def alpha(self, ell: int) -> Fraction:
        """Exact strong mixing coefficient of the step sequence at lag ``ell``.

        For a stationary Markov chain the coefficient between past and future
        equals the one between ``X_0`` and ``X_ell``, which is a finite
        maximum over pairs of state subsets.
        """
        if ell == 0:
            return Fraction(1, 2)
        if not self.markov:
            return Fraction(0)
        a = self.alphabet
        power = _mat_power(self.transition, ell)
        best = Fraction(0)
        subsets = [s for r in range(1, a) for s in itertools.combinations(range(a), r)]
        for sa in subsets:
            pa = sum(self.probs[i] for i in sa)
            for sb in subsets:
                pb = sum(self.probs[j] for j in sb)
                joint = sum(self.probs[i] * power[i][j] for i in sa for j in sb)
                best = max(best, abs(joint - pa * pb))
        return best


def _mat_power(m: list, k: int) -> list:
    a = len(m)
    out = [[Fraction(int(i == j)) for j in range(a)] for i in range(a)]
    for _ in range(k):
        out = [[sum(out[i][l] * m[l][j] for l in range(a)) for j in range(a)] for i in range(a)]
    return out


def stationary_law(transition: list) -> list:
    """Solve ``pi P = pi``, ``sum(pi) = 1`` exactly; the chain must have a unique solution."""
    a = len(transition)
    rows = [[transition[j][i] - (1 if i == j else 0) for j in range(a)] + [Fraction(0)] for i in range(a)]
    rows[-1] = [Fraction(1)] * a + [Fraction(1)]
    for col in range(a):
        piv = next((r for r in range(col, a) if rows[r][col] != 0), None)
        if piv is None:
            raise ParameterError("transition matrix has no unique stationary law")
        rows[col], rows[piv] = rows[piv], rows[col]
        rows[col] = [v / rows[col][col] for v in rows[col]]
        for r in range(a):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [v - f * w for v, w in zip(rows[r], rows[col])]
    return [rows[i][a] for i in range(a)]


def _common_denominator(fracs) -> int:
    d = 1
    for f in fracs:
        d = math.lcm(d, f.denominator)
    return d


def _path_weights(model: FiniteModel, paths: np.ndarray) -> tuple[np.ndarray, int]:
    """Integer path weights and their common denominator."""
    probs = model.probs
    mats = list(probs) + ([p for row in model.transition for p in row] if model.markov else [])
    d = _common_denominator(mats)
    n = paths.shape[1]
    dtype = np.int64 if d**n < 2**62 else object
    init = np.array([int(p * d) for p in probs], dtype=dtype)
    w = init[paths[:, 0]]
    if model.markov:
        step = np.array([[int(p * d) for p in row] for row in model.transition], dtype=dtype)
        for i in range(1, n):
            w = w * step[paths[:, i - 1], paths[:, i]]
    else:
        for i in range(1, n):
            w = w * init[paths[:, i]]
    return w, d**n


def verify_inequality_exact(model: FiniteModel, n: int, ell: int, epsilon) -> InequalityReport:
    """Both sides of the inequality by enumerating all ``alphabet**n`` paths.

    All probabilities are exact fractions; ``passed`` means ``lhs <= rhs``
    with no tolerance.
    """
    return verify_inequality_exact_grid(model, n, ell, [epsilon])[0]


def verify_inequality_exact_grid(model: FiniteModel, n: int, ell: int, epsilons) -> list[InequalityReport]:
    if not 1 <= ell < n:
        raise ParameterError(f"need 1 <= ell < n, got ell={ell}, n={n}")
    a = model.alphabet
    if a**n > MAX_PATHS:
        raise ParameterError(f"{a}**{n} paths exceed the enumeration limit {MAX_PATHS}")
    paths = np.indices((a,) * n).reshape(n, -1).T
    weights, total = _path_weights(model, paths)

    scale = _common_denominator(v for row in model.values for v in row)
    table = np.array([[int(v * scale) for v in row] for row in model.values], dtype=np.int64)
    stats = path_statistics(partial_sums(table[paths]), ell)

    def prob(mask) -> Fraction:
        return Fraction(int(weights[mask].sum()), total)

    mixing = (n // ell) * model.alpha(ell)
    reports = []
    for eps in epsilons:
        eps = _frac(eps)
        # integer norms exceed c exactly when they exceed floor(c)
        thr1 = math.floor(eps * scale)
        thr3 = math.floor(3 * eps * scale)
        p_max = prob(stats["max_norm"] > thr3)
        q = max(prob(stats["tail"][:, k] > thr1) for k in range(n))
        lhs = p_max * (1 - q)
        rhs_sup = prob(stats["end_norm"] > thr1)
        rhs_blk = prob(stats["block"] > thr1)
        rhs = rhs_sup + rhs_blk + mixing
        reports.append(InequalityReport(
            n=n, ell=ell, epsilon=float(eps), reps=len(paths),
            lhs=lhs, lhs_se=0.0, max_exceed=p_max, max_exceed_se=0.0,
            denominator=1 - q, denominator_se=0.0,
            rhs_sup=rhs_sup, rhs_sup_se=0.0, rhs_block=rhs_blk, rhs_block_se=0.0,
            rhs_mixing=mixing, rhs=rhs, rhs_se=0.0, margin=0.0,
            passed=bool(lhs <= rhs), exact=True,
        ))
    return reports
