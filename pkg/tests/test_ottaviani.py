import itertools
import math
import warnings
from fractions import Fraction as F

import numpy as np
import pytest

from seqmix.empirical import eval_nonsequential, sup_norm
from seqmix.generators import MixingProfile, ParameterError, SequenceSpec, generate
from seqmix.ottaviani import (FiniteModel, PartialSumFamily, blocking_plan, mc_path_statistics, partial_sums,
                              path_statistics, stationary_law, sup_partial_sums, verify_inequality_exact,
                              verify_inequality_exact_grid, verify_inequality_grid, verify_inequality_mc)

GRID = [np.arange(9) / 8]


def enumerate_sides(model, n, ell, eps):
    """Plain-Python enumeration of both sides, one path at a time."""
    a = model.alphabet
    probs, trans = model.probs, model.transition
    t_size = len(model.values[0])

    def norm(vec):
        return max(abs(v) for v in vec)

    p_max = rhs_sup = rhs_blk = F(0)
    tail = [F(0)] * (n + 1)
    for path in itertools.product(range(a), repeat=n):
        w = probs[path[0]]
        for i in range(1, n):
            w *= trans[path[i - 1]][path[i]] if trans is not None else probs[path[i]]
        s = [[F(0)] * t_size]
        for x in path:
            s.append([s[-1][t] + model.values[x][t] for t in range(t_size)])
        diff = lambda k, j: [s[k][t] - s[j][t] for t in range(t_size)]  # noqa: E731
        if max(norm(s[k]) for k in range(1, n + 1)) > 3 * eps:
            p_max += w
        if norm(s[n]) > eps:
            rhs_sup += w
        for k in range(1, n + 1):
            if norm(diff(n, k)) > eps:
                tail[k] += w
        if any(norm(diff(k, j)) > eps for j in range(1, n + 1) for k in range(j + 1, min(n, j + 2 * ell) + 1)):
            rhs_blk += w
    lhs = p_max * (1 - max(tail[1:]))
    return lhs, rhs_sup + rhs_blk + (n // ell) * model.alpha(ell)


def test_blocking_plan_examples():
    plan = blocking_plan(10_000, 0.8)
    assert plan.kappa == pytest.approx(0.1)
    assert plan.ell == math.floor(10_000**0.4) == 39
    with pytest.warns(UserWarning):
        blocking_plan(100, 1.5)
    with pytest.raises(ParameterError):
        blocking_plan(3, 0.5)
    with pytest.raises(ParameterError):
        blocking_plan(100, 0)


def test_blocking_decay_witness_decreases():
    prof = MixingProfile(SequenceSpec("ar1", phi=0.5))
    w = [blocking_plan(n, 0.8).decay_witness(prof) for n in (100, 1000, 10_000)]
    assert w[0] > w[1] > w[2]


def test_sup_partial_sums_single_term():
    spec = SequenceSpec()
    sample = generate(spec, 20, 3)
    fam = PartialSumFamily("singletons", [[0.5]])
    for k in range(1, 21):
        expected = abs(float(sample.data[k - 1, 0] <= 0.5) - 0.5) / math.sqrt(20)
        assert sup_partial_sums(fam, sample, k - 1, k) == pytest.approx(expected, abs=1e-15)


def test_sup_partial_sums_whole_sample_is_sup_norm():
    spec = SequenceSpec("ar1", dim=2, phi=0.4)
    sample = generate(spec, 40, 5)
    pts = [np.linspace(0, 1, 7)] * 2
    fam = PartialSumFamily("singletons", pts)
    assert sup_partial_sums(fam, sample, 0, 40) == pytest.approx(
        sup_norm(eval_nonsequential(sample, "true", pts)), abs=1e-13)


def test_sup_partial_sums_pairs_and_errors():
    sample = generate(SequenceSpec(), 15, 1)
    fam = PartialSumFamily("pairs", GRID, delta=1.0)
    a, b = fam.pairs()
    assert len(a) == 9 * 8 // 2
    assert sup_partial_sums(fam, sample, 2, 9) >= 0
    with pytest.raises(IndexError):
        sup_partial_sums(fam, sample, 5, 5)
    with pytest.raises(IndexError):
        sup_partial_sums(fam, sample, 0, 16)


def test_pairs_respect_delta():
    fam = PartialSumFamily("pairs", [np.linspace(0, 1, 5)] * 2, delta=0.25)
    a, b = fam.pairs()
    mesh = np.stack(np.meshgrid(*fam.u_points, indexing="ij"), -1).reshape(-1, 2)
    assert np.all(np.max(np.abs(mesh[a] - mesh[b]), axis=1) <= 0.25 + 1e-12)


@pytest.mark.parametrize("kind", ["singletons", "pairs"])
def test_block_maximum_bound(kind):
    spec = SequenceSpec("mdependent", m=2)
    fam = PartialSumFamily(kind, GRID, delta=0.25)
    for n, ell in [(64, 1), (64, 5), (256, 9)]:
        stats = mc_path_statistics(spec, fam, n, ell, 100, 4)
        assert np.all(stats["block"] <= fam.block_bound(ell, n) + 1e-12)


def test_path_statistics_direct():
    y = np.array([[[1.0], [-2.0], [0.5]]])
    st = path_statistics(partial_sums(y), 1)
    assert st["max_norm"][0] == 1.0
    assert st["end_norm"][0] == 0.5
    np.testing.assert_allclose(st["tail"][0], [1.5, 0.5, 0.0])  # |S_3 - S_k|, S = (0, 1, -1, -0.5)
    assert st["block"][0] == 2.0  # j=1, k=2: |-2|; j=1,k=3 is 1.5; j=2,k=3 is 0.5


def test_exact_two_step_signs():
    model = FiniteModel([[1], [-1]], [F(1, 2), F(1, 2)])
    rep = verify_inequality_exact(model, 2, 1, F(2, 5))
    # paths (+,+) and (-,-) reach |S_2| = 2 > 1.2; |S_2 - S_1| = 1 > 0.4 always
    assert rep.max_exceed == F(1, 2)
    assert rep.denominator == 0
    assert rep.lhs == 0
    assert rep.rhs_sup == F(1, 2) and rep.rhs_block == 1 and rep.rhs == F(3, 2)
    assert rep.passed and rep.exact


def test_exact_degenerate_steps():
    model = FiniteModel([[0, 0], [0, 0]], transition=[[F(1, 2), F(1, 2)], [F(1, 4), F(3, 4)]])
    for ell in (1, 2, 3):
        rep = verify_inequality_exact(model, 6, ell, F(1, 10))
        assert rep.lhs == 0
        assert rep.rhs == (6 // ell) * model.alpha(ell) >= 0


@pytest.mark.parametrize("model,n,ell", [
    (FiniteModel([[1], [-1]], [F(1, 2), F(1, 2)]), 5, 1),
    (FiniteModel([[1, 0], [0, F(1, 2)], [-1, -1]], [F(1, 4), F(1, 2), F(1, 4)]), 4, 2),
    (FiniteModel([[F(3, 2)], [-1]], transition=[[F(2, 3), F(1, 3)], [F(1, 2), F(1, 2)]]), 6, 2),
    (FiniteModel([[1, -1], [-1, 1], [0, 1]], transition=[[F(1, 2), F(1, 4), F(1, 4)], [0, F(1, 2), F(1, 2)],
                                                        [F(1, 3), F(1, 3), F(1, 3)]]), 4, 1),
])
def test_exact_matches_plain_enumeration(model, n, ell):
    for eps in (F(1, 10), F(1, 2), F(1), F(7, 4)):
        rep = verify_inequality_exact(model, n, ell, eps)
        lhs, rhs = enumerate_sides(model, n, ell, eps)
        assert rep.lhs == lhs and rep.rhs == rhs
        assert rep.passed == (lhs <= rhs)


def test_exact_small_epsilon():
    model = FiniteModel([[1], [0], [-1]], [F(1, 3), F(1, 3), F(1, 3)])
    rep = verify_inequality_exact(model, 5, 2, F(1, 10**9))
    assert 0 <= rep.lhs <= 1
    assert rep.rhs >= rep.rhs_sup
    assert rep.passed


def test_two_state_alpha_closed_form():
    # alpha_ell = pi_0 pi_1 |lambda|^ell with lambda = 1 - p01 - p10
    p01, p10 = F(1, 4), F(1, 3)
    model = FiniteModel([[1], [-1]], transition=[[1 - p01, p01], [p10, 1 - p10]])
    pi0 = p10 / (p01 + p10)
    lam = 1 - p01 - p10
    for ell in range(1, 6):
        assert model.alpha(ell) == pi0 * (1 - pi0) * abs(lam) ** ell
    assert model.alpha(0) == F(1, 2)


def test_stationary_law_exact():
    p = [[F(1, 2), F(1, 2), 0], [F(1, 4), F(1, 2), F(1, 4)], [0, F(1, 3), F(2, 3)]]
    pi = stationary_law(p)
    assert sum(pi) == 1
    assert [sum(pi[i] * p[i][j] for i in range(3)) for j in range(3)] == pi


def test_finite_model_validation():
    with pytest.raises(ParameterError):
        FiniteModel([[1], [2]], [F(1, 2), F(1, 3)])
    with pytest.raises(ParameterError):
        FiniteModel([[1], [2]], transition=[[1, 0]])
    with pytest.raises(ParameterError):
        verify_inequality_exact(FiniteModel([[1], [0], [-1]], [F(1, 3)] * 3), 13, 1, 1)
    with pytest.raises(ParameterError):
        verify_inequality_exact(FiniteModel([[1], [-1]], [F(1, 2)] * 2), 4, 4, 1)


def test_mc_huge_epsilon_lhs_zero():
    fam = PartialSumFamily("singletons", GRID)
    rep = verify_inequality_mc(SequenceSpec(), fam, 32, 1, 10.0, reps=200, seed=1)
    assert rep.lhs == 0 and rep.passed
    assert rep.rhs == 0


def test_mc_iid_grid_passes_and_fields_bounded():
    fam = PartialSumFamily("singletons", GRID)
    reps = verify_inequality_grid(SequenceSpec(), fam, 64, 1, np.linspace(0.05, 1.0, 8), reps=400, seed=2)
    for r in reps:
        assert r.passed
        for p in (r.lhs, r.max_exceed, r.denominator, r.rhs_sup, r.rhs_block):
            assert 0 <= p <= 1
        assert r.rhs_mixing == 0


def test_mc_mixing_term_and_independent_inner():
    spec = SequenceSpec("ar1", phi=0.7)
    fam = PartialSumFamily("pairs", GRID, delta=0.25)
    rep = verify_inequality_mc(spec, fam, 64, 5, 0.3, reps=200, seed=3, independent_inner=True)
    assert rep.rhs_mixing == (64 // 5) * 0.7**5
    assert rep.passed


def test_mc_argument_checks():
    fam = PartialSumFamily("singletons", GRID)
    with pytest.raises(ParameterError):
        verify_inequality_mc(SequenceSpec(), fam, 10, 10, 0.5, reps=200)
    with pytest.raises(ParameterError):
        verify_inequality_mc(SequenceSpec(), fam, 10, 1, 0.5, reps=50)


def test_exact_grid_shares_enumeration():
    model = FiniteModel([[1], [-1]], [F(1, 2), F(1, 2)])
    grid = verify_inequality_exact_grid(model, 6, 2, [F(1, 4), F(1, 2)])
    single = [verify_inequality_exact(model, 6, 2, e) for e in (F(1, 4), F(1, 2))]
    assert [g.lhs for g in grid] == [s.lhs for s in single]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert all(g.passed for g in grid)


@pytest.mark.parametrize("kind", ["singletons", "pairs"])
def test_mc_ar1_long_blocks_pass(kind):
    fam = PartialSumFamily(kind, GRID, delta=0.25)
    spec = SequenceSpec("ar1", phi=0.7)
    reps = verify_inequality_grid(spec, fam, 256, 16, np.arange(1, 11) / 10, reps=2000, seed=5)
    assert all(r.passed for r in reps)
    assert all(r.rhs_mixing == (256 // 16) * 0.7**16 for r in reps)
