import numpy as np
import pytest
from scipy import linalg

from seqmix.generators import ParameterError, SequenceSpec, generate
from seqmix.limit import (NumericalError, apply_functional, estimate_gamma, factorize, gamma_analytic_iid,
                          lag_weights, psd_clip, simulate_limit, simulate_limit_array,
                          weak_convergence_diagnostic)

U = np.linspace(0, 1, 11)


def test_analytic_kernel_values():
    k = gamma_analytic_iid([[0, 0.25, 0.5, 1]])
    assert k.gamma[2, 2] == 0.25
    assert k.gamma[1, 2] == pytest.approx(0.25 - 0.125)
    assert k.gamma[3, 3] == 0
    k2 = gamma_analytic_iid([[0, 0.5, 1], [0, 0.5, 1]], SequenceSpec(dim=2))
    assert k2.gamma[4, 4] == pytest.approx(0.1875)  # (0.5,0.5): 0.25 - 0.0625
    assert k2.gamma[8, 8] == 0


def test_analytic_kernel_psd_and_symmetric():
    k = gamma_analytic_iid([np.linspace(0, 1, 6)] * 2)
    np.testing.assert_array_equal(k.gamma, k.gamma.T)
    assert linalg.eigvalsh(k.gamma).min() > -1e-12


def test_analytic_kernel_rejects_dependent_spec():
    with pytest.raises(ParameterError):
        gamma_analytic_iid([U], SequenceSpec("ar1", phi=0.2))
    with pytest.raises(ParameterError):
        gamma_analytic_iid([U, U], SequenceSpec(dim=2, rho=0.3))


def test_bartlett_weights():
    np.testing.assert_allclose(lag_weights(3), [1, 0.75, 0.5, 0.25])
    np.testing.assert_allclose(lag_weights(0), [1])
    np.testing.assert_allclose(lag_weights(2, "truncated"), [1, 1, 1])


def test_estimate_lag0_iid_near_analytic():
    sample = generate(SequenceSpec(), 10_000, 3)
    est = estimate_gamma(sample, [U], 0)
    ana = gamma_analytic_iid([U])
    assert np.max(np.abs(est.gamma - ana.gamma)) < 0.02
    # standard error of the estimate at u = v = 0.5 from independent replications
    reps = [estimate_gamma(generate(SequenceSpec(), 10_000, 3, rep=r), [[0, 0.5, 1]], 0).gamma[1, 1]
            for r in range(200)]
    se = np.std(reps, ddof=1)
    assert abs(est.gamma[5, 5] - 0.25) < 3 * se


def test_estimate_properties():
    sample = generate(SequenceSpec("ar1", phi=0.6, dim=2, rho=0.3), 500, 4)
    est = estimate_gamma(sample, [U[::2], U[::2]])
    assert est.bandwidth == 7
    np.testing.assert_array_equal(est.gamma, est.gamma.T)
    assert linalg.eigvalsh(est.gamma).min() >= -1e-10
    assert np.all(np.diag(est.gamma) >= -1e-15)
    g = est.gamma.reshape(6, 6, 6, 6)
    np.testing.assert_allclose(g[0], 0, atol=1e-12)
    np.testing.assert_allclose(g[:, 0], 0, atol=1e-12)
    np.testing.assert_allclose(g[-1, -1], 0, atol=1e-12)


def test_estimate_long_run_variance_ar1():
    # Gaussian AR(1) at the median: Cov(1{Z0<=0}, 1{Zk<=0}) = arcsin(phi^k)/(2 pi)
    phi = 0.5
    target = 0.25 + 2 * sum(np.arcsin(phi**k) / (2 * np.pi) for k in range(1, 60))
    sample = generate(SequenceSpec("ar1", phi=phi), 200_000, 9)
    est = estimate_gamma(sample, [[0, 0.5, 1]], 40)
    assert est.gamma[1, 1] == pytest.approx(target, abs=0.03)


def test_estimate_bandwidth_errors():
    sample = generate(SequenceSpec(), 10, 1)
    with pytest.raises(ParameterError):
        estimate_gamma(sample, [U], 10)
    with pytest.raises(ParameterError):
        estimate_gamma(sample, [U], 2, "parzen")


def test_psd_clip():
    m = np.array([[1.0, 2.0], [2.0, 1.0]])
    out = psd_clip(m)
    assert linalg.eigvalsh(out).min() >= -1e-12
    np.testing.assert_allclose(linalg.eigvalsh(out), [0, 3], atol=1e-12)


def test_factorize_drops_zero_variance_and_fails_cleanly():
    active, r = factorize(gamma_analytic_iid([U]).gamma)
    np.testing.assert_array_equal(active, np.arange(1, 10))
    with pytest.raises(NumericalError):
        factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_simulated_covariance():
    kernel = gamma_analytic_iid([[0, 0.3, 0.5, 0.7, 1]])
    s = np.array([0, 0.25, 0.5, 1.0])
    sims = simulate_limit_array(kernel, s, 5000, 11)
    np.testing.assert_array_equal(sims[:, 0], 0)
    np.testing.assert_array_equal(sims[:, :, 0], 0)
    np.testing.assert_array_equal(sims[:, :, -1], 0)
    x = sims[:, 3, 2]
    var_se = np.sqrt(2 / (5000 - 1)) * 0.25
    assert abs(x.var(ddof=1) - 0.25) < 3 * var_se
    a, b = sims[:, 2, 1], sims[:, 3, 3]
    prod = (a - a.mean()) * (b - b.mean())
    assert abs(prod.mean() - 0.045) < 4 * prod.std(ddof=1) / np.sqrt(5000)
    # independent increments
    inc1, inc2 = sims[:, 1, 2] - sims[:, 0, 2], sims[:, 3, 2] - sims[:, 2, 2]
    assert abs(np.corrcoef(inc1, inc2)[0, 1]) < 3 / np.sqrt(5000)


def test_simulate_limit_fields_and_determinism():
    kernel = gamma_analytic_iid([U])
    fields = simulate_limit(kernel, [0, 0.5, 1], 300, 5)
    assert len(fields) == 300
    again = simulate_limit_array(kernel, [0, 0.5, 1], 300, 5)
    np.testing.assert_array_equal(fields[17].values, again[17])
    # a prefix of the replications is unchanged when more are requested
    np.testing.assert_array_equal(simulate_limit_array(kernel, [0, 0.5, 1], 100, 5), again[:100])


def test_functionals_nonnegative():
    x = np.random.default_rng(0).normal(size=(20, 3, 4))
    assert np.all(apply_functional(x, "sup") >= 0)
    assert np.all(apply_functional(x, "cvm") >= 0)
    with pytest.raises(ParameterError):
        apply_functional(x, "max")


def test_diagnostic_small():
    rep = weak_convergence_diagnostic(SequenceSpec(), "cvm", (64, 256), 200, 3, m_s=16, m_u=16)
    assert len(rep.ks) == 2
    assert all(0 <= d <= 1 for d in rep.ks)
    with pytest.raises(ParameterError):
        weak_convergence_diagnostic(SequenceSpec(), "sup", (64,), 50, 3)


def test_diagnostic_dependent_uses_estimate():
    rep = weak_convergence_diagnostic(SequenceSpec("ar1", phi=0.4), "sup", (256,), 200, 1, m_s=16, m_u=8)
    assert rep.ks[0] < 0.2
