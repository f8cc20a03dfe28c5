import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelucb.diagnostics import (SpectrumReport, effective_dimension, gram_spectrum, information_gain,
                                   linucb_oracle, report_from_contexts, spectrum_report,
                                   theorem1_bound)
from kernelucb.kernels import KernelSpec, gram_matrix

# direct high-precision evaluation of the bound at (5, 1000, 10, 1, 0.05, 1)
BOUND_SNAPSHOT = 292283.63844496955


def brute_force_d(eigs, gamma, T):
    eigs = sorted((max(0.0, e) for e in eigs), reverse=True)
    for j in range(1, len(eigs) + 1):
        if j * gamma * math.log(T) >= sum(eigs[j:]):
            return j
    return len(eigs)


def test_zero_spectrum():
    d, tails = effective_dimension(np.zeros(10), 1.0, 100)
    assert d == 1 and tails.tolist() == [0.0] * 11


def test_subspace_data():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 2)) @ rng.standard_normal((2, 6))
    d, tails = effective_dimension(gram_spectrum(gram_matrix(KernelSpec.linear(), X)), 1.0, 200)
    assert d <= 2
    assert abs(tails[2]) < 1e-8 * tails[0]


def test_polynomial_decay():
    lam = 10.0 * np.arange(1, 1001, dtype=float) ** -2
    d, _ = effective_dimension(lam, 1.0, math.e)
    assert d == brute_force_d(lam, 1.0, math.e) == 3
    assert d <= 1 + math.sqrt(10)


def test_effective_dimension_errors():
    with pytest.raises(ValueError):
        effective_dimension([1.0], 1.0, 1)
    with pytest.raises(ValueError):
        effective_dimension([1.0], 0.0, 10)
    with pytest.raises(ValueError):
        effective_dimension([1.0, 2.0], 1.0, 10)


eigs_strategy = st.lists(st.floats(0, 100), min_size=1, max_size=40).map(lambda v: sorted(v, reverse=True))


@settings(max_examples=100, deadline=None)
@given(eigs_strategy, st.floats(0.01, 10), st.floats(2, 1e5))
def test_effective_dimension_matches_brute_force(eigs, gamma, T):
    d, tails = effective_dimension(eigs, gamma, T)
    assert d == brute_force_d(eigs, gamma, T)
    assert 1 <= d <= len(eigs)
    assert tails[-1] == 0.0
    assert np.all(np.diff(tails) <= 0)
    np.testing.assert_allclose(tails[:-1] - tails[1:], eigs, atol=1e-9 * max(1.0, tails[0]))


@settings(max_examples=100, deadline=None)
@given(eigs_strategy, st.floats(0.01, 5), st.floats(1.01, 4), st.floats(2, 1e4), st.floats(1.01, 10))
def test_effective_dimension_monotone(eigs, gamma, gscale, T, tscale):
    d = effective_dimension(eigs, gamma, T)[0]
    assert effective_dimension(eigs, gamma * gscale, T)[0] <= d
    assert effective_dimension(eigs, gamma, T * tscale)[0] <= d


def test_information_gain_examples():
    assert information_gain(np.zeros((3, 3)), 1.0) == 0.0
    assert information_gain(np.eye(2), 1.0) == pytest.approx(2 * math.log(2), rel=1e-15)
    with pytest.raises(ValueError):
        information_gain(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        information_gain(np.array([[1.0, 3.0], [3.0, 1.0]]), 1.0)


def test_information_gain_vs_slogdet():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A = rng.standard_normal((10, 6))
        K = A @ A.T
        s2 = rng.uniform(0.05, 2)
        sign, ld = np.linalg.slogdet(np.eye(10) + K / s2)
        assert sign > 0
        assert abs(information_gain(K, s2) - ld) < 1e-8


def test_information_gain_grows_with_effective_dimension():
    # equal trace, flatter spectrum: larger d_eff and larger information gain
    n, T, gamma = 50, 50, 1.0
    prev_d, prev_i = 0, -np.inf
    for k in (1, 3, 10, 30):
        lam = np.zeros(n)
        lam[:k] = 100.0 / k
        d = effective_dimension(lam, gamma, T)[0]
        ig = float(np.sum(np.log1p(lam / gamma)))
        assert d >= prev_d and ig > prev_i
        prev_d, prev_i = d, ig


def test_gram_spectrum():
    lam = gram_spectrum(np.diag([1.0, 3.0, 2.0]))
    assert lam.tolist() == [3.0, 2.0, 1.0]
    assert gram_spectrum(np.zeros((0, 0))).size == 0
    assert np.all(gram_spectrum(np.full((4, 4), 1.0)) >= 0)


def test_theorem1_snapshot():
    assert theorem1_bound(5, 1000, 10, 1.0, 0.05, 1.0) == BOUND_SNAPSHOT


def test_theorem1_monotone_in_T():
    vals = [theorem1_bound(5, T, 10, 1.0, 0.05, 1.0) for T in (10, 100, 1000)]
    assert vals[0] <= vals[1] <= vals[2]


def test_theorem1_gamma_tradeoff_scaling():
    vals = [theorem1_bound(5, 10**6, 10, 1.0 / L, 0.05, L) for L in (1, 4, 16)]
    ratios = [vals[1] / vals[0], vals[2] / vals[1]]
    assert all(1.5 < r < 2.5 for r in ratios)


def test_theorem1_errors():
    with pytest.raises(ValueError):
        theorem1_bound(5, 1, 10, 1.0, 0.05, 1.0)
    with pytest.raises(ValueError):
        theorem1_bound(5, 100, 10, 1.0, 1.5, 1.0)


def test_linucb_oracle_examples():
    assert linucb_oracle(np.zeros((0, 2)), [], 1.0, [0.6, 0.8], 1.0) == pytest.approx((0.0, 1.0, 1.0))
    mu, sigma, ucb = linucb_oracle([[1.0, 0.0]], [1.0], 1.0, [1.0, 0.0], 2.0)
    assert mu == pytest.approx(0.5) and sigma == pytest.approx(math.sqrt(0.5))
    assert ucb == pytest.approx(0.5 + 2 * math.sqrt(0.5))


def test_linucb_oracle_matches_dual():
    from kernelucb.gram import GramState

    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 3))
    y = rng.random(20)
    s = GramState.from_data(0.4, KernelSpec.linear(), X, y)
    for q in rng.standard_normal((5, 3)):
        mu, sigma, ucb = linucb_oracle(X, y, 0.4, q, 1.3)
        assert abs(mu - s.predict_mean(q)) < 1e-9
        assert abs(sigma - s.width(q)) < 1e-9
        assert abs(ucb - (s.predict_mean(q) + 1.3 * s.width(q))) < 1e-9


def test_spectrum_report_roundtrip(tmp_path):
    X = np.random.default_rng(3).uniform(-1, 1, (30, 2))
    rep = report_from_contexts(KernelSpec.rbf(), X, 0.5, T=30, n_arms=4, theta_norm=1.0)
    assert isinstance(rep, SpectrumReport)
    assert rep.sigma2 == 0.5 and rep.theorem1_bound is not None
    assert 1 <= rep.effective_dim <= 30 and rep.tail_sums[-1] == 0.0
    rep.to_json(tmp_path / "r.json")
    assert SpectrumReport.from_json((tmp_path / "r.json").read_text()) == rep
    assert spectrum_report(np.eye(3), 1.0).T == 3
