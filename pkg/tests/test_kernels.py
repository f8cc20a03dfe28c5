import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kernelucb.kernels import (KernelError, KernelSpec, evaluate, gram_matrix, gram_vector,
                               load_similarity_csv, save_similarity_csv)

SPECS = [KernelSpec.linear(), KernelSpec.rbf(0.7), KernelSpec.polynomial(3)]


def test_eval_examples():
    assert evaluate(KernelSpec.linear(), [1, 0], [0, 1]) == 0.0
    assert evaluate(KernelSpec.rbf(1.0), [0.3, -2.0], [0.3, -2.0]) == 1.0
    assert evaluate(KernelSpec.polynomial(2), [1, 0], [1, 0]) == 4.0


def test_gram_vector_examples():
    assert gram_vector(KernelSpec.rbf(), [0.0], []).shape == (0,)
    np.testing.assert_array_equal(gram_vector(KernelSpec.linear(), [1, 0], [[1, 0], [0, 1]]), [1, 0])
    # exp(-|0 - 2|^2 / 2)
    np.testing.assert_allclose(gram_vector(KernelSpec.rbf(1.0), [0.0], [[0.0], [2.0]]),
                               [1.0, 0.1353352832366127], rtol=1e-15)


def test_gram_matrix_examples():
    np.testing.assert_array_equal(gram_matrix(KernelSpec.linear(), np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(gram_matrix(KernelSpec.rbf(), [[0.4, 0.1]]), [[1.0]])
    np.testing.assert_array_equal(gram_matrix(KernelSpec.polynomial(1), [[1.0], [2.0]]), [[2, 3], [3, 5]])
    assert gram_matrix(KernelSpec.rbf(), []).shape == (0, 0)


def test_rbf_bandwidth_is_sigma():
    spec = KernelSpec.rbf(2.0)
    assert math.isclose(evaluate(spec, [0.0], [2.0]), math.exp(-4 / 8), rel_tol=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(kind="rbf", bandwidth=0.0), dict(kind="rbf", bandwidth=-1.0), dict(kind="polynomial", degree=0),
    dict(kind="polynomial", degree=1.5), dict(kind="cosine"), dict(kind="precomputed"),
])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        KernelSpec(**kwargs)


def test_errors():
    with pytest.raises(KernelError):
        evaluate(KernelSpec.linear(), [1, 0], [1, 0, 0])
    with pytest.raises(KernelError):
        evaluate(KernelSpec.linear(), [np.nan, 0], [1, 0])
    with pytest.raises(KernelError):
        evaluate(KernelSpec.linear(), 3, [1, 0])
    with pytest.raises(KernelError):
        gram_vector(KernelSpec.rbf(), [0.0, 1.0], [[0.0]])
    S = KernelSpec.precomputed(np.eye(3))
    with pytest.raises(KernelError):
        evaluate(S, 0, 3)
    with pytest.raises(KernelError):
        evaluate(S, [1.0, 0.0], 0)


def test_precomputed_validation():
    with pytest.raises(ValueError, match="symmetric"):
        KernelSpec.precomputed([[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(ValueError, match="PSD"):
        KernelSpec.precomputed([[1.0, 2.0], [2.0, 1.0]])
    S = KernelSpec.precomputed([[1.0, 0.5], [0.5, 1.0]])
    assert evaluate(S, 0, 1) == 0.5
    np.testing.assert_array_equal(gram_matrix(S, np.array([1, 0, 1])), [[1, .5, 1], [.5, 1, .5], [1, .5, 1]])
    assert S.n_items == 2


def test_similarity_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    S = A @ A.T
    save_similarity_csv(tmp_path / "s.csv", S)
    np.testing.assert_array_equal(load_similarity_csv(tmp_path / "s.csv"), S)
    (tmp_path / "bad.csv").write_text("3\n1,0\n0,1\n")
    with pytest.raises(ValueError):
        load_similarity_csv(tmp_path / "bad.csv")


def test_spec_dict_roundtrip():
    for spec in SPECS + [KernelSpec.precomputed(np.eye(2))]:
        back = KernelSpec.from_dict(spec.to_dict())
        assert back == spec


finite = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 20), st.integers(1, 4)), elements=finite),
       st.sampled_from(SPECS))
def test_gram_symmetric_psd(X, spec):
    K = gram_matrix(spec, X)
    assert np.array_equal(K, K.T)
    lam = np.linalg.eigvalsh(K)
    assert lam[0] >= -1e-8 * max(1.0, np.abs(K).sum(axis=1).max())
    if spec.kind == "rbf":
        assert np.all(np.diag(K) == 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4).flatmap(lambda d: st.tuples(arrays(float, d, elements=finite),
                                                     arrays(float, (5, d), elements=finite))),
       st.sampled_from(SPECS))
def test_gram_vector_matches_matrix_row(data, spec):
    x, H = data
    v = gram_vector(spec, x, H)
    K = gram_matrix(spec, np.vstack([H, x]))
    np.testing.assert_allclose(v, K[-1, :-1], rtol=1e-12, atol=1e-12)
    for h in H:
        assert evaluate(spec, x, h) == evaluate(spec, h, x)
