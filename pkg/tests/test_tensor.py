import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbdoa.geometry import VirtualStructure, cosines_to_angles, irregular_array, receive_subset, ula_response
from tbdoa.tensor import (as_tensor, concat, fold, hnorm, hosvd, inner, mode_product, multi_mode_product,
                          outer, truncated_signal_subspace, unfold, vectorize)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


dims_strategy = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


def _unfold_oracle(t, mode):
    """Loop oracle: column index runs over the remaining modes in C order."""
    rest = [d for i, d in enumerate(t.shape) if i != mode]
    out = np.zeros((t.shape[mode], int(np.prod(rest, dtype=int))), t.dtype)
    for idx in itertools.product(*[range(d) for d in t.shape]):
        others = [idx[i] for i in range(t.ndim) if i != mode]
        col = 0
        for i, d in zip(others, rest):
            col = col * d + i
        out[idx[mode], col] = t[idx]
    return out


def test_unfold_2x2x2_matches_loop_oracle():
    t = as_tensor(np.arange(1, 9), (2, 2, 2))
    expected = {
        0: [[1, 2, 3, 4], [5, 6, 7, 8]],
        1: [[1, 2, 5, 6], [3, 4, 7, 8]],
        2: [[1, 3, 5, 7], [2, 4, 6, 8]],
    }
    for mode, m in expected.items():
        np.testing.assert_array_equal(unfold(t, mode), np.array(m))
        np.testing.assert_array_equal(unfold(t, mode), _unfold_oracle(t, mode))


def test_order_one_unfold_is_row_vector():
    t = as_tensor([1, 2, 3])
    assert unfold(t, 0).shape == (3, 1)


def test_as_tensor_rejects_bad_dims():
    with pytest.raises(ValueError):
        as_tensor(np.arange(6), (4, 2))
    with pytest.raises(ValueError):
        as_tensor(np.arange(6), (0, 6))
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2)), 2)


@settings(max_examples=60, deadline=None)
@given(dims=dims_strategy, seed=st.integers(0, 2**31 - 1), data=st.data())
def test_fold_unfold_round_trip(dims, seed, data):
    t = crandn(np.random.default_rng(seed), *dims)
    mode = data.draw(st.integers(0, len(dims) - 1))
    np.testing.assert_array_equal(fold(unfold(t, mode), mode, dims), t)
    np.testing.assert_array_equal(unfold(t, mode), _unfold_oracle(t, mode))


def test_mode_product_nested_loop_oracle(rng):
    t = crandn(rng, 2, 3, 2)
    m = crandn(rng, 4, 3)
    got = mode_product(t, m, 1)
    ref = np.zeros((2, 4, 2), complex)
    for i, j, k, n in itertools.product(range(2), range(4), range(2), range(3)):
        ref[i, j, k] += t[i, n, k] * m[j, n]
    np.testing.assert_allclose(got, ref, atol=1e-13)


def test_mode_product_identity_and_commutation(rng):
    t = crandn(rng, 3, 4, 5)
    np.testing.assert_array_equal(mode_product(t, np.eye(4), 1), t)
    a, b = crandn(rng, 2, 3), crandn(rng, 6, 5)
    np.testing.assert_allclose(mode_product(mode_product(t, a, 0), b, 2),
                               mode_product(mode_product(t, b, 2), a, 0), atol=1e-12)
    with pytest.raises(ValueError):
        mode_product(t, a, 1)


@settings(max_examples=40, deadline=None)
@given(dims=st.lists(st.integers(1, 4), min_size=2, max_size=4).map(tuple),
       seed=st.integers(0, 2**31 - 1), data=st.data())
def test_mode_product_associativity(dims, seed, data):
    rng = np.random.default_rng(seed)
    mode = data.draw(st.integers(0, len(dims) - 1))
    t = crandn(rng, *dims)
    a = crandn(rng, 3, dims[mode])
    b = crandn(rng, 2, 3)
    lhs = mode_product(mode_product(t, a, mode), b, mode)
    rhs = mode_product(t, b @ a, mode)
    assert hnorm(lhs - rhs) <= 1e-12 * max(hnorm(rhs), 1.0)


def test_mode_product_matches_unfolding_identity(rng):
    t = crandn(rng, 3, 4, 2)
    m = crandn(rng, 5, 4)
    np.testing.assert_allclose(unfold(mode_product(t, m, 1), 1), m @ unfold(t, 1), atol=1e-12)


def test_vectorize_conventions():
    a, b = np.array([1, 2]), np.array([1, 0])
    v = vectorize(outer(a, b))
    np.testing.assert_array_equal(v, [1, 0, 2, 0])
    np.testing.assert_array_equal(v, np.kron(a, b))
    np.testing.assert_array_equal(vectorize(np.ones((2, 2, 2))), np.ones(8))


def test_vec_of_outer_equals_stacked_steering():
    v = VirtualStructure("ura", 4, 4)
    rx = receive_subset(irregular_array())
    mu, nu = 0.2, 0.45
    th, ph = cosines_to_angles(mu, nu)
    c = ula_response(4, 0.5, mu)[:, 0]
    d = ula_response(4, 0.5, nu)[:, 0]
    b = rx.steering(th, ph)[:, 0]
    stacked = np.kron(v.steering(th, ph)[:, 0], b)
    np.testing.assert_allclose(vectorize(outer(c, d, b)), stacked, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(dims=st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple), seed=st.integers(0, 2**31 - 1))
def test_hnorm_equals_unfolding_frobenius(dims, seed):
    t = crandn(np.random.default_rng(seed), *dims)
    for mode in range(len(dims)):
        assert abs(hnorm(t) - np.linalg.norm(unfold(t, mode))) <= 1e-12 * hnorm(t)


def test_inner_conjugate_symmetry(rng):
    a, b = crandn(rng, 2, 3, 4), crandn(rng, 2, 3, 4)
    assert inner(a, b) == pytest.approx(np.conj(inner(b, a)), abs=1e-12)
    assert inner(a, a).real == pytest.approx(hnorm(a) ** 2)


def test_concat_along_mode(rng):
    a, b = crandn(rng, 2, 3, 1), crandn(rng, 2, 3, 2)
    assert concat([a, b], 2).shape == (2, 3, 3)


@pytest.mark.parametrize("dims", [(3, 4, 5, 6), (2, 2), (5, 1, 3)])
def test_hosvd_reconstruction_and_orthonormal_factors(rng, dims):
    t = crandn(rng, *dims)
    h = hosvd(t)
    assert hnorm(t - h.reconstruct()) <= 1e-10 * hnorm(t)
    for u in h.factors:
        assert np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])) <= 1e-10


def test_hosvd_mode_singular_values_match_unfoldings(rng):
    t = crandn(rng, 3, 4, 5)
    h = hosvd(t)
    for mode in range(3):
        np.testing.assert_allclose(h.mode_singular_values[mode], np.linalg.svd(unfold(t, mode), compute_uv=False),
                                   rtol=1e-12)


def test_hosvd_all_orthogonality(rng):
    t = crandn(rng, 3, 4, 5)
    core = hosvd(t).core
    for mode in range(3):
        g = unfold(core, mode) @ unfold(core, mode).conj().T
        off = g - np.diag(np.diag(g))
        assert np.abs(off).max() <= 1e-10 * np.abs(g).max()


def test_hosvd_rank_one_factor_is_input_up_to_phase(rng):
    a, b, c = crandn(rng, 3), crandn(rng, 4), crandn(rng, 2)
    u1 = hosvd(outer(a, b, c)).factors[0][:, 0]
    assert abs(abs(np.vdot(u1, a)) - np.linalg.norm(a)) <= 1e-10 * np.linalg.norm(a)


def test_hosvd_phase_fixing_is_deterministic(rng):
    t = crandn(rng, 3, 3, 3)
    for u in hosvd(t).factors:
        piv = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])]
        np.testing.assert_allclose(piv.imag, 0, atol=1e-12)
        assert np.all(piv.real > 0)


def _principal_angle_max(a, b):
    # sine of the largest principal angle; arccos loses precision near zero
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    return float(np.linalg.norm(qb - qa @ (qa.conj().T @ qb), 2))


def test_truncated_subspace_rank_and_matrix_equivalence(rng):
    # noiseless rank-2 tensor of shape (4, 4, 8, 6) built from outer products
    k = 2
    t = sum(outer(crandn(rng, 4), crandn(rng, 4), crandn(rng, 8), crandn(rng, 6)) for _ in range(k))
    s = truncated_signal_subspace(t, k)
    assert s.shape == (4, 4, 8, k)
    us = np.linalg.svd(unfold(t, 3).T, full_matrices=False)[0][:, :k]
    ts = unfold(s, 3).T
    assert _principal_angle_max(us, ts) < 1e-8
    one = outer(crandn(rng, 4), crandn(rng, 4), crandn(rng, 8), crandn(rng, 6))
    assert np.linalg.matrix_rank(unfold(truncated_signal_subspace(one, 1), 3)) == 1


def test_truncated_subspace_full_rank_matches_hosvd(rng):
    t = crandn(rng, 3, 3, 3)
    s = truncated_signal_subspace(t, 3)
    h = hosvd(t)
    expected = multi_mode_product(h.core, h.factors[:-1])
    np.testing.assert_allclose(s, expected, atol=1e-10)


def test_truncated_subspace_rejects_bad_k(rng):
    with pytest.raises(ValueError):
        truncated_signal_subspace(crandn(rng, 2, 3, 4), 3)
