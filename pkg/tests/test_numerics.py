import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimosync.numerics import (
    RankDeficient,
    hadamard,
    herm,
    kron,
    orth_basis,
    pinv,
    proj_norm_sq,
)

from .conftest import crandn


def _rng(seed):
    return np.random.default_rng(seed)


def test_kron_identity_gives_block_diagonal(rng):
    m = crandn(rng, 3, 2)
    k = kron(np.eye(2), m)
    assert np.array_equal(k[:3, :2], m) and np.array_equal(k[3:, 2:], m)
    assert not k[:3, 2:].any() and not k[3:, :2].any()


def test_kron_scalar(rng):
    m = crandn(rng, 3, 3)
    assert np.allclose(kron([[2]], m), 2 * m)


def test_kron_index_formula(rng):
    a, b = crandn(rng, 2, 2), crandn(rng, 2, 2)
    k = kron(a, b)
    p, q = b.shape
    for i in range(2):
        for j in range(2):
            for s in range(p):
                for t in range(q):
                    assert np.isclose(k[i * p + s, j * q + t], a[i, j] * b[s, t], rtol=1e-15)


def test_hadamard_identities(rng):
    m = crandn(rng, 3, 3)
    assert np.array_equal(hadamard(m, np.ones((3, 3))), m)
    assert not hadamard(m, np.zeros((3, 3))).any()
    b = crandn(rng, 3, 3)
    assert np.allclose(hadamard(m, b), hadamard(b, m), rtol=1e-15, atol=0)


def test_hadamard_shape_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        hadamard(np.ones((2, 3)), np.ones((3, 2)))


def test_pinv_identity_and_unitary(rng):
    assert np.allclose(pinv(np.eye(5)), np.eye(5))
    q, _ = np.linalg.qr(crandn(rng, 6, 6))
    assert np.allclose(pinv(q), herm(q), atol=1e-12)


def test_pinv_left_inverse(rng):
    a = crandn(rng, 8, 4)
    assert np.allclose(pinv(a) @ a, np.eye(4), atol=1e-10)
    resid = np.linalg.norm(a @ pinv(a) @ a - a) / np.linalg.norm(a)
    assert resid < 1e-9
    assert np.allclose(pinv(a), np.linalg.pinv(a), atol=1e-10)


def test_pinv_rank_deficient(rng):
    a = crandn(rng, 8, 3)
    a = np.column_stack([a, a[:, 0]])
    with pytest.raises(RankDeficient) as info:
        pinv(a)
    assert info.value.cond > 1e12


def test_pinv_wide_matrix_rejected(rng):
    with pytest.raises(RankDeficient):
        pinv(crandn(rng, 2, 4))


def test_proj_norm_in_space_and_orthogonal(rng):
    a = crandn(rng, 16, 4)
    r = a @ crandn(rng, 4)
    assert np.isclose(proj_norm_sq(a, r), np.vdot(r, r).real, rtol=1e-12)
    q, _ = np.linalg.qr(np.column_stack([a, crandn(rng, 16, 1)]))
    perp = q[:, -1]
    assert abs(proj_norm_sq(a, perp)) < 1e-12


def test_proj_norm_explicit_projection(rng):
    a, r = crandn(rng, 16, 4), crandn(rng, 16)
    p = a @ np.linalg.inv(herm(a) @ a) @ herm(a)
    assert np.isclose(proj_norm_sq(a, r), np.linalg.norm(p @ r) ** 2, rtol=1e-10)


def test_proj_norm_row_mismatch(rng):
    with pytest.raises(ValueError, match="rows"):
        proj_norm_sq(crandn(rng, 5, 2), crandn(rng, 4))


def test_orth_basis_stack(rng):
    stack = crandn(rng, 3, 10, 4)
    q = orth_basis(stack)
    for k in range(3):
        assert np.allclose(herm(q[k]) @ q[k], np.eye(4), atol=1e-12)
        assert np.allclose(q[k] @ herm(q[k]) @ stack[k], stack[k], atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), rows=st.integers(4, 12), cols=st.integers(1, 4))
def test_projection_idempotent_and_bounded(seed, rows, cols):
    rng = _rng(seed)
    a, r = crandn(rng, rows, cols), crandn(rng, rows)
    p = a @ pinv(a)
    assert np.linalg.norm(p @ p - p) <= 1e-9 * np.linalg.norm(p)
    val = proj_norm_sq(a, r)
    assert 0 <= val <= np.vdot(r, r).real * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_kron_mixed_product_and_associativity(seed):
    rng = _rng(seed)
    a, b, c, d = (crandn(rng, 2, 2) for _ in range(4))
    assert np.allclose(kron(a, b) @ kron(c, d), kron(a @ c, b @ d), atol=1e-12, rtol=0)
    assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-12, rtol=0)
