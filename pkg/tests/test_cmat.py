import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from freeconv import cmat
from freeconv.errors import NotHermitianError, SingularMatrixError


def test_inv_diagonal():
    out = cmat.inv(np.diag([2j, -1.0]))
    np.testing.assert_allclose(out, np.diag([-0.5j, -1.0]), atol=1e-15)


def test_inv_swap_is_involution():
    s = np.array([[0, 1], [1, 0]], complex)
    np.testing.assert_allclose(cmat.inv(s), s, atol=1e-15)


def test_inv_random_residual():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    a = q @ np.diag(np.linspace(1, 3, 6)) @ q.conj().T
    assert np.abs(a @ cmat.inv(a) - np.eye(6)).max() <= 1e-10


def test_inv_singular_raises():
    with pytest.raises(SingularMatrixError):
        cmat.inv(np.ones((3, 3)))


def test_inv_rejects_nonfinite_and_nonsquare():
    with pytest.raises(ValueError):
        cmat.inv(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(ValueError):
        cmat.inv(np.ones((2, 3)))


def test_uhp_scalar_multiple_of_identity():
    rep = cmat.uhp_check(0.1j * np.eye(3))
    assert rep.in_upper and rep.min_imag_eig == pytest.approx(0.1, abs=1e-14)


def test_uhp_lambda_block():
    lam, eps = 0.7 - 0.4j, 1e-2
    b = np.array([[1j * eps, lam], [np.conj(lam), 1j * eps]])
    np.testing.assert_allclose(cmat.imag_part(b), eps * np.eye(2), atol=1e-16)
    assert cmat.uhp_check(b).in_upper


def test_uhp_hermitian_is_boundary():
    rep = cmat.uhp_check(np.array([[1.0, 2j], [-2j, 0.5]]))
    assert not rep.in_upper and abs(rep.min_imag_eig) < 1e-15


def test_eig_herm_examples():
    w, _ = cmat.eig_herm(np.array([[0, 1], [1, 0]], complex))
    np.testing.assert_allclose(w, [-1, 1], atol=1e-15)
    w, _ = cmat.eig_herm(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(w, [1, 2, 3], atol=1e-15)


def test_eig_herm_trace_and_unitarity():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    a = a + a.conj().T
    w, v = cmat.eig_herm(a)
    assert abs(w.sum() - np.trace(a).real) <= 1e-10
    np.testing.assert_allclose(v.conj().T @ v, np.eye(8), atol=1e-12)


def test_eig_herm_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        cmat.eig_herm(np.array([[0, 1], [0, 0]], complex))


def test_eig_general_examples():
    np.testing.assert_allclose(cmat.eig_general(np.array([[0, 1], [0, 0]], complex)), [0, 0], atol=1e-14)
    w = np.sort_complex(cmat.eig_general(np.diag([1 + 1j, 2.0])))
    np.testing.assert_allclose(w, [1 + 1j, 2], atol=1e-14)


def test_eig_general_trace():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10))
    assert abs(cmat.eig_general(a).sum() - np.trace(a)) <= 1e-8


def test_stacks_are_supported():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(2, 3, 4, 4)) + 4 * np.eye(4)
    np.testing.assert_allclose(cmat.inv(a), np.linalg.inv(a), atol=1e-12)
    assert cmat.min_imag_eig(1j * a).shape == (2, 3)


# ------------------------------------------------------------- properties

entries = st.floats(-3, 3, allow_nan=False)
mats = arrays(np.float64, (2, 4, 4), elements=entries)


def _complex(m):
    return m[0] + 1j * m[1]


@given(mats)
def test_inv_involution(m):
    a = _complex(m) + 5 * np.eye(4)  # keep it comfortably invertible
    np.testing.assert_allclose(cmat.inv(cmat.inv(a)), a, atol=1e-9 * max(1, np.abs(a).max()))


@given(mats)
def test_uhp_margin_under_adjoints(m):
    b = _complex(m)
    # -b* has the imaginary part of b; b* has its negative
    assert cmat.uhp_check(-cmat.adjoint(b)).min_imag_eig == pytest.approx(
        cmat.uhp_check(b).min_imag_eig, abs=1e-10)
    top = np.linalg.eigvalsh(cmat.imag_part(b)).max()
    assert cmat.uhp_check(cmat.adjoint(b)).min_imag_eig == pytest.approx(-top, abs=1e-10)
    if cmat.uhp_check(b).in_upper:
        assert not cmat.uhp_check(cmat.adjoint(b)).in_upper


@given(mats, st.floats(0.05, 2.0))
def test_minus_inverse_preserves_upper_half_plane(m, shift):
    h = _complex(m)
    h = (h + h.conj().T) / 2
    b = h + 1j * shift * np.eye(4)
    assert cmat.uhp_check(b).in_upper
    assert cmat.uhp_check(-cmat.inv(b)).in_upper
