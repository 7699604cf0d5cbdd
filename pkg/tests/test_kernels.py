"""Both kernel backends against numpy/LAPACK, and against each other."""
import numpy as np
import pytest

from freeconv import kernels

BACKENDS = ["python"]
try:
    kernels.load_backend("cython")
    BACKENDS.append("cython")
except ImportError:  # extension not built
    pass


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.load_backend(request.param)


def _stack(rng, P, n, herm=False):
    a = rng.normal(size=(P, n, n)) + 1j * rng.normal(size=(P, n, n))
    if herm:
        a = a + np.conj(np.swapaxes(a, 1, 2))
    return np.ascontiguousarray(a)


def test_selected_backend_is_known():
    assert kernels.BACKEND in ("cython", "python")


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")


@pytest.mark.parametrize("n", [1, 2, 3, 6, 12])
def test_lu_inv_matches_lapack(backend, n):
    a = _stack(np.random.default_rng(n), 7, n)
    out, info = backend.lu_inv(a)
    assert not info.any()
    np.testing.assert_allclose(out, np.linalg.inv(a), rtol=1e-10, atol=1e-12)


def test_lu_inv_flags_singular_slot(backend):
    a = _stack(np.random.default_rng(1), 3, 4)
    a[1, :, 2] = a[1, :, 0]  # repeated column
    out, info = backend.lu_inv(a)
    assert info[1] != 0 and info[0] == 0 and info[2] == 0
    np.testing.assert_allclose(out[2], np.linalg.inv(a[2]), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_jacobi_matches_eigh(backend, n):
    a = _stack(np.random.default_rng(10 + n), 5, n, herm=True)
    w, v, info = backend.jacobi_eigh(a, True)
    assert not info.any()
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-11)
    recon = v @ (w[:, :, None] * np.conj(np.swapaxes(v, 1, 2)))
    np.testing.assert_allclose(recon, a, atol=1e-11)


@pytest.mark.parametrize("n", [1, 2, 4, 10])
def test_hqr_matches_eigvals(backend, n):
    a = _stack(np.random.default_rng(20 + n), 4, n)
    w, info = backend.hqr_eigvals(a, 60)
    assert not info.any()
    for p in range(a.shape[0]):
        ref = np.linalg.eigvals(a[p])
        # match each eigenvalue to its nearest reference
        d = np.abs(w[p][:, None] - ref[None, :]).min(axis=1)
        assert d.max() < 1e-9


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree():
    rng = np.random.default_rng(5)
    py, cy = kernels.load_backend("python"), kernels.load_backend("cython")
    a = _stack(rng, 16, 6)
    h = _stack(rng, 16, 6, herm=True)
    np.testing.assert_allclose(py.lu_inv(a)[0], cy.lu_inv(a)[0], rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(py.jacobi_eigh(h, False)[0], cy.jacobi_eigh(h, False)[0], atol=1e-12)


def test_jacobi_tiny_off_diagonal_regression(backend):
    # Im of a Dyson iterate for x1x2+x2x3+x3x4+x4x1: exact zeros mixed with
    # round-off entries near 1e-18.  Unscaled complex division turns it to NaN.
    h = np.load(__file__.replace("test_kernels.py", "data/jacobi_tiny_offdiag.npy"))[None]
    w, _, info = backend.jacobi_eigh(np.ascontiguousarray(h), False)
    assert not info.any()
    np.testing.assert_allclose(w[0], np.linalg.eigvalsh(h[0]), atol=1e-12)
