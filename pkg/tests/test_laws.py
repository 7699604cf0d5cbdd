import numpy as np
import pytest
from hypothesis import given, strategies as st

from freeconv import laws
from freeconv.errors import ConfigError, HalfPlaneError, NotHermitianError

from conftest import MP_QUARTER_G, random_hermitian

SC = laws.Semicircle()
MP = laws.MarchenkoPastur(0.25)
ALL_LAWS = [
    SC,
    laws.Semicircle(0.5, 2.0),
    MP,
    laws.MarchenkoPastur(1.0),
    laws.MarchenkoPastur(3.0, 0.5),
    laws.Atomic((-1.0, 0.5, 2.0), (0.2, 0.5, 0.3)),
]


def test_semicircle_at_2i():
    assert abs(laws.cauchy_scalar(SC, 2j) - 1j * (1 - np.sqrt(2))) <= 1e-12


def test_atom_at_zero_is_reciprocal():
    d0 = laws.Atomic((0.0,), (1.0,))
    for z in (1j, 2 + 0.1j, -3 + 5j):
        assert laws.cauchy_scalar(d0, z) == pytest.approx(1 / z, abs=1e-15)


@pytest.mark.parametrize("z", list(MP_QUARTER_G))
def test_mp_quarter_against_frozen_oracle(z):
    assert abs(MP.cauchy(z) - MP_QUARTER_G[z]) <= 1e-12


@pytest.mark.parametrize("law", ALL_LAWS[:5], ids=repr)
@pytest.mark.parametrize("z", [1 + 1j, -2 + 1e-3j, 0.3 + 0.05j, 10j])
def test_closed_form_matches_quadrature(law, z):
    assert abs(law.cauchy(z) - law.cauchy_quadrature(z)) <= 1e-10


def test_lower_half_plane_rejected():
    with pytest.raises(HalfPlaneError):
        laws.cauchy_scalar(SC, 1.0)


def test_moments():
    np.testing.assert_allclose(SC.moments(4)[:5], [1, 0, 1, 0, 2], atol=1e-12)
    # free Poisson(rate l): mean l, second moment l + l^2
    m = MP.moments(2)
    np.testing.assert_allclose(m[:3], [1, 0.25, 0.25 + 0.0625], atol=1e-12)
    assert MP.atoms[0] == (0.0, pytest.approx(0.75))


def test_mp_support_edges():
    assert MP.edges == pytest.approx((0.25, 2.25))


# ------------------------------------------------------- operator valued

def test_ov_single_atom():
    rng = np.random.default_rng(0)
    a = random_hermitian(rng, 3)
    b = random_hermitian(rng, 3) + 1j * np.eye(3)
    law = laws.Atomic((1.7,), (1.0,))
    np.testing.assert_allclose(laws.ov_cauchy(law, a, b), np.linalg.inv(b - 1.7 * a), atol=1e-13)


def test_ov_zero_coefficient():
    b = np.array([[1 + 1j, 0.3], [0.3, 2j]])
    for law in ALL_LAWS:
        np.testing.assert_allclose(laws.ov_cauchy(law, np.zeros((2, 2)), b), np.linalg.inv(b), atol=1e-14)


def test_ov_one_by_one_reduces_to_scalar():
    G = laws.ov_cauchy(SC, np.eye(1), np.array([[2j]]))
    assert abs(G[0, 0] - (1j * (1 - np.sqrt(2)))) <= 1e-12


@pytest.mark.parametrize("law", ALL_LAWS, ids=repr)
@pytest.mark.parametrize("rank", [1, 2, 3, 4])
def test_ov_exact_matches_quadrature(law, rank):
    rng = np.random.default_rng(rank)
    v = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    a = v @ np.diag(rng.normal(size=rank)) @ v.conj().T
    b = random_hermitian(rng, 4) + 0.3j * np.eye(4)
    exact = laws.ov_cauchy(law, a, b, method="exact")
    quad = laws.ov_cauchy(law, a, b, method="quadrature")
    assert np.abs(exact - quad).max() <= 1e-9


def test_ov_rejects_non_hermitian_coefficient():
    with pytest.raises(NotHermitianError):
        laws.ov_cauchy(SC, np.array([[0, 1], [0, 0]]), 1j * np.eye(2))


def test_ov_rejects_argument_outside_half_plane():
    with pytest.raises(HalfPlaneError):
        laws.ov_cauchy(SC, np.eye(2), np.diag([1j, -1j]))


def test_h_transform_examples():
    b = np.array([[0.5 + 1j, 0.2], [0.2, 1.5j]])
    a = np.array([[1.0, 0.5], [0.5, -2.0]])
    h = laws.h_transform(laws.Atomic((3.0,), (1.0,)), a, b)
    np.testing.assert_allclose(h, -3.0 * a, atol=1e-13)
    np.testing.assert_allclose(laws.h_transform(SC, np.zeros((2, 2)), b), 0, atol=1e-14)
    # 1/G = z - G for the semicircle, so h = 1/G - z = -G
    z = np.array([[0.4 + 0.9j]])
    np.testing.assert_allclose(laws.h_transform(SC, np.eye(1), z), -laws.ov_cauchy(SC, np.eye(1), z), atol=1e-10)


# ----------------------------------------------------------------- sample

def test_sample_examples():
    np.testing.assert_array_equal(laws.sample(laws.Atomic((3.0,), (1.0,)), 5, 0), [3.0] * 5)
    np.testing.assert_array_equal(laws.sample(SC, 50, 7), laws.sample(SC, 50, 7))
    s = laws.sample(SC, 100_000, 1)
    assert abs(s.var() - 1.0) <= 0.03
    for law in (MP, laws.MarchenkoPastur(1.0), laws.MarchenkoPastur(3.0, 0.5)):
        m = laws.sample(law, 100_000, 2)
        assert abs(m.mean() - law.mean) <= 0.01 * max(1, law.mean)
        assert abs(m.var() - law.variance) <= 0.03 * law.variance
        lo, hi = law.support
        assert lo - 1e-12 <= m.min() and m.max() <= hi + 1e-12


# ----------------------------------------------------------------- config

def test_law_from_config():
    law = laws.law_from_config({"law": "marchenko_pastur", "ratio": 0.25})
    assert isinstance(law, laws.MarchenkoPastur) and law.ratio == 0.25
    with pytest.raises(ConfigError, match="semicirc"):
        laws.law_from_config({"law": "semicirc"})
    with pytest.raises(ConfigError, match="varience"):
        laws.law_from_config({"law": "semicircle", "varience": 2})
    with pytest.raises(ConfigError):
        laws.law_from_config({"law": "atomic", "points": [0, 1], "weights": [0.5, 0.6]})


# ------------------------------------------------------------- properties

@given(st.integers(0, len(ALL_LAWS) - 1), st.integers(0, 2**31), st.integers(1, 4))
def test_ov_cauchy_maps_to_lower_half_plane(k, seed, n):
    rng = np.random.default_rng(seed)
    a = random_hermitian(rng, n)
    b = random_hermitian(rng, n) + 1j * (0.05 + rng.random()) * np.eye(n)
    G = laws.ov_cauchy(ALL_LAWS[k], a, b)
    assert np.linalg.eigvalsh(-(G - G.conj().T) / 2j).min() > 0


@given(st.integers(0, len(ALL_LAWS) - 1), st.floats(-3, 3), st.floats(0.01, 3))
def test_identity_coefficient_gives_scalar_transform(k, re, im):
    z = complex(re, im)
    G = laws.ov_cauchy(ALL_LAWS[k], np.eye(3), z * np.eye(3))
    np.testing.assert_allclose(G, laws.cauchy_scalar(ALL_LAWS[k], z) * np.eye(3), atol=1e-12)


@pytest.mark.parametrize("law", ALL_LAWS, ids=repr)
def test_large_argument_asymptotics(law):
    rng = np.random.default_rng(1)
    a = random_hermitian(rng, 3)
    b = 1e3j * np.eye(3)
    assert np.linalg.norm(b @ laws.ov_cauchy(law, a, b) - np.eye(3)) <= 1e-2
