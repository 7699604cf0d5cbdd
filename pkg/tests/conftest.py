"""Shared fixtures: reference pencils, frozen oracle values, random polynomials."""
import numpy as np
import pytest
from hypothesis import settings

from freeconv.linpen import LinearPencil
from freeconv.ncexpr import Letter, NcPolynomial, star

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def _sym(n, pairs):
    m = np.zeros((n, n), complex)
    for (i, j), v in pairs.items():
        m[i, j] = v
        m[j, i] = np.conj(v)
    return m


def xy_sym_pencil():
    """3x3 reference pencil for xy + yx + x^2 (corner 1)."""
    c0 = _sym(3, {(1, 2): -1.0})
    cx = _sym(3, {(0, 1): 1.0, (0, 2): 0.5})
    cy = _sym(3, {(0, 2): 1.0})
    return LinearPencil(3, c0, {"x": cx, "y": cy}, corner=1)


def xy_hermitized_pencil():
    """6x6 reference pencil for the hermitization of xy (corner 2)."""
    c0 = _sym(6, {(1, 5): 1.0, (2, 4): -1.0, (3, 5): -1.0})
    cx = _sym(6, {(0, 4): 1.0})
    cy = _sym(6, {(2, 3): 1.0})
    return LinearPencil(6, c0, {"x": cx, "y": cy}, corner=2)


@pytest.fixture
def sym_pencil():
    return xy_sym_pencil()


@pytest.fixture
def herm_pencil():
    return xy_hermitized_pencil()


# Frozen values from an independent mpmath oracle (direct quadrature of the
# densities; findroot on the subordination equation).
MP_QUARTER_G = {
    1 + 1j: 0.38121415269007233 - 0.58286188519173206j,
    0.5 + 0.2j: 1.0769221160413109 - 0.95237137855733586j,
    2 + 0.1j: 0.65099371858244985 - 0.17705914389700627j,
    -0.5 + 0.5j: -0.9081330439908619 - 0.81359307630858036j,
    3 + 2j: 0.233263473454775 - 0.17964919957512921j,
}
SC_PLUS_MP_G = {
    1 + 1j: 0.18896053911826807 - 0.53080258418562836j,
    0.3 + 0.5j: 0.047307791175803672 - 0.73257447959115177j,
    2 + 0.05j: 0.59949548407504889 - 0.4263046814022058j,
    -1 + 0.2j: -0.4786888950633793 - 0.70510953959204272j,
}
SC_VAR3_AT = (1 + 0.5j, 0.14184592095406957 - 0.47623441896993281j)


def random_poly(rng, names, degree, terms):
    """Random polynomial with ``terms`` monomials of length ``<= degree``."""
    acc = {}
    for _ in range(terms):
        d = int(rng.integers(0, degree + 1))
        word = tuple(Letter(names[int(rng.integers(len(names)))]) for _ in range(d))
        c = complex(rng.normal(), rng.normal()) if d else complex(rng.normal())
        acc[word] = acc.get(word, 0j) + c
    return NcPolynomial.from_dict(acc, names)


def random_sa_poly(rng, names, degree, terms):
    """Selfadjoint ``q + q*`` for a random ``q``; never zero."""
    while True:
        q = random_poly(rng, names, degree, terms)
        p = q + star(q)
        if p.terms:
            return p


def random_hermitian(rng, m):
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return (a + a.conj().T) / 2
