import numpy as np
import pytest

from freeconv import laws, linpen, subord
from freeconv.errors import FixedPointError, HalfPlaneError, PencilError
from freeconv.linpen import LinearPencil
from freeconv.ncexpr import parse

from conftest import SC_PLUS_MP_G, SC_VAR3_AT, random_hermitian

SC = laws.Semicircle()
MP = laws.MarchenkoPastur(0.25)
XY = ["x", "y"]


def _term(law, a=None):
    return subord.LawTerm(law, np.eye(1) if a is None else a)


def test_two_atoms():
    s, t = 0.7, -1.2
    b = np.array([[0.3 + 0.5j]])
    omega, G = subord.free_add(_term(laws.Atomic((s,), (1.0,))), _term(laws.Atomic((t,), (1.0,))), b)
    assert abs(omega[0, 0] - (b[0, 0] - t)) <= 1e-12
    assert abs(G[0, 0] - 1 / (b[0, 0] - s - t)) <= 1e-12


def test_two_semicircles_at_4i():
    omega, G = subord.free_add(_term(SC), _term(SC), np.array([[4j]]))
    g = 1j * (4 - 2 * np.sqrt(6)) / 4
    assert abs(G[0, 0] - g) <= 1e-10
    assert abs(omega[0, 0] - (4j - g)) <= 1e-10


def test_subordination_symmetry():
    rng = np.random.default_rng(0)
    a1, a2 = random_hermitian(rng, 3), random_hermitian(rng, 3)
    b = random_hermitian(rng, 3) + 0.7j * np.eye(3)
    Gx, Gy = subord.LawTerm(SC, a1), subord.LawTerm(MP, a2)
    omega, G = subord.free_add(Gx, Gy, b, subord.FixedPointOptions(tol=1e-13))
    hx = np.linalg.inv(G) - omega
    G_other = laws.ov_cauchy(MP, a2, hx + b)
    np.testing.assert_allclose(G_other, G, atol=1e-10)


def test_scalar_examples():
    assert abs(subord.scalar_cauchy(parse("x", ["x"]), {"x": SC}, 2j) + 0.41421356237309515j) <= 1e-10
    g = subord.scalar_cauchy(parse("x+y", XY), {"x": SC, "y": SC}, 4j)
    assert abs(g + 0.22474487139158905j) <= 1e-10


@pytest.mark.parametrize("z", list(SC_PLUS_MP_G))
def test_semicircle_plus_mp_against_frozen_oracle(z):
    g = subord.scalar_cauchy(parse("x+y", XY), {"x": SC, "y": MP}, z)
    assert abs(g - SC_PLUS_MP_G[z]) <= 1e-9
    assert abs(g - MP.cauchy(z - g)) <= 1e-8


def test_three_semicircles_against_frozen_oracle():
    z, ref = SC_VAR3_AT
    g = subord.scalar_cauchy(parse("x+y+w", ["x", "y", "w"]), {"x": SC, "y": SC, "w": SC}, z)
    assert abs(g - ref) <= 1e-9


def test_pencil_cauchy_examples(sym_pencil):
    G = subord.pencil_cauchy(LinearPencil(1, [[0]], {"x": [[1]]}), {"x": SC}, np.array([[2j]]))
    assert abs(G[0, 0] + 0.41421356237309515j) <= 1e-10
    b = linpen.lambda_embed(sym_pencil, 0.5 + 1j)
    G = subord.pencil_cauchy(sym_pencil, {"x": SC, "y": MP}, b)
    assert np.isfinite(G[0, 0]) and G[0, 0].imag < 0
    zero = LinearPencil(2, [[0, 1], [1, 0]], {"x": np.zeros((2, 2))})
    b = np.array([[1j, 0.2], [0.2, 2j]])
    np.testing.assert_allclose(subord.pencil_cauchy(zero, {"x": SC}, b), np.linalg.inv(b - zero.constant), atol=1e-14)


def test_reference_pencil_matches_built_pencil(sym_pencil):
    z = np.array([0.5 + 1j, -1 + 0.3j, 3 + 0.2j])
    law_map = {"x": SC, "y": MP}
    ref = subord.scalar_cauchy(sym_pencil, law_map, z)
    own = subord.scalar_cauchy(parse("x*y+y*x+x^2", XY), law_map, z)
    np.testing.assert_allclose(own, ref, atol=1e-9)


def test_fold_order_invariance():
    law_map = {"x": SC, "y": MP, "w": laws.Atomic((-1.0, 1.0), (0.5, 0.5))}
    pen = linpen.linearize_sa(parse("x+y+w", ["x", "y", "w"]))
    z = np.array([1 + 1j, 0.2 + 0.4j, -2 + 0.3j, 3 + 0.1j, 1e-3 + 2j])
    opts = subord.FixedPointOptions(tol=1e-11)
    base = subord.scalar_cauchy(pen, law_map, z, opts)
    for order in (["y", "w", "x"], ["w", "x", "y"]):
        other = subord.scalar_cauchy(pen, law_map, z, opts, order=order)
        assert np.abs(other - base).max() <= 10 * 1e-9


def test_fold_order_must_match_variables():
    pen = linpen.linearize_sa(parse("x+y", XY))
    with pytest.raises(PencilError):
        subord.pencil_evaluator(pen, {"x": SC, "y": SC}, order=["x"])


def test_asymptotic_normalization(sym_pencil):
    b = 1e4j * np.eye(3)
    G = subord.pencil_cauchy(sym_pencil, {"x": SC, "y": MP}, b)
    assert np.linalg.norm(b @ G - np.eye(3)) <= 1e-2


def test_half_plane_errors():
    with pytest.raises(HalfPlaneError):
        subord.scalar_cauchy(parse("x", ["x"]), {"x": SC}, 1.0)
    with pytest.raises(ValueError):
        subord.scalar_cauchy(linpen.hermitized_linearize(parse("x", ["x"])), {"x": SC}, 0.1)


def test_iteration_cap_reports_residual():
    opts = subord.FixedPointOptions(max_iter=2)
    with pytest.raises(FixedPointError) as info:
        subord.scalar_cauchy(parse("x+y", XY), {"x": SC, "y": MP}, 0.3 + 0.01j, opts)
    assert info.value.residual is not None and info.value.residual > 0


def test_stack_results_independent_of_chunking():
    z = np.linspace(-3, 5, 37) + 0.05j
    law_map = {"x": SC, "y": MP}
    p = parse("x*y+y*x+x^2", XY)
    a = subord.scalar_cauchy(p, law_map, z, subord.FixedPointOptions(chunk=5))
    b = subord.scalar_cauchy(p, law_map, z, subord.FixedPointOptions(chunk=4096))
    np.testing.assert_array_equal(a, b)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("FREECONV_THREADS", "3")
    assert subord.thread_cap() == 3
    monkeypatch.setenv("FREECONV_THREADS", "0")
    assert subord.thread_cap() == 1
    monkeypatch.delenv("FREECONV_THREADS")
    assert subord.thread_cap() >= 1


def test_threads_do_not_change_results(monkeypatch):
    z = np.linspace(-2, 2, 30) + 0.1j
    law_map = {"x": SC, "y": MP}
    p = parse("x+y", XY)
    opts = subord.FixedPointOptions(chunk=7)
    monkeypatch.setenv("FREECONV_THREADS", "1")
    a = subord.scalar_cauchy(p, law_map, z, opts)
    monkeypatch.setenv("FREECONV_THREADS", "4")
    b = subord.scalar_cauchy(p, law_map, z, opts)
    np.testing.assert_array_equal(a, b)


def test_iterates_stay_in_half_plane():
    rng = np.random.default_rng(5)
    pen = linpen.linearize_sa(parse("x*y+y*x", XY))
    b = linpen.lambda_embed(pen, rng.normal(size=20) + 0.02j)
    G, status, resid, _ = subord.pencil_solve(pen, {"x": SC, "y": MP}, b)
    assert (status == subord.OK).all()
    imag = -(G - np.conj(np.swapaxes(G, 1, 2))) / 2j
    assert np.linalg.eigvalsh(imag).min() > -1e-12


def test_grouped_semicircles_match_nested_subordination():
    pen = linpen.hermitized_linearize(parse("x*y*w-2*y*w*x+w*x*y", ["x", "y", "w"]))
    law_map = {v: SC for v in ("x", "y", "w")}
    lam = np.array([0.1 + 0.2j, 0.5 - 0.3j, 1 + 1j])
    b = linpen.lambda_embed(pen, linpen.lambda_block(lam, 0.1))
    opts = subord.FixedPointOptions()
    grouped = subord.pencil_cauchy(pen, law_map, b, opts)
    nested = subord.pencil_cauchy(pen, law_map, b, subord.FixedPointOptions(group_semicircles=False))
    # the direct system must agree with folding to 10 tol
    assert np.abs(grouped - nested).max() <= 10 * opts.tol


def test_grouped_semicircles_with_other_laws():
    law_map = {"x": SC, "y": laws.Semicircle(variance=2.0, mean=0.5), "w": MP}
    p = parse("x*y+y*x+w", ["x", "y", "w"])
    z = np.array([1 + 1j, -0.5 + 0.3j])
    opts = subord.FixedPointOptions()
    a = subord.scalar_cauchy(p, law_map, z, opts)
    b = subord.scalar_cauchy(p, law_map, z, subord.FixedPointOptions(group_semicircles=False))
    assert np.abs(a - b).max() <= 10 * opts.tol


def test_semicircular_term_reports_failure():
    term = subord.SemicircularTerm([np.eye(1)], [SC], subord.FixedPointOptions(max_iter=2))
    b = np.array([[[0.3 + 0.01j]]])
    res = subord.solve_semicircular(term, b, term.opts)
    assert res.status[0] == subord.MAX_ITER and res.residual[0] > 0
    with pytest.raises(FixedPointError):
        term(b)
    ok = subord.solve_semicircular(term, np.array([[[2j]]]), subord.FixedPointOptions())
    assert ok.status[0] == subord.OK and abs(ok.G[0, 0, 0] + 0.41421356237309515j) <= 1e-10
