"""Linear pencils: linearization, hermitization, realizations, certification.

A pencil of dimension ``n`` is ``p_hat = c0 (x) 1 + sum_j c_j (x) x_j`` with
Hermitian ``n x n`` matrices, split as::

    p_hat = [[ l,  U ],
             [ U*, Qh ]]      (corner block l of size r)

so that, by the Schur complement, the corner block of ``inv(Lambda - p_hat)``
is ``inv(Lambda_corner - (l - U inv(Qh) U*))``.  For ``r = 1`` the corner
expression is ``p`` itself; for ``r = 2`` it is the hermitization
``[[0, p], [p*, 0]]``.

Every monomial ``c * w0 w1 ... w_{d-1}`` (``d >= 2``) is realised through the
chain ``m = u inv(Q) v`` where ``Q`` is the ``(d-1) x (d-1)`` upper bidiagonal
matrix with unit diagonal and ``-w1 .. -w_{d-2}`` above it,
``u = w0 e_1^T`` and ``v = w_{d-1} e_{d-1}``.
"""
from dataclasses import dataclass

import numpy as np

from . import cmat
from .errors import PencilError
from .ncexpr import NcPolynomial, eval_on_matrices, is_selfadjoint, unstar_letters

__all__ = [
    "LinearPencil",
    "Realization",
    "VerifyReport",
    "linearize_sa",
    "hermitized_linearize",
    "ingest_pencil",
    "lambda_block",
    "lambda_embed",
    "verify_pencil",
    "read_pencil",
    "write_pencil",
    "format_pencil",
    "parse_pencil",
]

_HERM_RTOL = 1e-12


def _herm_defect(a):
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    return np.abs(a - a.conj().T).max(initial=0.0) / scale


@dataclass(frozen=True, eq=False)
class LinearPencil:
    """Affine Hermitian pencil with a recovery corner of size ``corner``."""

    dim: int
    constant: np.ndarray
    coeffs: dict
    corner: int = 1

    def __post_init__(self):
        n = int(self.dim)
        if self.corner not in (1, 2) or n < self.corner:
            raise PencilError(f"corner must be 1 or 2 and at most dim (got {self.corner}, dim {n})")
        c0 = np.array(self.constant, dtype=complex)
        if c0.shape != (n, n):
            raise PencilError(f"constant has shape {c0.shape}, expected {(n, n)}")
        if _herm_defect(c0) > _HERM_RTOL:
            raise PencilError("constant matrix is not Hermitian")
        coeffs = {}
        for name, c in self.coeffs.items():
            c = np.array(c, dtype=complex)
            if c.shape != (n, n):
                raise PencilError(f"coefficient of {name!r} has shape {c.shape}, expected {(n, n)}")
            if _herm_defect(c) > _HERM_RTOL:
                raise PencilError(f"coefficient of {name!r} is not Hermitian")
            c.setflags(write=False)
            coeffs[str(name)] = c
        c0.setflags(write=False)
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "constant", c0)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def variables(self):
        return tuple(self.coeffs)

    def evaluate(self, assignment):
        """``c0 (x) I + sum_j c_j (x) A_j`` as a dense ``(n m) x (n m)`` matrix."""
        mats = {k: np.asarray(assignment[k], dtype=complex) for k in self.coeffs}
        # a constant pencil still takes its block size from the assignment
        sizes = [np.shape(a)[0] for a in (mats or assignment).values()]
        m = sizes[0] if sizes else 1
        out = np.kron(self.constant, np.eye(m))
        for name, c in self.coeffs.items():
            out = out + np.kron(c, mats[name])
        return out

    def with_coefficient(self, name, matrix):
        coeffs = dict(self.coeffs)
        coeffs[name] = matrix
        return LinearPencil(self.dim, self.constant, coeffs, self.corner)


@dataclass(frozen=True, eq=False)
class Realization:
    """Descriptor realization ``r(x) = u inv(Q(x)) v`` with ``Q`` affine.

    ``q0`` and ``qs[name]`` are ``k x k``; ``u`` has shape ``(k,)`` or
    ``(1, k)``; ``v`` has shape ``(k,)`` or ``(k, 1)``.
    """

    u: np.ndarray
    q0: np.ndarray
    qs: dict
    v: np.ndarray

    def evaluate(self, assignment):
        u = np.asarray(self.u, dtype=complex).reshape(1, -1)
        v = np.asarray(self.v, dtype=complex).reshape(-1, 1)
        names = list(self.qs)
        m = np.asarray(assignment[names[0]]).shape[0] if names else 1
        eye = np.eye(m)
        Q = np.kron(self.q0, eye)
        for name in names:
            Q = Q + np.kron(self.qs[name], np.asarray(assignment[name], dtype=complex))
        return np.kron(u, eye) @ cmat.inv(Q) @ np.kron(v, eye)

    @property
    def variables(self):
        return tuple(self.qs)


# ----------------------------------------------------------- construction

class _Builder:
    """Accumulates the corner, border and block-diagonal Schur part."""

    def __init__(self, variables, corner):
        self.variables = tuple(variables)
        self.r = corner
        self.blocks = []  # (border U as dict name->(r,k) plus const, block Qh as dict)

    def add(self, border, block):
        self.blocks.append((border, block))

    def assemble(self, corner_parts):
        k_tot = sum(next(iter(b[1].values())).shape[0] for b in self.blocks)
        n = self.r + k_tot
        mats = {name: np.zeros((n, n), complex) for name in ("",) + self.variables}
        for name, blk in corner_parts.items():
            mats[name][: self.r, : self.r] += blk
        off = self.r
        for border, block in self.blocks:
            k = next(iter(block.values())).shape[0]
            sl = slice(off, off + k)
            for name, U in border.items():
                mats[name][: self.r, sl] += U
                mats[name][sl, : self.r] += U.conj().T
            for name, Q in block.items():
                mats[name][sl, sl] += Q
            off += k
        coeffs = {v: mats[v] for v in self.variables if np.any(mats[v])}
        return LinearPencil(n, mats[""], coeffs, self.r)


def _chain(word):
    """``Q`` (as name -> matrix) with ``m = u inv(Q) v`` for a word of length >= 2."""
    k = len(word) - 1
    Q = {"": np.eye(k, dtype=complex)}
    for i in range(1, k):
        name = word[i].name
        Q.setdefault(name, np.zeros((k, k), complex))
        Q[name][i - 1, i] -= 1.0
    return Q


def _adj_block(Q, k):
    """``[[0, Q*], [Q, 0]]`` per coefficient."""
    out = {}
    for name, q in Q.items():
        blk = np.zeros((2 * k, 2 * k), complex)
        blk[:k, k:] = q.conj().T
        blk[k:, :k] = q
        out[name] = blk
    return out


def _unit(k, i):
    e = np.zeros(k, complex)
    e[i] = 1.0
    return e


def _word_order(p):
    order = {v: i for i, v in enumerate(p.variables)}
    return lambda w: tuple(order[l.name] for l in w)


def linearize_sa(p):
    """Selfadjoint pencil (corner 1) whose corner resolvent is ``inv(z - p)``.

    Variables are treated as selfadjoint: ``x'`` is identified with ``x``.
    """
    if not isinstance(p, NcPolynomial):
        raise TypeError("linearize_sa expects an NcPolynomial")
    if not p.terms:
        raise PencilError("cannot linearize the zero polynomial")
    if not is_selfadjoint(p):
        raise PencilError(f"polynomial is not selfadjoint: {p}")
    q = unstar_letters(p)
    terms = q.as_dict()
    key = _word_order(q)
    b = _Builder(q.variables, 1)
    corner = {"": np.zeros((1, 1), complex)}
    seen = set()
    for word, c in q.terms:
        if word in seen:
            continue
        if len(word) == 0:
            corner[""] += c.real
            continue
        if len(word) == 1:
            corner.setdefault(word[0].name, np.zeros((1, 1), complex))
            corner[word[0].name] += c.real
            continue
        rev = word[::-1]
        k = len(word) - 1
        Q = _chain(word)
        if rev == word:
            # Qh = (1/c) F (-Q): Hermitian because the word is a palindrome
            flip = np.eye(k)[::-1]
            block = {name: -flip @ m / c.real for name, m in Q.items()}
            border = {word[0].name: _unit(k, 0)[None, :]}
            b.add(border, block)
        else:
            rep = min(word, rev, key=key)
            seen.update((word, rev))
            coeff = terms[rep]
            border = {}
            for name, vec in (
                (rep[0].name, np.concatenate([-coeff * _unit(k, 0), np.zeros(k)])),
                (rep[-1].name, np.concatenate([np.zeros(k), _unit(k, k - 1)])),
            ):
                border.setdefault(name, np.zeros((1, 2 * k), complex))
                border[name] += vec[None, :]
            b.add(border, _adj_block(Q, k))
    return b.assemble(corner)


def hermitized_linearize(p):
    """Pencil (corner 2) for the hermitization ``[[0, p], [p*, 0]]``."""
    if not isinstance(p, NcPolynomial):
        raise TypeError("hermitized_linearize expects an NcPolynomial")
    if not p.terms:
        raise PencilError("cannot linearize the zero polynomial")
    q = unstar_letters(p)
    b = _Builder(q.variables, 2)
    corner = {}
    for word, c in q.terms:
        if len(word) <= 1:
            name = word[0].name if word else ""
            blk = corner.setdefault(name, np.zeros((2, 2), complex))
            blk[0, 1] += c
            blk[1, 0] += np.conj(c)
            continue
        k = len(word) - 1
        Q = _chain(word)
        border = {}
        for name, row, vec in (
            (word[0].name, 0, np.concatenate([-c * _unit(k, 0), np.zeros(k)])),
            (word[-1].name, 1, np.concatenate([np.zeros(k), _unit(k, k - 1)])),
        ):
            U = border.setdefault(name, np.zeros((2, 2 * k), complex))
            U[row] += vec
        b.add(border, _adj_block(Q, k))
    corner.setdefault("", np.zeros((2, 2), complex))
    return b.assemble(corner)


def ingest_pencil(u, q0, qs, v=None, hermitize=None):
    """Pencil for a descriptor realization ``u inv(q0 + sum_j qs[j] x_j) v``.

    When ``v`` is omitted or equals ``u*`` and every ``Q`` block is Hermitian
    the bordered pencil ``[[0, u], [u*, -Q]]`` (corner 1) is returned;
    otherwise the realization is hermitized (corner 2).  Returns
    ``(pencil, realization)``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=complex)).reshape(-1)
    q0 = np.atleast_2d(np.asarray(q0, dtype=complex))
    k = u.size
    v = u.conj() if v is None else np.atleast_1d(np.asarray(v, dtype=complex)).reshape(-1)
    if q0.shape != (k, k) or v.size != k:
        raise PencilError(f"dimension mismatch: u has {k} entries, Q0 is {q0.shape}, v has {v.size}")
    qs = {str(n): np.atleast_2d(np.asarray(m, dtype=complex)) for n, m in qs.items()}
    for n, m in qs.items():
        if m.shape != (k, k):
            raise PencilError(f"Q coefficient of {n!r} has shape {m.shape}, expected {(k, k)}")
    if not np.any(u) or not np.any(v):
        raise PencilError("u and v must be nonzero")
    real = Realization(u=u, q0=q0, qs=qs, v=v)
    sa = np.allclose(v, u.conj(), rtol=0, atol=1e-14) and all(
        _herm_defect(m) <= _HERM_RTOL for m in [q0, *qs.values()]
    )
    if hermitize is None:
        hermitize = not sa
    if not hermitize:
        if not sa:
            raise PencilError("selfadjoint route needs v = u* and Hermitian Q blocks")
        n = k + 1
        c0 = np.zeros((n, n), complex)
        c0[0, 1:] = u
        c0[1:, 0] = u.conj()
        c0[1:, 1:] = -q0
        coeffs = {}
        for name, m in qs.items():
            c = np.zeros((n, n), complex)
            c[1:, 1:] = -m
            coeffs[name] = c
        return LinearPencil(n, c0, coeffs, 1), real
    n = 2 + 2 * k
    mats = {"": np.zeros((n, n), complex)}
    mats[""][0, 2 : 2 + k] = u
    mats[""][1, 2 + k :] = v.conj()
    mats[""][2:, :2] = mats[""][:2, 2:].conj().T
    for name, m in [("", q0), *qs.items()]:
        blk = mats.setdefault(name, np.zeros((n, n), complex))
        blk[2 : 2 + k, 2 + k :] += -m.conj().T
        blk[2 + k :, 2 : 2 + k] += -m
    c0 = mats.pop("")
    return LinearPencil(n, c0, mats, 2), real


# ---------------------------------------------------------------- embedding

def lambda_block(lam, eps):
    """The 2x2 block ``[[i eps, lam], [conj(lam), i eps]]`` (stacked over ``lam``)."""
    lam = np.asarray(lam, dtype=complex)
    out = np.empty(lam.shape + (2, 2), complex)
    out[..., 0, 0] = 1j * eps
    out[..., 1, 1] = 1j * eps
    out[..., 0, 1] = lam
    out[..., 1, 0] = lam.conj()
    return out


def lambda_embed(pencil, payload, delta=None):
    """Embed ``payload`` in the corner of an ``n x n`` matrix.

    ``payload`` is a scalar ``z`` (corner 1) or a 2x2 block (corner 2), or a
    stack of either.  The remaining diagonal carries ``i delta`` with the
    default ``delta = 1e-9 * max(1, |z|)`` (corner 1) or
    ``1e-9 * max(1, eps)`` (corner 2, ``eps`` read from the block).
    """
    n, r = (pencil.dim, pencil.corner) if isinstance(pencil, LinearPencil) else pencil
    payload = np.asarray(payload, dtype=complex)
    if r == 1:
        if payload.ndim >= 2 and payload.shape[-2:] == (1, 1):
            payload = payload[..., 0, 0]
        lead = payload.shape
        block = payload[..., None, None]
        size = np.abs(payload)
    else:
        if payload.shape[-2:] != (2, 2):
            raise PencilError(f"corner 2 needs 2x2 payloads, got shape {payload.shape}")
        lead = payload.shape[:-2]
        block = payload
        size = payload[..., 0, 0].imag
    if delta is None:
        delta = 1e-9 * np.maximum(1.0, size)
    out = np.zeros(lead + (n, n), complex)
    out[..., :r, :r] = block
    idx = np.arange(r, n)
    out[..., idx, idx] = 1j * np.asarray(delta)[..., None]
    return out


# ------------------------------------------------------------ certification

@dataclass(frozen=True)
class VerifyReport:
    max_residual: float
    trials: int
    size: int
    passed: bool
    threshold: float = 1e-8

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}: max residual {self.max_residual:.3e} over {self.trials} trials (m={self.size})"


def _random_hermitian(rng, m):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return (a + a.conj().T) / (2.0 * np.sqrt(m))


def verify_pencil(pencil, target, trials=50, size=5, seed=0, z=2j, lam=0.2 + 0.3j, eps=1e-2,
                  threshold=1e-8):
    """Check the recovery identity on random Hermitian assignments.

    ``target`` is an :class:`NcPolynomial` or anything with an
    ``evaluate(assignment)`` method (e.g. a :class:`Realization`).  The
    residual is the max-entry difference of the two resolvent blocks divided
    by ``max(1, max-entry of the reference)``.  Failures are reported, never
    raised.
    """
    rng = np.random.default_rng(seed)
    if isinstance(target, NcPolynomial):
        names = tuple(target.variables)

        def value(assign):
            return eval_on_matrices(target, assign)
    else:
        names = tuple(target.variables)
        value = target.evaluate
    names = tuple(dict.fromkeys(names + pencil.variables))
    m = int(size)
    eye = np.eye(m)
    if pencil.corner == 1:
        corner = np.array([[z]])
    else:
        corner = lambda_block(lam, eps)
    embed = np.zeros((pencil.dim, pencil.dim), complex)
    r = pencil.corner
    embed[:r, :r] = corner
    worst = 0.0
    for _ in range(int(trials)):
        assign = {name: _random_hermitian(rng, m) for name in names}
        try:
            big = cmat.inv(np.kron(embed, eye) - pencil.evaluate(assign))[: r * m, : r * m]
            pv = value(assign)
            inner = pv if r == 1 else np.block([[np.zeros((m, m)), pv], [pv.conj().T, np.zeros((m, m))]])
            ref = cmat.inv(np.kron(corner, eye) - inner)
            res = np.abs(big - ref).max() / max(1.0, np.abs(ref).max())
        except (ArithmeticError, ValueError, KeyError):
            res = np.inf
        worst = max(worst, float(res)) if np.isfinite(res) else np.inf
    return VerifyReport(worst, int(trials), m, bool(worst <= threshold), threshold)


# -------------------------------------------------------------- text format

def _fmt(x):
    return f"{float(x.real)!r},{float(x.imag)!r}"


def format_pencil(pencil):
    """Plain-text form: ``dim``/``corner`` lines, then ``constant`` and one
    ``coeff <name>`` section per variable, each with ``dim`` rows of
    whitespace-separated ``re,im`` pairs."""
    lines = [f"dim {pencil.dim}", f"corner {pencil.corner}", "constant"]
    lines += [" ".join(_fmt(x) for x in row) for row in pencil.constant]
    for name, c in pencil.coeffs.items():
        lines.append(f"coeff {name}")
        lines += [" ".join(_fmt(x) for x in row) for row in c]
    return "\n".join(lines) + "\n"


def parse_pencil(text):
    rows = [
        (i + 1, ln.split("#", 1)[0].strip())
        for i, ln in enumerate(text.splitlines())
    ]
    rows = [(i, ln) for i, ln in rows if ln]
    pos = 0

    def fail(msg):
        line = rows[pos][0] if pos < len(rows) else (rows[-1][0] if rows else 0)
        raise PencilError(f"pencil file line {line}: {msg}")

    def header(word):
        nonlocal pos
        if pos >= len(rows) or not rows[pos][1].startswith(word):
            fail(f"expected '{word}'")
        parts = rows[pos][1].split()
        pos += 1
        return parts[1:]

    def matrix(n):
        nonlocal pos
        out = np.zeros((n, n), complex)
        for i in range(n):
            if pos >= len(rows):
                fail("matrix ends early")
            toks = rows[pos][1].split()
            if len(toks) != n:
                fail(f"expected {n} entries, found {len(toks)}")
            for j, tok in enumerate(toks):
                try:
                    re_, im = tok.split(",") if "," in tok else (tok, "0")
                    out[i, j] = complex(float(re_), float(im))
                except ValueError:
                    fail(f"bad entry {tok!r}")
            pos += 1
        return out

    try:
        (dim,) = header("dim")
        n = int(dim)
    except ValueError:
        fail("dim must be an integer")
    corner = 1
    if pos < len(rows) and rows[pos][1].startswith("corner"):
        try:
            (c,) = header("corner")
            corner = int(c)
        except ValueError:
            fail("corner must be an integer")
    header("constant")
    c0 = matrix(n)
    coeffs = {}
    while pos < len(rows):
        args = header("coeff")
        if len(args) != 1:
            fail("expected 'coeff <name>'")
        coeffs[args[0]] = matrix(n)
    return LinearPencil(n, c0, coeffs, corner)


def read_pencil(path):
    with open(path, encoding="utf-8") as fh:
        return parse_pencil(fh.read())


def write_pencil(pencil, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_pencil(pencil))
