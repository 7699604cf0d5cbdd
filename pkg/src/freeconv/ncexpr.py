"""Noncommutative *-polynomials: parsing, normal form, adjoints, evaluation.

Grammar (whitespace is insignificant)::

    expr   := term (("+" | "-") term)*
    term   := factor ("*" factor)*
    factor := ("+" | "-") factor | atom ("^" uint)? ("'")?
    atom   := ident | number | number "i" | "(" expr ")"

``x'`` is the adjoint of ``x``; ``2i`` and ``1.5i`` are imaginary literals.
A unary sign is accepted in front of any factor so that printed polynomials
with negative leading coefficients parse back.
"""
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParseError

__all__ = [
    "Letter",
    "NcPolynomial",
    "parse",
    "star",
    "is_selfadjoint",
    "unstar_letters",
    "eval_on_matrices",
]


class Letter(NamedTuple):
    name: str
    starred: bool = False

    def adjoint(self):
        return Letter(self.name, not self.starred)


@dataclass(frozen=True)
class NcPolynomial:
    """Normalized polynomial: ``terms`` is a sorted tuple of ``(word, coeff)``.

    Words are tuples of :class:`Letter`; the empty word is the constant term.
    No two terms share a word and no coefficient is zero.
    """

    terms: tuple
    variables: tuple

    @classmethod
    def from_dict(cls, terms, variables):
        variables = tuple(variables)
        order = {v: i for i, v in enumerate(variables)}
        for word in terms:
            for letter in word:
                if letter.name not in order:
                    raise ValueError(f"letter {letter.name!r} is not a declared variable")
        items = [(tuple(w), complex(c)) for w, c in terms.items() if complex(c) != 0]
        items.sort(key=lambda wc: _word_key(wc[0], order))
        return cls(tuple(items), variables)

    @classmethod
    def constant(cls, c, variables=()):
        return cls.from_dict({(): c}, variables)

    @classmethod
    def letter(cls, name, variables, starred=False):
        return cls.from_dict({(Letter(name, starred),): 1.0}, variables)

    def as_dict(self):
        return dict(self.terms)

    def __len__(self):
        return len(self.terms)

    @property
    def degree(self):
        return max((len(w) for w, _ in self.terms), default=0)

    def coefficient(self, word):
        return self.as_dict().get(tuple(word), 0j)

    def _lift(self, other):
        if isinstance(other, NcPolynomial):
            if other.variables != self.variables:
                raise ValueError("polynomials over different variable lists")
            return other
        return NcPolynomial.constant(other, self.variables)

    def __add__(self, other):
        other = self._lift(other)
        acc = self.as_dict()
        for w, c in other.terms:
            acc[w] = acc.get(w, 0j) + c
        return NcPolynomial.from_dict(acc, self.variables)

    __radd__ = __add__

    def __neg__(self):
        return NcPolynomial.from_dict({w: -c for w, c in self.terms}, self.variables)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        acc = {}
        for w1, c1 in self.terms:
            for w2, c2 in other.terms:
                w = w1 + w2
                acc[w] = acc.get(w, 0j) + c1 * c2
        return NcPolynomial.from_dict(acc, self.variables)

    def __rmul__(self, other):
        return self._lift(other) * self

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = NcPolynomial.constant(1.0, self.variables)
        for _ in range(int(k)):
            out = out * self
        return out

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for i, (word, c) in enumerate(self.terms):
            sign, body = _format_term(word, c)
            if i == 0:
                parts.append(body if sign == "+" else "-" + body)
            else:
                parts.append(f" {sign} {body}")
        return "".join(parts)


def _word_key(word, order):
    return (len(word), tuple((order[l.name], l.starred) for l in word))


def _format_number(x):
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def _format_coeff(c):
    """Return (sign, text) for a coefficient, text without leading sign."""
    re_, im = c.real, c.imag
    if im == 0:
        return ("-" if re_ < 0 else "+"), _format_number(abs(re_))
    if re_ == 0:
        return ("-" if im < 0 else "+"), _format_number(abs(im)) + "i"
    im_sign = "-" if im < 0 else "+"
    return "+", f"({_format_number(re_)}{im_sign}{_format_number(abs(im))}i)"


def _format_word(word):
    out = []
    i = 0
    while i < len(word):
        letter = word[i]
        if letter.starred:
            out.append(letter.name + "'")
            i += 1
            continue
        j = i
        while j < len(word) and word[j] == letter:
            j += 1
        out.append(letter.name if j - i == 1 else f"{letter.name}^{j - i}")
        i = j
    return "*".join(out)


def _format_term(word, c):
    sign, num = _format_coeff(c)
    if not word:
        return sign, num
    w = _format_word(word)
    if num == "1":
        return sign, w
    return sign, f"{num}*{w}"


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>[-+*^'()])
    """,
    re.VERBOSE,
)


class _Tok(NamedTuple):
    kind: str
    value: object
    pos: int


def _tokenize(text):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "ws":
            pass
        elif m.group("num") is not None:
            value = float(m.group("num"))
            if m.group("imag"):
                toks.append(_Tok("num", complex(0.0, value), pos))
            else:
                toks.append(_Tok("num", complex(value, 0.0), pos))
        elif m.group("ident") is not None:
            toks.append(_Tok("ident", m.group("ident"), pos))
        else:
            toks.append(_Tok(m.group("op"), m.group("op"), pos))
        pos = m.end()
    toks.append(_Tok("end", None, len(text)))
    return toks


class _Parser:
    def __init__(self, text, variables):
        self.toks = _tokenize(text)
        self.i = 0
        self.variables = tuple(variables)
        self.declared = set(self.variables)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None):
        tok = self.toks[self.i]
        if kind is not None and tok.kind != kind:
            want = "end of input" if kind == "end" else repr(kind)
            got = "end of input" if tok.kind == "end" else repr(tok.value)
            raise ParseError(f"expected {want}, found {got}", tok.pos)
        self.i += 1
        return tok

    def expr(self):
        acc = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            rhs = self.term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def term(self):
        acc = self.factor()
        while self.peek().kind == "*":
            self.take()
            acc = acc * self.factor()
        return acc

    def factor(self):
        tok = self.peek()
        if tok.kind in ("+", "-"):
            self.take()
            inner = self.factor()
            return inner if tok.kind == "+" else -inner
        base = self.atom()
        if self.peek().kind == "^":
            self.take()
            exp_tok = self.take("num")
            k = exp_tok.value
            if k.imag != 0 or k.real != int(k.real) or k.real < 0:
                raise ParseError("exponent must be a non-negative integer", exp_tok.pos)
            base = base ** int(k.real)
        if self.peek().kind == "'":
            self.take()
            base = star(base)
        return base

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return NcPolynomial.constant(tok.value, self.variables)
        if tok.kind == "ident":
            if tok.value not in self.declared:
                raise ParseError(f"undeclared identifier {tok.value!r}", tok.pos)
            return NcPolynomial.letter(tok.value, self.variables)
        if tok.kind == "(":
            inner = self.expr()
            self.take(")")
            return inner
        got = "end of input" if tok.kind == "end" else repr(tok.value)
        raise ParseError(f"unexpected {got}", tok.pos)


def parse(text, declared_vars):
    """Parse ``text`` into a normalized :class:`NcPolynomial`.

    >>> p = parse("x*y + y*x + x^2", ["x", "y"])
    >>> len(p)
    3
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    parser = _Parser(text, declared_vars)
    poly = parser.expr()
    parser.take("end")
    return poly


# ------------------------------------------------------------- operations

def star(p):
    """Adjoint: reverse words, toggle stars, conjugate coefficients."""
    return NcPolynomial.from_dict(
        {tuple(l.adjoint() for l in reversed(w)): np.conj(c) for w, c in p.terms},
        p.variables,
    )


def unstar_letters(p):
    """Identify ``x'`` with ``x`` (declared variables are selfadjoint)."""
    acc = {}
    for w, c in p.terms:
        key = tuple(Letter(l.name) for l in w)
        acc[key] = acc.get(key, 0j) + c
    return NcPolynomial.from_dict(acc, p.variables)


def is_selfadjoint(p, rtol=1e-12):
    q = unstar_letters(p)
    d = (q - unstar_letters(star(q))).as_dict()
    scale = max((abs(c) for _, c in q.terms), default=0.0)
    return all(abs(c) <= rtol * scale for c in d.values())


def eval_on_matrices(p, assignment):
    """Evaluate ``p`` with each variable replaced by a square matrix.

    Starred letters evaluate to the conjugate transpose.
    """
    used = {l.name for w, _ in p.terms for l in w}
    missing = sorted(used - set(assignment), key=p.variables.index)
    if missing:
        raise KeyError(f"no matrix assigned to {', '.join(missing)}")
    mats = {k: np.asarray(v) for k, v in assignment.items() if k in used or k in p.variables}
    sizes = {m.shape for m in mats.values()}
    if any(len(s) != 2 or s[0] != s[1] for s in sizes) or len(sizes) > 1:
        raise ValueError(f"assigned matrices must be square of one common size, got {sorted(sizes)}")
    if not sizes:
        raise ValueError("cannot infer matrix size from an empty assignment")
    m = next(iter(sizes))[0]
    dtype = np.result_type(np.complex128, *mats.values())
    adj = {}
    out = np.zeros((m, m), dtype=dtype)
    for word, c in p.terms:
        if not word:
            out += c * np.eye(m, dtype=dtype)
            continue
        prod = None
        for l in word:
            if l.starred:
                if l.name not in adj:
                    adj[l.name] = mats[l.name].conj().T
                f = adj[l.name]
            else:
                f = mats[l.name]
            prod = f if prod is None else prod @ f
        out += c * prod
    return out
