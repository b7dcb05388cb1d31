"""Noncommutative rational expressions with height tracking.

Expressions are built from self-adjoint variables ``x1, x2, ...``, general
variables ``y1, y2, ...``, complex scalars (acting as scalar * identity),
sums, products, adjoints and inverses.  The *height* of an expression counts
the nesting depth of inverses; polynomials have height 0.

Evaluation substitutes square complex matrices for the variables and checks
every inverse against an effective-domain bound: the inverse must exist and
its operator norm must not exceed the bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import (
    DomainViolation,
    ParseError,
    SingularDenominator,
    SizeMismatch,
)

__all__ = [
    "Variable",
    "RationalExpr",
    "ScalarConst",
    "Var",
    "Adjoint",
    "Sum",
    "Product",
    "Scale",
    "Inverse",
    "x",
    "y",
    "adj",
    "inv",
    "EvalContext",
    "height",
    "is_self_adjoint",
    "evaluate",
    "denominators",
    "operator_norm",
    "parse_expr",
    "transmission_expression",
]


@dataclass(frozen=True)
class Variable:
    """A noncommutative variable: kind 'x' (self-adjoint) or 'y' (general)."""

    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in ("x", "y"):
            raise ValueError(f"variable kind must be 'x' or 'y', got {self.kind!r}")
        if self.index < 1:
            raise ValueError("variable index must be a positive integer")

    def __str__(self):
        return f"{self.kind}{self.index}"


class RationalExpr:
    """Base class for expression nodes; supports +, -, *, unary -."""

    __slots__ = ()

    def __add__(self, other):
        return Sum((self, _as_expr(other)))

    def __radd__(self, other):
        return Sum((_as_expr(other), self))

    def __sub__(self, other):
        return Sum((self, Scale(-1.0, _as_expr(other))))

    def __rsub__(self, other):
        return Sum((_as_expr(other), Scale(-1.0, self)))

    def __mul__(self, other):
        other = _as_expr(other)
        if isinstance(other, ScalarConst):
            return Scale(other.value, self)
        return Product((self, other))

    def __rmul__(self, other):
        other = _as_expr(other)
        if isinstance(other, ScalarConst):
            return Scale(other.value, self)
        return Product((other, self))

    def __neg__(self):
        return Scale(-1.0, self)

    @property
    def height(self) -> int:
        return height(self)

    def adj(self) -> "RationalExpr":
        return Adjoint(self)


def _as_expr(v) -> RationalExpr:
    if isinstance(v, RationalExpr):
        return v
    if isinstance(v, (int, float, complex)):
        return ScalarConst(complex(v))
    raise TypeError(f"cannot interpret {v!r} as a rational expression")


@dataclass(frozen=True)
class ScalarConst(RationalExpr):
    value: complex

    def __str__(self):
        return _fmt_scalar(self.value)


@dataclass(frozen=True)
class Var(RationalExpr):
    var: Variable

    def __str__(self):
        return str(self.var)


@dataclass(frozen=True)
class Adjoint(RationalExpr):
    child: RationalExpr

    def __str__(self):
        return f"adj({self.child})"


@dataclass(frozen=True)
class Sum(RationalExpr):
    children: tuple

    def __str__(self):
        return "(" + " + ".join(str(c) for c in self.children) + ")"


@dataclass(frozen=True)
class Product(RationalExpr):
    children: tuple

    def __str__(self):
        return "(" + "*".join(str(c) for c in self.children) + ")"


@dataclass(frozen=True)
class Scale(RationalExpr):
    factor: complex
    child: RationalExpr

    def __str__(self):
        return f"({_fmt_scalar(self.factor)}*{self.child})"


@dataclass(frozen=True)
class Inverse(RationalExpr):
    child: RationalExpr

    def __str__(self):
        return f"inv({self.child})"


def x(i: int) -> RationalExpr:
    """Self-adjoint variable x_i."""
    return Var(Variable("x", i))


def y(i: int) -> RationalExpr:
    """General (non-self-adjoint) variable y_i."""
    return Var(Variable("y", i))


def adj(e) -> RationalExpr:
    return Adjoint(_as_expr(e))


def inv(e) -> RationalExpr:
    return Inverse(_as_expr(e))


def _fmt_scalar(c: complex) -> str:
    c = complex(c)
    if c.imag == 0.0:
        return repr(c.real)
    return f"({c.real!r}+{c.imag!r}i)"


# ---------------------------------------------------------------------------
# height


def height(expr: RationalExpr) -> int:
    """Nesting depth of inverses: leaves 0, Inverse(e) = height(e) + 1."""
    if isinstance(expr, (ScalarConst, Var)):
        return 0
    if isinstance(expr, Inverse):
        return height(expr.child) + 1
    if isinstance(expr, (Adjoint, Scale)):
        return height(expr.child)
    if isinstance(expr, (Sum, Product)):
        return max((height(c) for c in expr.children), default=0)
    raise TypeError(f"unknown node {type(expr)}")


# ---------------------------------------------------------------------------
# canonical normal form
#
# An expression is normalized to a sorted tuple of (word, coefficient) pairs,
# where a word is a tuple of atoms and an atom is one of
# ("x", i), ("y", i), ("ys", i), ("inv", <normal form of the denominator>).
# Sums and products are flattened, adjoints pushed onto leaves, and equal
# words merged, so structural equality of normal forms is a deterministic
# notion of expression equality (it does not identify equal rational
# *functions*, only equal expressions up to *-algebra axioms).

_ONE_WORD = ()


def _nf_scale(nf, c: complex):
    if c == 0:
        return ()
    return tuple((w, coef * c) for w, coef in nf)


def _nf_sum(parts):
    acc = {}
    for nf in parts:
        for w, coef in nf:
            acc[w] = acc.get(w, 0.0 + 0.0j) + coef
    items = [(w, c) for w, c in acc.items() if c != 0]
    items.sort(key=lambda it: _word_key(it[0]))
    return tuple(items)


def _nf_product(a, b):
    out = {}
    for wa, ca in a:
        for wb, cb in b:
            w = wa + wb
            out[w] = out.get(w, 0.0 + 0.0j) + ca * cb
    items = [(w, c) for w, c in out.items() if c != 0]
    items.sort(key=lambda it: _word_key(it[0]))
    return tuple(items)


def _atom_adjoint(atom):
    tag = atom[0]
    if tag == "x":
        return atom
    if tag == "y":
        return ("ys", atom[1])
    if tag == "ys":
        return ("y", atom[1])
    if tag == "inv":
        return ("inv", _nf_adjoint(atom[1]))
    raise TypeError(atom)


def _nf_adjoint(nf):
    items = [
        (tuple(_atom_adjoint(a) for a in reversed(w)), np.conj(c)) for w, c in nf
    ]
    items.sort(key=lambda it: _word_key(it[0]))
    return tuple(items)


def _atom_key(atom):
    if atom[0] == "inv":
        return ("inv", tuple(_word_key(w) + (repr(c),) for w, c in atom[1]))
    return atom


def _word_key(word):
    return tuple(_atom_key(a) for a in word)


def normal_form(expr: RationalExpr):
    """Canonical form: sorted tuple of (word, coefficient) pairs."""
    if isinstance(expr, ScalarConst):
        return ((_ONE_WORD, complex(expr.value)),) if expr.value != 0 else ()
    if isinstance(expr, Var):
        return (((expr.var.kind, expr.var.index),), 1.0 + 0.0j),
    if isinstance(expr, Scale):
        return _nf_scale(normal_form(expr.child), complex(expr.factor))
    if isinstance(expr, Adjoint):
        return _nf_adjoint(normal_form(expr.child))
    if isinstance(expr, Sum):
        return _nf_sum([normal_form(c) for c in expr.children])
    if isinstance(expr, Product):
        nf = ((_ONE_WORD, 1.0 + 0.0j),)
        for c in expr.children:
            nf = _nf_product(nf, normal_form(c))
        return nf
    if isinstance(expr, Inverse):
        return ((("inv", normal_form(expr.child)),), 1.0 + 0.0j),
    raise TypeError(f"unknown node {type(expr)}")


def is_self_adjoint(expr: RationalExpr) -> bool:
    """Structural check that expr equals its formal adjoint."""
    nf = normal_form(expr)
    return nf == _nf_adjoint(nf)


def denominators(expr: RationalExpr):
    """All distinct inverse arguments, transitively, lowest height first.

    Deduplication uses the canonical normal form; ties in height keep
    first-appearance (depth-first, left-to-right) order.
    """
    found = []
    seen = set()

    def walk(e):
        if isinstance(e, (ScalarConst, Var)):
            return
        if isinstance(e, (Adjoint, Scale)):
            walk(e.child)
            return
        if isinstance(e, (Sum, Product)):
            for c in e.children:
                walk(c)
            return
        if isinstance(e, Inverse):
            walk(e.child)
            key = _word_key((("inv", normal_form(e.child)),))
            if key not in seen:
                seen.add(key)
                found.append(e.child)
            return
        raise TypeError(type(e))

    walk(expr)
    order = {id(e): i for i, e in enumerate(found)}
    return sorted(found, key=lambda e: (height(e), order[id(e)]))


# ---------------------------------------------------------------------------
# evaluation


def operator_norm(A, tol: float = 1e-10, max_iters: int = 500) -> float:
    """Spectral-norm estimate by power iteration on A* A.

    Deterministic start vector; the estimate converges from below, which is
    adequate for the domain checks (a reliable estimate, not an exact norm).
    """
    A = np.asarray(A, dtype=complex)
    if A.size == 1:
        return float(abs(A.reshape(-1)[0]))
    n = A.shape[1]
    v = np.ones(n, dtype=complex) + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iters):
        u = A.conj().T @ (A @ v)
        lam = np.linalg.norm(u)  # Rayleigh-type estimate of lambda_max(A*A)
        if lam == 0.0:
            return 0.0
        v = u / lam
        sigma = float(np.sqrt(lam))
        if abs(sigma - prev) <= tol * max(sigma, 1.0):
            return sigma
        prev = sigma
    return float(prev)


class EvalContext:
    """Variable assignments (square matrices of one size) plus a domain bound.

    Self-adjoint variables must receive Hermitian matrices; a relative
    operator-norm deviation above 1e-12 is rejected.
    """

    HERMITICITY_RTOL = 1e-12

    def __init__(self, assignments: dict, domain_bound: float = 1e8):
        if domain_bound <= 0:
            raise ValueError("domain bound must be positive")
        self.domain_bound = float(domain_bound)
        self.assignments = {}
        size = None
        for var, mat in assignments.items():
            if not isinstance(var, Variable):
                raise TypeError("assignment keys must be Variable instances")
            m = np.asarray(mat, dtype=complex)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise SizeMismatch(f"assignment for {var} is not square")
            if size is None:
                size = m.shape[0]
            elif m.shape[0] != size:
                raise SizeMismatch("all assignments must share one size")
            if var.kind == "x":
                dev = operator_norm(m - m.conj().T)
                scale = max(operator_norm(m), 1e-300)
                if dev > self.HERMITICITY_RTOL * scale:
                    raise ValueError(
                        f"assignment for {var} is not Hermitian "
                        f"(relative deviation {dev / scale:.2e})"
                    )
            self.assignments[var] = m
        if size is None:
            raise SizeMismatch("context needs at least one assignment")
        self.size = size

    def lookup(self, var: Variable):
        try:
            return self.assignments[var]
        except KeyError:
            raise KeyError(f"variable {var} not assigned") from None


def _checked_inverse(B, ctx: EvalContext, node):
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        raise SingularDenominator(f"denominator {node} is singular") from None
    n_fwd = operator_norm(B)
    n_inv = operator_norm(Binv)
    if n_fwd * n_inv > 1.0 / np.finfo(float).eps:
        raise SingularDenominator(
            f"denominator {node} has condition {n_fwd * n_inv:.3e}"
        )
    if n_inv > ctx.domain_bound:
        raise DomainViolation(node, n_inv, ctx.domain_bound)
    return Binv


def evaluate(expr: RationalExpr, ctx: EvalContext):
    """Evaluate expr on the context's matrices.

    Scalar constants act as scalar * identity (size taken from the context).
    Every Inverse node is checked against the effective-domain bound.
    """
    n = ctx.size
    val = _eval(expr, ctx)
    if np.isscalar(val):
        return complex(val) * np.eye(n, dtype=complex)
    return val


def _eval(expr, ctx):
    if isinstance(expr, ScalarConst):
        return complex(expr.value)
    if isinstance(expr, Var):
        return ctx.lookup(expr.var)
    if isinstance(expr, Scale):
        return complex(expr.factor) * _eval(expr.child, ctx)
    if isinstance(expr, Adjoint):
        v = _eval(expr.child, ctx)
        return np.conj(v) if np.isscalar(v) else v.conj().T
    if isinstance(expr, Sum):
        vals = [_eval(c, ctx) for c in expr.children]
        mats = [v for v in vals if not np.isscalar(v)]
        if not mats:
            return sum(vals)
        acc = np.zeros_like(mats[0])
        eye = np.eye(acc.shape[0], dtype=complex)
        for v in vals:
            acc = acc + (v * eye if np.isscalar(v) else v)
        return acc
    if isinstance(expr, Product):
        acc = 1.0 + 0.0j
        for c in expr.children:
            v = _eval(c, ctx)
            if np.isscalar(acc) or np.isscalar(v):
                acc = acc * v
            else:
                acc = acc @ v
        return acc
    if isinstance(expr, Inverse):
        v = _eval(expr.child, ctx)
        if np.isscalar(v):
            v = complex(v) * np.eye(ctx.size, dtype=complex)
        return _checked_inverse(v, ctx, expr.child)
    raise TypeError(f"unknown node {type(expr)}")


# ---------------------------------------------------------------------------
# model expression


def transmission_expression(gamma: float, Y: complex) -> RationalExpr:
    """TT* for the quantum-dot model as a rational expression.

    Variables: x1 = internal Hamiltonian, y1/y2 = left/right coupling blocks.
    Returns 4 gamma^2 * y2* q^{-1} y1 y1* (q*)^{-1} y2 with
    q = Y - x1 + i gamma (y1 y1* + y2 y2*).
    """
    q = ScalarConst(Y) - x(1) + Scale(1j * gamma, y(1) * adj(y(1)) + y(2) * adj(y(2)))
    chain = Product((adj(y(2)), inv(q), y(1), adj(y(1)), inv(adj(q)), y(2)))
    return Scale(4.0 * gamma**2, chain)


# ---------------------------------------------------------------------------
# textual DSL
#
# Grammar:  expr   := term (('+'|'-') term)*
#           term   := factor ('*' factor)*
#           factor := '-' factor | atom postfix*
#           atom   := NUMBER | IMAG | VAR | 'inv(' expr ')' | 'adj(' expr ')'
#                     | '(' expr ')'
#           postfix '*' is the adjoint; a '*' is multiplication exactly when
#           the next non-space character starts an operand.

_OPERAND_START = set("0123456789.(xyiaXYIA")


def _tokenize(src: str):
    tokens = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-()":
            tokens.append((ch, ch))
            i += 1
            continue
        if ch == "*":
            j = i + 1
            while j < n and src[j].isspace():
                j += 1
            if j < n and src[j] in _OPERAND_START:
                tokens.append(("MUL", "*"))
            else:
                tokens.append(("ADJ", "*"))
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            while j < n and (src[j].isdigit() or src[j] in ".eE" or
                             (src[j] in "+-" and j > i and src[j - 1] in "eE")):
                j += 1
            text = src[i:j]
            if j < n and src[j] in "ij":
                tokens.append(("IMAG", text))
                j += 1
            else:
                tokens.append(("NUM", text))
            i = j
            continue
        if src.startswith("inv", i):
            tokens.append(("INV", "inv"))
            i += 3
            continue
        if src.startswith("adj", i):
            tokens.append(("ADJ_FN", "adj"))
            i += 3
            continue
        if ch in "xy":
            j = i + 1
            while j < n and src[j].isdigit():
                j += 1
            if j == i + 1:
                raise ParseError(f"variable at position {i} needs an index")
            tokens.append(("VAR", src[i:j]))
            i = j
            continue
        if ch in "ij":
            tokens.append(("IMAG", "1"))
            i += 1
            continue
        raise ParseError(f"unexpected character {ch!r} at position {i}")
    tokens.append(("END", ""))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0]

    def take(self, kind=None):
        tk = self.tokens[self.pos]
        if kind is not None and tk[0] != kind:
            raise ParseError(f"expected {kind}, got {tk[1]!r}")
        self.pos += 1
        return tk

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.factor()
        while self.peek() == "MUL":
            self.take()
            node = node * self.factor()
        return node

    def factor(self):
        if self.peek() == "-":
            self.take()
            return -self.factor()
        node = self.atom()
        while self.peek() == "ADJ":
            self.take()
            node = Adjoint(node)
        return node

    def atom(self):
        kind, text = self.take()
        if kind == "NUM":
            return ScalarConst(complex(float(text)))
        if kind == "IMAG":
            return ScalarConst(complex(0.0, float(text)))
        if kind == "VAR":
            return Var(Variable(text[0], int(text[1:])))
        if kind == "INV":
            self.take("(")
            inner = self.expr()
            self.take(")")
            return Inverse(inner)
        if kind == "ADJ_FN":
            self.take("(")
            inner = self.expr()
            self.take(")")
            return Adjoint(inner)
        if kind == "(":
            inner = self.expr()
            self.take(")")
            return inner
        raise ParseError(f"unexpected token {text!r}")


def parse_expr(src: str) -> RationalExpr:
    """Parse the textual DSL into an expression tree."""
    p = _Parser(_tokenize(src))
    node = p.expr()
    if p.peek() != "END":
        raise ParseError(f"trailing input: {p.tokens[p.pos][1]!r}")
    return node
