"""Polynomial expressions: parsing, exact arithmetic and derivative tensors.

Grammar (whitespace is insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary ('*' unary)*
    unary  := ('+' | '-') unary | factor
    factor := base ('^' uint)?
    base   := number | ident | '(' expr ')'

Numeric literals are read as exact rationals, so every coefficient produced
by parsing, ring operations or differentiation stays exact.  Floating
coefficients appear only when a polynomial is combined with float data
(for example a directional derivative along a numeric direction).
"""

from __future__ import annotations

import itertools
import re
import threading
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import (
    DimensionError,
    ExponentError,
    OrderError,
    ParseError,
    UnknownVariableError,
)

Scalar = Union[Fraction, float]
Monomial = tuple

DEFAULT_MAX_ORDER = 4

__all__ = [
    "DEFAULT_MAX_ORDER",
    "DerivativeTensor",
    "ExprNode",
    "PolySystem",
    "Polynomial",
    "differentiate",
    "eval_contraction",
    "parse_constant",
    "parse_expression",
    "parse_system",
]


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------


def _is_zero(c):
    return c == 0


def _coerce_scalar(c):
    if isinstance(c, (Fraction, float)):
        return c
    if isinstance(c, (int, np.integer)):
        return Fraction(int(c))
    if isinstance(c, np.floating):
        return float(c)
    raise TypeError(f"unsupported coefficient type {type(c).__name__}")


class Polynomial:
    """Sparse multivariate polynomial ``{exponent tuple: coefficient}``.

    Instances are immutable; arithmetic returns new objects.
    """

    __slots__ = ("_nvars", "_terms", "_compiled")

    def __init__(self, nvars: int, terms: Mapping[Monomial, Scalar] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        clean = {}
        for mono, coef in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != nvars:
                raise DimensionError(
                    f"monomial {mono} has {len(mono)} exponents, expected {nvars}"
                )
            if any(e < 0 for e in mono):
                raise ExponentError(f"negative exponent in monomial {mono}")
            coef = _coerce_scalar(coef)
            if not _is_zero(coef):
                clean[mono] = coef
        self._nvars = nvars
        self._terms = MappingProxyType(dict(sorted(clean.items())))
        self._compiled = None

    # construction helpers
    @classmethod
    def constant(cls, nvars, value=0):
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars, index):
        if not 0 <= index < nvars:
            raise DimensionError(f"variable index {index} out of range for {nvars} variables")
        mono = [0] * nvars
        mono[index] = 1
        return cls(nvars, {tuple(mono): 1})

    @property
    def nvars(self):
        return self._nvars

    @property
    def terms(self) -> Mapping[Monomial, Scalar]:
        return self._terms

    @property
    def degree(self):
        return max((sum(m) for m in self._terms), default=0)

    def is_zero(self):
        return not self._terms

    def is_exact(self):
        return all(isinstance(c, Fraction) for c in self._terms.values())

    # arithmetic
    def _lift(self, other):
        if isinstance(other, Polynomial):
            if other._nvars != self._nvars:
                raise DimensionError("polynomials over different variable counts")
            return other
        return Polynomial.constant(self._nvars, _coerce_scalar(other))

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self._terms)
        for mono, c in other._terms.items():
            out[mono] = out.get(mono, 0) + c
        return Polynomial(self._nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._nvars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = _coerce_scalar(other)
            return Polynomial(self._nvars, {m: c * v for m, v in self._terms.items()})
        other = self._lift(other)
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = tuple(a + b for a, b in zip(m1, m2))
                out[mono] = out.get(mono, 0) + c1 * c2
        return Polynomial(self._nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ExponentError(f"exponent must be a nonnegative integer, got {k!r}")
        result = Polynomial.constant(self._nvars, 1)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._nvars == other._nvars and dict(self._terms) == dict(other._terms)

    def __hash__(self):
        return hash((self._nvars, tuple(self._terms.items())))

    def __repr__(self):
        return f"Polynomial({self.to_string()!r})"

    # calculus
    def diff(self, index: int) -> "Polynomial":
        if not 0 <= index < self._nvars:
            raise DimensionError(f"variable index {index} out of range")
        out = {}
        for mono, c in self._terms.items():
            e = mono[index]
            if e:
                m = list(mono)
                m[index] = e - 1
                out[tuple(m)] = c * e
        return Polynomial(self._nvars, out)

    def directional(self, h, order: int = 1) -> "Polynomial":
        """``(h . grad)^order`` applied to the polynomial, i.e. ``p^(order)(x)[h]^order``."""
        h = np.asarray(h, dtype=float).ravel()
        if h.size != self._nvars:
            raise DimensionError(f"direction has {h.size} entries, expected {self._nvars}")
        result = self
        for _ in range(order):
            acc = Polynomial(self._nvars)
            for i, hi in enumerate(h):
                if hi != 0.0:
                    acc = acc + result.diff(i) * float(hi)
            result = acc
        return result

    def embed(self, nvars: int, positions: Sequence[int]) -> "Polynomial":
        """Re-express over ``nvars`` variables, old variable ``i`` -> ``positions[i]``."""
        if len(positions) != self._nvars:
            raise DimensionError("positions must map every existing variable")
        out = {}
        for mono, c in self._terms.items():
            m = [0] * nvars
            for i, e in enumerate(mono):
                m[positions[i]] += e
            out[tuple(m)] = out.get(tuple(m), 0) + c
        return Polynomial(nvars, out)

    # numerics
    def _compile(self):
        if self._compiled is None:
            if self._terms:
                exps = np.array(list(self._terms.keys()), dtype=np.int64).reshape(
                    len(self._terms), self._nvars
                )
                coefs = np.array([float(c) for c in self._terms.values()])
            else:
                exps = np.zeros((0, self._nvars), dtype=np.int64)
                coefs = np.zeros(0)
            self._compiled = (exps, coefs)
        return self._compiled

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self._nvars:
            raise DimensionError(f"point has {x.size} entries, expected {self._nvars}")
        exps, coefs = self._compile()
        if not coefs.size:
            return 0.0
        return float(coefs @ np.prod(x[None, :] ** exps, axis=1))

    def evaluate_exact(self, x: Sequence) -> Fraction:
        """Exact evaluation at a rational point (exact polynomials only)."""
        total = Fraction(0)
        xs = [Fraction(v) for v in x]
        for mono, c in self._terms.items():
            t = Fraction(c)
            for v, e in zip(xs, mono):
                if e:
                    t *= v**e
            total += t
        return total

    # printing
    def to_string(self, names: Sequence[str] | None = None) -> str:
        if names is None:
            names = [f"x{i + 1}" for i in range(self._nvars)]
        if not self._terms:
            return "0"
        order = sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), [-e for e in kv[0]]))
        pieces = []
        for k, (mono, c) in enumerate(order):
            negative = c < 0
            mag = -c if negative else c
            factors = []
            for name, e in zip(names, mono):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            if mag != 1 or not factors:
                factors.insert(0, _format_coefficient(mag))
            body = "*".join(factors)
            if k == 0:
                pieces.append(f"-{body}" if negative else body)
            else:
                pieces.append(f" - {body}" if negative else f" + {body}")
        return "".join(pieces)


def _format_coefficient(c: Scalar) -> str:
    if isinstance(c, float):
        return repr(c)
    if c.denominator == 1:
        return str(c.numerator)
    d = c.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d != 1:
        # not a terminating decimal; the grammar has no division
        return repr(float(c))
    with localcontext() as ctx:
        ctx.prec = 1000
        text = str(Decimal(c.numerator) / Decimal(c.denominator))
    return text


# ---------------------------------------------------------------------------
# Parse tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExprNode:
    """Parse-tree node.

    ``kind`` is one of ``const``, ``var``, ``add``, ``mul``, ``pow``.  Subtraction
    and unary minus are encoded as products with the constant ``-1``.
    """

    kind: str
    children: tuple = ()
    value: Scalar | None = None
    index: int | None = None
    exponent: int | None = None

    def to_polynomial(self, nvars: int) -> Polynomial:
        if self.kind == "const":
            return Polynomial.constant(nvars, self.value)
        if self.kind == "var":
            return Polynomial.variable(nvars, self.index)
        if self.kind == "add":
            acc = Polynomial(nvars)
            for c in self.children:
                acc = acc + c.to_polynomial(nvars)
            return acc
        if self.kind == "mul":
            acc = Polynomial.constant(nvars, 1)
            for c in self.children:
                acc = acc * c.to_polynomial(nvars)
            return acc
        if self.kind == "pow":
            return self.children[0].to_polynomial(nvars) ** self.exponent
        raise ValueError(f"unknown node kind {self.kind!r}")

    def evaluate(self, x) -> float:
        if self.kind == "const":
            return float(self.value)
        if self.kind == "var":
            return float(x[self.index])
        if self.kind == "add":
            return sum(c.evaluate(x) for c in self.children)
        if self.kind == "mul":
            out = 1.0
            for c in self.children:
                out *= c.evaluate(x)
            return out
        return self.children[0].evaluate(x) ** self.exponent


_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*^()]))"
)


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.variables = {name: i for i, name in enumerate(variables)}
        self.tokens = self._tokenize()
        self.pos = 0

    def _tokenize(self):
        tokens = []
        i = 0
        text = self.text
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN.match(text, i)
            if not m or m.end() == i:
                raise ParseError(f"unexpected character {text[i]!r}", text, i)
            kind = m.lastgroup
            start = m.start(kind)
            tokens.append((kind, m.group(kind), start))
            i = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None, cls=ParseError):
        tok = tok or self.peek()
        return cls(message, self.text, tok[2])

    def parse(self):
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else _negate(t))
        return terms[0] if len(terms) == 1 else ExprNode("add", tuple(terms))

    def term(self):
        factors = [self.unary()]
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            factors.append(self.unary())
        return factors[0] if len(factors) == 1 else ExprNode("mul", tuple(factors))

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            inner = self.unary()
            return inner if tok[1] == "+" else _negate(inner)
        return self.factor()

    def factor(self):
        base = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] == "op" and tok[1] == "-":
                raise self.error("negative exponent", tok, ExponentError)
            if tok[0] != "number":
                raise self.error("exponent must be a nonnegative integer literal", tok, ExponentError)
            self.take()
            if not re.fullmatch(r"\d+", tok[1]):
                raise self.error(f"fractional exponent {tok[1]!r}", tok, ExponentError)
            return ExprNode("pow", (base,), exponent=int(tok[1]))
        return base

    def base(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "number":
            return ExprNode("const", value=Fraction(text))
        if kind == "ident":
            if text not in self.variables:
                raise self.error(f"unknown variable {text!r}", tok, UnknownVariableError)
            return ExprNode("var", index=self.variables[text])
        if kind == "op" and text == "(":
            node = self.expr()
            close = self.take()
            if close[0] != "op" or close[1] != ")":
                raise self.error("expected ')'", close)
            return node
        if kind == "end":
            raise self.error("unexpected end of expression", tok)
        raise self.error(f"unexpected token {text!r}", tok)


def _negate(node):
    return ExprNode("mul", (ExprNode("const", value=Fraction(-1)), node))


def parse_expression(text: str, variables: Sequence[str] = ()) -> ExprNode:
    return _Parser(text, list(variables)).parse()


def parse_constant(text: str) -> Fraction:
    """Exact value of a variable-free expression such as ``"1e-5+1e-15"``."""
    poly = parse_expression(text, ()).to_polynomial(0)
    return Fraction(poly.terms.get((), Fraction(0)))


# ---------------------------------------------------------------------------
# Systems and derivative tensors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolySystem:
    """``F = (f_1, ..., f_m)`` over named variables ``x_1..x_n``."""

    names: tuple
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "components", tuple(self.components))
        if not self.names:
            raise DimensionError("a system needs at least one variable")
        if len(set(self.names)) != len(self.names):
            raise DimensionError(f"duplicate variable names in {self.names}")
        if not self.components:
            raise DimensionError("a system needs at least one component")
        for c in self.components:
            if c.nvars != len(self.names):
                raise DimensionError("component defined over a different variable count")

    @property
    def n(self):
        return len(self.names)

    @property
    def m(self):
        return len(self.components)

    def evaluate(self, x) -> np.ndarray:
        x = _as_point(x, self.n)
        return np.array([c.evaluate(x) for c in self.components])

    def to_strings(self) -> list[str]:
        return [c.to_string(self.names) for c in self.components]

    def scaled(self, factors) -> "PolySystem":
        factors = np.broadcast_to(np.asarray(factors, dtype=float), (self.m,))
        return PolySystem(self.names, [c * float(s) for c, s in zip(self.components, factors)])


def parse_system(texts: Sequence[str] | str, variables: Sequence[str]) -> PolySystem:
    """Parse one expression per component.  ``texts`` may be a single string."""
    if isinstance(texts, str):
        texts = [texts]
    variables = list(variables)
    comps = [parse_expression(t, variables).to_polynomial(len(variables)) for t in texts]
    return PolySystem(tuple(variables), tuple(comps))


def _as_point(x, n, what="point"):
    x = np.asarray(x, dtype=float).ravel()
    if x.size != n:
        raise DimensionError(f"{what} has {x.size} entries, expected {n}")
    return x


class DerivativeTensor:
    """Symbolic k-th derivative of a system, evaluable at any point.

    Only the partial derivatives for sorted index tuples are formed; the full
    ``m x n^k`` array is filled by symmetry.  Evaluation is a single
    matrix-vector product against the monomials that occur.
    """

    def __init__(self, system: PolySystem, order: int, partials: dict):
        self.system = system
        self.order = order
        self.n = system.n
        self.m = system.m
        self.multisets = list(itertools.combinations_with_replacement(range(self.n), order))
        self.partials = partials  # {(component, multiset): Polynomial}
        monos: dict = {}
        rows, cols, vals = [], [], []
        q = len(self.multisets)
        for ci in range(self.m):
            for qi, ms in enumerate(self.multisets):
                for mono, c in partials[(ci, ms)].terms.items():
                    col = monos.setdefault(mono, len(monos))
                    rows.append(ci * q + qi)
                    cols.append(col)
                    vals.append(float(c))
        self._exps = np.array(list(monos.keys()), dtype=np.int64).reshape(len(monos), self.n)
        coef = np.zeros((self.m * q, len(monos)))
        np.add.at(coef, (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)), vals)
        self._coef = coef
        position = {ms: i for i, ms in enumerate(self.multisets)}
        full = [position[tuple(sorted(idx))] for idx in itertools.product(range(self.n), repeat=order)]
        self._scatter = np.array(full, dtype=np.int64)

    def partial(self, component: int, indices: Iterable[int]) -> Polynomial:
        return self.partials[(component, tuple(sorted(indices)))]

    def at(self, x) -> np.ndarray:
        """Dense symmetric array of shape ``(m,) + (n,) * order``."""
        x = _as_point(x, self.n)
        q = len(self.multisets)
        if self._exps.shape[0]:
            mono = np.prod(x[None, :] ** self._exps, axis=1)
            vals = (self._coef @ mono).reshape(self.m, q)
        else:
            vals = np.zeros((self.m, q))
        return vals[:, self._scatter].reshape((self.m,) + (self.n,) * self.order)

    def contract(self, x, h, copies: int) -> np.ndarray:
        return contract_tensor(self.at(x), h, copies)


def contract_tensor(tensor: np.ndarray, h, copies: int) -> np.ndarray:
    """Contract the last ``copies`` slots of ``tensor`` with ``h``."""
    order = tensor.ndim - 1
    if not 0 <= copies <= order:
        raise ValueError(f"cannot contract {copies} slots of an order-{order} tensor")
    h = np.asarray(h, dtype=float).ravel()
    if order and h.size != tensor.shape[-1]:
        raise DimensionError(f"direction has {h.size} entries, expected {tensor.shape[-1]}")
    out = tensor
    for _ in range(copies):
        out = out @ h
    return out


class _PartialCache:
    """Thread-safe memo of partial derivatives, built order by order."""

    def __init__(self, system):
        self.system = system
        self._lock = threading.Lock()
        self._orders = {0: {(ci, ()): c for ci, c in enumerate(system.components)}}

    def get(self, order):
        with self._lock:
            for k in range(1, order + 1):
                if k in self._orders:
                    continue
                prev = self._orders[k - 1]
                cur = {}
                for ci in range(self.system.m):
                    for ms in itertools.combinations_with_replacement(range(self.system.n), k):
                        cur[(ci, ms)] = prev[(ci, ms[:-1])].diff(ms[-1])
                self._orders[k] = cur
            return self._orders[order]


def differentiate(system: PolySystem, order: int, max_order: int = DEFAULT_MAX_ORDER,
                  _cache: _PartialCache | None = None) -> DerivativeTensor:
    """Symbolic derivative tensor of the requested order."""
    if order < 1:
        raise OrderError(f"derivative order must be >= 1, got {order}")
    if order > max_order:
        raise OrderError(f"derivative order {order} exceeds the configured maximum {max_order}")
    cache = _cache or _PartialCache(system)
    return DerivativeTensor(system, order, cache.get(order))


def eval_contraction(system: PolySystem, order: int, x, h, copies: int,
                     max_order: int = DEFAULT_MAX_ORDER) -> np.ndarray:
    """``F^(order)(x)[h]^copies``: a vector when ``copies == order``, an
    ``m x n`` matrix when ``copies == order - 1``."""
    if not 1 <= copies <= order:
        raise ValueError(f"copies must satisfy 1 <= copies <= order, got {copies}")
    x = _as_point(x, system.n)
    h = _as_point(h, system.n, "direction")
    return differentiate(system, order, max_order).contract(x, h, copies)
