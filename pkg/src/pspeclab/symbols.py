"""Phase-space symbol expressions p(x1..xn, xi1..xin).

Grammar (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = factor { ("*" | "/") factor } ;
    factor   = [ "+" | "-" ] power ;
    power    = atom [ "^" integer ] ;
    atom     = number | variable | "exp" "(" expr ")" | "(" expr ")" ;
    variable = ("x" | "xi") index ;          index in 1..n
    number   = digits ["." digits] [("e"|"E") ["+"|"-"] digits] ["i"] ;

A trailing ``i`` marks an imaginary literal, e.g. ``1i``, ``2.5e-3i``.
Exponents are unsigned integer literals; negative powers are written
with a division.  Phase-space points are ordered ``(x1..xn, xi1..xin)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonFiniteError,
    NotPolynomialError,
    SymbolSyntaxError,
    VariableIndexError,
)

__all__ = [
    "SymbolExpr",
    "PolySymbol",
    "parse_symbol",
    "symbol_from_poly",
]


# ---------------------------------------------------------------------------
# expression nodes

class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Node):
    kind: str   # "x" or "xi"
    index: int  # 1-based


@dataclass(frozen=True)
class Const(Node):
    value: complex


@dataclass(frozen=True)
class BinOp(Node):
    op: str     # "+", "-", "*", "/"
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Neg(Node):
    child: Node


@dataclass(frozen=True)
class Exp(Node):
    child: Node


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_NUM = "num"
_TOKEN_NAME = "name"
_TOKEN_OP = "op"
_TOKEN_END = "end"


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((_TOKEN_OP, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            imag = j < n and text[j] == "i"
            lit = text[i:j]
            try:
                val = float(lit)
            except ValueError:
                raise SymbolSyntaxError(f"bad numeric literal '{lit}'", i)
            if imag:
                j += 1
                tokens.append((_TOKEN_NUM, complex(0.0, val), i))
            else:
                tokens.append((_TOKEN_NUM, complex(val, 0.0), i))
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and text[j].isalpha():
                j += 1
            name = text[i:j]
            k = j
            while k < n and text[k].isdigit():
                k += 1
            tokens.append((_TOKEN_NAME, (name, text[j:k]), i))
            i = k
            continue
        raise SymbolSyntaxError(f"unexpected character '{c}'", i)
    tokens.append((_TOKEN_END, None, n))
    return tokens


class _Parser:
    def __init__(self, tokens, n):
        self.tokens = tokens
        self.pos = 0
        self.n = n

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, val, at = self.peek()
        if kind != _TOKEN_OP or val != op:
            raise SymbolSyntaxError(f"expected '{op}'", at)
        self.advance()

    def parse_expr(self):
        node = self.parse_term()
        while True:
            kind, val, _ = self.peek()
            if kind == _TOKEN_OP and val in "+-":
                self.advance()
                right = self.parse_term()
                node = BinOp(val, node, right)
            else:
                return node

    def parse_term(self):
        node = self.parse_factor()
        while True:
            kind, val, _ = self.peek()
            if kind == _TOKEN_OP and val in "*/":
                self.advance()
                right = self.parse_factor()
                node = BinOp(val, node, right)
            else:
                return node

    def parse_factor(self):
        kind, val, _ = self.peek()
        if kind == _TOKEN_OP and val in "+-":
            self.advance()
            child = self.parse_factor()
            return child if val == "+" else Neg(child)
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        kind, val, at = self.peek()
        if kind == _TOKEN_OP and val == "^":
            self.advance()
            kind, val, at = self.advance()
            if kind != _TOKEN_NUM or val.imag != 0 or val.real != int(val.real):
                raise SymbolSyntaxError("exponent must be an integer literal", at)
            return Pow(base, int(val.real))
        return base

    def parse_atom(self):
        kind, val, at = self.advance()
        if kind == _TOKEN_NUM:
            return Const(val)
        if kind == _TOKEN_OP and val == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if kind == _TOKEN_NAME:
            name, digits = val
            if name == "exp":
                if digits:
                    raise SymbolSyntaxError("'exp' takes no index", at)
                self.expect_op("(")
                node = self.parse_expr()
                self.expect_op(")")
                return Exp(node)
            if name in ("x", "xi"):
                if not digits:
                    raise SymbolSyntaxError(f"variable '{name}' needs an index", at)
                idx = int(digits)
                if not 1 <= idx <= self.n:
                    raise VariableIndexError(
                        f"variable {name}{idx} out of range for dimension n={self.n}"
                    )
                return Var(name, idx)
            raise SymbolSyntaxError(f"unknown identifier '{name}{digits}'", at)
        raise SymbolSyntaxError("expected a number, variable or '('", at)


# ---------------------------------------------------------------------------
# public expression type

class SymbolExpr:
    """A parsed phase-space function p(x, xi) with complex constants.

    Points are arrays of length 2n ordered (x1..xn, xi1..xin).
    """

    def __init__(self, n: int, root: Node, text: str | None = None):
        self.n = int(n)
        self.root = root
        self._text = text

    # -- evaluation ---------------------------------------------------------

    def __call__(self, w):
        return self.eval(w)

    def eval(self, w) -> complex:
        """Evaluate at a single real phase-space point."""
        w = np.asarray(w, dtype=float)
        val = _eval_node(self.root, [np.asarray(c) for c in w])
        val = complex(val)
        if not (math.isfinite(val.real) and math.isfinite(val.imag)):
            raise NonFiniteError(f"symbol evaluated to non-finite value at {w}")
        return val

    def eval_grid(self, coords):
        """Vectorized evaluation.

        coords is a sequence of 2n broadcastable real arrays
        (x1..xn, xi1..xin).  Returns a complex array.
        """
        coords = [np.asarray(c, dtype=float) for c in coords]
        if len(coords) != 2 * self.n:
            raise ValueError(f"need {2 * self.n} coordinate arrays")
        out = _eval_node(self.root, coords)
        return np.asarray(out, dtype=complex) + np.zeros(np.broadcast_shapes(
            *[c.shape for c in coords]), dtype=complex)

    def eval_with_gradient(self, coords):
        """Vectorized value and gradient (2n component arrays)."""
        coords = [np.asarray(c, dtype=float) for c in coords]
        shape = np.broadcast_shapes(*[c.shape for c in coords])
        val, grad = _eval_node_grad(self.root, coords, len(coords), shape)
        return val, grad

    # -- serialization ------------------------------------------------------

    def to_string(self) -> str:
        return _node_to_string(self.root, 0)

    def __repr__(self):
        return f"SymbolExpr(n={self.n}, '{self.to_string()}')"

    # -- algebra helpers ----------------------------------------------------

    def __add__(self, other):
        other = _coerce(other, self.n)
        return SymbolExpr(self.n, BinOp("+", self.root, other.root))

    def __sub__(self, other):
        other = _coerce(other, self.n)
        return SymbolExpr(self.n, BinOp("-", self.root, other.root))

    def __mul__(self, other):
        other = _coerce(other, self.n)
        return SymbolExpr(self.n, BinOp("*", self.root, other.root))

    def polynomial_degree(self):
        """Total degree if the tree is polynomial, else None."""
        return _poly_degree(self.root)

    def to_poly(self) -> "PolySymbol":
        """Exact polynomial coefficients; raises NotPolynomialError."""
        deg = self.polynomial_degree()
        if deg is None:
            raise NotPolynomialError(f"'{self.to_string()}' is not polynomial")
        return _poly_from_node(self.root, self.n)


def _coerce(other, n):
    if isinstance(other, SymbolExpr):
        if other.n != n:
            raise ValueError("dimension mismatch")
        return other
    return SymbolExpr(n, Const(complex(other)))


def parse_symbol(text: str, n: int) -> SymbolExpr:
    """Parse an expression string over x1..xn, xi1..xin."""
    if n < 1:
        raise ValueError("dimension n must be a positive integer")
    tokens = _tokenize(text)
    parser = _Parser(tokens, n)
    root = parser.parse_expr()
    kind, _, at = parser.peek()
    if kind != _TOKEN_END:
        raise SymbolSyntaxError("trailing input", at)
    return SymbolExpr(n, root, text)


# ---------------------------------------------------------------------------
# evaluation internals

def _var_slot(node, n_coords):
    n = n_coords // 2
    return (node.index - 1) if node.kind == "x" else (n + node.index - 1)


def _eval_node(node, coords):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return coords[_var_slot(node, len(coords))]
    if isinstance(node, Neg):
        return -_eval_node(node.child, coords)
    if isinstance(node, Exp):
        return np.exp(_eval_node(node.child, coords))
    if isinstance(node, Pow):
        base = _eval_node(node.base, coords)
        return base ** node.exponent
    if isinstance(node, BinOp):
        a = _eval_node(node.left, coords)
        b = _eval_node(node.right, coords)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        with np.errstate(divide="raise", invalid="raise"):
            try:
                return a / b
            except FloatingPointError:
                raise NonFiniteError("division by zero in symbol evaluation")
    raise TypeError(f"unknown node {node!r}")


def _eval_node_grad(node, coords, m, shape):
    """Forward-mode value+gradient, vectorized over coordinate arrays."""
    zeros = np.zeros(shape, dtype=complex)
    if isinstance(node, Const):
        return node.value + zeros, [zeros.copy() for _ in range(m)]
    if isinstance(node, Var):
        slot = _var_slot(node, m)
        grad = [zeros.copy() for _ in range(m)]
        grad[slot] = np.ones(shape, dtype=complex)
        return coords[slot] + zeros, grad
    if isinstance(node, Neg):
        v, g = _eval_node_grad(node.child, coords, m, shape)
        return -v, [-gi for gi in g]
    if isinstance(node, Exp):
        v, g = _eval_node_grad(node.child, coords, m, shape)
        ev = np.exp(v)
        return ev, [ev * gi for gi in g]
    if isinstance(node, Pow):
        v, g = _eval_node_grad(node.base, coords, m, shape)
        k = node.exponent
        if k == 0:
            return np.ones(shape, dtype=complex), [zeros.copy() for _ in range(m)]
        vk1 = v ** (k - 1)
        return vk1 * v, [k * vk1 * gi for gi in g]
    if isinstance(node, BinOp):
        va, ga = _eval_node_grad(node.left, coords, m, shape)
        vb, gb = _eval_node_grad(node.right, coords, m, shape)
        if node.op == "+":
            return va + vb, [x + y for x, y in zip(ga, gb)]
        if node.op == "-":
            return va - vb, [x - y for x, y in zip(ga, gb)]
        if node.op == "*":
            return va * vb, [x * vb + va * y for x, y in zip(ga, gb)]
        inv = 1.0 / vb
        v = va * inv
        return v, [(x - v * y) * inv for x, y in zip(ga, gb)]
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# printing

def _fmt_complex(z: complex) -> str:
    re, im = z.real, z.imag
    if im == 0:
        return _fmt_float(re)
    if re == 0:
        return _fmt_float(im) + "i"
    sign = "+" if im >= 0 else "-"
    return f"({_fmt_float(re)}{sign}{_fmt_float(abs(im))}i)"


def _fmt_float(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


# precedence levels: 0 add, 1 mul, 2 unary, 3 power/atom
def _node_to_string(node, parent_level):
    if isinstance(node, Const):
        s = _fmt_complex(node.value)
        level = 3 if not s.startswith("-") else 2
    elif isinstance(node, Var):
        s = f"{node.kind}{node.index}"
        level = 3
    elif isinstance(node, Neg):
        s = "-" + _node_to_string(node.child, 2)
        level = 2
    elif isinstance(node, Exp):
        s = f"exp({_node_to_string(node.child, 0)})"
        level = 3
    elif isinstance(node, Pow):
        s = f"{_node_to_string(node.base, 3)}^{node.exponent}"
        level = 3
    elif isinstance(node, BinOp):
        if node.op in "+-":
            left = _node_to_string(node.left, 0)
            right = _node_to_string(node.right, 1)
            s, level = f"{left}{node.op}{right}", 0
        else:
            left = _node_to_string(node.left, 1)
            right = _node_to_string(node.right, 2)
            s, level = f"{left}{node.op}{right}", 1
    else:
        raise TypeError(f"unknown node {node!r}")
    if level < parent_level:
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# exact polynomial extraction

class PolySymbol:
    """Polynomial in 2n phase-space variables.

    Coefficients are stored in a dict keyed by exponent tuples of
    length 2n, ordered (x1..xn, xi1..xin).  Values are complex unless
    the caller feeds another coefficient ring (the Moyal product only
    uses ring operations, which keeps dyadic tests exact).
    """

    def __init__(self, n, coeffs=None):
        self.n = int(n)
        self.coeffs = dict(coeffs or {})

    @classmethod
    def constant(cls, n, value):
        return cls(n, {(0,) * (2 * n): value})

    @classmethod
    def variable(cls, n, slot):
        key = [0] * (2 * n)
        key[slot] = 1
        return cls(n, {tuple(key): 1.0 + 0.0j})

    def copy(self):
        return PolySymbol(self.n, dict(self.coeffs))

    def trim(self, tol=0.0):
        self.coeffs = {k: v for k, v in self.coeffs.items() if v != 0 and
                       (tol == 0.0 or abs(v) > tol)}
        return self

    def degree(self):
        return max((sum(k) for k in self.coeffs), default=0)

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return PolySymbol(self.n, out).trim()

    def __sub__(self, other):
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) - v
        return PolySymbol(self.n, out).trim()

    def __mul__(self, other):
        if not isinstance(other, PolySymbol):
            return self.scale(other)
        out = {}
        for ka, va in self.coeffs.items():
            for kb, vb in other.coeffs.items():
                k = tuple(a + b for a, b in zip(ka, kb))
                out[k] = out.get(k, 0) + va * vb
        return PolySymbol(self.n, out).trim()

    def scale(self, c):
        return PolySymbol(self.n, {k: v * c for k, v in self.coeffs.items()}).trim()

    def pow(self, k):
        out = PolySymbol.constant(self.n, 1.0 + 0.0j)
        for _ in range(k):
            out = out * self
        return out

    def divided_derivative(self, slot, order):
        """(1/order!) * d^order/dw_slot^order — integer recombination only."""
        out = {}
        for k, v in self.coeffs.items():
            a = k[slot]
            if a < order:
                continue
            kk = list(k)
            kk[slot] = a - order
            out[tuple(kk)] = out.get(tuple(kk), 0) + v * math.comb(a, order)
        return PolySymbol(self.n, out)

    def eval(self, w):
        w = np.asarray(w)
        total = 0
        for k, v in self.coeffs.items():
            term = v
            for slot, a in enumerate(k):
                if a:
                    term = term * w[slot] ** a
            total = total + term
        return total

    def __repr__(self):
        return f"PolySymbol(n={self.n}, {self.coeffs})"


def _poly_degree(node):
    """Total degree of a polynomial tree; None if non-polynomial."""
    if isinstance(node, Const):
        return 0
    if isinstance(node, Var):
        return 1
    if isinstance(node, Neg):
        return _poly_degree(node.child)
    if isinstance(node, Exp):
        return 0 if _poly_degree(node.child) == 0 else None
    if isinstance(node, Pow):
        d = _poly_degree(node.base)
        if d is None or node.exponent < 0:
            return None
        return d * node.exponent
    if isinstance(node, BinOp):
        a = _poly_degree(node.left)
        b = _poly_degree(node.right)
        if a is None or b is None:
            return None
        if node.op in "+-":
            return max(a, b)
        if node.op == "*":
            return a + b
        return a if b == 0 else None
    raise TypeError


def _poly_from_node(node, n):
    if isinstance(node, Const):
        return PolySymbol.constant(n, node.value)
    if isinstance(node, Var):
        slot = (node.index - 1) if node.kind == "x" else (n + node.index - 1)
        return PolySymbol.variable(n, slot)
    if isinstance(node, Neg):
        return _poly_from_node(node.child, n).scale(-1.0)
    if isinstance(node, Exp):
        arg = _poly_from_node(node.child, n)
        return PolySymbol.constant(n, np.exp(arg.coeffs.get((0,) * (2 * n), 0.0)))
    if isinstance(node, Pow):
        return _poly_from_node(node.base, n).pow(node.exponent)
    if isinstance(node, BinOp):
        a = _poly_from_node(node.left, n)
        b = _poly_from_node(node.right, n)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a.scale(1.0 / b.coeffs.get((0,) * (2 * n), 0.0))
    raise TypeError


def symbol_from_poly(poly: PolySymbol) -> SymbolExpr:
    """Rebuild a SymbolExpr from polynomial coefficients."""
    n = poly.n
    node = None
    for key in sorted(poly.coeffs):
        coeff = poly.coeffs[key]
        term: Node = Const(complex(coeff))
        for slot, a in enumerate(key):
            if a == 0:
                continue
            kind = "x" if slot < n else "xi"
            idx = slot + 1 if slot < n else slot - n + 1
            var: Node = Var(kind, idx) if a == 1 else Pow(Var(kind, idx), a)
            term = BinOp("*", term, var)
        node = term if node is None else BinOp("+", node, term)
    if node is None:
        node = Const(0.0 + 0.0j)
    return SymbolExpr(n, node)
