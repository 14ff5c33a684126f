"""Surface definition language: parser, expression AD, builtin immersions.

A surface file has the form::

    surface NAME {
      n = 2; m = 1;
      params = [u1, u2, u3];
      chart = [[-0.4, 0.5], [-0.4, 0.5], [-0.3, 0.6]];
    }
    x[1] = u1;          # one assignment per ambient coordinate
    y[1] = u2;
    t = u3;

Whitespace-insensitive, ``#`` comments.  Expressions support + - * / ^
(integer powers), unary minus, sin, cos, exp, ln, sqrt and the constant pi.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import (DomainError, DslDimensionMismatch, DslSyntaxError, NotImmersed,
                     OutOfChart, UndeclaredParameter, UnknownBuiltin)
from .jets import Jet

__all__ = ["Expr", "Immersion", "BlackBoxImmersion", "parse", "pretty_print",
           "builtin", "parse_surface_spec", "Jet2"]


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------

class Expr:
    __slots__ = ()

    def __add__(self, other):
        return _fold_add(self, _as_expr(other))

    def __sub__(self, other):
        return _fold_sub(self, _as_expr(other))

    def __mul__(self, other):
        return _fold_mul(self, _as_expr(other))

    def __neg__(self):
        return _fold_neg(self)

    def __pow__(self, k):
        return powi(self, k)

    def __truediv__(self, other):
        return Bin("/", self, _as_expr(other))


@dataclass(frozen=True)
class Num(Expr):
    __slots__ = ("v",)
    v: float

    def eval(self, env):
        return self.v


@dataclass(frozen=True)
class Pi(Expr):
    __slots__ = ()

    def eval(self, env):
        return math.pi


@dataclass(frozen=True)
class Param(Expr):
    __slots__ = ("name",)
    name: str

    def eval(self, env):
        return env[self.name]


@dataclass(frozen=True)
class Bin(Expr):
    __slots__ = ("op", "a", "b")
    op: str
    a: Expr
    b: Expr

    def eval(self, env):
        a = self.a.eval(env)
        b = self.b.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return _div(a, b)


@dataclass(frozen=True)
class Pow(Expr):
    __slots__ = ("base", "k")
    base: Expr
    k: int

    def eval(self, env):
        return self.base.eval(env) ** self.k


@dataclass(frozen=True)
class Neg(Expr):
    __slots__ = ("a",)
    a: Expr

    def eval(self, env):
        return -self.a.eval(env)


@dataclass(frozen=True)
class Fun(Expr):
    __slots__ = ("name", "arg")
    name: str
    arg: Expr

    def eval(self, env):
        x = self.arg.eval(env)
        return _FUNCS[self.name](x)


def _div(a, b):
    if isinstance(b, Jet):
        return a / b
    b = np.asarray(b)
    if np.any(np.abs(b) < 1e-300):
        raise DomainError("division by zero")
    return a / b


def _guard_pos(x, what):
    v = x.value if isinstance(x, Jet) else np.asarray(x)
    if np.any(np.real(v) <= 0):
        raise DomainError(f"{what} of non-positive argument")


def _sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def _cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def _exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def _ln(x):
    _guard_pos(x, "ln")
    return x.log() if isinstance(x, Jet) else np.log(x)


def _sqrt(x):
    _guard_pos(x, "sqrt")
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


_FUNCS = {"sin": _sin, "cos": _cos, "exp": _exp, "ln": _ln, "sqrt": _sqrt}


# light constant folding keeps generated builtin sources readable
def _as_expr(x):
    if isinstance(x, Expr):
        return x
    return Num(float(x))


def _is_zero(e):
    return isinstance(e, Num) and e.v == 0.0


def _is_one(e):
    return isinstance(e, Num) and e.v == 1.0


def _fold_add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v + b.v)
    return Bin("+", a, b)


def _fold_sub(a, b):
    if _is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v - b.v)
    if _is_zero(a):
        return _fold_neg(b)
    return Bin("-", a, b)


def _fold_mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return Num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v * b.v)
    return Bin("*", a, b)


def _fold_neg(a):
    if isinstance(a, Num):
        return Num(-a.v)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def num(v) -> Expr:
    return Num(float(v))


def param(name) -> Expr:
    return Param(name)


def fun(name, arg) -> Expr:
    return Fun(name, arg)


def powi(base, k) -> Expr:
    if k == 0:
        return Num(1.0)
    if k == 1:
        return base
    return Pow(base, int(k))


class CExpr:
    """Complex-valued expression pair, for building holomorphic formulas."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        self.re = _as_expr(re)
        self.im = _as_expr(im if im is not None else 0.0)

    def __add__(self, o):
        o = _as_cexpr(o)
        return CExpr(self.re + o.re, self.im + o.im)

    def __sub__(self, o):
        o = _as_cexpr(o)
        return CExpr(self.re - o.re, self.im - o.im)

    def __mul__(self, o):
        o = _as_cexpr(o)
        return CExpr(self.re * o.re - self.im * o.im,
                     self.re * o.im + self.im * o.re)

    __radd__ = __add__
    __rmul__ = __mul__

    def __pow__(self, k):
        out = CExpr(1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def conj(self):
        return CExpr(self.re, -self.im)

    def abs2(self) -> Expr:
        return self.re * self.re + self.im * self.im


def _as_cexpr(x):
    if isinstance(x, CExpr):
        return x
    if isinstance(x, complex):
        return CExpr(x.real, x.imag)
    return CExpr(x)


# ---------------------------------------------------------------------------
# pretty printing
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 10, 20, 15, 30, 40


def _prec(e) -> int:
    if isinstance(e, Bin):
        return _PREC_ADD if e.op in "+-" else _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Num) and e.v < 0:
        return _PREC_NEG
    return _PREC_ATOM


def expr_to_text(e) -> str:
    if isinstance(e, Num):
        return repr(e.v)
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Fun):
        return f"{e.name}({expr_to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = expr_to_text(e.a)
        # parenthesise anything below power precedence so that "-" never
        # rebinds to a subfactor on reparse
        if _prec(e.a) < _PREC_POW:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = expr_to_text(e.base)
        if _prec(e.base) < _PREC_ATOM:
            base = f"({base})"
        return f"{base}^{e.k}"
    if isinstance(e, Bin):
        a, b = expr_to_text(e.a), expr_to_text(e.b)
        mine = _prec(e)
        if _prec(e.a) < mine:
            a = f"({a})"
        right_needs = _prec(e.b) < mine or (e.op in "-/" and _prec(e.b) == mine)
        if right_needs:
            b = f"({b})"
        return f"{a} {e.op} {b}"
    raise TypeError(f"unknown expression node {e!r}")


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Tok:
    kind: str   # NUMBER | IDENT | SYM | EOF
    text: str
    line: int
    col: int


_NUMBER_RE = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_SYMBOLS = set("{}[]()=,;+-*/^")


def _tokenize(text: str):
    toks = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            toks.append(_Tok("NUMBER", m.group(0), line, col))
            col += m.end() - i
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            toks.append(_Tok("IDENT", m.group(0), line, col))
            col += m.end() - i
            i = m.end()
            continue
        if ch in _SYMBOLS:
            toks.append(_Tok("SYM", ch, line, col))
            i += 1
            col += 1
            continue
        raise DslSyntaxError(f"unexpected character {ch!r}", line, col)
    toks.append(_Tok("EOF", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect_sym(self, s) -> _Tok:
        t = self.next()
        if t.kind != "SYM" or t.text != s:
            raise DslSyntaxError(f"expected '{s}', found {t.text!r}", t.line, t.col)
        return t

    def expect_ident(self, name=None) -> _Tok:
        t = self.next()
        if t.kind != "IDENT" or (name is not None and t.text != name):
            want = f"'{name}'" if name else "an identifier"
            raise DslSyntaxError(f"expected {want}, found {t.text!r}", t.line, t.col)
        return t

    def expect_number(self) -> tuple[float, _Tok]:
        neg = False
        t = self.peek()
        if t.kind == "SYM" and t.text == "-":
            self.next()
            neg = True
        t = self.next()
        if t.kind != "NUMBER":
            raise DslSyntaxError(f"expected a number, found {t.text!r}", t.line, t.col)
        v = float(t.text)
        return (-v if neg else v), t

    def expect_int(self) -> tuple[int, _Tok]:
        v, t = self.expect_number()
        if v != int(v):
            raise DslSyntaxError(f"expected an integer, found {t.text!r}", t.line, t.col)
        return int(v), t

    # expression grammar ------------------------------------------------

    def parse_expr(self, params) -> Expr:
        e = self.parse_term(params)
        while self.peek().kind == "SYM" and self.peek().text in "+-":
            op = self.next().text
            e = Bin(op, e, self.parse_term(params))
        return e

    def parse_term(self, params) -> Expr:
        e = self.parse_unary(params)
        while self.peek().kind == "SYM" and self.peek().text in "*/":
            op = self.next().text
            e = Bin(op, e, self.parse_unary(params))
        return e

    def parse_unary(self, params) -> Expr:
        t = self.peek()
        if t.kind == "SYM" and t.text == "-":
            self.next()
            return Neg(self.parse_unary(params))
        return self.parse_power(params)

    def parse_power(self, params) -> Expr:
        base = self.parse_atom(params)
        if self.peek().kind == "SYM" and self.peek().text == "^":
            self.next()
            k, t = self.expect_int()
            if k < 0:
                raise DslSyntaxError("negative powers are not allowed; use division",
                                     t.line, t.col)
            return Pow(base, k)
        return base

    def parse_atom(self, params) -> Expr:
        t = self.next()
        if t.kind == "NUMBER":
            return Num(float(t.text))
        if t.kind == "SYM" and t.text == "(":
            e = self.parse_expr(params)
            self.expect_sym(")")
            return e
        if t.kind == "IDENT":
            if self.peek().kind == "SYM" and self.peek().text == "(":
                if t.text not in _FUNCS:
                    raise DslSyntaxError(f"unknown function {t.text!r}", t.line, t.col)
                self.next()
                arg = self.parse_expr(params)
                self.expect_sym(")")
                return Fun(t.text, arg)
            if t.text == "pi":
                return Pi()
            if t.text not in params:
                raise UndeclaredParameter(f"undeclared parameter {t.text!r}",
                                          t.line, t.col)
            return Param(t.text)
        raise DslSyntaxError(f"expected an expression, found {t.text!r}", t.line, t.col)


def parse(text: str) -> "Immersion":
    """Parse a surface file into an Immersion."""
    p = _Parser(text)
    p.expect_ident("surface")
    name = p.expect_ident().text
    p.expect_sym("{")

    n = m = None
    params = None
    chart = None
    params_tok = chart_tok = None
    while not (p.peek().kind == "SYM" and p.peek().text == "}"):
        key = p.expect_ident()
        p.expect_sym("=")
        if key.text == "n":
            n, _ = p.expect_int()
        elif key.text == "m":
            m, _ = p.expect_int()
        elif key.text == "params":
            params_tok = key
            p.expect_sym("[")
            params = []
            while True:
                params.append(p.expect_ident().text)
                if p.peek().kind == "SYM" and p.peek().text == ",":
                    p.next()
                    continue
                break
            p.expect_sym("]")
        elif key.text == "chart":
            chart_tok = key
            p.expect_sym("[")
            chart = []
            while True:
                p.expect_sym("[")
                lo, _ = p.expect_number()
                p.expect_sym(",")
                hi, tok = p.expect_number()
                if not lo < hi:
                    raise DslDimensionMismatch("chart interval needs lo < hi",
                                               tok.line, tok.col)
                p.expect_sym("]")
                chart.append((lo, hi))
                if p.peek().kind == "SYM" and p.peek().text == ",":
                    p.next()
                    continue
                break
            p.expect_sym("]")
        else:
            raise DslSyntaxError(f"unknown header field {key.text!r}", key.line, key.col)
        p.expect_sym(";")
    p.expect_sym("}")

    hdr = p.peek()
    if n is None or m is None or params is None or chart is None:
        raise DslSyntaxError("header must define n, m, params and chart",
                             hdr.line, hdr.col)
    if n < 1 or m < 1 or m > n:
        raise DslDimensionMismatch(f"need 1 <= m <= n, got n={n}, m={m}",
                                   hdr.line, hdr.col)
    if len(params) != 2 * m + 1:
        raise DslDimensionMismatch(
            f"expected {2 * m + 1} parameters for m={m}, got {len(params)}",
            params_tok.line, params_tok.col)
    if len(set(params)) != len(params):
        raise DslDimensionMismatch("duplicate parameter name",
                                   params_tok.line, params_tok.col)
    if len(chart) != len(params):
        raise DslDimensionMismatch(
            f"chart needs one interval per parameter ({len(params)}), got {len(chart)}",
            chart_tok.line, chart_tok.col)

    pset = set(params)
    coords: dict = {}
    while p.peek().kind != "EOF":
        head = p.expect_ident()
        if head.text in ("x", "y"):
            p.expect_sym("[")
            idx, itok = p.expect_int()
            if not 1 <= idx <= n:
                raise DslDimensionMismatch(f"index {idx} out of range 1..{n}",
                                           itok.line, itok.col)
            p.expect_sym("]")
            key = (head.text, idx)
        elif head.text == "t":
            key = ("t", 0)
        else:
            raise DslSyntaxError(f"expected a coordinate assignment, found {head.text!r}",
                                 head.line, head.col)
        if key in coords:
            raise DslSyntaxError(f"coordinate {head.text} assigned twice",
                                 head.line, head.col)
        p.expect_sym("=")
        coords[key] = p.parse_expr(pset)
        p.expect_sym(";")

    eof = p.peek()
    missing = ([("x", b) for b in range(1, n + 1) if ("x", b) not in coords]
               + [("y", b) for b in range(1, n + 1) if ("y", b) not in coords]
               + ([] if ("t", 0) in coords else [("t", 0)]))
    if missing:
        what = ", ".join(f"{k}[{b}]" if k != "t" else "t" for k, b in missing)
        raise DslDimensionMismatch(f"missing coordinate assignments: {what}",
                                   eof.line, eof.col)

    exprs = ([coords[("x", b)] for b in range(1, n + 1)]
             + [coords[("y", b)] for b in range(1, n + 1)] + [coords[("t", 0)]])
    return Immersion(name, n, m, params, chart, exprs)


def pretty_print(imm: "Immersion") -> str:
    lines = [f"surface {imm.label} {{",
             f"  n = {imm.n}; m = {imm.m};",
             "  params = [" + ", ".join(imm.params) + "];",
             "  chart = [" + ", ".join(f"[{repr(lo)}, {repr(hi)}]"
                                       for lo, hi in imm.chart) + "];",
             "}"]
    n = imm.n
    for b in range(1, n + 1):
        lines.append(f"x[{b}] = {expr_to_text(imm.coord_exprs[b - 1])};")
    for b in range(1, n + 1):
        lines.append(f"y[{b}] = {expr_to_text(imm.coord_exprs[n + b - 1])};")
    lines.append(f"t = {expr_to_text(imm.coord_exprs[2 * n])};")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# immersions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet2:
    """Second-order pointwise jet of an immersion at one chart point."""

    value: np.ndarray      # ambient coordinates (2n+1,)
    d1: np.ndarray         # first derivatives, shape (nparams, 2n+1)
    d2: np.ndarray         # second derivatives, shape (nparams, nparams, 2n+1)


class Immersion:
    """A parametrized map from a chart box in R^{2m+1} into H_n."""

    def __init__(self, label, n, m, params, chart, coord_exprs):
        if len(coord_exprs) != 2 * n + 1:
            raise DslDimensionMismatch(f"need {2 * n + 1} coordinate expressions")
        if len(params) != 2 * m + 1 or len(chart) != 2 * m + 1:
            raise DslDimensionMismatch(f"need {2 * m + 1} parameters and intervals")
        self.label = label
        self.n = n
        self.m = m
        self.params = list(params)
        self.chart = [(float(lo), float(hi)) for lo, hi in chart]
        self.coord_exprs = list(coord_exprs)

    @property
    def nparams(self) -> int:
        return 2 * self.m + 1

    def source(self) -> str:
        return pretty_print(self)

    def contains(self, u, slack=1e-12) -> bool:
        return all(lo - slack <= ui <= hi + slack
                   for ui, (lo, hi) in zip(u, self.chart))

    def values(self, u_arrays):
        env = dict(zip(self.params, [np.asarray(u, dtype=float) for u in u_arrays]))
        shape = np.broadcast_shapes(*[np.shape(v) for v in env.values()])
        out = []
        for e in self.coord_exprs:
            v = e.eval(env)
            out.append(np.broadcast_to(np.asarray(v, dtype=float), shape).copy())
        return out

    def jets(self, u_arrays, order=3, mode="ad", steps=None):
        """Taylor-expand every ambient coordinate at a batch of chart points."""
        if mode == "fd":
            return fd_jets(self.values, self.nparams, u_arrays, order, steps=steps)
        ctx = jets.context(self.nparams, order)
        seeds = jets.variables(ctx, [np.asarray(u, dtype=float) for u in u_arrays])
        env = dict(zip(self.params, seeds))
        shape = np.broadcast_shapes(*[np.shape(u) for u in u_arrays])
        out = []
        for e in self.coord_exprs:
            v = e.eval(env)
            if not isinstance(v, Jet):
                v = jets.constant(ctx, float(v), shape)
            out.append(v)
        return out

    def jet(self, u) -> Jet2:
        """Pointwise second-order jet; u must lie inside the chart box."""
        u = np.asarray(u, dtype=float)
        if not self.contains(u):
            raise OutOfChart(f"{u.tolist()} outside chart box of {self.label!r}")
        js = self.jets([np.atleast_1d(ui) for ui in u], order=2)
        d = self.nparams
        value = np.array([j.value[0] for j in js])
        d1 = np.array([[j.gradient()[i][0] for j in js] for i in range(d)])
        d2 = np.array([[[j.second(i, k)[0] for j in js] for k in range(d)]
                       for i in range(d)])
        return Jet2(value, d1, d2)

    def rank_check(self, grid_points, floor=1e-8):
        """Raise NotImmersed unless all Jacobian singular values clear the floor."""
        js = self.jets(grid_points, order=1)
        jac = np.stack([j.gradient() for j in js], axis=1)  # (d, 2n+1, batch...)
        jac = np.moveaxis(jac.reshape(jac.shape[0], jac.shape[1], -1), -1, 0)
        sv = np.linalg.svd(np.swapaxes(jac, 1, 2), compute_uv=False)
        worst = float(np.min(sv[:, self.nparams - 1]))
        if worst < floor:
            idx = int(np.argmin(sv[:, self.nparams - 1]))
            raise NotImmersed(
                f"Jacobian rank deficient (sigma_min {worst:.2e} < {floor:.0e}) "
                f"at flat grid index {idx}")
        return worst


class BlackBoxImmersion:
    """Immersion supplied as a callable; derivatives via central differences."""

    def __init__(self, label, n, m, chart, fn):
        self.label = label
        self.n = n
        self.m = m
        self.chart = [(float(lo), float(hi)) for lo, hi in chart]
        self.params = [f"u{i + 1}" for i in range(2 * m + 1)]
        self._fn = fn

    @property
    def nparams(self):
        return 2 * self.m + 1

    def contains(self, u, slack=1e-12):
        return all(lo - slack <= ui <= hi + slack
                   for ui, (lo, hi) in zip(u, self.chart))

    def values(self, u_arrays):
        out = self._fn([np.asarray(u, dtype=float) for u in u_arrays])
        return [np.asarray(c, dtype=float) for c in out]

    def jets(self, u_arrays, order=3, mode="fd", steps=None):
        return fd_jets(self.values, self.nparams, u_arrays, order, steps=steps)

    rank_check = Immersion.rank_check


def fd_jets(values_fn, d, u_arrays, order, steps=None):
    """Finite-difference Taylor coefficients (Richardson first derivatives).

    ``steps`` gives the per-axis displacement; accuracy is O(step^4) for first
    derivatives and O(step^2) for second and third ones, so downstream
    residual tolerances must be relaxed accordingly (documented factor 1e4
    against the AD pipeline).
    """
    u_arrays = [np.asarray(u, dtype=float) for u in u_arrays]
    if steps is None:
        steps = [1e-3] * d
    ctx = jets.context(d, order)
    cache = {}

    def ev(off):
        if off not in cache:
            pts = [u_arrays[i] + off[i] * steps[i] for i in range(d)]
            cache[off] = values_fn(pts)
        return cache[off]

    ncoords = len(ev((0,) * d))
    shape = np.broadcast_shapes(*[np.shape(u) for u in u_arrays])
    coeffs = [np.zeros((ctx.ncoeff,) + shape) for _ in range(ncoords)]

    def axis_off(i, k):
        off = [0] * d
        off[i] = k
        return tuple(off)

    def set_coeff(alpha, deriv_vals):
        fac = 1.0
        for a in alpha:
            fac *= math.factorial(a)
        k = ctx.index[tuple(alpha)]
        for c in range(ncoords):
            coeffs[c][k] = deriv_vals[c] / fac

    f0 = ev((0,) * d)
    for c in range(ncoords):
        coeffs[c][0] = f0[c]

    if order >= 1:
        for i in range(d):
            h = steps[i]
            p1, m1 = ev(axis_off(i, 1)), ev(axis_off(i, -1))
            p2, m2 = ev(axis_off(i, 2)), ev(axis_off(i, -2))
            alpha = [0] * d
            alpha[i] = 1
            set_coeff(alpha, [(8 * (p1[c] - m1[c]) - (p2[c] - m2[c])) / (12 * h)
                              for c in range(ncoords)])
    if order >= 2:
        for i in range(d):
            h = steps[i]
            p1, m1 = ev(axis_off(i, 1)), ev(axis_off(i, -1))
            p2, m2 = ev(axis_off(i, 2)), ev(axis_off(i, -2))
            alpha = [0] * d
            alpha[i] = 2
            set_coeff(alpha, [(-p2[c] + 16 * p1[c] - 30 * f0[c] + 16 * m1[c] - m2[c])
                              / (12 * h * h) for c in range(ncoords)])
        for i in range(d):
            for j in range(i + 1, d):
                hi, hj = steps[i], steps[j]

                def two(si, sj):
                    off = [0] * d
                    off[i], off[j] = si, sj
                    return ev(tuple(off))

                def cross(scale):
                    pp, mm = two(scale, scale), two(-scale, -scale)
                    pm, mp = two(scale, -scale), two(-scale, scale)
                    return [(pp[c] + mm[c] - pm[c] - mp[c])
                            / (4 * scale * scale * hi * hj)
                            for c in range(ncoords)]

                c1, c2 = cross(1), cross(2)   # Richardson: O(step^4)
                alpha = [0] * d
                alpha[i] += 1
                alpha[j] += 1
                set_coeff(alpha, [(4 * c1[c] - c2[c]) / 3.0
                                  for c in range(ncoords)])
    if order >= 3:
        for i in range(d):
            h = steps[i]
            p1, m1 = ev(axis_off(i, 1)), ev(axis_off(i, -1))
            p2, m2 = ev(axis_off(i, 2)), ev(axis_off(i, -2))
            alpha = [0] * d
            alpha[i] = 3
            set_coeff(alpha, [(p2[c] - 2 * p1[c] + 2 * m1[c] - m2[c]) / (2 * h ** 3)
                              for c in range(ncoords)])
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                hi, hj = steps[i], steps[j]

                def two(si, sj):
                    off = [0] * d
                    off[i], off[j] = si, sj
                    return ev(tuple(off))

                alpha = [0] * d
                alpha[i] += 2
                alpha[j] += 1
                if alpha[i] + alpha[j] > order:
                    continue
                vals = []
                for c in range(ncoords):
                    top = two(1, 1)[c] - 2 * ev(axis_off(j, 1))[c] + two(-1, 1)[c]
                    bot = two(1, -1)[c] - 2 * ev(axis_off(j, -1))[c] + two(-1, -1)[c]
                    vals.append((top - bot) / (2 * hi * hi * hj))
                set_coeff(alpha, vals)
        for i in range(d):
            for j in range(i + 1, d):
                for k in range(j + 1, d):
                    hi, hj, hk = steps[i], steps[j], steps[k]

                    def three(si, sj, sk):
                        off = [0] * d
                        off[i], off[j], off[k] = si, sj, sk
                        return ev(tuple(off))

                    vals = []
                    for c in range(ncoords):
                        acc = 0.0
                        for si in (1, -1):
                            for sj in (1, -1):
                                for sk in (1, -1):
                                    acc = acc + si * sj * sk * three(si, sj, sk)[c]
                        vals.append(acc / (8 * hi * hj * hk))
                    alpha = [0] * d
                    alpha[i], alpha[j], alpha[k] = 1, 1, 1
                    set_coeff(alpha, vals)

    return [Jet(ctx, c) for c in coeffs]

# ---------------------------------------------------------------------------
# builtin surfaces
# ---------------------------------------------------------------------------

def heis_sub(m: int, n: int) -> Immersion:
    """The subgroup {z_{m+1} = ... = z_n = 0}, charted by its own coordinates."""
    if not 1 <= m <= n:
        raise UnknownBuiltin(f"heis_sub needs 1 <= m <= n, got ({m}, {n})")
    params = [f"u{i + 1}" for i in range(2 * m + 1)]
    chart = [(-0.45, 0.55)] * (2 * m + 1)
    zero = num(0.0)
    xs = [param(params[b]) if b < m else zero for b in range(n)]
    ys = [param(params[m + b]) if b < m else zero for b in range(n)]
    return Immersion("heis_sub", n, m, params, chart, xs + ys + [param(params[2 * m])])


def sphere(n: int, r: float) -> Immersion:
    """Round sphere {(z, 0): |z| = r}, charted by nested polar angles."""
    if n < 2 or r <= 0:
        raise UnknownBuiltin(f"sphere needs n >= 2 and r > 0, got ({n}, {r})")
    params = [f"u{i + 1}" for i in range(2 * n - 1)]
    chart = [(0.5, 1.0)] * (n - 1) + [(0.15 + 0.07 * k, 0.85 + 0.07 * k)
                                      for k in range(n)]
    polar = [param(params[i]) for i in range(n - 1)]
    azim = [param(params[n - 1 + k]) for k in range(n)]
    xs, ys = [], []
    for k in range(n):
        mag = num(r)
        for i in range(k):
            mag = mag * fun("sin", polar[i])
        if k < n - 1:
            mag = mag * fun("cos", polar[k])
        xs.append(mag * fun("cos", azim[k]))
        ys.append(mag * fun("sin", azim[k]))
    return Immersion("sphere", n, m := n - 1, params, chart, xs + ys + [num(0.0)])


def _graph_params(n, m):
    params = [f"u{i + 1}" for i in range(2 * m + 1)]
    chart = ([(0.35 + 0.05 * j, 0.95 + 0.05 * j) for j in range(m)]
             + [(-0.2 - 0.05 * j, 0.6 - 0.05 * j) for j in range(m)]
             + [(-0.4, 0.6)])
    zs = [CExpr(param(params[j]), param(params[m + j])) for j in range(m)]
    return params, chart, zs


def _poly_eval(terms: dict, zs) -> CExpr:
    """Evaluate sum c * z^alpha for a dict {exponent tuple: complex coeff}."""
    acc = CExpr(0.0)
    for alpha, coeff in sorted(terms.items()):
        mono = _as_cexpr(complex(coeff))
        for j, e in enumerate(alpha):
            mono = mono * zs[j] ** e
        acc = acc + mono
    return acc


def holograph(degree: int = 2, n: int = 2, m: int = 1, polys=None,
              label="holograph") -> Immersion:
    """Vertical graph {(z, F(z), t)} with holomorphic polynomial F.

    Default is z_2 = z_1^2 in H_2.  ``polys`` may supply one coefficient dict
    per normal coordinate to override the monomial default.
    """
    if not 1 <= m < n:
        raise UnknownBuiltin(f"holograph needs 1 <= m < n, got ({n}, {m})")
    if polys is None:
        if degree < 2:
            raise UnknownBuiltin("holograph degree must be >= 2")
        mono = tuple([degree] + [0] * (m - 1))
        polys = [{mono: 1.0 + 0.0j} for _ in range(n - m)]
    params, chart, zs = _graph_params(n, m)
    fs = [_poly_eval(p, zs) for p in polys]
    xs = [param(params[j]) for j in range(m)] + [f.re for f in fs]
    ys = [param(params[m + j]) for j in range(m)] + [f.im for f in fs]
    return Immersion(label, n, m, params, chart, xs + ys + [param(params[2 * m])])


def holomorphic_section(n, m, polys, couplings, label) -> Immersion:
    """Intersection of the group with the holomorphic graphs z_a = F_a(z') + c_a w.

    Here w = 2t + i|z|^2 is the Siegel-model fibre coordinate; the chart is
    (Re z', Im z', Re w) and Im w is recovered from the defining constraint by
    solving a quadratic (closed form, stable as the couplings vanish).
    Nonzero couplings make the surface completely non-vertical and, combined
    with curvature of the F_a, give it nonvanishing pseudohermitian torsion.
    """
    if not 1 <= m < n:
        raise UnknownBuiltin(f"holomorphic_section needs 1 <= m < n")
    params, chart, zs = _graph_params(n, m)
    v = param(params[2 * m])
    fs = [_poly_eval(p, zs) for p in polys]
    cs = [float(c) for c in couplings]
    # Im w solves  A h^2 + B h + C = 0 with the root that is smooth in the couplings
    A = num(sum(c * c for c in cs))
    B = num(-1.0)
    C = Num(0.0)
    for j in range(m):
        C = C + zs[j].abs2()
    for f, c in zip(fs, cs):
        B = B + num(2.0 * c) * f.im
        C = C + (f.re + num(c) * v) ** 2 + f.im * f.im
    C = _as_expr(C)
    h = Bin("/", num(2.0) * C,
            _fold_neg(B) + fun("sqrt", B * B - num(4.0) * A * C))
    xs = [param(params[j]) for j in range(m)]
    ys = [param(params[m + j]) for j in range(m)]
    for f, c in zip(fs, cs):
        xs.append(f.re + num(c) * v)
        ys.append(f.im + num(c) * h)
    t = Bin("/", v, num(2.0))
    return Immersion(label, n, m, params, chart, xs + ys + [t])


def ellipsoid(n: int, *axes: float) -> Immersion:
    """Anisotropic deformation family addressed by axis-like parameters.

    The coordinate set {sum |z_b|^2 / a_b^2 = 1, t = 0} fails to be a
    pseudohermitian submanifold for unequal axes (its contact intersection is
    not J-invariant), so this builtin realizes the anisotropy as a
    holomorphic-section deformation instead: z_n = q (z_1^2+..+z_m^2) + c w
    with q, c derived from the axis ratios.  Unequal axes yield a completely
    non-vertical surface with nonvanishing torsion; equal axes degenerate to
    the vertical subgroup {z_n = 0}.
    """
    if len(axes) != n or n < 2:
        raise UnknownBuiltin(f"ellipsoid needs n >= 2 axis lengths, got {axes}")
    if any(a <= 0 for a in axes):
        raise UnknownBuiltin("ellipsoid axes must be positive")
    m = n - 1
    base = float(np.mean(axes[:m]))
    q = float(axes[-1]) - base
    c = (float(axes[-1]) - base) / (float(axes[-1]) + base)
    poly = {tuple(2 if j == k else 0 for j in range(m)): q + 0.0j for k in range(m)}
    return holomorphic_section(n, m, [poly], [c], "ellipsoid")


def mixed_verticality_example() -> Immersion:
    """Holomorphic-section surface whose verticality changes across the chart.

    Uses z_2 = c z_1 w; the factor z_1 kills the fibre coupling along
    {z_1 = 0}, where the surface contains vertical lines.
    """
    c = 0.35
    params = ["u1", "u2", "u3"]
    # symmetric boxes put lattice points exactly on the vertical locus z_1 = 0
    chart = [(-0.5, 0.5), (-0.4, 0.4), (-0.4, 0.6)]
    z1 = CExpr(param("u1"), param("u2"))
    v = param("u3")
    r2 = z1.abs2()
    A = num(c * c) * r2
    C = r2 + num(c * c) * r2 * v * v
    h = Bin("/", num(2.0) * C,
            num(1.0) + fun("sqrt", num(1.0) - num(4.0) * A * C))
    w = CExpr(v, h)
    z2 = CExpr(num(c)) * z1 * w
    return Immersion("mixed_example", 2, 1, params, chart,
                     [param("u1"), z2.re, param("u2"), z2.im,
                      Bin("/", v, num(2.0))])


def coordinate_slice_plane() -> Immersion:
    """The 3-plane {(x1, y1, x2, 0, 0)}: singular on {x1 = y1 = 0}, and not
    CR-invariant at its regular points.  Used as a negative control."""
    params = ["u1", "u2", "u3"]
    chart = [(-0.5, 0.5)] * 3
    return Immersion("slice_plane", 2, 1, params, chart,
                     [param("u1"), param("u3"), param("u2"), num(0.0), num(0.0)])


_BUILTIN_ARITY = {"heis_sub": (2, 2), "sphere": (2, 2), "holograph": (0, 1),
                  "ellipsoid": (3, None)}


def builtin(name: str, *args) -> Immersion:
    """Construct one of the named builtin surfaces."""
    if name == "heis_sub":
        return heis_sub(int(args[0]), int(args[1]))
    if name == "sphere":
        return sphere(int(args[0]), float(args[1]))
    if name == "holograph":
        return holograph(int(args[0])) if args else holograph()
    if name == "ellipsoid":
        return ellipsoid(int(args[0]), *[float(a) for a in args[1:]])
    raise UnknownBuiltin(f"unknown builtin surface {name!r}")


_SPEC_RE = re.compile(r"^builtin:([A-Za-z_][A-Za-z_0-9]*)\((.*)\)$")


def parse_surface_spec(spec: str) -> Immersion:
    """Resolve 'builtin:name(args)' or a path to a surface file."""
    spec = spec.strip()
    m = _SPEC_RE.match(spec)
    if spec.startswith("builtin:") and m is None:
        raise UnknownBuiltin(f"malformed builtin spec {spec!r}; "
                             "expected builtin:name(arg, ...)")
    if m is not None:
        name = m.group(1)
        argtext = m.group(2).strip()
        args = []
        if argtext:
            for piece in argtext.split(","):
                piece = piece.strip()
                try:
                    args.append(float(piece))
                except ValueError:
                    raise UnknownBuiltin(f"bad builtin argument {piece!r} in {spec!r}")
        if name not in _BUILTIN_ARITY:
            raise UnknownBuiltin(f"unknown builtin surface {name!r}")
        lo, hi = _BUILTIN_ARITY[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise UnknownBuiltin(f"wrong number of arguments for {name!r}")
        return builtin(name, *args)
    with open(spec, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def transform_immersion(imm: Immersion, g) -> Immersion:
    """Compose an immersion with a rigid motion, keeping expressions exact.

    The motion acts affinely on ambient coordinates, so the new coordinate
    expressions are constant-coefficient combinations of the old ones and
    automatic differentiation stays exact.
    """
    n = imm.n
    mat = g.mat
    exprs = []
    for r in range(1, 2 * n + 2):
        e = num(mat[r, 0])
        for c in range(2 * n + 1):
            if mat[r, c + 1] != 0.0:
                e = e + num(mat[r, c + 1]) * imm.coord_exprs[c]
        exprs.append(e)
    return Immersion(imm.label + "_moved", n, imm.m, imm.params, imm.chart, exprs)
