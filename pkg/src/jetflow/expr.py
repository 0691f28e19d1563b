"""Scalar expressions over named variables with exact first and second partials.

Expressions are parsed from a small ASCII infix grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' powarg)?          # right associative
    powarg := '-' powarg | power
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Derivatives are computed in forward mode.  Each AST is compiled once into
straight-line Python that propagates the value, the nonzero gradient entries
and the nonzero upper-triangle hessian entries through every node; entries
that are structurally zero are never materialised.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ArityError, DomainError, ExprSyntaxError, UnknownIdentifier

TIME, COORDINATE, VELOCITY, AUXILIARY = "time", "coordinate", "velocity", "auxiliary"
ROLES = (TIME, COORDINATE, VELOCITY, AUXILIARY)

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")


@dataclass(frozen=True)
class VariableSpace:
    names: tuple[str, ...]
    roles: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "roles", tuple(self.roles))
        if len(self.names) != len(self.roles):
            raise ValueError("names and roles differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names in {self.names}")
        for n in self.names:
            if n in FUNCTIONS or not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", n):
                raise ValueError(f"invalid variable name {n!r}")
        bad = [r for r in self.roles if r not in ROLES]
        if bad:
            raise ValueError(f"unknown roles {bad}")
        if self.roles.count(TIME) != 1:
            raise ValueError("exactly one time variable required")
        if self.roles.count(COORDINATE) != self.roles.count(VELOCITY):
            raise ValueError("coordinate and velocity counts differ")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def jet(cls, m: int, coordinates=None, velocities=None, auxiliary=()):
        """Space ``(t, q1..qm, v1..vm, aux...)`` in that index order."""
        coordinates = list(coordinates or [f"q{i + 1}" for i in range(m)])
        velocities = list(velocities or [f"v{i + 1}" for i in range(m)])
        if len(coordinates) != m or len(velocities) != m:
            raise ValueError("coordinate/velocity name lists must have length m")
        names = ["t", *coordinates, *velocities, *auxiliary]
        roles = [TIME] + [COORDINATE] * m + [VELOCITY] * m + [AUXILIARY] * len(auxiliary)
        return cls(tuple(names), tuple(roles))

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def of_role(self, role: str) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r == role]


# -- AST ----------------------------------------------------------------------

class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str
    index: int


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


def walk(node: Node):
    yield node
    if isinstance(node, Neg):
        yield from walk(node.arg)
    elif isinstance(node, Call):
        yield from walk(node.arg)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)


def operator_count(node: Node) -> int:
    """Number of operator nodes (binary, unary minus and function calls)."""
    return sum(isinstance(n, (Neg, BinOp, Call)) for n in walk(node))


def free_variables(node: Node) -> frozenset[int]:
    return frozenset(n.index for n in walk(node) if isinstance(n, Var))


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, space: VariableSpace):
        self.text = text
        self.space = space
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            what = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {op!r}, found {what}", pos, self.text)

    def error(self, tok, what="expression"):
        kind, val, pos = tok
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"expected {what}, found {found}", pos, self.text)

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(tok, "operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.powarg())
        return base

    def powarg(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.powarg())
        return self.power()

    def atom(self) -> Node:
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise UnknownIdentifier(val, pos)
                self.take()
                args = []
                if self.peek()[:2] != ("op", ")"):
                    args.append(self.expr())
                    while self.peek()[:2] == ("op", ","):
                        self.take()
                        args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ArityError(val, 1, len(args), pos)
                return Call(val, args[0])
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} needs an argument list", pos, self.text)
            if val not in self.space:
                raise UnknownIdentifier(val, pos)
            return Var(val, self.space.index(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.error(tok)


def parse(text: str, space: VariableSpace) -> Node:
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text)
    return _Parser(text, space).parse()


# -- printing -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return 4 if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1, node.value) < 0):
        return 0
    return 5


def to_text(node: Node) -> str:
    """Render with the minimal parentheses that reparse to the same tree."""

    def wrap(child, min_prec):
        s = to_text(child)
        return s if _prec(child) >= min_prec else f"({s})"

    if isinstance(node, Const):
        if not math.isfinite(node.value):
            raise ValueError("non-finite constant has no text form")
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + wrap(node.arg, 3)
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if node.op == "^":
        left = wrap(node.left, 5)
        if isinstance(node.right, Neg):
            right = f"({to_text(node.right)})"
        else:
            right = wrap(node.right, 4)
        return f"{left}^{right}"
    p = _PREC[node.op]
    return f"{wrap(node.left, p)} {node.op} {wrap(node.right, p + 1)}"


# -- symbolic differentiation -------------------------------------------------
# Light folding keeps derived trees (e.g. the velocity gradient of a
# Lagrangian) from growing with dead zero terms.

def _is_const(n, v=None):
    return isinstance(n, Const) and (v is None or n.value == v)


def _add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def _pow(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    return BinOp("^", a, b)


def diff(node: Node, index: int) -> Node:
    """Symbolic partial derivative with respect to the variable at ``index``."""
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.index == index else 0.0)
    if index not in free_variables(node):
        return Const(0.0)
    if isinstance(node, Neg):
        return _neg(diff(node.arg, index))
    if isinstance(node, Call):
        u = node.arg
        du = diff(u, index)
        f = node.func
        if f == "sin":
            d = Call("cos", u)
        elif f == "cos":
            d = _neg(Call("sin", u))
        elif f == "tan":
            d = _div(Const(1.0), _pow(Call("cos", u), Const(2.0)))
        elif f == "exp":
            d = node
        elif f == "log":
            d = _div(Const(1.0), u)
        elif f == "sqrt":
            d = _div(Const(0.5), node)
        else:  # abs
            d = _div(u, node)
        return _mul(d, du)
    a, b = node.left, node.right
    da, db = diff(a, index), diff(b, index)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _sub(_div(da, b), _div(_mul(a, db), _pow(b, Const(2.0))))
    # power
    if index not in free_variables(b):
        return _mul(_mul(b, _pow(a, _sub(b, Const(1.0)))), da)
    return _mul(node, _add(_mul(db, Call("log", a)), _div(_mul(b, da), a)))


# -- elementary functions with their first two derivatives --------------------

def _check(x: float, cond: bool, what: str):
    if not cond:
        raise DomainError(f"{what} (argument {x!r})")


def _f_sin(x):
    s, c = math.sin(x), math.cos(x)
    return s, c, -s


def _f_cos(x):
    s, c = math.sin(x), math.cos(x)
    return c, -s, -c


def _f_tan(x):
    c = math.cos(x)
    _check(x, c != 0.0, "tan at a pole")
    t = math.tan(x)
    d1 = 1.0 + t * t
    return t, d1, 2.0 * t * d1


def _f_exp(x):
    try:
        e = math.exp(x)
    except OverflowError:
        raise DomainError(f"exp overflow (argument {x!r})") from None
    return e, e, e


def _f_log(x):
    _check(x, x > 0.0, "log of nonpositive number")
    r = 1.0 / x
    return math.log(x), r, -r * r


def _f_sqrt(x):
    _check(x, x >= 0.0, "sqrt of negative number")
    s = math.sqrt(x)
    if s == 0.0:
        return 0.0, math.inf, -math.inf
    return s, 0.5 / s, -0.25 / (s * x)


def _f_abs(x):
    sg = 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)
    return abs(x), sg, 0.0


def _f_recip(x):
    _check(x, x != 0.0, "division by zero")
    r = 1.0 / x
    return r, -r * r, 2.0 * r * r * r


def _f_pow(x, c):
    """x**c for a constant exponent c with its first two x-derivatives."""
    ci = float(c).is_integer()
    if x == 0.0 and c < 0:
        raise DomainError(f"0 raised to negative power {c!r}")
    if x < 0.0 and not ci:
        raise DomainError(f"negative base {x!r} with non-integer exponent {c!r}")
    try:
        v = x ** c
        d1 = 0.0 if c == 0 else (c * x ** (c - 1) if (x != 0.0 or c >= 1) else math.inf)
        if c == 0 or c == 1:
            d2 = 0.0
        elif x != 0.0 or c >= 2:
            d2 = c * (c - 1) * x ** (c - 2)
        else:
            d2 = math.inf
    except (OverflowError, ZeroDivisionError) as exc:
        raise DomainError(f"power overflow ({x!r}^{c!r})") from exc
    return v, d1, d2


_UNARY = {
    "sin": _f_sin, "cos": _f_cos, "tan": _f_tan, "exp": _f_exp,
    "log": _f_log, "sqrt": _f_sqrt, "abs": _f_abs,
}


# -- forward-mode code generation ---------------------------------------------

class _Emitter:
    """Generates straight-line forward-mode code for one AST.

    Every node becomes a triple ``(value, grad, hess)`` where ``grad`` maps a
    variable index to a code atom and ``hess`` maps an ordered pair ``(i, j)``
    with ``i <= j`` to a code atom.  Missing keys are structural zeros.
    """

    def __init__(self, order: int):
        self.order = order
        self.lines: list[str] = []
        self.k = 0

    def tmp(self, rhs: str) -> str:
        name = f"_{self.k}"
        self.k += 1
        self.lines.append(f"{name} = {rhs}")
        return name

    @staticmethod
    def mul(a: str, b: str) -> str:
        if a == "1.0":
            return b
        if b == "1.0":
            return a
        return f"{a}*{b}"

    def emit(self, node: Node):
        order = self.order
        if isinstance(node, Const):
            return repr(float(node.value)), {}, {}
        if isinstance(node, Var):
            g = {node.index: "1.0"} if order >= 1 else {}
            return f"x{node.index}", g, {}
        if isinstance(node, Neg):
            v, g, h = self.emit(node.arg)
            return (self.tmp(f"-{v}"),
                    {i: self.tmp(f"-{e}") for i, e in g.items()},
                    {ij: self.tmp(f"-{e}") for ij, e in h.items()})
        if isinstance(node, Call):
            return self.chain(f"_{node.func}", self.emit(node.arg))
        op = node.op
        if op in "+-":
            va, ga, ha = self.emit(node.left)
            vb, gb, hb = self.emit(node.right)
            v = self.tmp(f"{va} {op} {vb}")
            return v, self.combine(ga, gb, op), self.combine(ha, hb, op)
        if op == "*":
            return self.product(self.emit(node.left), self.emit(node.right))
        if op == "/":
            a = self.emit(node.left)
            b = self.emit(node.right)
            if isinstance(node.right, Const):
                _f_recip(node.right.value)  # static division by zero check
                r = repr(1.0 / node.right.value)
                return self.product(a, (r, {}, {}))
            return self.product(a, self.chain("_recip", b))
        # power
        if not free_variables(node.right):
            base = self.emit(node.left)
            if isinstance(node.right, Const) and node.right.value in (1.0, 2.0, 3.0, 4.0):
                # small integer powers as products: cheaper and domain-free
                out = base
                for _ in range(int(node.right.value) - 1):
                    out = self.product(out, base)
                return out
            c, _, _ = self.emit(node.right)
            return self.chain("_pow", base, extra=c)
        # a^b = exp(b*log(a))
        la = self.chain("_log", self.emit(node.left))
        return self.chain("_exp", self.product(self.emit(node.right), la))

    def combine(self, a: dict, b: dict, op: str) -> dict:
        out = {}
        for key in a.keys() | b.keys():
            if key in a and key in b:
                out[key] = self.tmp(f"{a[key]} {op} {b[key]}")
            elif key in a:
                out[key] = a[key]
            else:
                out[key] = b[key] if op == "+" else self.tmp(f"-{b[key]}")
        return out

    def product(self, a, b):
        va, ga, ha = a
        vb, gb, hb = b
        v = self.tmp(f"{va}*{vb}")
        g = {}
        for i in ga.keys() | gb.keys():
            terms = []
            if i in ga:
                terms.append(self.mul(vb, ga[i]))
            if i in gb:
                terms.append(self.mul(va, gb[i]))
            g[i] = self.tmp(" + ".join(terms))
        h = {}
        if self.order >= 2:
            terms: dict = {}
            for ij, e in ha.items():
                terms.setdefault(ij, []).append(self.mul(vb, e))
            for ij, e in hb.items():
                terms.setdefault(ij, []).append(self.mul(va, e))
            for i, ei in ga.items():
                for j, ej in gb.items():
                    key = (i, j) if i <= j else (j, i)
                    t = self.mul(ei, ej)
                    terms.setdefault(key, []).append(t)
                    if i == j:
                        terms[key].append(t)
            for key, ts in terms.items():
                h[key] = self.tmp(" + ".join(ts))
        return v, g, h

    def chain(self, fname: str, arg, extra: str | None = None):
        u, gu, hu = arg
        if self.order >= 1 and gu and fname in ("_sqrt", "_pow"):
            fname += "1"
        call = f"{fname}({u}, {extra})" if extra is not None else f"{fname}({u})"
        if self.order == 0:
            return self.tmp(f"{call}[0]"), {}, {}
        v = self.tmp(call)
        val = self.tmp(f"{v}[0]")
        if not gu:
            return val, {}, {}
        d1 = self.tmp(f"{v}[1]")
        g = {i: self.tmp(self.mul(d1, e)) for i, e in gu.items()}
        h = {}
        if self.order >= 2:
            d2 = self.tmp(f"{v}[2]")
            terms: dict = {}
            for ij, e in hu.items():
                terms.setdefault(ij, []).append(self.mul(d1, e))
            keys = sorted(gu)
            for a_, i in enumerate(keys):
                for j in keys[a_:]:
                    terms.setdefault((i, j), []).append(
                        f"{d2}*{self.mul(gu[i], gu[j])}")
            for key, ts in terms.items():
                h[key] = self.tmp(" + ".join(ts))
        return val, g, h


def _finite_slope(f):
    def wrapped(*args):
        out = f(*args)
        if not (math.isfinite(out[1]) and math.isfinite(out[2])):
            raise DomainError(f"derivative unbounded at {args!r}")
        return out
    return wrapped


_NAMESPACE = {f"_{k}": f for k, f in _UNARY.items()}
_NAMESPACE.update(_recip=_f_recip, _pow=_f_pow,
                  _sqrt1=_finite_slope(_f_sqrt), _pow1=_finite_slope(_f_pow))


def _compile(node: Node, n: int, order: int):
    em = _Emitter(order)
    used = sorted(free_variables(node))
    v, g, h = em.emit(node)
    gkeys = sorted(g)
    hkeys = sorted(h)
    body = [f"    x{i} = x[{i}]" for i in used]
    body += [f"    {ln}" for ln in em.lines]
    body.append(
        f"    return {v}, ({', '.join(g[k] for k in gkeys)}{',' if gkeys else ''}), "
        f"({', '.join(h[k] for k in hkeys)}{',' if hkeys else ''})"
    )
    src = "def _f(x):\n" + "\n".join(body) + "\n"
    if order >= 1:
        # Dense twin: returns the full gradient and row-major hessian as lists,
        # which numpy converts in one call instead of scatter-assigning.
        dg = [g.get(i, "0.0") for i in range(n)]
        dh = []
        for i in range(n):
            for j in range(n):
                dh.append(h.get((min(i, j), max(i, j)), "0.0"))
        tail = f"[{', '.join(dg)}]" + (f", [{', '.join(dh)}]" if order >= 2 else ", None")
        src += "def _d(x):\n" + "\n".join(body[:-1]) + f"\n    return {v}, {tail}\n"
    ns = dict(_NAMESPACE)
    exec(compile(src, "<jetflow-expr>", "exec"), ns)
    gidx = np.array(gkeys, dtype=int)
    hi = np.array([k[0] for k in hkeys], dtype=int)
    hj = np.array([k[1] for k in hkeys], dtype=int)
    return ns["_f"], gidx, hi, hj, ns.get("_d")


@dataclass
class PartialBundle:
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None


class Expr:
    """A parsed expression bound to a variable space, with cached compiled forms."""

    def __init__(self, ast: Node, space: VariableSpace, text: str | None = None):
        self.ast = ast
        self.space = space
        self.text = text if text is not None else to_text(ast)
        self._compiled: dict[int, tuple] = {}
        self._diffs: dict[int, Expr] = {}

    @classmethod
    def parse(cls, text: str, space: VariableSpace) -> "Expr":
        return cls(parse(text, space), space, text)

    @classmethod
    def constant(cls, value: float, space: VariableSpace) -> "Expr":
        return cls(Const(float(value)), space)

    def __repr__(self):
        return f"Expr({self.text!r})"

    @property
    def variables(self) -> frozenset[int]:
        return free_variables(self.ast)

    def depends_on(self, index: int) -> bool:
        return index in self.variables

    def is_constant(self) -> bool:
        return not self.variables

    def _fn(self, order: int):
        fn = self._compiled.get(order)
        if fn is None:
            if order not in (0, 1, 2):
                raise ValueError("order must be 0, 1 or 2")
            fn = self._compiled[order] = _compile(self.ast, len(self.space), order)
        return fn

    def value(self, values: Sequence[float]) -> float:
        f = self._fn(0)[0]
        return f(values)[0]

    def partials(self, values: Sequence[float], order: int = 2) -> PartialBundle:
        return eval_with_partials(self, values, order)

    def diff(self, index: int) -> "Expr":
        d = self._diffs.get(index)
        if d is None:
            d = self._diffs[index] = Expr(diff(self.ast, index), self.space)
        return d

    def diff_by_name(self, name: str) -> "Expr":
        return self.diff(self.space.index(name))


def eval_with_partials(expr: Expr, values: Sequence[float], order: int = 2) -> PartialBundle:
    """Value and exact partials up to ``order`` (0, 1 or 2) at ``values``."""
    n = len(expr.space)
    if len(values) != n:
        raise ValueError(f"expected {n} values, got {len(values)}")
    f, gidx, hi, hj, dense = expr._fn(order)
    if order == 0:
        return PartialBundle(float(f(values)[0]))
    v, g, h = dense(values)
    out = PartialBundle(float(v), np.array(g, dtype=float))
    if order >= 2:
        out.hessian = np.array(h, dtype=float).reshape(n, n)
    return out


def finite_difference_partials(expr: Expr, values: Sequence[float], step: float) -> PartialBundle:
    """Central-difference gradient and hessian; a test oracle for the AD path."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(values, dtype=float)
    n = len(x)
    f = expr.value

    def at(*shifts):
        y = x.copy()
        for i, s in shifts:
            y[i] += s
        return f(y)

    f0 = f(x)
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    used = sorted(expr.variables)
    h = step
    for i in used:
        fp, fm = at((i, h)), at((i, -h))
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / (h * h)
    for a, i in enumerate(used):
        for j in used[a + 1:]:
            d = (at((i, h), (j, h)) - at((i, h), (j, -h))
                 - at((i, -h), (j, h)) + at((i, -h), (j, -h))) / (4 * h * h)
            hess[i, j] = hess[j, i] = d
    return PartialBundle(float(f0), grad, hess)


def compile_many(exprs: Sequence[Expr]) -> Callable[[Sequence[float]], np.ndarray]:
    """Order-0 evaluator returning the values of several expressions."""
    fns = [e._fn(0)[0] for e in exprs]

    def evaluate(values):
        return np.array([f(values)[0] for f in fns])

    return evaluate
