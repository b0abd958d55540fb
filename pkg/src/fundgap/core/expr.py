"""Arithmetic expressions for potentials.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = number | constant | variable | func "(" expr { "," expr } ")" | "(" expr ")" ;
    variable = "x" digit { digit } | "r" ;
    constant = "pi" ;
    func    = "sin" | "cos" | "exp" | "tanh" | "abs" | "sqrt" | "min" | "max" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;

``^`` is right associative and binds tighter than unary minus, so
``-x1^2`` is ``-(x1^2)``.  ``r`` is the Euclidean norm of the point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "tanh": 1, "abs": 1, "sqrt": 1, "min": -2, "max": -2}


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name, offset):
        self.name, self.offset = name, offset
        super().__init__(f"unknown identifier {name!r} at byte {offset}")


class DimensionError(ExpressionError):
    def __init__(self, name, dim, offset):
        self.name, self.offset = name, offset
        super().__init__(
            f"variable {name!r} at byte {offset} exceeds dimension {dim}"
        )


# -- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]


# -- tokenizer / parser -----------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    toks, pos = [], 0
    stripped_end = len(text.rstrip())
    while pos < stripped_end:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(
                f"unexpected character {text[bad]!r}", len(text[:bad].encode()),
                {"number", "identifier", "operator"},
            )
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    toks.append(("end", "", len(text.encode())))
    return toks


_ATOM_START = {"number", "identifier", "'('", "'-'", "'+'"}


class _Parser:
    def __init__(self, text, dim, aliases=None):
        self.toks = _tokenize(text)
        self.i = 0
        self.dim = dim
        self.aliases = aliases or {}

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op, expected=None):
        kind, val, off = self.peek()
        if kind == "op" and val == op:
            return self.take()
        raise ExpressionSyntaxError(
            f"unexpected {val or 'end of input'!r}", off, expected or {repr(op)}
        )

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {val!r}", off, {"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"}
            )
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = fold(BinOp(op, node, self.term()))
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = fold(BinOp(op, node, self.unary()))
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            arg = self.unary()
            return fold(Neg(arg)) if val == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return fold(BinOp("^", base, self.unary()))
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")", {"')'", "'+'", "'-'", "'*'", "'/'", "'^'"})
            return node
        if kind == "id":
            if val in FUNCTIONS:
                self.expect_op("(")
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect_op(")", {"')'", "','"} if FUNCTIONS[val] < 0 else {"')'"})
                arity = FUNCTIONS[val]
                if (arity > 0 and len(args) != arity) or (arity < 0 and len(args) < -arity):
                    raise ExpressionSyntaxError(
                        f"{val} takes {'at least ' if arity < 0 else ''}{abs(arity)} argument(s), "
                        f"got {len(args)}", off)
                return fold(Call(val, tuple(args)))
            if val == "pi":
                return Num(math.pi)
            val = self.aliases.get(val, val)
            if val == "r":
                return Var("r")
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                k = int(m.group(1))
                if k < 1:
                    raise UnknownIdentifierError(val, off)
                if k > self.dim:
                    raise DimensionError(val, self.dim, off)
                return Var(f"x{k}")
            raise UnknownIdentifierError(val, off)
        raise ExpressionSyntaxError(
            f"unexpected {val or 'end of input'!r}", off, _ATOM_START
        )


def parse_expression(text: str, dimension: int, aliases: dict | None = None) -> Node:
    """Parse ``text``; ``aliases`` maps extra identifiers onto variables (e.g. z -> x1)."""
    if dimension < 1:
        raise ExpressionError("dimension must be positive")
    return _Parser(text, dimension, aliases).parse()


# -- folding / simplification -----------------------------------------------

_SCALAR_FN = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp, "tanh": math.tanh,
    "abs": abs, "sqrt": math.sqrt, "min": min, "max": max,
}


def _is_num(n, v=None):
    return isinstance(n, Num) and (v is None or n.value == v)


def fold(node: Node) -> Node:
    """Fold constant subtrees of ``node`` (children assumed folded)."""
    try:
        if isinstance(node, Neg) and isinstance(node.arg, Num):
            return Num(-node.arg.value)
        if isinstance(node, BinOp) and _is_num(node.left) and _is_num(node.right):
            a, b = node.left.value, node.right.value
            if node.op == "+":
                return Num(a + b)
            if node.op == "-":
                return Num(a - b)
            if node.op == "*":
                return Num(a * b)
            if node.op == "/":
                return Num(a / b)
            v = a ** b
            if isinstance(v, complex):
                raise ExpressionError(f"complex constant {a}^{b}")
            return Num(float(v))
        if isinstance(node, Call) and node.func in _SCALAR_FN and all(_is_num(a) for a in node.args):
            return Num(float(_SCALAR_FN[node.func](*(a.value for a in node.args))))
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise ExpressionError(f"cannot fold constant expression: {exc}") from None
    return node


def _simplify(node: Node) -> Node:
    """Algebraic identities used to keep derivative trees small."""
    node = fold(node)
    if isinstance(node, BinOp):
        l, r, op = node.left, node.right, node.op
        if op == "+":
            if _is_num(l, 0.0):
                return r
            if _is_num(r, 0.0):
                return l
        elif op == "-":
            if _is_num(r, 0.0):
                return l
            if _is_num(l, 0.0):
                return _simplify(Neg(r))
        elif op == "*":
            if _is_num(l, 0.0) or _is_num(r, 0.0):
                return Num(0.0)
            if _is_num(l, 1.0):
                return r
            if _is_num(r, 1.0):
                return l
        elif op == "/":
            if _is_num(l, 0.0):
                return Num(0.0)
            if _is_num(r, 1.0):
                return l
        elif op == "^":
            if _is_num(r, 1.0):
                return l
            if _is_num(r, 0.0):
                return Num(1.0)
    if isinstance(node, Neg) and isinstance(node.arg, Neg):
        return node.arg.arg
    return node


# -- differentiation --------------------------------------------------------


class NotDifferentiable(ExpressionError):
    pass


def _d(node: Node, var: str) -> Node:
    s = _simplify
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        if node.name == var:
            return Num(1.0)
        if node.name == "r":
            return Call("_unit", (Var(var), Var("r")))
        return Num(0.0)
    if isinstance(node, Neg):
        return s(Neg(_d(node.arg, var)))
    if isinstance(node, BinOp):
        l, r = node.left, node.right
        dl, dr = _d(l, var), _d(r, var)
        if node.op in "+-":
            return s(BinOp(node.op, dl, dr))
        if node.op == "*":
            return s(BinOp("+", s(BinOp("*", dl, r)), s(BinOp("*", l, dr))))
        if node.op == "/":
            num = s(BinOp("-", s(BinOp("*", dl, r)), s(BinOp("*", l, dr))))
            return s(BinOp("/", num, s(BinOp("^", r, Num(2.0)))))
        if not _is_num(dr, 0.0):
            raise NotDifferentiable("power with variable exponent")
        c = r
        return s(BinOp("*", s(BinOp("*", c, s(BinOp("^", l, s(BinOp("-", c, Num(1.0))))))), dl))
    if isinstance(node, Call):
        f, args = node.func, node.args
        if f in ("min", "max") and len(args) > 2:
            nested = Call(f, (Call(f, args[:-1]), args[-1]))
            return _d(nested, var)
        if f in ("min", "max"):
            a, b = args
            da, db = _d(a, var), _d(b, var)
            if f == "min":
                return s(Call("_le", (a, b, da, db)))
            return s(Call("_le", (b, a, da, db)))
        (u,) = args
        du = _d(u, var)
        if _is_num(du, 0.0):
            return Num(0.0)
        if f == "sin":
            outer = Call("cos", (u,))
        elif f == "cos":
            outer = Neg(Call("sin", (u,)))
        elif f == "exp":
            outer = node
        elif f == "tanh":
            outer = BinOp("-", Num(1.0), BinOp("^", node, Num(2.0)))
        elif f == "abs":
            outer = Call("_sign", (u,))
        elif f == "sqrt":
            outer = BinOp("/", Num(0.5), node)
        else:
            raise NotDifferentiable(f"no derivative rule for {f}")
        return s(BinOp("*", outer, du))
    raise TypeError(node)


def derivative(node: Node, var: str) -> Node:
    return _d(node, var)


# -- pretty printing ---------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 3
    return 5


def to_text(node: Node) -> str:
    """Render ``node`` so that parsing the result reproduces it exactly."""
    if isinstance(node, Num):
        v = node.value
        if not math.isfinite(v):
            raise ExpressionError(f"cannot print non-finite constant {v}")
        s = repr(float(v))
        return f"({s})" if s.startswith("-") else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        return f"-({inner})" if _prec(node.arg) < 4 else f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= 4:
            left = f"({left})"
        if _prec(node.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def variables(node: Node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.arg)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    out = set()
    for a in node.args:
        out |= variables(a)
    return out


def substitute(node: Node, mapping: dict) -> Node:
    """Replace variables by subtrees."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return fold(Neg(substitute(node.arg, mapping)))
    if isinstance(node, BinOp):
        return fold(BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping)))
    return fold(Call(node.func, tuple(substitute(a, mapping) for a in node.args)))


# -- compilation -------------------------------------------------------------


def _code(node: Node, vec: bool) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        if node.name == "r":
            return "r"
        return f"X[{int(node.name[1:]) - 1}]"
    if isinstance(node, Neg):
        return f"(-{_code(node.arg, vec)})"
    if isinstance(node, BinOp):
        op = "**" if node.op == "^" else node.op
        return f"({_code(node.left, vec)} {op} {_code(node.right, vec)})"
    args = [_code(a, vec) for a in node.args]
    f = node.func
    if f in ("min", "max"):
        if vec:
            out = args[0]
            for a in args[1:]:
                out = f"np.{'minimum' if f == 'min' else 'maximum'}({out}, {a})"
            return out
        return f"{f}({', '.join(args)})"
    if f == "_le":
        a, b, da, db = args
        return f"_le({a}, {b}, {da}, {db})"
    return f"{f}({', '.join(args)})"


def _scalar_unit(x, r):
    return x / r if r > 0 else 0.0


def _vector_unit(x, r):
    x = np.asarray(x, dtype=float)
    r = np.broadcast_to(np.asarray(r, dtype=float), x.shape)
    return np.divide(x, r, out=np.zeros_like(x), where=r > 0)


def _scalar_le(a, b, da, db):
    return da if a <= b else db


def _vector_le(a, b, da, db):
    return np.where(np.asarray(a) <= np.asarray(b), da, db)


def _scalar_sign(x):
    return (x > 0) - (x < 0)


_SCALAR_NS = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp, "tanh": math.tanh,
    "abs": abs, "sqrt": math.sqrt, "min": min, "max": max,
    "_unit": _scalar_unit, "_le": _scalar_le, "_sign": _scalar_sign,
}
_VECTOR_NS = {
    "np": np, "sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh,
    "abs": np.abs, "sqrt": np.sqrt, "_unit": _vector_unit, "_le": _vector_le,
    "_sign": np.sign,
}


def compile_scalar(node: Node):
    """Compile to ``f(X, r)`` over Python floats; ``X`` is a sequence."""
    src = f"lambda X, r: {_code(node, vec=False)}"
    return eval(src, {"__builtins__": {}, **_SCALAR_NS})  # generated from a validated AST


def compile_vector(node: Node):
    """Compile to ``f(X, r)`` over numpy arrays; ``X`` has shape (n, N)."""
    src = f"lambda X, r: {_code(node, vec=True)}"
    return eval(src, {"__builtins__": {}, **_VECTOR_NS})
