"""Small arithmetic expression language for coefficient functions.

Coefficients of the forward-backward system are written as plain text, e.g.
``"0.5*x1 + sin(t)"``.  The grammar supports +, -, *, /, unary minus, the
functions sin, cos, exp, tanh, abs, sqrt (one argument) and min, max (two
arguments), real literals and the variables

    t, x1..xd, y1..yk, z11..zkd

Which variables are legal depends on the coefficient kind:

    f     : (t, x, y)
    g     : (t, x, y, z)
    sigma : (t, x, y)
    h     : (x)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ExpressionDomainError, ExpressionSyntaxError, UnknownVariableError

UNARY_FUNCTIONS = ("sin", "cos", "exp", "tanh", "abs", "sqrt")
BINARY_FUNCTIONS = ("min", "max")
ARITIES = ("f", "g", "sigma", "h")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Node = Num | Var | Neg | Bin | Call


def variable_names(arity: str, d: int, k: int) -> tuple[str, ...]:
    """Legal variable names for a coefficient kind at dimensions (d, k)."""
    if arity not in ARITIES:
        raise ValueError(f"unknown coefficient kind {arity!r}")
    xs = tuple(f"x{j + 1}" for j in range(d))
    if arity == "h":
        return xs
    ys = tuple(f"y{i + 1}" for i in range(k))
    if arity in ("f", "sigma"):
        return ("t",) + xs + ys
    zs = tuple(f"z{i + 1}{j + 1}" for i in range(k) for j in range(d))
    return ("t",) + xs + ys + zs


# ---------------------------------------------------------------------------
# tokenizer


def _tokenize(source):
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/(),":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in "eE":
                m = j + 1
                if m < n and source[m] in "+-":
                    m += 1
                if m < n and source[m].isdigit():
                    j = m
                    while j < n and source[j].isdigit():
                        j += 1
            try:
                value = float(source[i:j])
            except ValueError:
                raise ExpressionSyntaxError(f"bad number {source[i:j]!r}", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("name", source[i:j], i))
            i = j
            continue
        raise ExpressionSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


# ---------------------------------------------------------------------------
# recursive-descent parser


class _Parser:
    def __init__(self, tokens, allowed):
        self.tokens = tokens
        self.pos = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.take()
        if tok[0] != kind:
            raise ExpressionSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def expression(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = Bin(op, node, self.factor())
        return node

    def factor(self):
        if self.peek()[0] == "-":
            pos = self.take()[2]
            del pos
            return Neg(self.factor())
        if self.peek()[0] == "+":
            self.take()
            return self.factor()
        return self.atom()

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(value)
        if kind == "(":
            node = self.expression()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[0] == "(":
                return self.call(value, pos)
            if value not in self.allowed:
                raise UnknownVariableError(value, self.allowed_label)
            return Var(value)
        raise ExpressionSyntaxError(f"unexpected token {value!r}", pos)

    def call(self, fn, pos):
        if fn not in UNARY_FUNCTIONS and fn not in BINARY_FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function {fn!r}", pos)
        self.expect("(")
        args = [self.expression()]
        while self.peek()[0] == ",":
            self.take()
            args.append(self.expression())
        self.expect(")")
        want = 1 if fn in UNARY_FUNCTIONS else 2
        if len(args) != want:
            raise ExpressionSyntaxError(f"{fn} takes {want} argument(s), got {len(args)}", pos)
        return Call(fn, tuple(args))


def parse(source: str, arity: str, d: int = 1, k: int = 1) -> Node:
    """Parse coefficient text into an AST, checking variables against the arity."""
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    allowed = variable_names(arity, d, k)
    parser = _Parser(_tokenize(source), frozenset(allowed))
    parser.allowed_label = arity
    node = parser.expression()
    end = parser.take()
    if end[0] != "end":
        raise ExpressionSyntaxError(f"trailing input {end[1]!r}", end[2])
    return node


# ---------------------------------------------------------------------------
# printing and evaluation

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(node: Node) -> str:
    """Render an AST back to text; parse(to_source(e)) is structurally e."""
    return _render(node, 0)


def _render(node, parent_prec):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = _render(node.operand, 3)
        text = f"-{inner}"
        return f"({text})" if parent_prec > 2 else text
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(_render(a, 0) for a in node.args)})"
    prec = _PREC[node.op]
    left = _render(node.left, prec - 1)
    # parsing is left-associative, so a right-nested operand of equal
    # precedence must keep its parentheses to round-trip structurally
    right = _render(node.right, prec)
    text = f"{left} {node.op} {right}"
    return f"({text})" if parent_prec >= prec else text


_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "tanh": math.tanh,
    "abs": abs,
    "sqrt": math.sqrt,
    "min": min,
    "max": max,
}


def free_variables(node: Node) -> frozenset[str]:
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, Call):
        out = frozenset()
        for a in node.args:
            out |= free_variables(a)
        return out
    return free_variables(node.left) | free_variables(node.right)


def evaluate(node: Node, point: dict) -> float:
    """Evaluate at a labeled point, e.g. evaluate(e, {"x1": 2.0, "y1": 3.0}).

    Raises ExpressionDomainError when the result is not a finite real.
    """
    try:
        value = _eval(node, point)
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise ExpressionDomainError(f"{exc} while evaluating {to_source(node)!r}") from None
    if not math.isfinite(value):
        raise ExpressionDomainError(f"non-finite value {value!r} from {to_source(node)!r}")
    return value


def _eval(node, point):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return float(point[node.name])
        except KeyError:
            raise ExpressionDomainError(f"point does not supply variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, point)
    if isinstance(node, Call):
        return _FUNCS[node.fn](*(_eval(a, point) for a in node.args))
    a = _eval(node.left, point)
    b = _eval(node.right, point)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    return a / b
