"""Vector-field models: line-based text format, expression trees, exact derivatives.

A model file looks like::

    # damped pendulum
    dim 2
    param c 0.2
    x1' = x2
    x2' = -sin(x1) - c*x2

Expressions are immutable trees built from :class:`Const`, :class:`Var`,
:class:`Param`, :class:`Unary` and :class:`Binary` nodes.  Variables are
1-based (``x1`` is ``Var(1)``), matching the text format.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence, Union

from .errors import DomainWarning, EvalError, ExprSyntaxError, SemanticError

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "tanh")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
# Smooth only: the geometry needs two continuous derivatives.
_REJECTED = ("abs", "sign", "min", "max", "floor", "ceil", "round")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"


Expression = Union[Const, Var, Param, Unary, Binary]

ZERO = Const(0.0)
ONE = Const(1.0)
TWO = Const(2.0)


# ---------------------------------------------------------------------------
# construction helpers (constant folding of literal subtrees, unit identities)

def _fold(fn, *values):
    try:
        out = fn(*values)
    except (ValueError, ZeroDivisionError, OverflowError):
        return None
    if isinstance(out, complex) or not math.isfinite(out):
        return None
    return Const(float(out))


def _is(e, value):
    return isinstance(e, Const) and e.value == value


_TOTAL_UNARY = frozenset({"neg", "sin", "cos", "tanh"})


def _total(e) -> bool:
    """True when ``e`` is defined for every finite input (overflow aside).

    Absorbing identities (0*e, 0/e, e^0) may only drop such subtrees,
    otherwise a domain error would turn into a constant.
    """
    if isinstance(e, (Const, Var, Param)):
        return True
    if isinstance(e, Unary):
        return e.op in _TOTAL_UNARY and _total(e.arg)
    if e.op == "pow":
        b = e.right
        return isinstance(b, Const) and b.value >= 0 and b.value.is_integer() and _total(e.left)
    return e.op in ("add", "sub", "mul") and _total(e.left) and _total(e.right)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    return Unary("neg", a)


def call(op, a):
    if isinstance(a, Const):
        folded = _fold(_UNARY_IMPL[op], a.value)
        if folded is not None:
            return folded
    return Unary(op, a)


def add(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold(lambda p, q: p + q, a.value, b.value)
        if folded is not None:
            return folded
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Binary("add", a, b)


def sub(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold(lambda p, q: p - q, a.value, b.value)
        if folded is not None:
            return folded
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("sub", a, b)


def mul(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold(lambda p, q: p * q, a.value, b.value)
        if folded is not None:
            return folded
    if (_is(a, 0.0) and _total(b)) or (_is(b, 0.0) and _total(a)):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Binary("mul", a, b)


def div(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold(lambda p, q: p / q, a.value, b.value)
        if folded is not None:
            return folded
    elif _is(b, 1.0):
        return a
    return Binary("div", a, b)


def power(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold(math.pow, a.value, b.value)
        if folded is not None:
            return folded
    elif _is(b, 1.0):
        return a
    elif _is(b, 0.0) and _total(a):
        return ONE
    return Binary("pow", a, b)


_BINARY_BUILD = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power}


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"x(\d+)$")


@dataclass
class _Token:
    kind: str
    text: str
    column: int


def _tokenize(src, line, col0):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", line, col0 + pos + 1)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), col0 + pos + 1))
        pos = m.end()
    tokens.append(_Token("end", "", col0 + len(src) + 1))
    return tokens


class _Parser:
    # expr  := term (("+" | "-") term)*
    # term  := unary (("*" | "/") unary)*
    # unary := ("-" | "+") unary | power
    # power := atom ("^" unary)?
    # atom  := NUMBER | VAR | PARAM | FUNC "(" expr ")" | "(" expr ")"

    def __init__(self, src, n, params, line, col0):
        self.tokens = _tokenize(src, line, col0)
        self.pos = 0
        self.n = n
        self.params = params
        self.line = line

    @property
    def tok(self):
        return self.tokens[self.pos]

    def error(self, message, tok=None):
        tok = tok or self.tok
        return ExprSyntaxError(message, self.line, tok.column)

    def expect(self, text):
        if self.tok.text != text or self.tok.kind != "op":
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        self.pos += 1

    def parse(self):
        if self.tok.kind == "end":
            raise self.error("empty expression")
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = "add" if self.tok.text == "+" else "sub"
            self.pos += 1
            e = _BINARY_BUILD[op](e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = "mul" if self.tok.text == "*" else "div"
            self.pos += 1
            e = _BINARY_BUILD[op](e, self.unary())
        return e

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.pos += 1
            return neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.pos += 1
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.pos += 1
            return power(base, self.unary())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.pos += 1
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "ident":
            self.pos += 1
            return self.identifier(tok)
        found = tok.text or "end of input"
        raise self.error(f"expected operand, found {found!r}")

    def identifier(self, tok):
        name = tok.text
        is_call = self.tok.kind == "op" and self.tok.text == "("
        if name in FUNCTIONS:
            if not is_call:
                raise self.error(f"function {name} requires an argument", tok)
            self.pos += 1
            arg = self.expr()
            self.expect(")")
            return call(name, arg)
        if name in _REJECTED:
            raise SemanticError(
                f"line {self.line}, column {tok.column}: {name} is not smooth and is not supported"
            )
        if is_call:
            raise SemanticError(f"line {self.line}, column {tok.column}: unknown function {name!r}")
        m = _VAR_RE.match(name)
        if m:
            index = int(m.group(1))
            if not 1 <= index <= self.n:
                raise SemanticError(
                    f"line {self.line}, column {tok.column}: variable {name} out of range 1..{self.n}"
                )
            return Var(index)
        if name in self.params:
            return Param(name)
        raise SemanticError(f"line {self.line}, column {tok.column}: unknown identifier {name!r}")


def parse_expression(src: str, n: int, params=(), *, line: int = 1, column: int = 1) -> Expression:
    """Parse one expression over ``x1..xn`` and the given parameter names.

    ``line``/``column`` locate ``src`` inside a larger file for error messages.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return _Parser(src, n, frozenset(params), line, column - 1).parse()


# ---------------------------------------------------------------------------
# models

@dataclass(frozen=True, eq=False)
class VectorFieldModel:
    """An autonomous vector field ``dx/dt = X(x)`` on R^n."""

    components: tuple
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise SemanticError("a model needs at least one component")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        n = len(comps)
        for i, e in enumerate(comps, start=1):
            for node in walk(e):
                if isinstance(node, Var) and not 1 <= node.index <= n:
                    raise SemanticError(f"component x{i}': variable x{node.index} out of range 1..{n}")
                if isinstance(node, Param) and node.name not in self.params:
                    raise SemanticError(f"component x{i}': undeclared parameter {node.name!r}")

    @property
    def n(self) -> int:
        return len(self.components)

    def with_params(self, **values: float) -> "VectorFieldModel":
        unknown = set(values) - set(self.params)
        if unknown:
            raise SemanticError(f"undeclared parameters: {sorted(unknown)}")
        return VectorFieldModel(self.components, {**self.params, **values}, self.name)

    def __call__(self, x) -> list:
        return [evaluate(e, x, self.params) for e in self.components]

    def to_source(self) -> str:
        lines = [f"dim {self.n}"]
        lines += [f"param {k} {v!r}" for k, v in self.params.items()]
        lines += [f"x{i}' = {to_source(e)}" for i, e in enumerate(self.components, start=1)]
        return "\n".join(lines) + "\n"


_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_DIM_RE = re.compile(r"dim\s+(\S+)$")
_PARAM_RE = re.compile(r"param\s+([A-Za-z_][A-Za-z0-9_]*)\s+(\S+)$")
_COMP_RE = re.compile(r"x(\d+)'\s*=\s*")


def parse_model(source: str, name: str = "") -> VectorFieldModel:
    """Parse a model file (see module docstring for the format)."""
    n = None
    params: dict[str, float] = {}
    raw: dict[int, tuple[int, int, str]] = {}

    for lineno, text in enumerate(source.splitlines(), start=1):
        body = text.split("#", 1)[0].rstrip()
        stripped = body.lstrip()
        if not stripped:
            continue
        indent = len(body) - len(stripped)
        col = indent + 1
        if m := _DIM_RE.match(stripped):
            if not re.fullmatch(r"\d+", m.group(1)):
                raise ExprSyntaxError("dim expects a positive integer", lineno, col + m.start(1))
            if n is not None:
                raise SemanticError(f"line {lineno}: duplicate dim declaration")
            if raw:
                raise SemanticError(f"line {lineno}: dim must precede component lines")
            n = int(m.group(1))
            if n < 1:
                raise SemanticError(f"line {lineno}: dim must be >= 1")
        elif m := _PARAM_RE.match(stripped):
            pname, value = m.groups()
            if not re.fullmatch(_NUMBER, value):
                raise ExprSyntaxError(f"bad number {value!r}", lineno, col + m.start(2))
            if _VAR_RE.match(pname) or pname in FUNCTIONS or pname in _REJECTED or pname in ("dim", "param"):
                raise SemanticError(f"line {lineno}: reserved name {pname!r} cannot be a parameter")
            if pname in params:
                raise SemanticError(f"line {lineno}: duplicate parameter {pname!r}")
            params[pname] = float(value)
        elif m := _COMP_RE.match(stripped):
            if n is None:
                raise SemanticError(f"line {lineno}: component defined before dim")
            index = int(m.group(1))
            if not 1 <= index <= n:
                raise SemanticError(f"line {lineno}: component x{index}' out of range 1..{n}")
            if index in raw:
                raise SemanticError(f"line {lineno}: duplicate component x{index}'")
            raw[index] = (lineno, col + m.end(), stripped[m.end():])
        else:
            raise ExprSyntaxError("expected 'dim', 'param' or a component line", lineno, col)

    if n is None:
        raise SemanticError("missing dim declaration")
    missing = [i for i in range(1, n + 1) if i not in raw]
    if missing:
        raise SemanticError("missing components: " + ", ".join(f"x{i}'" for i in missing))
    comps = []
    for i in range(1, n + 1):
        lineno, col, text = raw[i]
        comps.append(parse_expression(text, n, params, line=lineno, column=col))
    return VectorFieldModel(tuple(comps), params, name)


def load_model(path) -> VectorFieldModel:
    from pathlib import Path

    p = Path(path)
    return parse_model(p.read_text(encoding="utf-8"), name=p.stem)


# ---------------------------------------------------------------------------
# traversal, printing, evaluation

def walk(e: Expression):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.append(node.right)
            stack.append(node.left)


def depends_on(e: Expression, i: int) -> bool:
    return any(isinstance(node, Var) and node.index == i for node in walk(e))


def to_source(e: Expression) -> str:
    """Fully parenthesized text that :func:`parse_expression` reads back."""
    if isinstance(e, Const):
        text = repr(e.value)
        return f"({text})" if e.value < 0 or text.startswith("-") else text
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_source(e.arg)})"
        return f"{e.op}({to_source(e.arg)})"
    return f"({to_source(e.left)} {_SYMBOLS[e.op]} {to_source(e.right)})"


def _ln(a):
    if a <= 0.0:
        raise ValueError("ln of non-positive value")
    return math.log(a)


def _sqrt(a):
    if a < 0.0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(a)


_UNARY_IMPL = {
    "neg": lambda a: -a,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "tanh": math.tanh,
}

_BINARY_IMPL = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "pow": math.pow,
}


def evaluate(e: Expression, x: Sequence[float], params: Mapping[str, float] = MappingProxyType({})) -> float:
    """Evaluate ``e`` at point ``x`` (0-based sequence for 1-based variables)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index - 1])
    if isinstance(e, Param):
        return float(params[e.name])
    if isinstance(e, Unary):
        a = evaluate(e.arg, x, params)
        try:
            return _UNARY_IMPL[e.op](a)
        except (ValueError, OverflowError) as exc:
            raise EvalError(f"{e.op}({a!r}): {exc}", node=e) from None
    a = evaluate(e.left, x, params)
    b = evaluate(e.right, x, params)
    try:
        out = _BINARY_IMPL[e.op](a, b)
    except ZeroDivisionError:
        raise EvalError(f"division by zero in {to_source(e)}", node=e) from None
    except (ValueError, OverflowError) as exc:
        raise EvalError(f"{a!r} {_SYMBOLS[e.op]} {b!r}: {exc}", node=e) from None
    return out


# ---------------------------------------------------------------------------
# differentiation

def _hazards(e):
    """Counts of (division or negative power, ln) nodes."""
    divs = lns = 0
    for node in walk(e):
        if isinstance(node, Binary) and (
            node.op == "div" or (node.op == "pow" and isinstance(node.right, Const) and node.right.value < 0)
        ):
            divs += 1
        elif isinstance(node, Unary) and node.op == "ln":
            lns += 1
    return divs, lns


def differentiate(e: Expression, i: int) -> Expression:
    """Exact partial derivative of ``e`` with respect to ``x{i}``.

    Emits :class:`DomainWarning` when the result contains more divisions or
    logarithms than ``e`` did.
    """
    if i < 1:
        raise ValueError("axis index is 1-based")
    d = _diff(e, i)
    if any(after > before for after, before in zip(_hazards(d), _hazards(e))):
        warnings.warn(f"d/dx{i} of {to_source(e)} may be singular", DomainWarning, stacklevel=2)
    return d


def _diff(e, i):
    if isinstance(e, (Const, Param)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = _diff(u, i)
        if _is(du, 0.0):
            return ZERO
        op = e.op
        if op == "neg":
            return neg(du)
        if op == "sin":
            return mul(call("cos", u), du)
        if op == "cos":
            return mul(neg(call("sin", u)), du)
        if op == "tan":
            return div(du, power(call("cos", u), TWO))
        if op == "exp":
            return mul(e, du)
        if op == "ln":
            return div(du, u)
        if op == "sqrt":
            return div(du, mul(TWO, e))
        if op == "tanh":
            return mul(sub(ONE, power(e, TWO)), du)
        raise ValueError(f"unknown unary op {op}")

    u, v = e.left, e.right
    du, dv = _diff(u, i), _diff(v, i)
    if e.op == "add":
        return add(du, dv)
    if e.op == "sub":
        return sub(du, dv)
    if e.op == "mul":
        return add(mul(du, v), mul(u, dv))
    if e.op == "div":
        if _is(dv, 0.0):
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, TWO))
    # pow
    if not depends_on(v, i):
        if _is(du, 0.0):
            return ZERO
        return mul(mul(v, power(u, sub(v, ONE))), du)
    if not depends_on(u, i):
        return mul(mul(e, call("ln", u)), dv)
    # u^v = exp(v ln u)
    return mul(e, add(mul(dv, call("ln", u)), div(mul(v, du), u)))
