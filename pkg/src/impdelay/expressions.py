"""A small closed expression language for scenario data.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := postfix ("^" unary)?          # right associative
    postfix := primary ("[" INT "]")?
    primary := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Names are variables (``t``, ``x0`` .. ``xN``, ``a``, ``w``, ``xi``, ``xT``,
``x``), the constant ``pi``, or one of the functions ``sin cos exp log abs
sqrt min max step``.  ``step(t0)`` is the indicator of ``t > t0``.

Expressions compile to numpy closures, so every variable may be an array and
results broadcast.  Vector variables carry their components on the last axis.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError, EvaluationError

__all__ = ["Expression", "ExpressionSyntaxError", "parse_expression", "NONSMOOTH_FUNCTIONS"]

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "log": (1, np.log),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "min": (-2, None),
    "max": (-2, None),
    "step": (1, None),
}
NONSMOOTH_FUNCTIONS = frozenset({"abs", "min", "max", "step"})
CONSTANTS = {"pi": np.pi}
_VAR_PATTERN = re.compile(r"^(t|a|w|xi|xT|x|x\d+)$")


class ExpressionSyntaxError(ConfigurationError):
    def __init__(self, message: str, text: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}: {text!r}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, NAME, OP, EOF
    text: str
    pos: int


_TOKEN_RE = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\S))")


def _tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        num, name, op = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            tokens.append(Token("NUM", num, start))
        elif name is not None:
            tokens.append(Token("NAME", name, start))
        else:
            if op not in "+-*/^()[],":
                raise _syntax_error(f"unexpected character {op!r}", text, start)
            tokens.append(Token("OP", op, start))
        pos = m.end()
    tokens.append(Token("EOF", "", len(text)))
    return tokens


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _syntax_error(msg: str, text: str, pos: int) -> ExpressionSyntaxError:
    line, col = _line_col(text, pos)
    return ExpressionSyntaxError(msg, text, line, col)


# -- AST ------------------------------------------------------------------
@dataclass(frozen=True)
class Node:
    pos: int


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str
    index: int | None = None


@dataclass(frozen=True)
class Unary(Node):
    operand: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str) -> Token:
        tok = self.take()
        if tok.kind != "OP" or tok.text != op:
            found = tok.text or "end of input"
            raise _syntax_error(f"expected {op!r}, found {found!r}", self.text, tok.pos)
        return tok

    def at(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "OP" and tok.text in ops

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "EOF":
            raise _syntax_error(f"unexpected {tok.text!r}", self.text, tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.at("+", "-"):
            op = self.take()
            node = Binary(op.pos, op.text, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.at("*", "/"):
            op = self.take()
            node = Binary(op.pos, op.text, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.at("-"):
            op = self.take()
            return Unary(op.pos, self.unary())
        if self.at("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.postfix()
        if self.at("^"):
            op = self.take()
            return Binary(op.pos, "^", base, self.unary())
        return base

    def postfix(self) -> Node:
        node = self.primary()
        if self.at("["):
            lb = self.take()
            if not isinstance(node, Var):
                raise _syntax_error("only variables can be indexed", self.text, lb.pos)
            tok = self.take()
            if tok.kind != "NUM" or not tok.text.isdigit():
                raise _syntax_error("index must be a nonnegative integer literal", self.text, tok.pos)
            self.expect("]")
            node = Var(node.pos, node.name, int(tok.text))
        return node

    def primary(self) -> Node:
        tok = self.take()
        if tok.kind == "NUM":
            return Num(tok.pos, float(tok.text))
        if tok.kind == "NAME":
            if self.at("("):
                if tok.text not in FUNCTIONS:
                    raise _syntax_error(f"unknown function {tok.text!r}", self.text, tok.pos)
                self.take()
                args = [self.expr()]
                while self.at(","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[tok.text][0]
                if (arity > 0 and len(args) != arity) or (arity < 0 and len(args) < -arity):
                    need = arity if arity > 0 else f"at least {-arity}"
                    raise _syntax_error(
                        f"{tok.text}() takes {need} argument(s), got {len(args)}", self.text, tok.pos
                    )
                return Call(tok.pos, tok.text, tuple(args))
            if tok.text in FUNCTIONS:
                raise _syntax_error(f"function {tok.text!r} used without arguments", self.text, tok.pos)
            return Var(tok.pos, tok.text)
        if tok.kind == "OP" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise _syntax_error(f"unexpected {found!r}", self.text, tok.pos)


# -- compilation ----------------------------------------------------------
def _walk(node: Node):
    yield node
    if isinstance(node, Unary):
        yield from _walk(node.operand)
    elif isinstance(node, Binary):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _walk(a)


@dataclass
class Expression:
    """Parsed expression; call :meth:`evaluate` with variables as keywords."""

    text: str
    ast: Node
    dims: Mapping[str, int] | None = None
    _fn: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.variables = frozenset(n.name for n in _walk(self.ast) if isinstance(n, Var) and n.name not in CONSTANTS)
        self.functions = frozenset(n.name for n in _walk(self.ast) if isinstance(n, Call))
        self.nonsmooth = bool(self.functions & NONSMOOTH_FUNCTIONS)
        self._fn = self._compile(self.ast)

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def depends_on(self, *names: str) -> bool:
        return any(n in self.variables for n in names)

    def evaluate(self, **env) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self._fn(env)

    __call__ = evaluate

    def _located(self, node: Node, msg: str) -> EvaluationError:
        line, col = _line_col(self.text, node.pos)
        return EvaluationError(f"{msg} at line {line}, column {col} of {self.text!r}")

    def _compile(self, node: Node) -> Callable:
        if isinstance(node, Num):
            v = node.value
            return lambda env: v
        if isinstance(node, Var):
            return self._compile_var(node)
        if isinstance(node, Unary):
            f = self._compile(node.operand)
            return lambda env: -f(env)
        if isinstance(node, Binary):
            f, g = self._compile(node.left), self._compile(node.right)
            if node.op == "+":
                return lambda env: f(env) + g(env)
            if node.op == "-":
                return lambda env: f(env) - g(env)
            if node.op == "*":
                return lambda env: f(env) * g(env)
            if node.op == "/":
                return self._checked(node, lambda env: np.divide(f(env), g(env)), "division by zero")
            return self._checked(node, lambda env: np.power(f(env), g(env)), "invalid power")
        if isinstance(node, Call):
            args = [self._compile(a) for a in node.args]
            if node.name == "min":
                return lambda env: _reduce(np.minimum, [a(env) for a in args])
            if node.name == "max":
                return lambda env: _reduce(np.maximum, [a(env) for a in args])
            if node.name == "step":
                a0 = args[0]
                return lambda env: np.where(np.asarray(_need(env, "t", node, self)) > a0(env), 1.0, 0.0)
            fn = FUNCTIONS[node.name][1]
            a0 = args[0]
            if node.name in ("log", "sqrt"):
                return self._checked(node, lambda env: fn(a0(env)), f"{node.name} outside its domain")
            if node.name == "exp":
                return self._checked(node, lambda env: fn(a0(env)), "exp overflow")
            return lambda env: fn(a0(env))
        raise TypeError(node)

    def _checked(self, node: Node, fn: Callable, msg: str) -> Callable:
        def run(env):
            out = fn(env)
            if not np.all(np.isfinite(out)):
                raise self._located(node, msg)
            return out

        return run

    def _compile_var(self, node: Var) -> Callable:
        name, idx = node.name, node.index
        if name in CONSTANTS:
            if idx is not None:
                raise _syntax_error("constants cannot be indexed", self.text, node.pos)
            c = CONSTANTS[name]
            return lambda env: c
        if self.dims is not None:
            if name not in self.dims:
                raise _syntax_error(f"unknown identifier {name!r}", self.text, node.pos)
            d = self.dims[name]
            if d == 0 and idx is not None:
                raise _syntax_error(f"{name!r} is a scalar and cannot be indexed", self.text, node.pos)
            if d > 0 and idx is not None and idx >= d:
                raise _syntax_error(f"index {idx} out of range for {name!r} of size {d}", self.text, node.pos)
            if d > 1 and idx is None:
                raise _syntax_error(f"vector {name!r} must be indexed", self.text, node.pos)
            if d == 0:
                return lambda env: _need(env, name, node, self)
            k = 0 if idx is None else idx
            return lambda env: np.asarray(_need(env, name, node, self))[..., k]
        if not _VAR_PATTERN.match(name):
            raise _syntax_error(f"unknown identifier {name!r}", self.text, node.pos)
        if idx is None:
            def scalar(env):
                v = np.asarray(_need(env, name, node, self))
                if name == "t" or v.ndim == 0:
                    return v
                if v.shape[-1] != 1:
                    raise self._located(node, f"vector {name!r} must be indexed")
                return v[..., 0]

            return scalar

        def indexed(env):
            v = np.asarray(_need(env, name, node, self))
            if v.ndim == 0 or idx >= v.shape[-1]:
                raise self._located(node, f"index {idx} out of range for {name!r}")
            return v[..., idx]

        return indexed


def _need(env, name, node, expr):
    try:
        return env[name]
    except KeyError:
        raise expr._located(node, f"variable {name!r} not supplied") from None


def _reduce(op, vals):
    out = vals[0]
    for v in vals[1:]:
        out = op(out, v)
    return out


def parse_expression(text: str, variables: Mapping[str, int] | None = None) -> Expression:
    """Parse ``text``; ``variables`` maps allowed names to sizes (0 = scalar)."""
    if not isinstance(text, str):
        text = repr(text) if isinstance(text, (int, float)) else str(text)
    if not text.strip():
        raise ExpressionSyntaxError("empty expression", text, 1, 1)
    ast = _Parser(text).parse()
    return Expression(text, ast, dict(variables) if variables is not None else None)
