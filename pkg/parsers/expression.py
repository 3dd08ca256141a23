"""
Coefficient expression language.

Grammar (precedence climbing, lowest first):

    expr    :: term (('+' | '-') term)*
    term    :: unary (('*' | '/') unary)*
    unary   :: '-' unary | power
    power   :: primary ('^' unary)?          # right-associative
    primary :: number | variable | name '(' expr (',' expr)* ')' | '(' expr ')'

Variables are t, x, y, z. Functions: sin, cos, exp, tanh, abs, sqrt, min, max.
Evaluation is vectorized: any variable may be bound to a numpy array.
"""
import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

import numpy as np

from errors import DomainEvaluationError, ExpressionSyntaxError, UnknownIdentifierError

VARIABLES = ('t', 'x', 'y', 'z')

FUNCTIONS = {
    'sin': (1, np.sin),
    'cos': (1, np.cos),
    'exp': (1, np.exp),
    'tanh': (1, np.tanh),
    'abs': (1, np.abs),
    'sqrt': (1, np.sqrt),
    'min': (2, np.minimum),
    'max': (2, np.maximum),
}

Value = Union[float, np.ndarray]
Env = Dict[str, Value]


def _first_point(env: Env, mask: np.ndarray) -> Dict[str, float]:
    """Coordinates of the first element where `mask` holds."""
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return {k: float(np.asarray(v).ravel()[0]) for k, v in env.items()}
    index = np.unravel_index(int(np.argmax(mask)), mask.shape)
    point = {}
    for name, value in env.items():
        value = np.broadcast_to(np.asarray(value, dtype=float), mask.shape)
        point[name] = float(value[index])
    return point


class Expr:
    """Base class of the expression tree."""

    def evaluate(self, env: Env) -> Value:
        raise NotImplementedError

    def variables(self) -> FrozenSet[str]:
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_source()


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def evaluate(self, env: Env) -> Value:
        return self.value

    def variables(self) -> FrozenSet[str]:
        return frozenset()

    def to_source(self) -> str:
        if self.value < 0:
            return f"(-{-self.value!r})"
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def evaluate(self, env: Env) -> Value:
        return env[self.name]

    def variables(self) -> FrozenSet[str]:
        return frozenset([self.name])

    def to_source(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def evaluate(self, env: Env) -> Value:
        return -self.operand.evaluate(env)

    def variables(self) -> FrozenSet[str]:
        return self.operand.variables()

    def to_source(self) -> str:
        return f"(-{self.operand.to_source()})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def evaluate(self, env: Env) -> Value:
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == '+':
            return a + b
        if self.op == '-':
            return a - b
        if self.op == '*':
            return a * b
        if self.op == '/':
            zero = np.asarray(b) == 0
            if np.any(zero):
                raise DomainEvaluationError("division by zero", self.to_source(), _first_point(env, zero))
            return a / b
        # '^'
        with np.errstate(invalid='ignore', divide='ignore', over='ignore'):
            result = np.power(np.asarray(a, dtype=float), b)
        bad = ~np.isfinite(result) & np.isfinite(a) & np.isfinite(b)
        if np.any(bad):
            raise DomainEvaluationError("undefined power", self.to_source(), _first_point(env, bad))
        return float(result) if np.ndim(result) == 0 else result

    def variables(self) -> FrozenSet[str]:
        return self.left.variables() | self.right.variables()

    def to_source(self) -> str:
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: Tuple[Expr, ...]

    def evaluate(self, env: Env) -> Value:
        values = [arg.evaluate(env) for arg in self.args]
        if self.name == 'sqrt':
            negative = np.asarray(values[0]) < 0
            if np.any(negative):
                raise DomainEvaluationError("sqrt of negative", self.to_source(), _first_point(env, negative))
        _, fn = FUNCTIONS[self.name]
        with np.errstate(over='ignore'):
            result = fn(*values)
        return float(result) if np.ndim(result) == 0 else result

    def variables(self) -> FrozenSet[str]:
        names = frozenset()
        for arg in self.args:
            names |= arg.variables()
        return names

    def to_source(self) -> str:
        return f"{self.name}({', '.join(a.to_source() for a in self.args)})"


# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str      # 'number', 'name', 'op', 'end'
    text: str
    offset: int    # 0-based character index


def _byte_offset(source: str, index: int) -> int:
    """1-based byte offset of character `index`."""
    return len(source[:index].encode('utf-8')) + 1


def tokenize(source: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if not match:
            raise ExpressionSyntaxError(source, _byte_offset(source, pos),
                                        ['number', 'identifier', 'operator', '(', ')'])
        kind = match.lastgroup
        if kind != 'ws':
            tokens.append(Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(Token('end', '', len(source)))
    return tokens


OPERAND_START = ('number', 'identifier', '(', '-')


class _Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def _fail(self, expected: Iterable[str]):
        raise ExpressionSyntaxError(self.source, _byte_offset(self.source, self.token.offset), expected)

    def _is_op(self, *symbols: str) -> bool:
        return self.token.kind == 'op' and self.token.text in symbols

    def parse(self) -> Expr:
        if self.token.kind == 'end':
            self._fail(OPERAND_START)
        node = self._expr()
        if self.token.kind != 'end':
            self._fail(['operator', 'end of input'])
        return node

    def _expr(self) -> Expr:
        node = self._term()
        while self._is_op('+', '-'):
            op = self._advance().text
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Expr:
        node = self._unary()
        while self._is_op('*', '/'):
            op = self._advance().text
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Expr:
        if self._is_op('-'):
            self._advance()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Expr:
        base = self._primary()
        if self._is_op('^'):
            self._advance()
            return BinOp('^', base, self._unary())
        return base

    def _primary(self) -> Expr:
        tok = self.token
        if tok.kind == 'number':
            value = float(tok.text)
            if not np.isfinite(value):
                self._fail(['finite number'])
            self._advance()
            return Num(value)
        if tok.kind == 'name':
            return self._name()
        if self._is_op('('):
            self._advance()
            node = self._expr()
            if not self._is_op(')'):
                self._fail([')'])
            self._advance()
            return node
        self._fail(OPERAND_START)

    def _name(self) -> Expr:
        tok = self._advance()
        offset = _byte_offset(self.source, tok.offset)
        if self._is_op('('):
            if tok.text not in FUNCTIONS:
                raise UnknownIdentifierError(tok.text, self.source, offset)
            self._advance()
            arity, _ = FUNCTIONS[tok.text]
            args = [self._expr()]
            while len(args) < arity:
                if not self._is_op(','):
                    self._fail([','])
                self._advance()
                args.append(self._expr())
            if not self._is_op(')'):
                self._fail([')'])
            self._advance()
            return Call(tok.text, tuple(args))
        if tok.text in FUNCTIONS:
            self._fail(['('])
        if tok.text not in VARIABLES:
            raise UnknownIdentifierError(tok.text, self.source, offset)
        return Var(tok.text)


def parse(source: str) -> Expr:
    """
    Parse a coefficient expression.

    Args:
        source: Expression text, e.g. "0.5*x + sin(y)"

    Returns:
        Expression tree

    Raises:
        ExpressionSyntaxError: with 1-based byte offset and expected tokens
        UnknownIdentifierError: for names outside the variable/function set
    """
    return _Parser(source).parse()


def evaluate(expr: Expr, env: Env) -> Value:
    """
    Evaluate an expression; array-valued bindings broadcast.

    Raises:
        KeyError: if a variable used by `expr` is not bound
        DomainEvaluationError: division by zero, sqrt of negative
    """
    missing = expr.variables() - set(env)
    if missing:
        raise KeyError(f"unbound variables {sorted(missing)} in `{expr.to_source()}`")
    return expr.evaluate(env)


def to_source(expr: Expr) -> str:
    """Fully parenthesized text; parse(to_source(e)) == e."""
    return expr.to_source()


def bind(expr: Expr, allowed: Iterable[str], slot: Optional[str] = None, source: str = '') -> Expr:
    """Check that `expr` only uses the variables allowed for a coefficient slot."""
    extra = sorted(expr.variables() - set(allowed))
    if extra:
        offset = source.find(extra[0]) + 1 if source else 0
        raise UnknownIdentifierError(extra[0], source or expr.to_source(), offset, slot=slot)
    return expr


if __name__ == "__main__":
    print("Testing expression parser:")
    for text in ["0.5*x + sin(y)", "x^2", "exp(-1/(1-x^2))", "-x^2", "max(x, 0)"]:
        tree = parse(text)
        print(f"  {text:20} -> {to_source(tree):35} at x=0.5,y=1: {evaluate(tree, {'x': 0.5, 'y': 1.0}):.6f}")
    for bad in ["tanh(x", "q + 1"]:
        try:
            parse(bad)
        except Exception as e:
            print(f"  {bad:20} -> {e}")
