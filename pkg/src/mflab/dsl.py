"""Parser for the quasilinear PDE mini-language.

    spec  := "dt y =" term ("+" term)*
    term  := [coeff "*"] ("dx^" INT "y" | "dx" "y" | "y")
    coeff := expression over t, x, y, pi, numbers, + - * / ( ), sin, cos, exp

Whitespace is insignificant. Inside a coefficient the identifier ``y`` is
the state value; at the top level of a coefficient it must be parenthesized
so that it cannot be confused with the unknown closing the term.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

MAX_ORDER = 4
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": float(np.pi)}
PDE_VARIABLES = ("t", "x", "y")


class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.message = message
        self.pos = pos


@dataclass(frozen=True)
class Token:
    kind: str  # num, id, op, dx, end
    text: str
    pos: int


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()=]))")


def tokenize(text: str) -> list[Token]:
    out, pos = [], 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            out.append(Token("end", "", pos))
            return out
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        kind, val = m.lastgroup, m.group(m.lastgroup)
        if kind == "id":
            out.extend(_split_identifier(val, start))
        else:
            out.append(Token(kind, val, start))
        pos = m.end()


def _split_identifier(val: str, start: int) -> list[Token]:
    """Split glued keywords such as ``dty`` or ``dxy`` produced by missing spaces."""
    if val in ("dt", "dx"):
        return [Token("dx" if val == "dx" else "id", val, start)]
    if val.startswith("dx") and val[2:] == "y":
        return [Token("dx", "dx", start), Token("id", "y", start + 2)]
    if val == "dty":
        return [Token("id", "dt", start), Token("id", "y", start + 2)]
    return [Token("id", val, start)]


# expression trees are nested tuples: ("num", v) ("var", name) ("neg", e) (op, a, b) ("call", f, e)

class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.variables = set(variables)

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text if text is not None else kind
            got = t.text if t.kind != "end" else "end of input"
            raise ParseError(f"expected {want!r}, found {got!r}", t.pos)
        return self.advance()

    # generic expressions --------------------------------------------------
    def expr(self):
        node = self.product()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = ("add" if op == "+" else "sub", node, self.product())
        return node

    def product(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = ("mul" if op == "*" else "div", node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return ("neg", self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return ("num", float(t.text))
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect("op", ")")
            return node
        if t.kind == "id":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect("op", "(")
                node = self.expr()
                self.expect("op", ")")
                return ("call", t.text, node)
            if t.text in CONSTANTS:
                return ("num", CONSTANTS[t.text])
            if t.text in self.variables:
                return ("var", t.text)
            raise ParseError(f"unknown identifier {t.text!r}", t.pos)
        got = t.text if t.kind != "end" else "end of input"
        raise ParseError(f"unexpected {got!r}", t.pos)


def parse_expression(text: str, variables: Iterable[str] = PDE_VARIABLES):
    p = _Parser(text, variables)
    node = p.expr()
    if p.tok.kind != "end":
        raise ParseError(f"unexpected {p.tok.text!r}", p.tok.pos)
    return node


def free_variables(node) -> set:
    kind = node[0]
    if kind == "var":
        return {node[1]}
    if kind == "num":
        return set()
    if kind == "call":
        return free_variables(node[2])
    return set().union(*(free_variables(c) for c in node[1:]))


def evaluate(node, env: dict):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "neg":
        return -evaluate(node[1], env)
    if kind == "call":
        return FUNCTIONS[node[1]](evaluate(node[2], env))
    a, b = evaluate(node[1], env), evaluate(node[2], env)
    return {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}[kind](a, b)


def compile_expression(node, variables: Iterable[str] = PDE_VARIABLES):
    """Vectorized callable of the listed variables (positional, in order)."""
    names = tuple(variables)

    def f(*args):
        env = dict(zip(names, args))
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.broadcast_to(np.asarray(evaluate(node, env), dtype=float), shape).copy()

    return f


def differentiate(node, var: str):
    """Exact symbolic derivative of an expression tree (no simplification beyond zeros)."""
    kind = node[0]
    zero, one = ("num", 0.0), ("num", 1.0)
    if kind == "num":
        return zero
    if kind == "var":
        return one if node[1] == var else zero
    if kind == "neg":
        return _neg(differentiate(node[1], var))
    if kind == "call":
        inner = differentiate(node[2], var)
        outer = {"sin": ("call", "cos", node[2]), "cos": _neg(("call", "sin", node[2])),
                 "exp": node}[node[1]]
        return _mul(outer, inner)
    a, b = node[1], node[2]
    da, db = differentiate(a, var), differentiate(b, var)
    if kind == "add":
        return _add(da, db)
    if kind == "sub":
        return _add(da, _neg(db))
    if kind == "mul":
        return _add(_mul(da, b), _mul(a, db))
    # (a / b)' = a' / b - a b' / b^2
    return _add(_div(da, b), _neg(_div(_mul(a, db), ("mul", b, b))))


def _neg(a):
    return a if a == ("num", 0.0) else ("neg", a)


def _add(a, b):
    if a == ("num", 0.0):
        return b
    return a if b == ("num", 0.0) else ("add", a, b)


def _mul(a, b):
    if ("num", 0.0) in (a, b):
        return ("num", 0.0)
    if a == ("num", 1.0):
        return b
    return a if b == ("num", 1.0) else ("mul", a, b)


def _div(a, b):
    return ("num", 0.0) if a == ("num", 0.0) else ("div", a, b)


def to_text(node) -> str:
    kind = node[0]
    if kind == "num":
        return repr(node[1])
    if kind == "var":
        return node[1]
    if kind == "neg":
        return f"(-{to_text(node[1])})"
    if kind == "call":
        return f"{node[1]}({to_text(node[2])})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[kind]
    return f"({to_text(node[1])} {sym} {to_text(node[2])})"


# PDE specs ----------------------------------------------------------------

@dataclass(frozen=True)
class PdeSpec:
    """dt y = sum_l a_l(t, x, y) dx^l y on the torus or on [0, 1]."""

    text: str
    coefficients: tuple  # expression trees a_0 .. a_p
    domain: str = "torus"

    def __post_init__(self):
        if self.domain not in ("torus", "interval"):
            raise ValueError("domain must be 'torus' or 'interval'")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def coefficient(self, l: int):
        return compile_expression(self.coefficients[l])

    def depends_on(self, name: str) -> bool:
        return any(name in free_variables(c) for c in self.coefficients)

    @property
    def quasilinear(self) -> bool:
        return self.depends_on("y")

    @property
    def autonomous(self) -> bool:
        return not self.depends_on("t")

    def is_zero(self) -> bool:
        return all(c == ("num", 0.0) for c in self.coefficients)

    def ast(self) -> dict:
        return {"order": self.order, "domain": self.domain,
                "coefficients": [to_text(c) for c in self.coefficients]}

    def ast_json(self) -> str:
        return json.dumps(self.ast(), sort_keys=True)

    def check_interval(self, samples: int = 64, seed: int = 0, tol: float = 1e-10) -> None:
        """On [0, 1] every a_l with l >= 1 must vanish at both ends."""
        rng = np.random.Generator(np.random.Philox(seed))
        t = rng.random(samples)
        y = rng.normal(size=samples) * 2.0
        for l in range(1, self.order + 1):
            f = self.coefficient(l)
            for xe in (0.0, 1.0):
                v = f(t, np.full(samples, xe), y)
                if np.max(np.abs(v)) > tol:
                    raise ValueError(f"coefficient a_{l} does not vanish at x={xe:g}; interval domain needs it")


def parse_pde(text: str, domain: str = "torus") -> PdeSpec:
    p = _Parser(text, PDE_VARIABLES)
    for word in ("dt", "y"):
        t = p.tok
        if t.kind != "id" or t.text != word:
            got = t.text if t.kind != "end" else "end of input"
            raise ParseError(f"expected {word!r}, found {got!r}", t.pos)
        p.advance()
    p.expect("op", "=")
    terms = {}
    while True:
        order, coeff = _term(p)
        terms[order] = coeff if order not in terms else ("add", terms[order], coeff)
        if p.tok.kind == "end":
            break
        if p.tok.kind == "op" and p.tok.text == "+":
            p.advance()
            continue
        raise ParseError(f"expected '+' or end of input, found {p.tok.text!r}", p.tok.pos)
    order = max(terms)
    coeffs = tuple(terms.get(l, ("num", 0.0)) for l in range(order + 1))
    spec = PdeSpec(text, coeffs, domain)
    if domain == "interval":
        spec.check_interval()
    return spec


def _term(p: _Parser):
    coeff = ("num", 1.0)
    if not _at_operator_start(p):
        coeff = _coefficient(p)
        p.expect("op", "*")
    return _operator(p), coeff


def _at_operator_start(p: _Parser) -> bool:
    t = p.tok
    if t.kind == "dx":
        return True
    if t.kind == "id" and t.text == "y":
        nxt = p.toks[p.i + 1]
        return nxt.kind == "end" or (nxt.kind == "op" and nxt.text == "+")
    return False


def _coefficient(p: _Parser):
    """Product-level expression; a bare top-level y would be read as the unknown."""
    node = _coeff_factor(p)
    while p.tok.kind == "op" and p.tok.text in "*/":
        if p.tok.text == "*" and _operator_follows(p):
            break
        op = p.advance().text
        node = ("mul" if op == "*" else "div", node, _coeff_factor(p))
    return node


def _operator_follows(p: _Parser) -> bool:
    t = p.toks[p.i + 1]
    if t.kind == "dx":
        return True
    if t.kind == "id" and t.text == "y":
        nxt = p.toks[p.i + 2]
        return nxt.kind == "end" or (nxt.kind == "op" and nxt.text == "+")
    return False


def _coeff_factor(p: _Parser):
    t = p.tok
    if t.kind == "id" and t.text == "y":
        raise ParseError("state variable y in a coefficient must be parenthesized", t.pos)
    if t.kind == "op" and t.text == "-":
        p.advance()
        return ("neg", _coeff_factor(p))
    return p.atom()


def _operator(p: _Parser) -> int:
    t = p.tok
    if t.kind == "id" and t.text == "y":
        p.advance()
        return 0
    p.expect("dx")
    order = 1
    if p.tok.kind == "op" and p.tok.text == "^":
        p.advance()
        nt = p.tok
        if nt.kind != "num" or not re.fullmatch(r"\d+", nt.text):
            raise ParseError("derivative order must be a non-negative integer", nt.pos)
        p.advance()
        order = int(nt.text)
        if order > MAX_ORDER:
            raise ParseError(f"derivative order {order} exceeds the maximum {MAX_ORDER}", nt.pos)
    yt = p.tok
    if yt.kind != "id" or yt.text != "y":
        got = yt.text if yt.kind != "end" else "end of input"
        raise ParseError(f"expected 'y' after derivative, found {got!r}", yt.pos)
    p.advance()
    return order
