import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mflab.dsl import (ParseError, compile_expression, differentiate, evaluate, free_variables, parse_expression,
                       parse_pde, to_text)

GOLDEN = json.loads((Path(__file__).parent / "golden" / "dsl_cases.json").read_text())


def golden_check(case) -> tuple[bool, str]:
    """(matches, observed) for one stored case, compared byte for byte."""
    try:
        got = parse_pde(case["input"]).ast_json()
        return "ast" in case and got == case["ast"], got
    except ParseError as e:
        got = f"{e.message} @ {e.pos}"
        return "error" in case and (e.message, e.pos) == (case["error"], case["position"]), got


def test_golden_count():
    assert len(GOLDEN) == 12
    assert sum("ast" in c for c in GOLDEN) == 6


@pytest.mark.parametrize("case", GOLDEN, ids=[c["input"] for c in GOLDEN])
def test_golden(case):
    ok, got = golden_check(case)
    assert ok, got


def test_spec_examples():
    s = parse_pde("dt y = -1 * dx^1 y")
    assert s.order == 1 and s.coefficient(1)(0, 0, 0) == -1 and s.coefficient(0)(0, 0, 0) == 0
    h = parse_pde("dt y = dx^2 y")
    assert h.order == 2 and h.coefficient(2)(0, 0, 0) == 1 and not h.quasilinear and h.autonomous
    with pytest.raises(ParseError):
        parse_pde("dt y = sin(2*pi*x) * dx^1 y + y * y")
    q = parse_pde("dt y = sin(2*pi*x)*dx^1 y + (y)*dx^0 y")
    assert q.quasilinear and q.coefficient(0)(0.0, 0.3, 1.7) == 1.7


def test_error_message_format():
    with pytest.raises(ParseError) as e:
        parse_pde("dt y = dx^7 y")
    assert str(e.value) == "derivative order 7 exceeds the maximum 4 at position 10"


def test_repeated_orders_sum():
    s = parse_pde("dt y = 2 * dx y + x * dx^1 y")
    assert s.coefficient(1)(0.0, 0.5, 0.0) == 2.5


def test_whitespace_insensitive():
    a = parse_pde("dt y = 0.5*dx^2 y + cos(x)*dx y")
    b = parse_pde("dt   y=0.5 *  dx ^ 2  y+cos( x ) * dxy")
    assert a.ast_json() == b.ast_json()


def test_interval_check():
    parse_pde("dt y = x*(1-x) * dx^1 y", domain="interval").check_interval()
    with pytest.raises(ValueError):
        parse_pde("dt y = dx^2 y", domain="interval").check_interval()
    with pytest.raises(ValueError):
        parse_pde("dt y = dx^2 y", domain="sphere")


def test_expression_evaluation():
    node = parse_expression("exp(-t) * sin(2*pi*x) / (1 + y*y)")
    assert free_variables(node) == {"t", "x", "y"}
    v = evaluate(node, {"t": 0.5, "x": 0.125, "y": 2.0})
    assert v == pytest.approx(math.exp(-0.5) * math.sin(math.pi / 4) / 5, rel=1e-15)
    f = compile_expression(node)
    np.testing.assert_allclose(f(np.array([0.5, 0.5]), 0.125, np.array([2.0, 0.0])),
                               [v, math.exp(-0.5) * math.sin(math.pi / 4)], rtol=1e-15)
    with pytest.raises(ParseError, match="position 1"):
        parse_expression("x^2")  # no power operator in coefficients


def test_unknown_identifier_position():
    with pytest.raises(ParseError) as e:
        parse_expression("x + bar", ("x",))
    assert e.value.pos == 4


@settings(max_examples=60, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_symbolic_derivative_matches_finite_difference(a, b):
    node = parse_expression("sin(q) * exp(p) + q*q*p - cos(q*p) / (2 + q*q)", ("q", "p"))
    dq = differentiate(node, "q")
    h = 1e-6
    fd = (evaluate(node, {"q": a + h, "p": b}) - evaluate(node, {"q": a - h, "p": b})) / (2 * h)
    assert evaluate(dq, {"q": a, "p": b}) == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_to_text_round_trip():
    node = parse_expression("(1 - x) * sin(pi * x) / exp(t)")
    assert evaluate(parse_expression(to_text(node)), {"t": 0.3, "x": 0.2, "y": 0}) == evaluate(
        node, {"t": 0.3, "x": 0.2, "y": 0})
