import numpy as np
import pytest
from hypothesis import given, strategies as st

from doakit.expr import (
    Bin,
    Const,
    EvaluationError,
    ExpressionError,
    Neg,
    Pow,
    Var,
    parse_components,
    pretty,
)


def test_parse_van_der_pol_source():
    comps = parse_components("x2; -2*x1 - 3*x2 + x1^2*x2", 2)
    assert len(comps) == 2
    env = [1.0, 1.0]
    assert comps[0].evaluate(env) == 1.0
    assert comps[1].evaluate(env) == -4.0


def test_parse_zero_field():
    comps = parse_components("0; 0", 2)
    assert [c.evaluate([3.0, 4.0]) for c in comps] == [0.0, 0.0]


def test_parse_rational_term():
    comps = parse_components("x1/(x2^2 + 1); x1", 2)
    assert comps[0].evaluate([2.0, 1.0]) == pytest.approx(1.0)


def test_syntax_error_carries_position():
    with pytest.raises(ExpressionError) as err:
        parse_components("x1 + ", 2)
    assert err.value.position == 5


def test_unknown_identifier_rejected():
    with pytest.raises(ExpressionError, match="unknown identifier 'y'"):
        parse_components("x1 + y", 2)
    with pytest.raises(ExpressionError, match="x1..x2"):
        parse_components("x3", 2)


def test_parameters_fold_to_constants():
    comps = parse_components("p1*x1 + p2", 1, {"p1": 2.0, "p2": -1.0})
    node = comps[0]
    assert node.evaluate([3.0]) == 5.0
    # the parameter product folded: no identifiers other than x1 remain
    assert "p1" not in pretty(node) and "p2" not in pretty(node)


def test_division_by_constant_zero_rejected():
    with pytest.raises(ExpressionError):
        parse_components("x1/0", 1)


def test_runtime_division_by_zero_reports_node():
    comps = parse_components("x1/x2", 2)
    with pytest.raises(EvaluationError, match="x1/x2"):
        comps[0].evaluate([1.0, 0.0])


def test_integer_power_only():
    with pytest.raises(ExpressionError, match="integer"):
        parse_components("x1^1.5", 1)
    with pytest.raises(ExpressionError, match="parentheses"):
        parse_components("x1^2^3", 1)


def test_pretty_parse_fixed_point_on_builtin_sources():
    sources = [
        "x2; -2*x1 - 3*x2 + x1^2*x2",
        "-x1 + x1*x2^2; x1 - x2 + x1^2*x2 - x1*x2^2",
        "x2 + 0.5*x1/(x2^2 + 1); -x1 - x2 + 0.5*x1^2",
    ]
    for src in sources:
        comps = parse_components(src, 2)
        printed = "; ".join(pretty(c) for c in comps)
        comps2 = parse_components(printed, 2)
        assert "; ".join(pretty(c) for c in comps2) == printed


_expr_strategy = st.deferred(
    lambda: st.one_of(
        st.builds(Const, st.floats(min_value=-5, max_value=5, allow_nan=False).map(float)),
        st.builds(Var, st.integers(min_value=0, max_value=2)),
        st.builds(Neg, _expr_strategy),
        st.builds(
            Bin,
            st.sampled_from(["+", "-", "*"]),
            _expr_strategy,
            _expr_strategy,
        ),
        st.builds(Pow, _expr_strategy, st.integers(min_value=0, max_value=4)),
    )
)


@given(_expr_strategy)
def test_pretty_is_idempotent_under_reparse(tree):
    # one parse/print round lands on the canonical form, which is a fixed point
    canonical = pretty(parse_components(pretty(tree), 3)[0])
    again = pretty(parse_components(canonical, 3)[0])
    assert again == canonical


@given(_expr_strategy, st.lists(st.floats(min_value=-3, max_value=3, allow_nan=False), min_size=3, max_size=3))
def test_reparse_preserves_value(tree, env):
    printed = pretty(tree)
    reparsed = parse_components(printed, 3)[0]
    try:
        expected = tree.evaluate(env)
    except (OverflowError, EvaluationError):
        return
    if not np.isfinite(expected):
        return
    assert reparsed.evaluate(env) == pytest.approx(expected, rel=1e-12, abs=1e-12)
