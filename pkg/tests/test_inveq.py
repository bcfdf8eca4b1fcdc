import itertools
from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings

from etrnn.errors import DivisionByZero
from etrnn.formula import evaluate_formula, parse_etr_inv
from etrnn.inveq import (
    CombinedConstraint,
    SignedTerm,
    check_combined,
    format_combined,
    lower_to_combined,
    parse_combined,
    pull_back,
    push_forward,
    raise_to_etr_inv,
    split_repeated_terms,
)

from corpus import SATISFIABLE
from strategies import formulas, satisfied_formulas


def lines(cf):
    return format_combined(cf).splitlines()


def test_inversion_partner_substituted_and_coverage_added():
    cf = lower_to_combined(parse_etr_inv("x * y = 1\nx + x = z"))
    assert lines(cf) == ["+x +x -z = 0", "+x^-1 +__cov0 -__cov0_t = 0"]
    assert cf.backmap["y"] == ("x", -1)
    assert cf.backmap["x"] == ("x", 1)


def test_no_inversions_is_identity():
    cf = lower_to_combined(parse_etr_inv("x + y = z"))
    assert lines(cf) == ["+x +y -z = 0"]
    assert dict(cf.backmap) == {"x": ("x", 1), "y": ("y", 1), "z": ("z", 1)}
    assert not cf.aux


def test_dedup_then_substitute():
    cf = lower_to_combined(parse_etr_inv("x * y1 = 1\nx * y2 = 1\ny2 + a = b"))
    assert lines(cf)[0] == "+x^-1 +a -b = 0"
    assert cf.backmap["y1"] == ("x", -1) and cf.backmap["y2"] == ("x", -1)
    assert "y1" not in cf.names and "y2" not in cf.names


def test_inversion_chain_resolves_to_lowest_index():
    cf = lower_to_combined(parse_etr_inv("x * y = 1\ny * z = 1\nz + y = w"))
    assert cf.backmap["z"] == ("x", 1)
    assert cf.backmap["y"] == ("x", -1)
    assert lines(cf)[0] == "+x +x^-1 -w = 0"


def test_self_inversion_forces_unit():
    cf = lower_to_combined(parse_etr_inv("x * x = 1"))
    ok = [v for v in (F(-3), F(-1), F(1, 2), F(1), F(2)) if check_combined(cf, push_forward(cf, {"x": v})).satisfied]
    assert ok == [F(-1), F(1)]


def test_check_combined_examples():
    cf = parse_combined("+x +y -z = 0")
    assert check_combined(cf, {"x": F(1), "y": F(2), "z": F(3)}).residuals == (0,)
    cf = parse_combined("+x^-1 +u -u = 0")
    r = check_combined(cf, {"x": F(5), "u": F(9)})
    assert r.residuals == (F(1, 5),) and not r.satisfied
    with pytest.raises(DivisionByZero):
        check_combined(cf, {"x": F(0), "u": F(9)})


def test_signs_enforced():
    x = parse_combined("+x +y -z = 0").variables[0]
    with pytest.raises(ValueError):
        CombinedConstraint((SignedTerm(x), SignedTerm(x, 1, -1), SignedTerm(x)))


def test_split_repeated_terms():
    cf = split_repeated_terms(lower_to_combined(parse_etr_inv("x + x = z")))
    assert lines(cf) == [
        "+x +__alias0 -z = 0",
        "+x +__alias0_u -__alias0_t = 0",
        "+__alias0 +__alias0_u -__alias0_t = 0",
    ]
    full = push_forward(cf, {"x": F(3), "z": F(6)})
    assert full["__alias0"] == 3 and check_combined(cf, full).satisfied


@pytest.mark.parametrize("text,a", SATISFIABLE)
def test_equisatisfiable_forward(text, a):
    f = parse_etr_inv(text)
    assert evaluate_formula(f, a).satisfied
    for cf in (lower_to_combined(f), split_repeated_terms(lower_to_combined(f))):
        full = push_forward(cf, a)
        assert check_combined(cf, full).satisfied
        assert pull_back(cf, full) == a


@pytest.mark.parametrize("text,_", SATISFIABLE)
def test_every_variable_covered(text, _):
    cf = split_repeated_terms(lower_to_combined(parse_etr_inv(text)))
    used = {t.var.name for c in cf.constraints for t in c.terms}
    assert used == set(cf.names)


GRID = [F(-2), F(-1), F(1, 2), F(1), F(2), F(3)]


@settings(max_examples=40)
@given(formulas(max_constraints=2, names=["x", "y", "z"]))
def test_equisatisfiable_backward_on_grid(f):
    cf = lower_to_combined(f)
    assume(len(cf.variables) <= 5)
    names = cf.names
    for values in itertools.product(GRID, repeat=len(names)):
        a = dict(zip(names, values))
        if check_combined(cf, a).satisfied:
            assert evaluate_formula(f, pull_back(cf, a)).satisfied


@given(formulas())
def test_lowering_idempotent_on_combined_input(f):
    cf = lower_to_combined(f)
    again = lower_to_combined(raise_to_etr_inv(cf))
    assert lines(again) == lines(cf)


@given(satisfied_formulas())
def test_forward_direction_random(case):
    f, a = case
    assert evaluate_formula(f, a).satisfied
    cf = split_repeated_terms(lower_to_combined(f))
    full = push_forward(cf, a)
    assert check_combined(cf, full).satisfied
    assert pull_back(cf, full) == a


def test_parse_combined_roundtrip():
    text = "+x +y^-1 -z = 0\n+z^-1 +x -y = 0\n"
    assert format_combined(parse_combined(text)) == text
