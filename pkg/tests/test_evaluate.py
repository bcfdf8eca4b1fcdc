from dataclasses import replace
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from etrnn.errors import IdMismatch, IncompatibleDimensions, LengthMismatch, ModeMismatch, SchemaError
from etrnn.evaluate import (
    Witness,
    cost_value,
    decode_witness,
    encode_witness,
    forward_eval,
    total_cost,
    verify_witness,
)
from etrnn.formula import parse_etr_inv
from etrnn.gadgets import build_inversion_gadget, build_subtraction_gadget, build_variable_gadget
from etrnn.lowering import compile_full
from etrnn.network import Activation, DataPoint, Edge, Neuron, TrainingInstance
from etrnn.witness import synthesize_witness

from strategies import layered_instances, small_fractions


def one_path(act="identity"):
    n = (Neuron(0, "input"), Neuron(1, "input"), Neuron(2, "hidden", Activation(act), None),
         Neuron(3, "output", bias=None))
    return TrainingInstance(n, (Edge(0, 0, 2), Edge(1, 1, 2), Edge(2, 2, 3)))


def test_zero_input_gives_folded_bias():
    inst = one_path()
    w = Witness({0: F(1), 1: F(1), 2: F(3)}, {2: F(5), 3: F(-2)})
    assert forward_eval(inst, w, [F(0), F(0)]) == [3 * 5 - 2]


def test_single_path_product():
    inst = one_path()
    w = Witness({0: F(2), 1: F(7), 2: F(3)}, {2: F(0), 3: F(0)})
    assert forward_eval(inst, w, [F(1), F(0)]) == [6]


def test_relu_cuts_negative():
    inst = one_path("relu")
    w = Witness({0: F(-2), 1: F(0), 2: F(5)}, {2: F(0), 3: F(0)})
    assert forward_eval(inst, w, [F(1), F(0)]) == [0]


def test_dimension_and_id_errors():
    inst = one_path()
    w = Witness({0: F(1), 1: F(1), 2: F(1)}, {2: F(0), 3: F(0)})
    with pytest.raises(IncompatibleDimensions):
        forward_eval(inst, w, [F(1)])
    with pytest.raises(IdMismatch):
        forward_eval(inst, Witness({0: F(1)}, {}), [F(1), F(0)])


def test_cost_examples():
    assert cost_value("mse", [F(1), F(2), F(3)], [F(1), F(2), F(3)]) == 0
    assert cost_value("mse", [F(0)], [F(1)]) == 1
    assert cost_value("l1", [F(1), F(1), F(0)], [F(0), F(1), F(2)]) == 3
    with pytest.raises(LengthMismatch):
        cost_value("mse", [F(1)], [F(1), F(2)])


def test_gadget_costs():
    sub = build_subtraction_gadget()
    assert total_cost(sub.instance, Witness(sub.witness_weights(x=F(3), y=F(-3)))) == 0
    w = Witness(sub.witness_weights(x=F(3), y=F(-2)))
    assert forward_eval(sub.instance, w, [F(1), F(1)]) == [1]
    assert total_cost(sub.instance, w) > 0
    inv = build_inversion_gadget()
    assert total_cost(inv.instance, Witness(inv.witness_weights(x=F(2), y=F(1, 2), z=F(2)))) == 0
    assert total_cost(inv.instance, Witness(inv.witness_weights(x=F(2), y=F(1, 2), z=F(3)))) == F(5, 4)
    var, _ = build_variable_gadget()
    zero = Witness({e: F(0) for e in var.instance.free_edges})
    assert total_cost(var.instance, zero) > 0


def test_pipeline_accept_and_perturb():
    inst, cmap = compile_full(parse_etr_inv("x + y = z"))
    w = synthesize_witness(cmap, {"x": F(1), "y": F(2), "z": F(3)}, inst)
    r = verify_witness(inst, w)
    assert r.accepted and r.total_cost == 0 and isinstance(r.total_cost, F)
    bad = w.copy()
    e = inst.free_edges[0]
    bad.weights[e] += F(1, 7)
    r = verify_witness(inst, bad)
    assert not r.accepted and r.total_cost > 0


def test_float_verification_of_irrational_solution():
    f = parse_etr_inv("x + x = y\nx * y = 1")
    inst, cmap = compile_full(f)
    x = 0.7071067811865476
    w = synthesize_witness(cmap, {"x": x, "y": 2 * x}, inst, tolerance=1e-12)
    assert w.mode == "float"
    r = verify_witness(inst, w, tolerance=1e-12)
    assert r.accepted and r.total_cost <= 1e-12


def test_mode_mismatch():
    inst = one_path()
    w = Witness({0: F(1), 1: 1.0, 2: F(1)}, {2: F(0), 3: F(0)})
    with pytest.raises(ModeMismatch):
        verify_witness(inst, w)
    with pytest.raises(ModeMismatch):
        verify_witness(inst, Witness({0: 1.0, 1: 1.0, 2: 1.0}, {2: 0.0, 3: 0.0}, "exact"))


@given(st.sampled_from(["mse", "l1"]), st.lists(st.tuples(small_fractions, small_fractions), min_size=1, max_size=6))
def test_honesty(tag, pairs):
    y = [a for a, _ in pairs]
    yp = [b for _, b in pairs]
    assert (cost_value(tag, y, yp) == 0) == (y == yp)


@given(layered_instances(free_only=True, allow_ignore=False), small_fractions, small_fractions, st.data())
def test_linearity_without_biases(case, alpha, beta, data):
    inst, w = case
    w = Witness(w.weights, {n: F(0) for n in w.biases})
    S = len(inst.inputs)
    x1 = [data.draw(small_fractions) for _ in range(S)]
    x2 = [data.draw(small_fractions) for _ in range(S)]
    mix = [alpha * a + beta * b for a, b in zip(x1, x2)]
    y1, y2 = forward_eval(inst, w, x1), forward_eval(inst, w, x2)
    assert forward_eval(inst, w, mix) == [alpha * a + beta * b for a, b in zip(y1, y2)]


@given(layered_instances(activations=("identity", "relu")), st.randoms(use_true_random=False))
def test_order_independence(case, rnd):
    inst, w = case
    r = verify_witness(inst, w)
    perm = list(range(len(inst.data)))
    rnd.shuffle(perm)
    shuffled = replace(inst, data=tuple(inst.data[k] for k in perm))
    r2 = verify_witness(shuffled, w)
    assert r2.total_cost == r.total_cost and r2.accepted == r.accepted
    assert r2.costs == [r.costs[k] for k in perm]


@given(layered_instances(activations=("identity", "relu")))
def test_float_tracks_exact(case):
    inst, w = case
    exact = verify_witness(inst, w).total_cost
    approx = verify_witness(inst, w.to_float()).total_cost
    assert abs(float(exact) - approx) <= 1e-9 * max(1.0, abs(float(exact)))


@given(layered_instances())
def test_witness_roundtrip(case):
    _, w = case
    raw = encode_witness(w)
    assert decode_witness(raw) == w and encode_witness(decode_witness(raw)) == raw
    fw = w.to_float()
    assert decode_witness(encode_witness(fw)) == fw


def test_witness_schema_errors():
    with pytest.raises(SchemaError):
        decode_witness('{"mode": "exact", "weights": {"0": 1.5}, "biases": {}}')
    with pytest.raises(SchemaError):
        decode_witness('{"mode": "float", "weights": {"0": "1/2"}, "biases": {}}')
    with pytest.raises(SchemaError):
        decode_witness('{"mode": "exact", "weights": {"a": "1"}, "biases": {}}')
    with pytest.raises(SchemaError):
        decode_witness('{"mode": "exact", "weights": {}}')
