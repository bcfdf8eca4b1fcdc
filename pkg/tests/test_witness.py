import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from etrnn.errors import (
    ModeMismatch,
    NonIdentityActivation,
    NotZeroCost,
    UnsatisfyingAssignment,
    ZeroInverse,
    ZeroScalingWeight,
)
from etrnn.evaluate import Witness, forward_eval, verify_witness
from etrnn.formula import evaluate_formula, parse_etr_inv
from etrnn.lowering import compile_full
from etrnn.network import Activation, Edge, Neuron, TrainingInstance
from etrnn.witness import (
    extract_assignment,
    fold_biases,
    normalize_witness,
    scale_middle,
    synthesize_witness,
    unfold_bias,
)

from corpus import SATISFIABLE
from strategies import nonzero_fractions, small_fractions

COMPILED = {}


def compiled(text):
    if text not in COMPILED:
        COMPILED[text] = compile_full(parse_etr_inv(text))
    return COMPILED[text]


def star(out_weights, in_weights=(F(1),)):
    """inputs -> one middle -> several outputs, all free."""
    k, t = len(in_weights), len(out_weights)
    n = [Neuron(i, "input") for i in range(k)] + [Neuron(k, "hidden", bias=None)]
    n += [Neuron(k + 1 + j, "output", bias=None) for j in range(t)]
    e = [Edge(i, i, k) for i in range(k)] + [Edge(k + j, k, k + 1 + j) for j in range(t)]
    inst = TrainingInstance(tuple(n), tuple(e))
    w = Witness({i: v for i, v in enumerate(in_weights)} | {k + j: v for j, v in enumerate(out_weights)},
                {nid: F(0) for nid in inst.free_biases})
    return inst, w


@pytest.mark.parametrize("text,a", [
    ("x + y = z\nx * w = 1", {"x": F(2), "y": F(1), "z": F(3), "w": F(1, 2)}),
    ("x + y = z", {"x": F(1), "y": F(2), "z": F(3)}),
])
def test_synthesize_examples(text, a):
    inst, cmap = compiled(text)
    w = synthesize_witness(cmap, a, inst)
    assert verify_witness(inst, w).total_cost == 0


def test_synthesize_rejects():
    inst, cmap = compiled("x + y = z")
    with pytest.raises(UnsatisfyingAssignment):
        synthesize_witness(cmap, {"x": F(1), "y": F(2), "z": F(4)}, inst)
    with pytest.raises(UnsatisfyingAssignment):
        synthesize_witness(cmap, {"x": F(1), "y": F(2)}, inst)
    with pytest.raises(ZeroInverse):
        synthesize_witness(cmap, {"x": F(0), "y": F(2), "z": F(2)}, inst)
    inst2, cmap2 = compiled("x * y = 1")
    with pytest.raises(UnsatisfyingAssignment):
        synthesize_witness(cmap2, {"x": F(2), "y": F(1, 3)}, inst2)


def test_synthesize_without_instance_matches():
    inst, cmap = compiled("x * y = 1\nx + y = z")
    a = {"x": F(2), "y": F(1, 2), "z": F(5, 2)}
    assert synthesize_witness(cmap, a) == synthesize_witness(cmap, a, inst)


def test_fold_examples():
    inst, w = star([F(2)])
    w.biases[1] = F(5)
    w.biases[2] = F(1)
    out = fold_biases(inst, w)
    assert out.biases == {1: 0, 2: 11}
    inst, w = star([F(2), F(-1)])
    w.biases[1] = F(3)
    out = fold_biases(inst, w)
    assert out.biases == {1: 0, 2: 6, 3: -3}
    inst, w = star([F(2), F(-1)])
    assert fold_biases(inst, w) == w


def test_fold_needs_identity():
    inst, w = star([F(2)])
    relu = TrainingInstance(tuple(n if n.role != "hidden" else Neuron(n.id, "hidden", Activation("relu"), None)
                                  for n in inst.neurons), inst.edges)
    w.biases[1] = F(1)
    with pytest.raises(NonIdentityActivation):
        fold_biases(relu, w)


def test_scale_example():
    inst, w = star([F(3)], in_weights=(F(2), F(4)))
    out = scale_middle(inst, w, 2, F(1, 2))
    assert [out.weights[e] for e in (0, 1, 2)] == [1, 2, 6]
    for x in ([F(1), F(0)], [F(3), F(-2)]):
        assert forward_eval(inst, out, x) == forward_eval(inst, w, x)
    with pytest.raises(ZeroScalingWeight):
        scale_middle(inst, w, 2, 0)


@pytest.mark.parametrize("text,a", SATISFIABLE[:6])
def test_synthesized_is_normalized(text, a):
    inst, cmap = compiled(text)
    w = synthesize_witness(cmap, a, inst)
    assert normalize_witness(inst, fold_biases(inst, w), cmap) == w


def test_extract_rejects():
    inst, cmap = compiled("x + y = z")
    w = synthesize_witness(cmap, {"x": F(1), "y": F(2), "z": F(3)}, inst)
    with pytest.raises(ModeMismatch):
        extract_assignment(inst, w.to_float(), cmap)
    bad = w.copy()
    bad.biases[cmap.q] = F(1)
    cost = verify_witness(inst, bad).total_cost
    assert cost > 0
    with pytest.raises(NotZeroCost):
        extract_assignment(inst, bad, cmap)


def perturb_function_preserving(inst, cmap, w, rng):
    """Random per-middle scalings and bias unfoldings on gadget middles."""
    fracs = [F(p, q) for p in range(-4, 5) for q in (1, 2, 3) if p]
    for rec in cmap.normalization:
        m = rec["middle"]
        if rng.random() < 0.7:
            w = scale_middle(inst, w, m, rng.choice(fracs))
        if rng.random() < 0.5:
            w = unfold_bias(inst, w, m, rng.choice(fracs))
    for nid in inst.hidden:
        if rng.random() < 0.1:
            w = unfold_bias(inst, w, nid, rng.choice(fracs))
    return w


@settings(max_examples=30)
@given(st.sampled_from(SATISFIABLE), st.integers(0, 2**32))
def test_soundness_under_reparametrization(case, seed):
    text, a = case
    rnd = random.Random(seed)
    inst, cmap = compiled(text)
    w = perturb_function_preserving(inst, cmap, synthesize_witness(cmap, a, inst), rnd)
    assert verify_witness(inst, w).total_cost == 0
    b = extract_assignment(inst, w, cmap)
    assert b == a
    assert evaluate_formula(parse_etr_inv(text), b).satisfied


@settings(max_examples=20)
@given(st.sampled_from(SATISFIABLE), st.integers(0, 2**32))
def test_function_preservation(case, seed):
    text, a = case
    rnd = random.Random(seed)
    inst, cmap = compiled(text)
    w = perturb_function_preserving(inst, cmap, synthesize_witness(cmap, a, inst), rnd)
    for nid in inst.hidden:
        if rnd.random() < 0.3:
            w = unfold_bias(inst, w, nid, F(rnd.randint(-3, 3), rnd.randint(1, 3)))
    folded = fold_biases(inst, w)
    normal = normalize_witness(inst, folded, cmap)
    for _ in range(5):
        x = [F(rnd.randint(-5, 5), rnd.randint(1, 4)) for _ in inst.inputs]
        y = forward_eval(inst, w, x)
        assert forward_eval(inst, folded, x) == y
        assert forward_eval(inst, normal, x) == y
    assert all(folded.biases[n] == 0 for n in inst.hidden)
    assert all(normal.weights[r["in_edge"]] == 1 for r in cmap.normalization)


@given(nonzero_fractions, small_fractions, small_fractions)
def test_unfold_then_fold_restores(alpha, b, x):
    inst, w = star([F(2), F(-3)], in_weights=(F(1), F(5)))
    w2 = unfold_bias(inst, scale_middle(inst, w, 2, alpha), 2, b)
    assert forward_eval(inst, w2, [x, x]) == forward_eval(inst, w, [x, x])
    assert fold_biases(inst, w2).biases == w.biases
