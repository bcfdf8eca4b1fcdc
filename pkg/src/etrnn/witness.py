"""Both directions of the correctness argument, on concrete witnesses.

* :func:`synthesize_witness` turns a formula solution into a zero-cost
  witness of the compiled instance.
* :func:`extract_assignment` turns any zero-cost witness back into a
  formula solution: fold middle biases into the outputs, rescale every gadget
  middle so its normalization edge ``s_m -> m`` has weight 1, then read the
  value slot of each variable gadget.

Folding and scaling never change the function the network computes (for
identity activations); tests check this exactly.
"""

from __future__ import annotations

from typing import Mapping, Optional

from etrnn.errors import (
    InputError,
    InvariantViolation,
    ModeMismatch,
    NonIdentityActivation,
    NotZeroCost,
    UnsatisfyingAssignment,
    ZeroInverse,
    ZeroScalingWeight,
)
from etrnn.evaluate import Witness, verify_witness
from etrnn.inveq import check_combined, pull_back, push_forward
from etrnn.lowering import CompilationMap, compile_combined, lift_witness, restricted_witness
from etrnn.network import TrainingInstance
from etrnn.scalars import Scalar, mode_of


def _weight(inst: TrainingInstance, w: Witness, eid: int):
    e = inst.edges[eid]
    if e.weight is None:
        return w.weights[eid]
    return e.weight if w.mode == "exact" else float(e.weight)


def synthesize_witness(
    cmap: CompilationMap,
    a: Mapping[str, Scalar],
    inst: Optional[TrainingInstance] = None,
    tolerance: Optional[float] = None,
    require_satisfying: bool = True,
) -> Witness:
    """Zero-cost witness for the instance described by ``cmap``.

    ``a`` assigns every original variable.  Exact assignments must satisfy
    the formula exactly; float assignments within ``tolerance``.  Every
    variable of the combined formula must end up nonzero, since each one
    has a gadget edge carrying its inverse.

    ``require_satisfying=False`` skips the satisfaction gate; the resulting
    witness then has positive cost.  ``inst`` defaults to recompiling the
    map's combined formula.
    """
    missing = [v for v in cmap.original if v not in a]
    if missing:
        raise UnsatisfyingAssignment(f"no value for {missing}")
    mode = mode_of(a[v] for v in cmap.original)
    cf = cmap.formula
    for orig, (rep, e) in cf.backmap.items():
        if e == -1 and a[orig] == 0:
            raise ZeroInverse(f"{orig} is an inverse and cannot be 0")
    pushed = push_forward(cf, {v: a[v] for v in cmap.original})
    zero = [v for v, x in pushed.items() if x == 0]
    if zero:
        raise ZeroInverse(f"variables {zero} are 0; the gadget edge 1/x is undefined")
    if require_satisfying:
        tol = tolerance if mode == "float" else None
        back = pull_back(cf, pushed)
        for v in cmap.original:
            diff = back[v] - a[v]
            if (diff != 0) if tol is None else abs(diff) > tol:
                raise UnsatisfyingAssignment(f"{v} = {a[v]} is inconsistent with its inversion partner")
        report = check_combined(cf, pushed, tol)
        if not report.satisfied:
            raise UnsatisfyingAssignment(f"assignment violates the formula (residuals {report.residuals})")
    if inst is None:
        inst, _ = compile_combined(cf, cmap.cost, cmap.stage, cmap.original)
    w = restricted_witness(cmap.slots, pushed, mode)
    return lift_witness(cmap, inst, w)


def fold_biases(inst: TrainingInstance, w: Witness) -> Witness:
    """Move every non-output bias downstream: ``b_m -> 0``, ``b_t -> b_t + z_mt * b_m``."""
    out = w.copy()
    rank = inst.topo_rank
    for nid in sorted(inst.free_biases, key=rank.__getitem__):
        edges = inst.out_edges.get(nid, [])
        b = out.biases[nid]
        if not edges or b == 0:
            continue
        if inst.neurons[nid].activation.kind != "identity":
            raise NonIdentityActivation(f"neuron {nid} is not identity; its bias cannot be folded")
        for e in edges:
            if e.dst not in out.biases:
                raise InputError(f"neuron {e.dst} has a fixed bias and cannot absorb neuron {nid}'s bias")
            out.biases[e.dst] = out.biases[e.dst] + _weight(inst, out, e.id) * b
        out.biases[nid] = b * 0
    return out


def unfold_bias(inst: TrainingInstance, w: Witness, middle: int, b: Scalar) -> Witness:
    """Inverse of folding: add ``b`` to ``middle`` and compensate downstream."""
    out = w.copy()
    if inst.neurons[middle].activation.kind != "identity":
        raise NonIdentityActivation(f"neuron {middle} is not identity")
    out.biases[middle] = out.biases[middle] + b
    for e in inst.out_edges.get(middle, []):
        out.biases[e.dst] = out.biases[e.dst] - _weight(inst, out, e.id) * b
    return out


def scale_middle(inst: TrainingInstance, w: Witness, middle: int, alpha: Scalar) -> Witness:
    """Incoming weights and bias times ``alpha``, outgoing weights divided by it."""
    if alpha == 0:
        raise ZeroScalingWeight("scaling factor must be nonzero")
    if inst.neurons[middle].activation.kind != "identity" and not alpha > 0:
        raise NonIdentityActivation("only positive scalings preserve a ReLU")
    out = w.copy()
    for e in inst.in_edges.get(middle, []):
        if e.weight is not None:
            raise InputError(f"edge {e.id} is fixed and cannot be scaled")
        out.weights[e.id] = out.weights[e.id] * alpha
    for e in inst.out_edges.get(middle, []):
        if e.weight is not None:
            raise InputError(f"edge {e.id} is fixed and cannot be scaled")
        out.weights[e.id] = out.weights[e.id] / alpha
    if middle in out.biases:
        out.biases[middle] = out.biases[middle] * alpha
    elif inst.neurons[middle].bias != 0:
        raise InputError(f"neuron {middle} has a fixed nonzero bias")
    return out


def normalize_witness(inst: TrainingInstance, w: Witness, cmap: CompilationMap) -> Witness:
    """Rescale each gadget middle so its ``s_m -> m`` weight is exactly 1."""
    out = w
    for rec in cmap.normalization:
        z1 = out.weights[rec["in_edge"]]
        if z1 == 0:
            raise ZeroScalingWeight(f"normalization edge {rec['in_edge']} of middle {rec['middle']} is 0")
        if z1 != 1:
            out = scale_middle(inst, out, rec["middle"], 1 / z1)
    return out


def extract_assignment(inst: TrainingInstance, w: Witness, cmap: CompilationMap) -> dict[str, Scalar]:
    """Formula solution encoded by an exact zero-cost witness."""
    if w.mode != "exact":
        raise ModeMismatch("extraction needs an exact witness")
    report = verify_witness(inst, w)
    if report.total_cost != 0:
        raise NotZeroCost(f"witness has cost {report.total_cost}")
    canon = normalize_witness(inst, fold_biases(inst, w), cmap)
    values = {v: canon.weights[cmap.slots.slot(v, "value")[0]] for v in cmap.slots.variables}
    if not check_combined(cmap.formula, values).satisfied:
        raise InvariantViolation("zero-cost witness decodes to a violating assignment")
    return pull_back(cmap.formula, values)
