"""Rewrite restricted instances into plain ones and run the whole pipeline.

Passes, in the only order that works:

``remove_fixed_weights``
    Adds an output ``q``; for every middle ``m`` an input ``s_m`` with free
    edges ``s_m -> m`` and ``m -> q`` plus the point "1 at ``s_m``; 1 at
    ``q``".  Every fixed edge then gets one fixing data point:

    * ``m -> t`` fixed to +1: 1 at ``s_m``; 1 at ``t``;
    * ``s -> m`` fixed to +1: 1 at ``s``; 1 at ``q``;
    * ``s -> m`` fixed to -1: 1 at ``s`` and ``s_m``; 0 at ``q``.

    Other outputs are '?'.  The -1 case uses two unit inputs instead of a -1
    target, so every entry stays in {0, 1}.  ``s`` must feed only ``m``.
``add_bias_anchor``
    Appends the all-zero data point and frees every bias.
``remove_question_marks``
    For every '?' of every data point: a new input ``u``, a new middle ``h``
    and free edges ``u -> h``, ``h -> t``; ``u`` is 1 in that data point only
    and the '?' becomes 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from etrnn.errors import (
    AmbiguousIncomingFix,
    InputError,
    NonUnitFixedWeight,
    PassOrderError,
    SchemaError,
    UnfixableMiddle,
)
from etrnn.evaluate import Network, Witness
from etrnn.formula import EtrInvFormula, VarId
from etrnn.gadgets import SlotTable, compile_restricted
from etrnn.inveq import AuxDef, CombinedFormula, lower_to_combined, parse_combined, split_repeated_terms
from etrnn.network import IDENTITY, DataPoint, Edge, Neuron, TrainingInstance
from etrnn.scalars import MINUS_ONE, ONE, ZERO, Scalar, parse_rational

STAGES = ("restricted", "fixedfree", "plain")


@dataclass
class CompilationMap:
    formula: CombinedFormula
    original: list[str]
    slots: SlotTable
    cost: str = "mse"
    stage: str = "restricted"
    # stage -> {"neurons": [lo, hi), "edges": [lo, hi), "data": [lo, hi)}
    ranges: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    q: Optional[int] = None
    # one per gadget middle: middle, input (s_m), in_edge (s_m->m), out_edge (m->q), datapoint d(m)
    normalization: list[dict[str, int]] = field(default_factory=list)
    # one per formerly fixed edge: edge, value, datapoint
    fixings: list[dict] = field(default_factory=list)
    anchor: Optional[int] = None
    # one per removed '?': datapoint, output, input, middle, in_edge, out_edge
    qmarks: list[dict[str, int]] = field(default_factory=list)


def _require_two_layers(inst: TrainingInstance) -> None:
    for e in inst.edges:
        pair = (inst.neurons[e.src].role, inst.neurons[e.dst].role)
        if pair not in (("input", "hidden"), ("hidden", "output")):
            raise InputError(f"edge {e.id} is not input->hidden or hidden->output")


def remove_fixed_weights(inst: TrainingInstance) -> tuple[TrainingInstance, dict]:
    """Replace every fixed ±1 weight by a free weight plus fixing data points."""
    if inst.kind != "restricted":
        raise PassOrderError("remove_fixed_weights expects a restricted instance")
    _require_two_layers(inst)
    middles = inst.hidden
    for e in inst.edges:
        if e.weight is not None and e.weight not in (ONE, MINUS_ONE):
            raise NonUnitFixedWeight(f"edge {e.id} is fixed to {e.weight}, only +1 and -1 are supported")
    for m in middles:
        incident = inst.in_edges.get(m, []) + inst.out_edges.get(m, [])
        if not any(e.weight is not None for e in incident):
            raise UnfixableMiddle(f"middle neuron {m} has no fixed incident edge")

    n0, e0, d0 = len(inst.neurons), len(inst.edges), len(inst.data)
    q = n0
    neurons = list(inst.neurons) + [Neuron(q, "output", IDENTITY, ZERO)]
    s_of = {m: n0 + 1 + k for k, m in enumerate(middles)}
    neurons += [Neuron(s_of[m], "input") for m in middles]
    edges = [replace(e, weight=None) for e in inst.edges]
    normalization = []
    for m in middles:
        in_edge, out_edge = len(edges), len(edges) + 1
        edges.append(Edge(in_edge, s_of[m], m))
        edges.append(Edge(out_edge, m, q))
        normalization.append({"middle": m, "input": s_of[m], "in_edge": in_edge, "out_edge": out_edge})

    new_inst = TrainingInstance(tuple(neurons), tuple(edges), (), inst.cost, inst.threshold, "restricted")
    in_pos, out_pos = new_inst.input_pos, new_inst.output_pos
    n_in, n_out = len(new_inst.inputs), len(new_inst.outputs)
    pad_in = (ZERO,) * len(middles)

    data = [DataPoint(d.inputs + pad_in, d.outputs + (None,)) for d in inst.data]

    def point(hot: dict[int, Fraction], targets: dict[int, Fraction]) -> DataPoint:
        xs = [ZERO] * n_in
        for nid, v in hot.items():
            xs[in_pos[nid]] = v
        ys: list = [None] * n_out
        for nid, v in targets.items():
            ys[out_pos[nid]] = v
        return DataPoint(tuple(xs), tuple(ys))

    for rec in normalization:
        rec["datapoint"] = len(data)
        data.append(point({rec["input"]: ONE}, {q: ONE}))

    fixings = []
    for e in inst.edges:
        if e.weight is None:
            continue
        src_role = inst.neurons[e.src].role
        if src_role == "hidden":
            if e.weight != ONE:
                raise NonUnitFixedWeight(
                    f"edge {e.id}: an outgoing weight of -1 cannot be fixed with {{0,1}} targets")
            dp = point({s_of[e.src]: ONE}, {e.dst: ONE})
        else:
            if len(inst.out_edges[e.src]) != 1:
                raise AmbiguousIncomingFix(
                    f"edge {e.id}: source input {e.src} feeds {len(inst.out_edges[e.src])} middles")
            if e.weight == ONE:
                dp = point({e.src: ONE}, {q: ONE})
            else:
                dp = point({e.src: ONE, s_of[e.dst]: ONE}, {q: ZERO})
        fixings.append({"edge": e.id, "value": e.weight, "datapoint": len(data)})
        data.append(dp)

    out = replace(new_inst, data=tuple(data))
    fragment = {
        "q": q,
        "normalization": normalization,
        "fixings": fixings,
        "ranges": {"neurons": [n0, len(neurons)], "edges": [e0, len(edges)], "data": [d0, len(data)]},
    }
    return out, fragment


def _is_anchor(d: DataPoint) -> bool:
    return all(v == 0 for v in d.inputs) and all(v is not None and v == 0 for v in d.outputs)


def add_bias_anchor(inst: TrainingInstance) -> tuple[TrainingInstance, int]:
    """Append the all-zero data point (once) and make every bias free.

    Returns the new instance and the anchor's data index.
    """
    neurons = tuple(n if n.role == "input" else replace(n, bias=None) for n in inst.neurons)
    for k, d in enumerate(inst.data):
        if _is_anchor(d):
            return replace(inst, neurons=neurons), k
    anchor = DataPoint((ZERO,) * len(inst.inputs), (ZERO,) * len(inst.outputs))
    return replace(inst, neurons=neurons, data=inst.data + (anchor,)), len(inst.data)


def remove_question_marks(inst: TrainingInstance) -> tuple[TrainingInstance, list[dict[str, int]]]:
    """Turn every '?' into a 0 target with a private correction path."""
    if any(e.weight is not None for e in inst.edges):
        raise PassOrderError("fixed weights remain; run remove_fixed_weights first")
    if any(n.role != "input" and n.bias is not None for n in inst.neurons):
        raise PassOrderError("fixed biases remain; run add_bias_anchor first")
    if not any(_is_anchor(d) for d in inst.data):
        raise PassOrderError("the all-zero anchor data point is missing; run add_bias_anchor first")
    neurons = list(inst.neurons)
    edges = list(inst.edges)
    outputs = inst.outputs
    records = []
    for k, d in enumerate(inst.data):
        for j, t in enumerate(d.outputs):
            if t is not None:
                continue
            u, h = len(neurons), len(neurons) + 1
            neurons += [Neuron(u, "input"), Neuron(h, "hidden", IDENTITY, None)]
            edges += [Edge(len(edges), u, h), Edge(len(edges) + 1, h, outputs[j])]
            records.append({"datapoint": k, "output": outputs[j], "input": u, "middle": h,
                            "in_edge": len(edges) - 2, "out_edge": len(edges) - 1})
    by_point: dict[int, list[int]] = {}
    for r, rec in enumerate(records):
        by_point.setdefault(rec["datapoint"], []).append(r)
    blank = [ZERO] * len(records)
    data = []
    for k, d in enumerate(inst.data):
        extra = list(blank)
        for r in by_point.get(k, ()):
            extra[r] = ONE
        ys = tuple(ZERO if t is None else t for t in d.outputs)
        data.append(DataPoint(d.inputs + tuple(extra), ys))
    out = TrainingInstance(tuple(neurons), tuple(edges), tuple(data), inst.cost, inst.threshold, "plain")
    return out, records


def compile_combined(
    cf: CombinedFormula, cost: str = "mse", stop_after: str = "plain", original: Optional[list[str]] = None
) -> tuple[TrainingInstance, CompilationMap]:
    if stop_after not in STAGES:
        raise ValueError(f"unknown stage {stop_after!r}")
    inst, slots = compile_restricted(cf, cost)
    cmap = CompilationMap(cf, list(original if original is not None else cf.backmap), slots, cost)
    cmap.ranges["restricted"] = {"neurons": [0, len(inst.neurons)], "edges": [0, len(inst.edges)],
                                 "data": [0, len(inst.data)]}
    if stop_after == "restricted":
        return inst, cmap
    inst, frag = remove_fixed_weights(inst)
    cmap.q = frag["q"]
    cmap.normalization = frag["normalization"]
    cmap.fixings = frag["fixings"]
    inst, cmap.anchor = add_bias_anchor(inst)
    frag["ranges"]["data"][1] = len(inst.data)
    cmap.ranges["fixedfree"] = frag["ranges"]
    cmap.stage = "fixedfree"
    if stop_after == "fixedfree":
        return inst, cmap
    n0, e0 = len(inst.neurons), len(inst.edges)
    inst, cmap.qmarks = remove_question_marks(inst)
    cmap.ranges["plain"] = {"neurons": [n0, len(inst.neurons)], "edges": [e0, len(inst.edges)],
                            "data": [len(inst.data), len(inst.data)]}
    cmap.stage = "plain"
    return inst, cmap


def compile_full(
    f: EtrInvFormula, cost: str = "mse", stop_after: str = "plain"
) -> tuple[TrainingInstance, CompilationMap]:
    """ETR-INV formula -> plain training instance (or an earlier stage)."""
    cf = split_repeated_terms(lower_to_combined(f))
    return compile_combined(cf, cost, stop_after, f.names)


# --- witness extension through the passes --------------------------------------


def restricted_witness(slots: SlotTable, values: dict[str, Scalar], mode: str = "exact") -> Witness:
    """Gadget weights for the given variable values (all must be nonzero)."""
    weights = {}
    for v in slots.variables:
        x = values[v]
        roles = slots.gadget_edges[v]
        weights[roles["w"]] = -x
        weights[roles["x"]] = x
        weights[roles["y"]] = 1 / x
        weights[roles["z"]] = -1 / x
        weights[roles["v"]] = x
    return Witness(weights, {}, mode)


def lift_witness(cmap: CompilationMap, inst: TrainingInstance, w: Witness) -> Witness:
    """Extend a zero-cost restricted-stage witness to ``inst`` (the map's final stage).

    Formerly fixed edges take their fixed value, normalization pairs (1, 1),
    biases 0, and each '?' correction path (1, -c) where ``c`` is the old
    output at that position.
    """
    if cmap.stage == "restricted":
        return w.copy()
    exact = w.mode == "exact"
    conv = (lambda v: v) if exact else float
    out = w.copy()
    for rec in cmap.fixings:
        out.weights[rec["edge"]] = conv(rec["value"])
    for rec in cmap.normalization:
        out.weights[rec["in_edge"]] = conv(ONE)
        out.weights[rec["out_edge"]] = conv(ONE)
    for nid in inst.free_biases:
        out.biases[nid] = conv(ZERO)
    if cmap.stage == "fixedfree":
        return out
    for rec in cmap.qmarks:
        out.weights[rec["in_edge"]] = conv(ZERO)
        out.weights[rec["out_edge"]] = conv(ZERO)
    net = Network(inst, out)
    for k in sorted({rec["datapoint"] for rec in cmap.qmarks}):
        preds = dict(zip(inst.outputs, net(inst.data[k].inputs)))
        for rec in cmap.qmarks:
            if rec["datapoint"] == k:
                out.weights[rec["in_edge"]] = conv(ONE)
                out.weights[rec["out_edge"]] = -preds[rec["output"]]
    return out


# --- map files ----------------------------------------------------------------------


def map_to_json(cmap: CompilationMap) -> dict:
    cf = cmap.formula
    return {
        "version": 1,
        "stage": cmap.stage,
        "cost": cmap.cost,
        "original_variables": cmap.original,
        "combined": {
            "variables": cf.names,
            "constraints": [str(c) for c in cf.constraints],
            "backmap": {k: [v[0], v[1]] for k, v in cf.backmap.items()},
            "aux": {k: {"kind": d.kind, "args": list(d.args), "exponent": d.exponent} for k, d in cf.aux.items()},
        },
        "slots": {
            "output_a": cmap.slots.output_a,
            "output_b": cmap.slots.output_b,
            "variables": {
                v: {
                    "edges": cmap.slots.gadget_edges[v],
                    "inputs": cmap.slots.gadget_inputs[v],
                    "middles": cmap.slots.gadget_middles[v],
                    "slots": {form: list(cmap.slots.entries[(v, form)])
                              for form in ("value", "negated", "inverse", "negated_inverse")},
                }
                for v in cmap.slots.variables
            },
        },
        "ranges": cmap.ranges,
        "q": cmap.q,
        "normalization": cmap.normalization,
        "fixings": [{"edge": r["edge"], "value": str(r["value"]), "datapoint": r["datapoint"]}
                    for r in cmap.fixings],
        "anchor": cmap.anchor,
        "qmarks": cmap.qmarks,
    }


def encode_map(cmap: CompilationMap) -> bytes:
    return (json.dumps(map_to_json(cmap), indent=1) + "\n").encode("utf-8")


def map_from_json(obj) -> CompilationMap:
    try:
        comb = obj["combined"]
        parsed = parse_combined("".join(c + "\n" for c in comb["constraints"]))
        by_name = {n: VarId(i, n) for i, n in enumerate(comb["variables"])}
        constraints = tuple(
            type(c)(tuple(type(t)(by_name[t.var.name], t.exponent, t.sign) for t in c.terms))
            for c in parsed.constraints
        )
        cf = CombinedFormula(
            tuple(by_name.values()),
            constraints,
            {k: (v[0], int(v[1])) for k, v in comb["backmap"].items()},
            {k: AuxDef(d["kind"], tuple(d["args"]), int(d["exponent"])) for k, d in comb["aux"].items()},
        )
        s = obj["slots"]
        slots = SlotTable(output_a=s["output_a"], output_b=s["output_b"])
        for v, rec in s["variables"].items():
            slots.gadget_edges[v] = {k: int(e) for k, e in rec["edges"].items()}
            slots.gadget_inputs[v] = list(rec["inputs"])
            slots.gadget_middles[v] = list(rec["middles"])
            for form, pair in rec["slots"].items():
                slots.entries[(v, form)] = (int(pair[0]), int(pair[1]))
        fixings = [{"edge": r["edge"], "value": parse_rational(r["value"]), "datapoint": r["datapoint"]}
                   for r in obj["fixings"]]
        return CompilationMap(
            formula=cf,
            original=list(obj["original_variables"]),
            slots=slots,
            cost=obj["cost"],
            stage=obj["stage"],
            ranges=obj["ranges"],
            q=obj["q"],
            normalization=obj["normalization"],
            fixings=fixings,
            anchor=obj["anchor"],
            qmarks=obj["qmarks"],
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"malformed compilation map: {exc!r}") from None


def decode_map(raw: bytes | str) -> CompilationMap:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return map_from_json(obj)
