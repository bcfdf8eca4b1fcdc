"""Training instances: neurons, edges, data points, validation and file I/O.

A weight or bias of ``None`` is free (chosen by the witness); a Fraction is
fixed.  An output target of ``None`` is the ignore symbol ``'?'`` of
restricted training.  Input neurons carry no bias and no activation.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

from etrnn.errors import IdMismatch, SchemaError
from etrnn.scalars import ONE, ZERO, parse_rational

ROLES = ("input", "hidden", "output")
COSTS = ("mse", "l1")
KINDS = ("restricted", "plain")


@dataclass(frozen=True)
class Activation:
    kind: str = "identity"
    shift: Optional[Fraction] = None

    def __post_init__(self):
        if self.kind not in ("identity", "relu", "shifted_relu"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if (self.kind == "shifted_relu") != (self.shift is not None):
            raise ValueError("shifted_relu takes a shift C; other activations take none")

    def __call__(self, t):
        if self.kind == "identity":
            return t
        floor = 0 if self.kind == "relu" else self.shift
        if isinstance(t, float):
            floor = float(floor)
        return t if t > floor else type(t)(floor)

    def derivative(self, t) -> int:
        # 0 at the kink
        if self.kind == "identity":
            return 1
        floor = 0 if self.kind == "relu" else self.shift
        return 1 if t > floor else 0

    def to_json(self):
        if self.kind == "shifted_relu":
            return {"kind": "shifted_relu", "shift": str(self.shift)}
        return self.kind


IDENTITY = Activation()


@dataclass(frozen=True)
class Neuron:
    id: int
    role: str
    activation: Optional[Activation] = IDENTITY
    bias: Optional[Fraction] = ZERO

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "input" and (self.activation is not None or self.bias is not None):
            object.__setattr__(self, "activation", None)
            object.__setattr__(self, "bias", None)


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    dst: int
    weight: Optional[Fraction] = None


@dataclass(frozen=True)
class DataPoint:
    inputs: tuple[Fraction, ...]
    outputs: tuple[Optional[Fraction], ...]

    def has_ignore(self) -> bool:
        return any(y is None for y in self.outputs)


@dataclass(frozen=True)
class TrainingInstance:
    neurons: tuple[Neuron, ...]
    edges: tuple[Edge, ...]
    data: tuple[DataPoint, ...] = ()
    cost: str = "mse"
    threshold: Fraction = ZERO
    kind: str = "restricted"

    @cached_property
    def inputs(self) -> list[int]:
        return [n.id for n in self.neurons if n.role == "input"]

    @cached_property
    def hidden(self) -> list[int]:
        return [n.id for n in self.neurons if n.role == "hidden"]

    @cached_property
    def outputs(self) -> list[int]:
        return [n.id for n in self.neurons if n.role == "output"]

    @cached_property
    def input_pos(self) -> dict[int, int]:
        return {nid: i for i, nid in enumerate(self.inputs)}

    @cached_property
    def output_pos(self) -> dict[int, int]:
        return {nid: i for i, nid in enumerate(self.outputs)}

    @cached_property
    def out_edges(self) -> dict[int, list[Edge]]:
        d = defaultdict(list)
        for e in self.edges:
            d[e.src].append(e)
        return d

    @cached_property
    def in_edges(self) -> dict[int, list[Edge]]:
        d = defaultdict(list)
        for e in self.edges:
            d[e.dst].append(e)
        return d

    @cached_property
    def topo_rank(self) -> dict[int, int]:
        """Topological rank of every neuron; raises ValueError on a cycle."""
        indeg = {n.id: 0 for n in self.neurons}
        for e in self.edges:
            indeg[e.dst] += 1
        ready = sorted(nid for nid, d in indeg.items() if d == 0)
        order = []
        while ready:
            nid = ready.pop()
            order.append(nid)
            for e in self.out_edges.get(nid, ()):
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    ready.append(e.dst)
        if len(order) != len(self.neurons):
            raise ValueError("edge set contains a cycle")
        return {nid: r for r, nid in enumerate(order)}

    def neuron(self, nid: int) -> Neuron:
        return self.neurons[nid]

    def edge(self, eid: int) -> Edge:
        return self.edges[eid]

    @cached_property
    def free_edges(self) -> list[int]:
        return [e.id for e in self.edges if e.weight is None]

    @cached_property
    def free_biases(self) -> list[int]:
        return [n.id for n in self.neurons if n.role != "input" and n.bias is None]

    def architecture(self) -> tuple:
        """Neurons and edges without the data, for structural comparison."""
        return (self.neurons, self.edges)


# --- validation -----------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def record(self, name: str, passed: bool, message: str) -> None:
        self.checks[name] = self.checks.get(name, True) and passed
        if not passed:
            self.violations.append(f"{name}: {message}")


def validate_instance(inst: TrainingInstance, strict: bool = False) -> ValidationReport:
    """Structural checks.  Never raises; problems go into the report.

    ``strict`` additionally checks the shape promised for compiled plain
    instances: one hidden layer, three outputs, identity activations, an
    honest cost, data entries in {0, 1} and threshold 0.
    """
    r = ValidationReport()
    ids_ok = [n.id for n in inst.neurons] == list(range(len(inst.neurons)))
    r.record("dense_neuron_ids", ids_ok, "neuron ids are not 0..N-1")
    r.record("dense_edge_ids", [e.id for e in inst.edges] == list(range(len(inst.edges))),
             "edge ids are not 0..E-1")
    if not ids_ok:
        return r
    n = len(inst.neurons)
    endpoints_ok = all(0 <= e.src < n and 0 <= e.dst < n for e in inst.edges)
    r.record("edge_endpoints", endpoints_ok, "edge endpoint out of range")
    if not endpoints_ok:
        return r
    r.record("no_self_loops", all(e.src != e.dst for e in inst.edges), "edge with src == dst")
    try:
        inst.topo_rank
        r.record("dag", True, "")
    except ValueError:
        r.record("dag", False, "edges contain a cycle")
    for e in inst.edges:
        if inst.neurons[e.dst].role == "input":
            r.record("input_in_degree", False, f"edge {e.id} enters input neuron {e.dst}")
        if inst.neurons[e.src].role == "output":
            r.record("output_out_degree", False, f"edge {e.id} leaves output neuron {e.src}")
    r.record("cost_tag", inst.cost in COSTS, f"unknown cost {inst.cost!r}")
    r.record("kind_tag", inst.kind in KINDS, f"unknown kind {inst.kind!r}")
    r.record("threshold", inst.threshold >= 0, "threshold is negative")
    ni, no = len(inst.inputs), len(inst.outputs)
    for k, d in enumerate(inst.data):
        if len(d.inputs) != ni or len(d.outputs) != no:
            r.record("dimensions", False, f"data point {k} has shape {len(d.inputs)};{len(d.outputs)}, "
                     f"expected {ni};{no}")
    if inst.kind == "plain":
        for e in inst.edges:
            if e.weight is not None:
                r.record("plain_kind", False, f"edge {e.id} has a fixed weight")
        for nn in inst.neurons:
            if nn.role != "input" and nn.bias is not None:
                r.record("plain_kind", False, f"neuron {nn.id} has a fixed bias")
        for k, d in enumerate(inst.data):
            if d.has_ignore():
                r.record("plain_kind", False, f"data point {k} contains '?'")

    if strict:
        layered = all(
            (inst.neurons[e.src].role, inst.neurons[e.dst].role) in (("input", "hidden"), ("hidden", "output"))
            for e in inst.edges
        )
        r.record("one_hidden_layer", layered, "an edge does not go input->hidden or hidden->output")
        r.record("three_outputs", no == 3, f"{no} output neurons")
        r.record(
            "identity_activation",
            all(nn.activation == IDENTITY for nn in inst.neurons if nn.role != "input"),
            "non-identity activation",
        )
        r.record("honest_cost", inst.cost in COSTS, "cost is not a known honest cost")
        binary = all(
            v is not None and (v == 0 or v == 1) for d in inst.data for v in d.inputs + d.outputs
        )
        r.record("binary_data", binary, "a data entry is not in {0,1}")
        r.record("zero_threshold", inst.threshold == 0, "threshold is not 0")
        r.record("plain", inst.kind == "plain", "instance is not plain")
    return r


# --- serialization ----------------------------------------------------------


def _fmt(x: Optional[Fraction]) -> Optional[str]:
    return None if x is None else str(x)


def instance_to_json(inst: TrainingInstance) -> dict:
    neurons = []
    for nn in inst.neurons:
        if nn.role == "input":
            neurons.append({"id": nn.id, "role": "input"})
        else:
            neurons.append({
                "id": nn.id,
                "role": nn.role,
                "activation": nn.activation.to_json(),
                "bias": "free" if nn.bias is None else str(nn.bias),
            })
    return {
        "version": 1,
        "kind": inst.kind,
        "cost": inst.cost,
        "threshold": str(inst.threshold),
        "neurons": neurons,
        "edges": [
            {"id": e.id, "src": e.src, "dst": e.dst, "weight": "free" if e.weight is None else str(e.weight)}
            for e in inst.edges
        ],
        "data": [
            {"inputs": [_entry_str(v) for v in d.inputs], "outputs": [_entry_str(v) for v in d.outputs]}
            for d in inst.data
        ],
    }


def _entry_str(v: Optional[Fraction]) -> str:
    # compiled data is almost entirely the shared ZERO and ONE objects
    if v is ZERO:
        return "0"
    if v is ONE:
        return "1"
    return "?" if v is None else str(v)


def encode_instance(inst: TrainingInstance) -> bytes:
    """Canonical bytes: fixed key order, compact separators, trailing newline."""
    return (json.dumps(instance_to_json(inst), separators=(",", ":")) + "\n").encode("utf-8")


def _rational(value, path: str) -> Fraction:
    if not isinstance(value, str):
        raise SchemaError("expected a rational string 'p/q'", path)
    try:
        return parse_rational(value)
    except ValueError as exc:
        raise SchemaError(str(exc), path) from None


def _obj(value, path: str, keys: Sequence[str], optional: Sequence[str] = ()) -> dict:
    if not isinstance(value, dict):
        raise SchemaError("expected an object", path)
    for k in keys:
        if k not in value:
            raise SchemaError(f"missing key {k!r}", path)
    extra = set(value) - set(keys) - set(optional)
    if extra:
        raise SchemaError(f"unexpected keys {sorted(extra)}", path)
    return value


def _list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError("expected an array", path)
    return value


def _int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise SchemaError("expected a non-negative integer", path)
    return value


def _activation(value, path: str) -> Activation:
    if value in ("identity", "relu"):
        return Activation(value)
    if isinstance(value, dict) and value.get("kind") == "shifted_relu":
        _obj(value, path, ("kind", "shift"))
        return Activation("shifted_relu", _rational(value["shift"], path + "/shift"))
    raise SchemaError(f"unknown activation {value!r}", path)


# Decoded data entries are mostly 0 and 1; share those objects.
_COMMON = {"0": ZERO, "1": ONE}


def _entry(value, path: str) -> Fraction:
    if isinstance(value, str) and value in _COMMON:
        return _COMMON[value]
    return _rational(value, path)


def instance_from_json(obj) -> TrainingInstance:
    obj = _obj(obj, "", ("version", "kind", "cost", "threshold", "neurons", "edges", "data"))
    if obj["version"] != 1:
        raise SchemaError(f"unsupported version {obj['version']!r}", "/version")
    if obj["kind"] not in KINDS:
        raise SchemaError(f"unknown kind {obj['kind']!r}", "/kind")
    if obj["cost"] not in COSTS:
        raise SchemaError(f"unknown cost tag {obj['cost']!r}", "/cost")
    threshold = _rational(obj["threshold"], "/threshold")
    if threshold < 0:
        raise SchemaError("threshold must be >= 0", "/threshold")

    neurons = []
    for i, raw in enumerate(_list(obj["neurons"], "/neurons")):
        p = f"/neurons/{i}"
        if not isinstance(raw, dict):
            raise SchemaError("expected an object", p)
        role = raw.get("role")
        if role == "input":
            _obj(raw, p, ("id", "role"))
            neurons.append(Neuron(_int(raw["id"], p + "/id"), "input", None, None))
        elif role in ("hidden", "output"):
            _obj(raw, p, ("id", "role", "activation", "bias"))
            bias = None if raw["bias"] == "free" else _rational(raw["bias"], p + "/bias")
            neurons.append(Neuron(_int(raw["id"], p + "/id"), role,
                                  _activation(raw["activation"], p + "/activation"), bias))
        else:
            raise SchemaError(f"unknown role {role!r}", p + "/role")
        if neurons[-1].id != i:
            raise SchemaError(f"neuron ids must be dense, found {neurons[-1].id} at position {i}", p + "/id")

    edges = []
    for i, raw in enumerate(_list(obj["edges"], "/edges")):
        p = f"/edges/{i}"
        _obj(raw, p, ("id", "src", "dst", "weight"))
        eid = _int(raw["id"], p + "/id")
        if eid != i:
            raise SchemaError(f"edge ids must be dense, found {eid} at position {i}", p + "/id")
        src, dst = _int(raw["src"], p + "/src"), _int(raw["dst"], p + "/dst")
        for key, v in (("src", src), ("dst", dst)):
            if v >= len(neurons):
                raise SchemaError(f"unknown neuron {v}", f"{p}/{key}")
        weight = None if raw["weight"] == "free" else _rational(raw["weight"], p + "/weight")
        edges.append(Edge(eid, src, dst, weight))

    ni = sum(1 for nn in neurons if nn.role == "input")
    no = sum(1 for nn in neurons if nn.role == "output")
    data = []
    for i, raw in enumerate(_list(obj["data"], "/data")):
        p = f"/data/{i}"
        _obj(raw, p, ("inputs", "outputs"))
        xs = _list(raw["inputs"], p + "/inputs")
        ys = _list(raw["outputs"], p + "/outputs")
        if len(xs) != ni:
            raise SchemaError(f"expected {ni} inputs, found {len(xs)}", p + "/inputs")
        if len(ys) != no:
            raise SchemaError(f"expected {no} outputs, found {len(ys)}", p + "/outputs")
        inputs = tuple(_entry(v, f"{p}/inputs/{j}") for j, v in enumerate(xs))
        outputs = tuple(None if v == "?" else _entry(v, f"{p}/outputs/{j}") for j, v in enumerate(ys))
        if obj["kind"] == "plain" and None in outputs:
            raise SchemaError("plain instances cannot contain '?'", p + "/outputs")
        data.append(DataPoint(inputs, outputs))
    return TrainingInstance(tuple(neurons), tuple(edges), tuple(data), obj["cost"], threshold, obj["kind"])


def decode_instance(raw: bytes | str) -> TrainingInstance:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return instance_from_json(obj)


# --- DOT --------------------------------------------------------------------

_PREFIX = {"input": "s", "hidden": "m", "output": "o"}


def emit_dot(inst: TrainingInstance, witness=None, name: str = "training") -> str:
    """Graphviz digraph of the architecture.

    Fixed weights are labeled with their value, free weights with ``w<id>``
    or, given a witness, with the witness value.
    """
    lines = [f"digraph {name} {{"]
    if inst.neurons:
        lines.append("  rankdir=LR;")
        for nn in inst.neurons:
            shape = {"input": "box", "hidden": "circle", "output": "doublecircle"}[nn.role]
            lines.append(f'  n{nn.id} [label="{_PREFIX[nn.role]}{nn.id}", shape={shape}];')
        if inst.inputs:
            lines.append("  {rank=source; " + " ".join(f"n{i};" for i in inst.inputs) + "}")
        if inst.outputs:
            lines.append("  {rank=sink; " + " ".join(f"n{i};" for i in inst.outputs) + "}")
    if witness is not None:
        free = set(inst.free_edges)
        extra = set(witness.weights) - free
        missing = free - set(witness.weights)
        if extra or missing:
            raise IdMismatch(f"witness weights do not match free edges (extra {sorted(extra)}, "
                             f"missing {sorted(missing)})")
    for e in inst.edges:
        if e.weight is not None:
            label, style = str(e.weight), "bold"
        elif witness is not None:
            label, style = _scalar_label(witness.weights[e.id]), "solid"
        else:
            label, style = f"w{e.id}", "solid"
        lines.append(f'  n{e.src} -> n{e.dst} [label="{label}", style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _scalar_label(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)
