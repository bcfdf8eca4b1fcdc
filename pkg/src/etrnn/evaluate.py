"""Forward evaluation, cost functions and the witness verifier.

The verifier computes the total cost of all data points and compares it with
the threshold.  Exact witnesses are evaluated in rational arithmetic, so an
exact acceptance is a proof.  Float witnesses only yield a cost estimate;
formulas whose solutions are irrational (``x + x = y, x * y = 1``) have no
rational zero-cost witness at all, so float mode is the only way to check
them numerically.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from etrnn.errors import (
    IdMismatch,
    IncompatibleDimensions,
    LengthMismatch,
    ModeMismatch,
    SchemaError,
)
from etrnn.network import TrainingInstance
from etrnn.scalars import Scalar, mode_of, parse_rational


@dataclass
class Witness:
    weights: dict[int, Scalar] = field(default_factory=dict)
    biases: dict[int, Scalar] = field(default_factory=dict)
    mode: str = "exact"

    def __post_init__(self):
        if self.mode not in ("exact", "float"):
            raise ValueError(f"unknown witness mode {self.mode!r}")

    def copy(self) -> "Witness":
        return Witness(dict(self.weights), dict(self.biases), self.mode)

    def to_float(self) -> "Witness":
        return Witness({k: float(v) for k, v in self.weights.items()},
                       {k: float(v) for k, v in self.biases.items()}, "float")

    def check_mode(self) -> None:
        """Raise ModeMismatch unless every value matches ``mode``."""
        try:
            found = mode_of(list(self.weights.values()) + list(self.biases.values()))
        except (TypeError, ValueError) as exc:
            raise ModeMismatch(str(exc)) from None
        if (self.weights or self.biases) and found != self.mode:
            raise ModeMismatch(f"witness declared {self.mode} but holds {found} values")


def check_total(inst: TrainingInstance, w: Witness) -> None:
    free_e, free_b = set(inst.free_edges), set(inst.free_biases)
    if set(w.weights) != free_e or set(w.biases) != free_b:
        raise IdMismatch(
            "witness does not match the free parameters: "
            f"weights extra {sorted(set(w.weights) - free_e)[:5]} missing {sorted(free_e - set(w.weights))[:5]}, "
            f"biases extra {sorted(set(w.biases) - free_b)[:5]} missing {sorted(free_b - set(w.biases))[:5]}"
        )


class Network:
    """An instance with every weight and bias resolved to a number.

    Evaluation pushes values forward from nonzero inputs only, so a data point
    with a handful of unit entries costs time proportional to the edges it
    actually reaches.
    """

    def __init__(self, inst: TrainingInstance, w: Witness):
        check_total(inst, w)
        self.inst = inst
        self.exact = w.mode == "exact"
        conv = (lambda v: v) if self.exact else float
        zero = Fraction(0) if self.exact else 0.0
        self.zero = zero
        self.rank = inst.topo_rank
        self.out: dict[int, list[tuple[int, Scalar]]] = {}
        for e in inst.edges:
            wt = conv(e.weight) if e.weight is not None else w.weights[e.id]
            self.out.setdefault(e.src, []).append((e.dst, wt))
        self.bias: dict[int, Scalar] = {}
        self.act = {}
        self.always: list[int] = []
        for nn in inst.neurons:
            if nn.role == "input":
                continue
            b = conv(nn.bias) if nn.bias is not None else w.biases[nn.id]
            self.bias[nn.id] = b
            if nn.activation.kind != "identity":
                self.act[nn.id] = nn.activation
            if b != 0 or nn.activation(zero) != 0:
                self.always.append(nn.id)
        self.input_pos = inst.input_pos

    def values(self, x: Sequence[Scalar]) -> dict[int, Scalar]:
        """Values of all neurons reached from ``x``; absent neurons are 0."""
        inst = self.inst
        if len(x) != len(inst.inputs):
            raise IncompatibleDimensions(f"expected {len(inst.inputs)} inputs, got {len(x)}")
        if not self.exact:
            x = [float(v) for v in x]
        rank = self.rank
        heap: list[tuple[int, int]] = []
        queued: set[int] = set()
        for nid, v in zip(inst.inputs, x):
            if v != 0:
                heap.append((rank[nid], nid))
                queued.add(nid)
        for nid in self.always:
            if nid not in queued:
                heap.append((rank[nid], nid))
                queued.add(nid)
        heapq.heapify(heap)
        acc: dict[int, Scalar] = {}
        vals: dict[int, Scalar] = {}
        zero = self.zero
        while heap:
            _, nid = heapq.heappop(heap)
            pos = self.input_pos.get(nid)
            if pos is not None:
                val = x[pos]
            else:
                pre = acc.get(nid, zero) + self.bias[nid]
                act = self.act.get(nid)
                val = act(pre) if act is not None else pre
            vals[nid] = val
            if val == 0:
                continue
            for dst, wt in self.out.get(nid, ()):
                acc[dst] = acc.get(dst, zero) + wt * val
                if dst not in queued:
                    queued.add(dst)
                    heapq.heappush(heap, (rank[dst], dst))
        return vals

    def __call__(self, x: Sequence[Scalar]) -> list[Scalar]:
        vals = self.values(x)
        return [vals.get(o, self.zero) for o in self.inst.outputs]


def forward_eval(inst: TrainingInstance, w: Witness, x: Sequence[Scalar]) -> list[Scalar]:
    """Output vector for input ``x`` (ordered by output neuron id)."""
    return Network(inst, w)(x)


def cost_value(tag: str, y: Sequence[Scalar], y_pred: Sequence[Scalar]) -> Scalar:
    """``mse``: mean of squared differences; ``l1``: sum of absolute differences.

    Both are honest: the cost is zero iff the vectors are equal.
    """
    if len(y) != len(y_pred):
        raise LengthMismatch(f"target has {len(y)} entries, prediction {len(y_pred)}")
    if any(v is None for v in y):
        raise ValueError("targets must not contain '?'; mask them first")
    diffs = [b - a for a, b in zip(y, y_pred)]
    zero = Fraction(0) if all(isinstance(d, Fraction) for d in diffs) else 0.0
    if not diffs:
        return zero
    if tag == "mse":
        return sum((d * d for d in diffs), start=zero) / len(diffs)
    if tag == "l1":
        return sum((abs(d) for d in diffs), start=zero)
    raise ValueError(f"unknown cost tag {tag!r}")


@dataclass
class VerifyReport:
    accepted: bool
    total_cost: Scalar
    costs: list[Scalar]
    # per data point, per output: prediction - target, None where ignored
    residuals: list[list[Optional[Scalar]]]
    mode: str

    def to_json(self) -> dict:
        fmt = str if self.mode == "exact" else float
        return {
            "accepted": self.accepted,
            "mode": self.mode,
            "total_cost": fmt(self.total_cost),
            "costs": [fmt(c) for c in self.costs],
        }


def _evaluate_all(inst: TrainingInstance, w: Witness):
    net = Network(inst, w)
    costs, residuals = [], []
    for d in inst.data:
        pred = net(d.inputs)
        keep = [k for k, t in enumerate(d.outputs) if t is not None]
        target = [d.outputs[k] if net.exact else float(d.outputs[k]) for k in keep]
        costs.append(cost_value(inst.cost, target, [pred[k] for k in keep]))
        residuals.append([None if t is None else pred[k] - t for k, t in enumerate(d.outputs)])
    zero = Fraction(0) if net.exact else 0.0
    total = zero
    for c in costs:  # index order
        total += c
    return total, costs, residuals


def total_cost(inst: TrainingInstance, w: Witness) -> Scalar:
    """Sum of per-data-point costs; outputs marked '?' are skipped."""
    return _evaluate_all(inst, w)[0]


def verify_witness(inst: TrainingInstance, w: Witness, tolerance: float = 0.0) -> VerifyReport:
    """Accept iff the total cost is at most the threshold.

    In float mode the comparison is ``cost <= threshold + tolerance`` and the
    result is evidence, not proof.
    """
    w.check_mode()
    total, costs, residuals = _evaluate_all(inst, w)
    if w.mode == "exact":
        accepted = total <= inst.threshold
    else:
        if not math.isfinite(total):
            accepted = False
        else:
            accepted = total <= float(inst.threshold) + tolerance
    return VerifyReport(accepted, total, costs, residuals, w.mode)


# --- witness files ------------------------------------------------------------


def witness_to_json(w: Witness) -> dict:
    fmt = str if w.mode == "exact" else float
    return {
        "mode": w.mode,
        "weights": {str(k): fmt(w.weights[k]) for k in sorted(w.weights)},
        "biases": {str(k): fmt(w.biases[k]) for k in sorted(w.biases)},
    }


def encode_witness(w: Witness) -> bytes:
    return (json.dumps(witness_to_json(w), indent=1) + "\n").encode("utf-8")


def witness_from_json(obj) -> Witness:
    if not isinstance(obj, dict) or set(obj) != {"mode", "weights", "biases"}:
        raise SchemaError("expected keys mode, weights, biases", "")
    mode = obj["mode"]
    if mode not in ("exact", "float"):
        raise SchemaError(f"unknown mode {mode!r}", "/mode")
    out = {}
    for part in ("weights", "biases"):
        table = obj[part]
        if not isinstance(table, dict):
            raise SchemaError("expected an object", f"/{part}")
        vals = {}
        for key, raw in table.items():
            path = f"/{part}/{key}"
            if not key.isdigit():
                raise SchemaError("keys must be non-negative integers", path)
            if mode == "exact":
                if not isinstance(raw, str):
                    raise SchemaError("exact scalars must be 'p/q' strings", path)
                try:
                    vals[int(key)] = parse_rational(raw)
                except ValueError as exc:
                    raise SchemaError(str(exc), path) from None
            else:
                if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not math.isfinite(raw):
                    raise SchemaError("float scalars must be finite JSON numbers", path)
                vals[int(key)] = float(raw)
        out[part] = vals
    return Witness(out["weights"], out["biases"], mode)


def decode_witness(raw: bytes | str) -> Witness:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return witness_from_json(obj)
