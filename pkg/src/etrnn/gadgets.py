"""Gadget construction for restricted training instances.

Reference wirings (``s`` inputs, ``m`` middles, fixed weights in brackets)::

    subtraction   s1->m1 (x)  s2->m2 (y)  m1->a [1]  m2->a [1]
                  data (1,1; 0)                             =>  x + y = 0

    inversion     s1->m1 (x)  s2->m2 (y)  m2->t (z)  m1->t [1]  s3->m2 [-1]
                  data (0,1,0; 1)  (1,0,1; 0)               =>  y*z = 1, x = z

    variable      s1->m1 (w)  s2->m2 (x)  s3->m3 (y)  s4->m4 (z)  m3->b (v)
                  s5->m3 [-1]  m1..m4->a [1]  m2->b [1]
                  data (1,1,0,0,0; 0,?)  (0,0,1,1,0; 0,?)
                       (0,0,1,0,0; ?,1)  (0,1,0,0,1; ?,0)

The variable gadget's zero-cost weights are exactly ``w = -x, y = 1/x,
z = -1/x, v = x`` with ``x != 0``: the first two points give ``w + x = 0`` and
``y + z = 0``, the third ``y*v = 1`` and the fourth ``x - v = 0``.  So the
first-layer edges carry ``x, -x, 1/x, -1/x``; these are the four slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from etrnn.errors import InputError, SlotCollision
from etrnn.inveq import CombinedConstraint, CombinedFormula
from etrnn.network import DataPoint, Edge, Neuron, TrainingInstance
from etrnn.scalars import MINUS_ONE, ONE, ZERO

FORMS = ("value", "negated", "inverse", "negated_inverse")

# (exponent, sign) of a combined-constraint term -> slot form
_FORM_OF = {(1, 1): "value", (1, -1): "negated", (-1, 1): "inverse", (-1, -1): "negated_inverse"}

# variable gadget: slot form -> index of the first-layer edge / input (0-based s1..s4)
_SLOT_INDEX = {"negated": 0, "value": 1, "inverse": 2, "negated_inverse": 3}

Q = None  # '?'


@dataclass
class GadgetInstance:
    instance: TrainingInstance
    # free-weight edge ids in role order
    free_edges: list[int]
    roles: list[str]

    def witness_weights(self, **values) -> dict[int, Fraction]:
        return {eid: values[role] for eid, role in zip(self.free_edges, self.roles)}


@dataclass
class SlotTable:
    # (variable name, form) -> (edge id, input neuron id)
    entries: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    output_a: int = -1
    output_b: int = -1
    # variable name -> {"w","x","y","z","v"} -> edge id, plus the gadget's neurons
    gadget_edges: dict[str, dict[str, int]] = field(default_factory=dict)
    gadget_inputs: dict[str, list[int]] = field(default_factory=dict)
    gadget_middles: dict[str, list[int]] = field(default_factory=dict)

    def slot(self, var: str, form: str) -> tuple[int, int]:
        return self.entries[(var, form)]

    @property
    def variables(self) -> list[str]:
        return list(self.gadget_edges)


def _dp(inputs, outputs) -> DataPoint:
    conv = lambda v: None if v is None else Fraction(v)
    return DataPoint(tuple(Fraction(v) for v in inputs), tuple(conv(v) for v in outputs))


def build_subtraction_gadget(cost: str = "mse") -> GadgetInstance:
    neurons = (
        Neuron(0, "input"), Neuron(1, "input"),
        Neuron(2, "hidden"), Neuron(3, "hidden"),
        Neuron(4, "output"),
    )
    edges = (
        Edge(0, 0, 2), Edge(1, 1, 3),
        Edge(2, 2, 4, ONE), Edge(3, 3, 4, ONE),
    )
    data = (_dp((1, 1), (0,)),)
    return GadgetInstance(TrainingInstance(neurons, edges, data, cost), [0, 1], ["x", "y"])


def build_inversion_gadget(cost: str = "mse") -> GadgetInstance:
    neurons = (
        Neuron(0, "input"), Neuron(1, "input"), Neuron(2, "input"),
        Neuron(3, "hidden"), Neuron(4, "hidden"),
        Neuron(5, "output"),
    )
    edges = (
        Edge(0, 0, 3), Edge(1, 1, 4), Edge(2, 4, 5),
        Edge(3, 3, 5, ONE), Edge(4, 2, 4, MINUS_ONE),
    )
    data = (_dp((0, 1, 0), (1,)), _dp((1, 0, 1), (0,)))
    return GadgetInstance(TrainingInstance(neurons, edges, data, cost), [0, 1, 2], ["x", "y", "z"])


VARIABLE_GADGET_DATA = (
    ((1, 1, 0, 0, 0), (0, Q)),
    ((0, 0, 1, 1, 0), (0, Q)),
    ((0, 0, 1, 0, 0), (Q, 1)),
    ((0, 1, 0, 0, 1), (Q, 0)),
)


def _variable_gadget_edges(s: list[int], m: list[int], a: int, b: int, first_edge: int):
    """The 11 edges of one variable gadget; returns (edges, role -> edge id)."""
    spec = [
        (s[0], m[0], None, "w"),
        (s[1], m[1], None, "x"),
        (s[2], m[2], None, "y"),
        (s[3], m[3], None, "z"),
        (s[4], m[2], MINUS_ONE, None),
        (m[0], a, ONE, None),
        (m[1], a, ONE, None),
        (m[2], a, ONE, None),
        (m[3], a, ONE, None),
        (m[1], b, ONE, None),
        (m[2], b, None, "v"),
    ]
    edges, roles = [], {}
    for k, (src, dst, wt, role) in enumerate(spec):
        edges.append(Edge(first_edge + k, src, dst, wt))
        if role:
            roles[role] = first_edge + k
    return edges, roles


def build_variable_gadget(v: str = "x", cost: str = "mse") -> tuple[GadgetInstance, SlotTable]:
    s, m, a, b = [0, 1, 2, 3, 4], [5, 6, 7, 8], 9, 10
    neurons = tuple(Neuron(i, "input") for i in s) + tuple(Neuron(i, "hidden") for i in m) + (
        Neuron(a, "output"), Neuron(b, "output"))
    edges, roles = _variable_gadget_edges(s, m, a, b, 0)
    data = tuple(_dp(x, y) for x, y in VARIABLE_GADGET_DATA)
    inst = TrainingInstance(neurons, tuple(edges), data, cost)
    slots = SlotTable(output_a=a, output_b=b)
    _register(slots, v, s, m, roles)
    order = ["w", "x", "y", "z", "v"]
    return GadgetInstance(inst, [roles[r] for r in order], order), slots


def _register(slots: SlotTable, v: str, s: list[int], m: list[int], roles: dict[str, int]) -> None:
    first_layer = [roles["w"], roles["x"], roles["y"], roles["z"]]
    for form, k in _SLOT_INDEX.items():
        slots.entries[(v, form)] = (first_layer[k], s[k])
    slots.gadget_edges[v] = dict(roles)
    slots.gadget_inputs[v] = list(s)
    slots.gadget_middles[v] = list(m)


def combined_constraint_inputs(c: CombinedConstraint, slots: SlotTable) -> list[int]:
    """Input neurons carrying a 1 in the data point for ``c``."""
    hot = []
    for t in c.terms:
        _, nid = slots.slot(t.var.name, _FORM_OF[(t.exponent, t.sign)])
        if nid in hot:
            raise SlotCollision(f"constraint {c} needs two unit entries at input neuron {nid}")
        hot.append(nid)
    return hot


def add_combined_constraint_datapoint(
    inst: TrainingInstance, c: CombinedConstraint, slots: SlotTable
) -> DataPoint:
    """Data point for ``c``: ones at its three slot inputs, target 0 at ``a``, '?' elsewhere."""
    hot = set(combined_constraint_inputs(c, slots))
    inputs = tuple(ONE if nid in hot else ZERO for nid in inst.inputs)
    outputs = tuple(ZERO if nid == slots.output_a else None for nid in inst.outputs)
    return DataPoint(inputs, outputs)


def compile_restricted(cf: CombinedFormula, cost: str = "mse") -> tuple[TrainingInstance, SlotTable]:
    """One variable gadget per variable, sharing the outputs ``a`` and ``b``.

    Neuron ids: all gadget inputs (5 per variable), then all middles (4 per
    variable), then ``a``, ``b``.  Data: 4 points per variable, then one point
    per combined constraint.  Every bias is fixed to 0.
    """
    n = len(cf.variables)
    if n == 0:
        raise InputError("cannot compile a formula without variables")
    a, b = 9 * n, 9 * n + 1
    neurons = [Neuron(i, "input") for i in range(5 * n)]
    neurons += [Neuron(5 * n + i, "hidden") for i in range(4 * n)]
    neurons += [Neuron(a, "output"), Neuron(b, "output")]
    slots = SlotTable(output_a=a, output_b=b)
    edges: list[Edge] = []
    for i, v in enumerate(cf.variables):
        s = list(range(5 * i, 5 * i + 5))
        m = list(range(5 * n + 4 * i, 5 * n + 4 * i + 4))
        es, roles = _variable_gadget_edges(s, m, a, b, len(edges))
        edges += es
        _register(slots, v.name, s, m, roles)
    zeros = [ZERO] * (5 * n)
    data = []
    for i in range(n):
        for x, y in VARIABLE_GADGET_DATA:
            row = list(zeros)
            row[5 * i:5 * i + 5] = [Fraction(t) for t in x]
            data.append(DataPoint(tuple(row), tuple(None if t is None else Fraction(t) for t in y)))
    inst = TrainingInstance(tuple(neurons), tuple(edges), (), cost)
    data += [add_combined_constraint_datapoint(inst, c, slots) for c in cf.constraints]
    return TrainingInstance(tuple(neurons), tuple(edges), tuple(data), cost), slots
