"""Independent symbolic evaluation of gadget instances with sympy.

Builds each data point's output as a polynomial in the free weights by
walking the edge list directly, without the package's evaluator.
"""

import sympy


def symbolic_system(inst, names):
    """Equations prediction - target = 0 for every non-ignored output."""
    sym = {eid: sympy.Symbol(n) for eid, n in names.items()}
    weight = {e.id: sym[e.id] if e.weight is None else sympy.Rational(e.weight.numerator, e.weight.denominator)
              for e in inst.edges}
    eqs = []
    for d in inst.data:
        value = {nid: sympy.Rational(v.numerator, v.denominator) for nid, v in zip(inst.inputs, d.inputs)}
        for nid in inst.hidden + inst.outputs:
            value[nid] = sum((weight[e.id] * value[e.src] for e in inst.edges if e.dst == nid), sympy.Integer(0))
        for nid, t in zip(inst.outputs, d.outputs):
            if t is not None:
                eqs.append(sympy.expand(value[nid] - sympy.Rational(t.numerator, t.denominator)))
    return [e for e in eqs if e != 0], sym


def zero_cost_variety(inst, names):
    eqs, sym = symbolic_system(inst, names)
    return sympy.solve(eqs, list(sym.values()), dict=True), sym
