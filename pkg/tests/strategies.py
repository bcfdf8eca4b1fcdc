from fractions import Fraction

from hypothesis import strategies as st

from etrnn.formula import EtrInvFormula

NAMES = ["x", "y", "z", "w", "v"]

small_fractions = st.builds(
    Fraction, st.integers(-6, 6), st.integers(1, 4)
)
nonzero_fractions = small_fractions.filter(lambda q: q != 0)


@st.composite
def formulas(draw, max_constraints=4, names=NAMES):
    n = draw(st.integers(1, max_constraints))
    pool = st.sampled_from(names)
    spec = []
    for _ in range(n):
        if draw(st.booleans()):
            spec.append(("+", draw(pool), draw(pool), draw(pool)))
        else:
            spec.append(("*", draw(pool), draw(pool)))
    return EtrInvFormula.build(spec)


@st.composite
def satisfied_formulas(draw, max_constraints=4):
    """A formula together with an exact, all-nonzero solution."""
    values = {"x0": draw(nonzero_fractions)}
    spec = []
    for k in range(draw(st.integers(1, max_constraints))):
        names = sorted(values)
        new = f"x{len(values)}"
        if draw(st.booleans()):
            a, b = draw(st.sampled_from(names)), draw(st.sampled_from(names))
            s = values[a] + values[b]
            existing = [n for n in names if values[n] == s]
            if existing and draw(st.booleans()):
                spec.append(("+", a, b, existing[0]))
            elif s != 0:
                values[new] = s
                spec.append(("+", a, b, new))
        else:
            a = draw(st.sampled_from(names))
            inv = 1 / values[a]
            existing = [n for n in names if values[n] == inv]
            if existing and draw(st.booleans()):
                spec.append(("*", a, existing[0]))
            else:
                values[new] = inv
                spec.append(("*", a, new))
    if not spec:
        values["x1"] = 1 / values["x0"]
        spec.append(("*", "x0", "x1"))
    f = EtrInvFormula.build(spec)
    return f, {n: values[n] for n in f.names}


@st.composite
def layered_instances(draw, activations=("identity",), allow_ignore=True, free_only=False, cost=None):
    """Random input->hidden->output instance (kind restricted) with an exact witness."""
    from etrnn.evaluate import Witness
    from etrnn.network import Activation, DataPoint, Edge, Neuron, TrainingInstance

    S, H, T = draw(st.integers(1, 4)), draw(st.integers(1, 4)), draw(st.integers(1, 3))
    neurons = [Neuron(i, "input") for i in range(S)]
    fixed_or_free = st.none() if free_only else st.one_of(st.none(), small_fractions)
    for i in range(S, S + H + T):
        role = "hidden" if i < S + H else "output"
        act = Activation(draw(st.sampled_from(activations)))
        neurons.append(Neuron(i, role, act, draw(fixed_or_free)))
    pairs = [(s, S + h) for s in range(S) for h in range(H)] + [
        (S + h, S + H + t) for h in range(H) for t in range(T)]
    chosen = [p for p in pairs if draw(st.booleans())] or pairs[:1]
    edges = [Edge(k, a, b, draw(fixed_or_free)) for k, (a, b) in enumerate(chosen)]
    target = st.one_of(st.none(), small_fractions) if allow_ignore else small_fractions
    data = tuple(
        DataPoint(tuple(draw(small_fractions) for _ in range(S)), tuple(draw(target) for _ in range(T)))
        for _ in range(draw(st.integers(0, 4)))
    )
    inst = TrainingInstance(tuple(neurons), tuple(edges), data, cost or draw(st.sampled_from(["mse", "l1"])))
    w = Witness({e: draw(small_fractions) for e in inst.free_edges},
                {n: draw(small_fractions) for n in inst.free_biases}, "exact")
    return inst, w


def random_layered(rng, activations=("identity", "relu"), cost="mse"):
    """Seeded non-hypothesis variant of :func:`layered_instances` (all parameters free)."""
    from etrnn.network import Activation, DataPoint, Edge, Neuron, TrainingInstance

    def frac():
        return Fraction(int(rng.integers(-6, 7)), int(rng.integers(1, 5)))

    S, H, T = (int(rng.integers(1, 5)) for _ in range(3))
    neurons = [Neuron(i, "input") for i in range(S)]
    for i in range(S, S + H + T):
        role = "hidden" if i < S + H else "output"
        neurons.append(Neuron(i, role, Activation(str(rng.choice(activations))), None))
    pairs = [(s, S + h) for s in range(S) for h in range(H)] + [
        (S + h, S + H + t) for h in range(H) for t in range(T)]
    chosen = [p for p in pairs if rng.random() < 0.7] or pairs[:1]
    edges = [Edge(k, a, b) for k, (a, b) in enumerate(chosen)]
    data = tuple(
        DataPoint(tuple(frac() for _ in range(S)), tuple(None if rng.random() < 0.2 else frac() for _ in range(T)))
        for _ in range(int(rng.integers(1, 5)))
    )
    return TrainingInstance(tuple(neurons), tuple(edges), data, cost)
