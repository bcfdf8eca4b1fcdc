"""Rewrite ETR-INV formulas into combined constraints ``x^{±1} + y^{±1} - z^{±1} = 0``.

:func:`lower_to_combined` performs three steps in order:

1. coverage: every variable that is in no addition constraint gets
   ``x + c = t`` with fresh ``c = __cov<k>`` and ``t = __cov<k>_t``.  (The
   tempting ``x + c = c`` is not free at all: it forces ``x = 0``.);
2. dedup: inversion partners are merged with a union-find that tracks parity,
   so ``x*y = 1, x*w = 1`` makes ``w`` an alias of ``y`` and chains
   ``x*y = 1, y*z = 1`` resolve ``z`` to ``x``;
3. substitution: every variable at odd parity from its class representative
   is replaced by the representative's inverse and the inversion constraints
   are dropped.

An odd inversion cycle (``x*x = 1`` is the shortest) forces ``r = 1/r`` for
the representative.  That is encoded with two fresh helpers ``u, t`` as
``r + u - t = 0`` and ``r^-1 + u - t = 0``.

Each fresh variable records how to compute its value from the original
solution (see :class:`AuxDef`), so solutions can be pushed forward.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from etrnn.errors import DivisionByZero, FormulaSyntaxError, MissingVariable, UnsatisfyingAssignment
from etrnn.formula import Addition, Assignment, EtrInvFormula, Inversion, SatisfactionReport, VarId
from etrnn.scalars import Scalar, mode_of


@dataclass(frozen=True)
class SignedTerm:
    var: VarId
    exponent: int = 1
    sign: int = 1

    def __post_init__(self):
        if self.exponent not in (1, -1) or self.sign not in (1, -1):
            raise ValueError("exponent and sign must be +1 or -1")

    def value(self, a: Mapping[str, Scalar]) -> Scalar:
        v = a[self.var.name]
        if self.exponent == -1:
            if v == 0:
                raise DivisionByZero(f"{self.var.name} is inverted but equals 0")
            v = 1 / v
        return v if self.sign == 1 else -v

    def __str__(self) -> str:
        s = "+" if self.sign == 1 else "-"
        return f"{s}{self.var.name}{'^-1' if self.exponent == -1 else ''}"


@dataclass(frozen=True)
class CombinedConstraint:
    terms: tuple[SignedTerm, SignedTerm, SignedTerm]

    def __post_init__(self):
        if tuple(t.sign for t in self.terms) != (1, 1, -1):
            raise ValueError("combined constraint signs must be (+, +, -)")

    def __str__(self) -> str:
        return " ".join(str(t) for t in self.terms) + " = 0"


@dataclass(frozen=True)
class AuxDef:
    """How a fresh variable's value follows from the others.

    ``kind`` is ``"free"`` (any nonzero value), ``"copy"`` (equal to
    ``args[0]``) or ``"shift"`` (``args[0]`` raised to ``exponent`` plus the
    free helper ``args[1]``).
    """

    kind: str
    args: tuple[str, ...] = ()
    exponent: int = 1


@dataclass(frozen=True)
class CombinedFormula:
    variables: tuple[VarId, ...]
    constraints: tuple[CombinedConstraint, ...]
    # original name -> (surviving name, exponent)
    backmap: Mapping[str, tuple[str, int]]
    aux: Mapping[str, AuxDef] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def var(self, name: str) -> VarId:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)


class _ParityUnionFind:
    """Union-find where each element carries a parity bit relative to its root.

    Parity 0 means "equal to the root", parity 1 means "inverse of the root".
    The root of a class is always its lowest-index member.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.parity = [0] * n
        self.odd_cycle = [False] * n

    def find(self, i: int) -> tuple[int, int]:
        path = []
        while self.parent[i] != i:
            path.append(i)
            i = self.parent[i]
        root = i
        # compress
        acc = 0
        for node in reversed(path):
            acc ^= self.parity[node]
            self.parity[node] = acc
            self.parent[node] = root
        return root, (self.parity[path[0]] if path else 0)

    def union_inverse(self, a: int, b: int) -> None:
        ra, pa = self.find(a)
        rb, pb = self.find(b)
        if ra == rb:
            if pa == pb:
                self.odd_cycle[ra] = True
            return
        lo, hi = (ra, rb) if ra < rb else (rb, ra)
        self.parent[hi] = lo
        self.parity[hi] = pa ^ pb ^ 1
        self.odd_cycle[lo] = self.odd_cycle[lo] or self.odd_cycle[hi]


def lower_to_combined(f: EtrInvFormula) -> CombinedFormula:
    n = len(f.variables)
    in_addition = [False] * n
    for c in f.constraints:
        if isinstance(c, Addition):
            for v in c.variables():
                in_addition[v.index] = True

    fresh: list[VarId] = []
    aux: dict[str, AuxDef] = {}
    taken = set(f.names)

    def new_var(name: str, definition: AuxDef) -> VarId:
        if name in taken:
            raise ValueError(f"fresh name {name} clashes with an input variable")
        taken.add(name)
        v = VarId(n + len(fresh), name)
        fresh.append(v)
        aux[name] = definition
        return v

    # (a) coverage
    additions: list[tuple[VarId, VarId, VarId]] = [
        (c.x, c.y, c.z) for c in f.constraints if isinstance(c, Addition)
    ]
    covered = []
    for v in f.variables:
        if not in_addition[v.index]:
            k = len(covered)
            u = new_var(f"__cov{k}", AuxDef("free"))
            t = new_var(f"__cov{k}_t", AuxDef("free"))  # definition set after dedup
            covered.append((v, u, t))
            additions.append((v, u, t))

    # (b) dedup
    uf = _ParityUnionFind(n)
    for c in f.constraints:
        if isinstance(c, Inversion):
            uf.union_inverse(c.x.index, c.y.index)

    backmap: dict[str, tuple[str, int]] = {}
    rep: dict[int, tuple[VarId, int]] = {}
    for v in f.variables:
        root, parity = uf.find(v.index)
        rv = f.variables[root]
        rep[v.index] = (rv, -1 if parity else 1)
        backmap[v.name] = (rv.name, -1 if parity else 1)

    for v, u, t in covered:
        rv, e = rep[v.index]
        aux[t.name] = AuxDef("shift", (rv.name, u.name), e)

    # (c) substitution
    def term(v: VarId, sign: int) -> SignedTerm:
        rv, e = rep.get(v.index, (v, 1))
        return SignedTerm(rv, e, sign)

    out = [
        CombinedConstraint((term(x, 1), term(y, 1), term(z, -1))) for x, y, z in additions
    ]

    helper = 0
    for v in f.variables:
        root, _ = uf.find(v.index)
        if root == v.index and uf.odd_cycle[root]:
            u = new_var(f"__aux{helper}", AuxDef("free"))
            t = new_var(f"__aux{helper + 1}", AuxDef("shift", (v.name, u.name), 1))
            helper += 2
            out.append(CombinedConstraint((SignedTerm(v, 1), SignedTerm(u, 1), SignedTerm(t, 1, -1))))
            out.append(CombinedConstraint((SignedTerm(v, -1), SignedTerm(u, 1), SignedTerm(t, 1, -1))))

    used = {t.var for c in out for t in c.terms}
    variables = tuple(v for v in f.variables if v in used) + tuple(fresh)
    variables = tuple(VarId(i, v.name) for i, v in enumerate(variables))
    return _reindex(variables, out, backmap, aux)


def _reindex(variables, constraints, backmap, aux) -> CombinedFormula:
    by_name = {v.name: v for v in variables}

    def fix(t: SignedTerm) -> SignedTerm:
        return SignedTerm(by_name[t.var.name], t.exponent, t.sign)

    cs = tuple(CombinedConstraint(tuple(fix(t) for t in c.terms)) for c in constraints)
    return CombinedFormula(tuple(variables), cs, dict(backmap), dict(aux))


def split_repeated_terms(cf: CombinedFormula) -> CombinedFormula:
    """Replace constraints whose two positive terms coincide.

    ``x^e + x^e - z^f`` would need two unit entries at one input neuron of the
    network, so the second occurrence is renamed to a fresh alias ``x'``
    tied by ``x + u - t = 0`` and ``x' + u - t = 0``.
    """
    names = set(cf.names)
    variables = list(cf.variables)
    aux = dict(cf.aux)
    out: list[CombinedConstraint] = []
    k = 0
    for c in cf.constraints:
        t1, t2, t3 = c.terms
        if (t1.var, t1.exponent) != (t2.var, t2.exponent):
            out.append(c)
            continue
        base = t1.var.name
        alias_name = f"__alias{k}"
        u_name, t_name = f"__alias{k}_u", f"__alias{k}_t"
        k += 1
        for nm in (alias_name, u_name, t_name):
            if nm in names:
                raise ValueError(f"fresh name {nm} already in use")
            names.add(nm)
        alias = VarId(len(variables), alias_name)
        u = VarId(len(variables) + 1, u_name)
        t = VarId(len(variables) + 2, t_name)
        variables += [alias, u, t]
        aux[alias_name] = AuxDef("copy", (base,))
        aux[u_name] = AuxDef("free")
        aux[t_name] = AuxDef("shift", (base, u_name), 1)
        out.append(CombinedConstraint((t1, SignedTerm(alias, t2.exponent, 1), t3)))
        out.append(CombinedConstraint((SignedTerm(t1.var, 1), SignedTerm(u), SignedTerm(t, 1, -1))))
        out.append(CombinedConstraint((SignedTerm(alias, 1), SignedTerm(u), SignedTerm(t, 1, -1))))
    return CombinedFormula(tuple(variables), tuple(out), dict(cf.backmap), aux)


def check_combined(
    cf: CombinedFormula, a: Mapping[str, Scalar], tolerance: float | None = None
) -> SatisfactionReport:
    for v in cf.variables:
        if v.name not in a:
            raise MissingVariable(f"assignment has no value for {v.name}")
    mode = mode_of(a[v.name] for v in cf.variables)
    residuals = tuple(sum((t.value(a) for t in c.terms), start=Fraction(0) if mode == "exact" else 0.0)
                      for c in cf.constraints)
    if mode == "exact" or tolerance is None:
        ok = all(r == 0 for r in residuals)
    else:
        ok = all(abs(r) <= tolerance for r in residuals)
    return SatisfactionReport(residuals, ok)


def pull_back(cf: CombinedFormula, a: Mapping[str, Scalar]) -> dict[str, Scalar]:
    """Map an assignment of ``cf`` to the original formula's variables."""
    out: dict[str, Scalar] = {}
    for orig, (name, e) in cf.backmap.items():
        v = a[name]
        if e == -1:
            if v == 0:
                raise DivisionByZero(f"{name} is inverted but equals 0")
            v = 1 / v
        out[orig] = v
    return out


def push_forward(cf: CombinedFormula, a: Assignment, max_tries: int | None = None) -> dict[str, Scalar]:
    """Extend a solution of the original formula to all variables of ``cf``.

    Free helpers all receive one common value ``c = 1, 2, 3, ...``; the first
    ``c`` making every fresh variable nonzero is used.  Original variables
    are copied (representatives keep their own value).
    """
    out: dict[str, Scalar] = {}
    for orig, (name, e) in cf.backmap.items():
        if orig == name:
            out[name] = a[orig]
    for v in cf.variables:
        if v.name not in out and v.name not in cf.aux:
            # representative absent from the original assignment: recover
            # it from a member that maps to it
            for orig, (name, e) in cf.backmap.items():
                if name == v.name:
                    val = a[orig]
                    if e == -1:
                        if val == 0:
                            raise UnsatisfyingAssignment(f"{orig} must be nonzero")
                        val = 1 / val
                    out[name] = val
                    break
    exact = mode_of(out.values()) == "exact"
    tries = max_tries or (len(cf.aux) + 2)
    for c in range(1, tries + 1):
        cand = dict(out)
        helper = Fraction(c) if exact else float(c)
        for name, d in cf.aux.items():
            if d.kind == "free":
                cand[name] = helper
        for name, d in cf.aux.items():
            if d.kind == "copy":
                cand[name] = cand[d.args[0]]
        for name, d in cf.aux.items():
            if d.kind == "shift":
                base = cand[d.args[0]]
                if d.exponent == -1:
                    base = 1 / base
                cand[name] = base + cand[d.args[1]]
        if all(cand[name] != 0 for name in cf.aux):
            return {v.name: cand[v.name] for v in cf.variables}
    raise UnsatisfyingAssignment("could not choose nonzero values for helper variables")


def format_combined(cf: CombinedFormula) -> str:
    return "".join(f"{c}\n" for c in cf.constraints)


_TERM = re.compile(r"([+-])([A-Za-z_][A-Za-z0-9_]*)(\^-1)?$")


def parse_combined(text: str) -> CombinedFormula:
    """Parse lines ``+x +y^-1 -z = 0``.  The backmap is the identity."""
    pool: dict[str, VarId] = {}
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        lhs, eq, rhs = line.partition("=")
        if not eq or rhs.strip() != "0":
            raise FormulaSyntaxError("expected '= 0'", lineno, len(lhs) + 1)
        parts = lhs.split()
        if len(parts) != 3:
            raise FormulaSyntaxError("expected three signed terms", lineno, 1)
        terms = []
        for p in parts:
            m = _TERM.match(p)
            if m is None:
                raise FormulaSyntaxError(f"bad term {p!r}", lineno, line.index(p) + 1)
            name = m.group(2)
            if name not in pool:
                pool[name] = VarId(len(pool), name)
            terms.append(SignedTerm(pool[name], -1 if m.group(3) else 1, 1 if m.group(1) == "+" else -1))
        try:
            out.append(CombinedConstraint(tuple(terms)))
        except ValueError as exc:
            raise FormulaSyntaxError(str(exc), lineno, 1) from None
    return CombinedFormula(tuple(pool.values()), tuple(out), {n: (n, 1) for n in pool})


def raise_to_etr_inv(cf: CombinedFormula) -> EtrInvFormula:
    """Re-express ``cf`` as ETR-INV: ``x^-1`` becomes a variable ``x__inv`` with ``x * x__inv = 1``.

    Variables keep the order of ``cf``; the ``__inv`` variables follow.
    """
    pool = {v.name: VarId(i, v.name) for i, v in enumerate(cf.variables)}
    inverted: list[str] = []

    def get(t: SignedTerm) -> VarId:
        if t.exponent == 1:
            return pool[t.var.name]
        nm = f"{t.var.name}__inv"
        if nm not in pool:
            pool[nm] = VarId(len(pool), nm)
            inverted.append(t.var.name)
        return pool[nm]

    rows: list = [Addition(*(get(t) for t in c.terms)) for c in cf.constraints]
    rows += [Inversion(pool[v], pool[f"{v}__inv"]) for v in inverted]
    return EtrInvFormula(tuple(pool.values()), tuple(rows))
