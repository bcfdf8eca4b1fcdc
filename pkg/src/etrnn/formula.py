"""ETR-INV formulas: conjunctions of ``x + y = z`` and ``x * y = 1``.

Text format, one constraint per line, ``#`` starts a comment::

    x + y = z
    x * w = 1

Identifiers match ``[A-Za-z_][A-Za-z0-9_]*``.  Variables may repeat inside a
constraint, so ``x * x = 1`` and ``x + x = y`` are legal.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from etrnn.errors import (
    BudgetExceeded,
    FormulaSyntaxError,
    MissingVariable,
    UnsupportedConstraint,
)
from etrnn.scalars import Scalar, mode_of

Assignment = Mapping[str, Scalar]


@dataclass(frozen=True)
class VarId:
    index: int
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Addition:
    x: VarId
    y: VarId
    z: VarId

    def variables(self) -> tuple[VarId, ...]:
        return (self.x, self.y, self.z)

    def __str__(self) -> str:
        return f"{self.x} + {self.y} = {self.z}"


@dataclass(frozen=True)
class Inversion:
    x: VarId
    y: VarId

    def variables(self) -> tuple[VarId, ...]:
        return (self.x, self.y)

    def __str__(self) -> str:
        return f"{self.x} * {self.y} = 1"


Constraint = Union[Addition, Inversion]


@dataclass(frozen=True)
class EtrInvFormula:
    variables: tuple[VarId, ...]
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        if [v.index for v in self.variables] != list(range(len(self.variables))):
            raise ValueError("variable indices must be dense 0..n-1")
        known = set(self.variables)
        for c in self.constraints:
            for v in c.variables():
                if v not in known:
                    raise ValueError(f"constraint {c} references unknown variable {v}")

    def var(self, name: str) -> VarId:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @classmethod
    def build(cls, constraints: Iterable[tuple]) -> "EtrInvFormula":
        """Build from tuples ``("+", x, y, z)`` / ``("*", x, y)`` of names.

        Variables are numbered in order of first occurrence.
        """
        pool: dict[str, VarId] = {}

        def get(name: str) -> VarId:
            if name not in pool:
                pool[name] = VarId(len(pool), name)
            return pool[name]

        out: list[Constraint] = []
        for c in constraints:
            if c[0] == "+":
                out.append(Addition(get(c[1]), get(c[2]), get(c[3])))
            elif c[0] == "*":
                out.append(Inversion(get(c[1]), get(c[2])))
            else:
                raise ValueError(f"unknown constraint kind {c[0]!r}")
        return cls(tuple(pool.values()), tuple(out))


_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<num>\d+(?:\.\d*)?)|(?P<op>[+*=])|(?P<bad>\S))")


def _tokenize(line: str, lineno: int) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:  # trailing whitespace
            break
        kind = m.lastgroup
        col = m.start(kind) + 1
        if kind == "bad":
            raise FormulaSyntaxError(f"unexpected character {m.group(kind)!r}", lineno, col)
        tokens.append((kind, m.group(kind), col))
        pos = m.end()
    return tokens


def parse_etr_inv(text: str) -> EtrInvFormula:
    """Parse formula text.  Constraints keep the order of their lines."""
    pool: dict[str, VarId] = {}

    def get(name: str) -> VarId:
        if name not in pool:
            pool[name] = VarId(len(pool), name)
        return pool[name]

    constraints: list[Constraint] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        toks = _tokenize(line, lineno)
        end_col = len(line.rstrip()) + 1

        def expect(i: int, kind: str, value: str | None = None):
            if i >= len(toks):
                want = value or kind
                raise FormulaSyntaxError(f"expected {want}, found end of line", lineno, end_col)
            k, v, col = toks[i]
            if k != kind or (value is not None and v != value):
                want = repr(value) if value else kind
                raise FormulaSyntaxError(f"expected {want}, found {v!r}", lineno, col)
            return v

        x = expect(0, "ident")
        if len(toks) < 2 or toks[1][0] != "op" or toks[1][1] not in "+*":
            col = toks[1][2] if len(toks) > 1 else end_col
            raise FormulaSyntaxError("expected '+' or '*'", lineno, col)
        op = toks[1][1]
        y = expect(2, "ident")
        expect(3, "op", "=")
        if len(toks) < 5:
            raise FormulaSyntaxError("missing right-hand side", lineno, end_col)
        rkind, rval, rcol = toks[4]
        if len(toks) > 5:
            raise FormulaSyntaxError(f"unexpected {toks[5][1]!r}", lineno, toks[5][2])
        if op == "+":
            if rkind != "ident":
                raise UnsupportedConstraint(
                    f"addition right-hand side must be a variable, found {rval!r}", lineno, rcol
                )
            constraints.append(Addition(get(x), get(y), get(rval)))
        else:
            if rkind != "num" or rval != "1":
                raise UnsupportedConstraint(
                    f"inversion right-hand side must be the literal 1, found {rval!r}", lineno, rcol
                )
            constraints.append(Inversion(get(x), get(y)))
    return EtrInvFormula(tuple(pool.values()), tuple(constraints))


def format_formula(f: EtrInvFormula) -> str:
    """Inverse of :func:`parse_etr_inv` (variables occurring in no constraint are lost)."""
    return "".join(f"{c}\n" for c in f.constraints)


@dataclass(frozen=True)
class SatisfactionReport:
    residuals: tuple[Scalar, ...]
    satisfied: bool


def _lookup(a: Assignment, v: VarId) -> Scalar:
    try:
        return a[v.name]
    except KeyError:
        raise MissingVariable(f"assignment has no value for {v.name}") from None


def evaluate_formula(f: EtrInvFormula, a: Assignment, tolerance: float | None = None) -> SatisfactionReport:
    """Residuals ``x+y-z`` and ``x*y-1`` per constraint.

    Exact assignments are satisfied only with zero residuals.  Float
    assignments compare ``|residual| <= tolerance`` (exact zero when no
    tolerance is given).
    """
    for v in f.variables:
        _lookup(a, v)
    mode = mode_of(a[v.name] for v in f.variables)
    residuals: list[Scalar] = []
    for c in f.constraints:
        if isinstance(c, Addition):
            residuals.append(_lookup(a, c.x) + _lookup(a, c.y) - _lookup(a, c.z))
        else:
            residuals.append(_lookup(a, c.x) * _lookup(a, c.y) - 1)
    if mode == "exact" or tolerance is None:
        ok = all(r == 0 for r in residuals)
    else:
        ok = all(abs(r) <= tolerance for r in residuals)
    return SatisfactionReport(tuple(residuals), ok)


def brute_force_search(
    f: EtrInvFormula, grid: Sequence[Scalar], budget: int = 10**6
) -> dict[str, Scalar] | None:
    """Return the lexicographically first grid assignment satisfying ``f``.

    Variables are ordered by index, grid values by their position in
    ``grid``.  ``None`` only means no *grid point* works; the formula may
    still be satisfiable over the reals (e.g. ``x + x = y, x * y = 1``).
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    n = len(f.variables)
    if len(grid) ** n > budget:
        raise BudgetExceeded(f"{len(grid)}^{n} assignments exceed budget {budget}")
    names = f.names
    for values in itertools.product(grid, repeat=n):
        a = dict(zip(names, values))
        if evaluate_formula(f, a).satisfied:
            return a
    return None


def to_float_assignment(a: Assignment) -> dict[str, float]:
    return {k: float(v) for k, v in a.items()}


def to_exact_assignment(a: Assignment) -> dict[str, Fraction]:
    return {k: Fraction(v) for k, v in a.items()}
