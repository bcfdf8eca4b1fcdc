"""Scalar helpers.

Exact scalars are :class:`fractions.Fraction`; float scalars are finite
Python floats.  Nothing else is admitted.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Iterable, Union

Scalar = Union[Fraction, float]

ZERO = Fraction(0)
ONE = Fraction(1)
MINUS_ONE = Fraction(-1)

_RATIONAL = re.compile(r"^\s*(-?\d+)(?:\s*/\s*(\d+))?\s*$")


def parse_rational(text: str) -> Fraction:
    """Parse ``"p"`` or ``"p/q"``.  Raises ValueError on a zero denominator."""
    m = _RATIONAL.match(text)
    if m is None:
        raise ValueError(f"not a rational literal: {text!r}")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise ValueError(f"zero denominator in {text!r}")
    return Fraction(num, den)


def format_rational(value: Fraction) -> str:
    return str(value)


def as_exact(value) -> Fraction:
    """Coerce ints, Fractions and rational strings to a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not scalars")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"cannot use {type(value).__name__} as an exact scalar")


def as_float(value) -> float:
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"non-finite scalar {value!r}")
    return x


def mode_of(values: Iterable[Scalar]) -> str:
    """Return ``"exact"`` or ``"float"``; mixed collections raise ValueError.

    An empty collection counts as exact.
    """
    seen = set()
    for v in values:
        if isinstance(v, Fraction):
            seen.add("exact")
        elif isinstance(v, float):
            if not math.isfinite(v):
                raise ValueError(f"non-finite scalar {v!r}")
            seen.add("float")
        else:
            raise TypeError(f"unsupported scalar type {type(v).__name__}")
    if len(seen) > 1:
        raise ValueError("mixed exact and float scalars")
    return seen.pop() if seen else "exact"


def is_zero(value: Scalar, tolerance: float | None = None) -> bool:
    if tolerance is None or isinstance(value, Fraction):
        return value == 0
    return abs(value) <= tolerance
