"""Exact rational helpers shared by every module.

Amounts, prices and timestamps are :class:`fractions.Fraction` (or plain
``int``). JSON carries them as integers when they fit in 53 bits and as
``"p/q"`` strings otherwise.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Union

Number = Union[int, Fraction]

_JSON_SAFE_INT = 2**53


def to_fraction(value) -> Fraction:
    """Parse ``value`` (int, Fraction, ``"p/q"``, ``"1.25"``) into a Fraction.

    Floats are rejected: they are the source of the nondeterminism this
    package avoids.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, Decimal):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as an exact number")


def normalize(value: Number) -> Number:
    """Collapse integral fractions back to ``int``."""
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value.numerator)
    return value


def encode_number(value: Number):
    """JSON representation: int when safe, otherwise a string."""
    value = normalize(to_fraction(value))
    if isinstance(value, int):
        if -_JSON_SAFE_INT <= value <= _JSON_SAFE_INT:
            return value
        return str(value)
    return f"{value.numerator}/{value.denominator}"


def pretty(value: Number) -> str:
    """Human rendering: ``90``, ``10.1`` for terminating decimals, else ``p/q``."""
    frac = to_fraction(value)
    if frac.denominator == 1:
        return str(frac.numerator)
    den = frac.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{frac.numerator}/{frac.denominator}"
    digits = max(twos, fives)
    scaled = frac * 10**digits
    sign = "-" if scaled < 0 else ""
    whole, rest = divmod(abs(int(scaled)), 10**digits)
    return f"{sign}{whole}.{rest:0{digits}d}"


def quantize(value: float, resolution: int = 10**6) -> Fraction:
    """Round a float draw onto a fixed rational grid (default: microseconds)."""
    return Fraction(round(value * resolution), resolution)
