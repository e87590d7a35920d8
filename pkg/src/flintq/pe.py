"""Bit-true model of the integer-path processing element.

Every operand (int / pot / flint code) is decoded to a (base integer,
exponent) pair; the multiplier forms base_a * base_b shifted left by the
exponent sum, and the accumulator adds it up.  A dot product over codes,
scaled once at the end, therefore equals the real dot product of the
dequantized operands exactly, as long as nothing overflows the datapath.

The 8-bit int multiply is composed from four 4-bit PE multiplies plus one
adder, mirroring the mixed-precision array reconfiguration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import flint
from .qtypes import NumericType, QTensor, QuantizationError


class DatapathError(ArithmeticError):
    """Product or accumulator exceeded the configured width under policy=strict."""


@dataclass(frozen=True)
class MacState:
    accumulator: int = 0
    acc_width: int = 32
    product_width: int = 16
    policy: str = "widen"  # widen | saturate | wrap | strict
    overflowed: bool = False


def decode_operand(code: int, ntype: NumericType) -> flint.DecodedPair:
    """Decode one code word of any integer-path primitive type to (base, exp)."""
    b = ntype.width
    if not 0 <= code < (1 << b):
        raise QuantizationError(f"code {code} does not fit {b} bits")
    if ntype.kind == "int":
        if ntype.signed and code >= (1 << (b - 1)):
            return flint.DecodedPair(code - (1 << b), 0)
        return flint.DecodedPair(code, 0)
    if ntype.kind == "pot":
        mag_width = b - 1 if ntype.signed else b
        sign = -1 if ntype.signed and code >> mag_width else 1
        k = code & ((1 << mag_width) - 1)
        if k == 0:
            return flint.DecodedPair(0, 0)
        return flint.DecodedPair(sign, k - 1)
    if ntype.kind == "flint":
        return flint.decode_int(flint.FlintCode(code, b, ntype.signed))
    raise QuantizationError(f"type {ntype.kind} has no integer-path decoder")


def _clamp(value: int, width: int, policy: str) -> tuple[int, bool]:
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    if lo <= value <= hi:
        return value, False
    if policy == "strict":
        raise DatapathError(f"value {value} exceeds {width}-bit signed range")
    if policy == "saturate":
        return (hi if value > hi else lo), True
    if policy == "wrap":
        return ((value - lo) % (1 << width)) + lo, True
    return value, True  # widen: keep exact, flag


def mac_step(state: MacState, a: flint.DecodedPair, b: flint.DecodedPair) -> MacState:
    """One multiply-accumulate: acc += (a.base * b.base) << (a.exp + b.exp)."""
    product = (a.base * b.base) << (a.exponent + b.exponent)
    product, p_over = _clamp(product, state.product_width, state.policy)
    acc, a_over = _clamp(state.accumulator + product, state.acc_width, state.policy)
    return replace(state, accumulator=acc, overflowed=state.overflowed or p_over or a_over)


def _split_nibbles(x: int, signed: bool) -> tuple[flint.DecodedPair, flint.DecodedPair]:
    lo, hi = (-128, 127) if signed else (0, 255)
    if not lo <= x <= hi:
        raise QuantizationError(f"{x} outside the 8-bit {'signed' if signed else 'unsigned'} range")
    low = x & 0xF
    high = (x >> 4) & 0xF
    if signed and high >= 8:
        high -= 16  # top nibble carries the sign
    return flint.DecodedPair(high, 4), flint.DecodedPair(low, 0)


def mul8_via_four(a: int, b: int, signed: bool = True) -> int:
    """8-bit int multiply out of four 4-bit PE multiplies and one adder."""
    a_hi, a_lo = _split_nibbles(a, signed)
    b_hi, b_lo = _split_nibbles(b, signed)
    fresh = MacState(acc_width=32, product_width=16, policy="widen")
    partials = [
        mac_step(fresh, x, y).accumulator
        for x, y in ((a_hi, b_hi), (a_hi, b_lo), (a_lo, b_hi), (a_lo, b_lo))
    ]
    return sum(partials)  # the extra adder tree


def dot_product(
    codes_a: np.ndarray,
    codes_b: np.ndarray,
    type_a: NumericType,
    type_b: NumericType,
    scale_a: float,
    scale_b: float,
    state: MacState | None = None,
) -> tuple[float, MacState]:
    """Integer-domain dot product of two code vectors, scaled once at the end."""
    codes_a = np.asarray(codes_a).ravel()
    codes_b = np.asarray(codes_b).ravel()
    if codes_a.size != codes_b.size:
        raise QuantizationError("dot product operands must have equal length")
    state = state or MacState()
    for ca, cb in zip(codes_a.tolist(), codes_b.tolist()):
        state = mac_step(state, decode_operand(ca, type_a), decode_operand(cb, type_b))
    return state.accumulator * scale_a * scale_b, state


def qtensor_row_dot(qa: QTensor, qb: QTensor, state: MacState | None = None) -> tuple[float, MacState]:
    """Dot product of two per-tensor-scaled quantized vectors."""
    if qa.scheme.axis is not None or qb.scheme.axis is not None:
        raise QuantizationError("row dot expects per-tensor schemes")
    return dot_product(
        qa.codes, qb.codes, qa.scheme.ntype, qb.scheme.ntype,
        float(qa.scheme.scales[0]), float(qb.scheme.scales[0]), state,
    )
