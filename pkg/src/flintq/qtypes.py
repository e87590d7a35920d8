"""Uniform quantize/dequantize for the four primitive low-bit types.

All four types (int / pot / flint / float) share one interface: a
``NumericType`` describes the format, a ``QuantScheme`` adds the scale
factors (per-tensor or per-channel), and ``quantize``/``dequantize`` map
between real tensors and code tensors.  Codes are stored one per element
in uint8 arrays.

Code layouts:
* int    -- two's complement in the low ``width`` bits.
* pot    -- code 0 is zero, code k >= 1 is 2**(k-1); signed uses a sign
            bit in the MSB over a (width-1)-bit magnitude code.
* flint  -- first-one encoding, see :mod:`flintq.flint`.
* float  -- sign bit (if signed), exponent code, mantissa; exponent code
            0 denotes subnormals (no implicit leading one), bias -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flint

KINDS = ("int", "pot", "flint", "float")


class QuantizationError(ValueError):
    pass


@dataclass(frozen=True)
class NumericType:
    kind: str
    width: int
    signed: bool = True
    float_split: tuple[int, int] | None = None  # (exponent bits, mantissa bits)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise QuantizationError(f"unknown kind {self.kind!r}")
        if not 3 <= self.width <= 8:
            raise QuantizationError(f"width must be in [3, 8], got {self.width}")
        if self.kind == "float":
            split = self.float_split or default_float_split(self.width, self.signed)
            e, m = split
            if e + m + (1 if self.signed else 0) != self.width:
                raise QuantizationError(f"float split {split} does not fill width {self.width}")
            object.__setattr__(self, "float_split", (e, m))

    @property
    def name(self) -> str:
        base = f"{'' if self.signed else 'u'}{self.kind}{self.width}"
        if self.kind == "float":
            e, m = self.float_split
            return f"{base}e{e}m{m}"
        return base

    def grid(self) -> np.ndarray:
        """All representable values at unit scale, strictly increasing."""
        return np.unique(self.code_values())

    def code_values(self) -> np.ndarray:
        """Decoded value of every code word, indexed by code (length 2**width)."""
        return _CODE_VALUE_FNS[self.kind](self)

    def max_value(self) -> float:
        return float(self.grid()[-1])


def default_float_split(width: int, signed: bool) -> tuple[int, int]:
    """Default exponent/mantissa split; 4-bit signed is (2, 1)."""
    e = (width + 1) // 2 if not signed else width // 2
    m = width - e - (1 if signed else 0)
    return (e, m)


@dataclass(frozen=True)
class QuantScheme:
    ntype: NumericType
    scales: np.ndarray  # shape (1,) for per-tensor, (channels,) for per-channel
    axis: int | None = None

    def __post_init__(self):
        scales = np.atleast_1d(np.asarray(self.scales, dtype=np.float64))
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise QuantizationError("scales must be positive and finite")
        if self.axis is None and scales.size != 1:
            raise QuantizationError("per-tensor scheme takes exactly one scale")
        object.__setattr__(self, "scales", scales)


@dataclass
class QTensor:
    codes: np.ndarray  # flat uint8
    shape: tuple[int, ...]
    scheme: QuantScheme

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.uint8).ravel()
        self.shape = tuple(self.shape)
        if self.codes.size != int(np.prod(self.shape, dtype=np.int64)):
            raise QuantizationError("code count does not match shape")
        if self.codes.size and int(self.codes.max()) >= (1 << self.scheme.ntype.width):
            raise QuantizationError("code exceeds type width")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# ---------------------------------------------------------------------------
# Per-kind code tables (value of each code word at unit scale)
# ---------------------------------------------------------------------------

def _int_code_values(t: NumericType) -> np.ndarray:
    codes = np.arange(1 << t.width)
    if not t.signed:
        return codes.astype(np.float64)
    half = 1 << (t.width - 1)
    return np.where(codes < half, codes, codes - (1 << t.width)).astype(np.float64)


def _pot_code_values(t: NumericType) -> np.ndarray:
    mag_width = t.width - 1 if t.signed else t.width
    mag = np.zeros(1 << mag_width)
    k = np.arange(1, 1 << mag_width)
    mag[1:] = 2.0 ** (k - 1)
    if not t.signed:
        return mag
    return np.concatenate([mag, -mag])  # sign bit in MSB


def _flint_code_values(t: NumericType) -> np.ndarray:
    return np.array(
        [float(flint.decode_value(c)) for c in flint.all_codes(t.width, t.signed)]
    )


def _float_code_values(t: NumericType) -> np.ndarray:
    e_bits, m_bits = t.float_split
    ec = np.arange(1 << e_bits)[:, None]
    m = np.arange(1 << m_bits)[None, :]
    # Bias -1; exponent code 0 is subnormal with the same exponent value as code 1.
    normal = 2.0 ** (ec - 1) * (1.0 + m / (1 << m_bits))
    sub = 2.0 ** 0 * (m / (1 << m_bits))
    mag = np.where(ec == 0, sub, normal).ravel()
    if not t.signed:
        return mag
    return np.concatenate([mag, -mag])


_CODE_VALUE_FNS = {
    "int": _int_code_values,
    "pot": _pot_code_values,
    "flint": _flint_code_values,
    "float": _float_code_values,
}


# ---------------------------------------------------------------------------
# Per-kind quantizers (input already divided by the scale)
# ---------------------------------------------------------------------------

def _quant_int(v: np.ndarray, t: NumericType) -> np.ndarray:
    if t.signed:
        lo, hi = -(1 << (t.width - 1)), (1 << (t.width - 1)) - 1
    else:
        lo, hi = 0, (1 << t.width) - 1
    q = np.clip(_round_half_away(v), lo, hi).astype(np.int64)
    return (q & ((1 << t.width) - 1)).astype(np.uint8)


def _quant_pot(v: np.ndarray, t: NumericType) -> np.ndarray:
    mag_width = t.width - 1 if t.signed else t.width
    kmax = (1 << mag_width) - 2  # largest exponent, code kmax+1
    mag = np.abs(v)
    with np.errstate(divide="ignore"):
        k = np.clip(_round_half_away(np.log2(np.where(mag > 0, mag, 1.0))), 0, kmax)
    code = np.where(mag < 0.5, 0, k + 1).astype(np.int64)
    if t.signed:
        code = np.where((v < 0) & (code > 0), code | (1 << (t.width - 1)), code)
    return code.astype(np.uint8)


def _quant_flint(v: np.ndarray, t: NumericType) -> np.ndarray:
    """Vectorized element-wise flint encoding (scale already applied)."""
    b = t.width
    mag_width = b - 1 if t.signed else b
    q = _round_half_away(v)
    if not t.signed:
        q = np.maximum(q, 0.0)
    neg = q < 0
    a = np.minimum(np.abs(q), float(1 << (2 * mag_width - 2)))
    # interval index i = floor(log2 a) + 1; frexp is exact for integer-valued a
    _, i = np.frexp(a)
    i = i.astype(np.int64)
    mb_lut = np.array([0] + [flint.mantissa_width(mag_width, j) for j in range(1, 2 * mag_width)])
    base_lut = np.array(
        [0]
        + [
            int(flint.exponent_code(mag_width, j), 2) << flint.mantissa_width(mag_width, j)
            for j in range(1, 2 * mag_width)
        ]
    )
    mb = mb_lut[i]
    m = np.floor((a / np.exp2(i - 1.0) - 1.0) * np.exp2(mb.astype(np.float64)) + 0.5).astype(np.int64)
    carry = m == (1 << mb)
    i = np.where(carry, i + 1, i)
    m = np.where(carry, 0, m)
    code = base_lut[i] + m
    code = np.where(a == 0, 0, code)
    if t.signed:
        code = np.where(neg & (code > 0), code | (1 << (b - 1)), code)
    return code.astype(np.uint8)


def _quant_grid_nearest(v: np.ndarray, t: NumericType) -> np.ndarray:
    """Round to the nearest representable value; ties away from zero."""
    values = t.code_values()
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    idx = np.searchsorted(sorted_vals, v)
    idx = np.clip(idx, 1, len(sorted_vals) - 1)
    left = sorted_vals[idx - 1]
    right = sorted_vals[idx]
    d_left = np.abs(v - left)
    d_right = np.abs(v - right)
    take_right = (d_right < d_left) | ((d_right == d_left) & (np.abs(right) >= np.abs(left)))
    chosen = np.where(take_right, idx, idx - 1)
    return order[chosen].astype(np.uint8)


def _quant_float(v: np.ndarray, t: NumericType) -> np.ndarray:
    return _quant_grid_nearest(v, t)


_QUANT_FNS = {
    "int": _quant_int,
    "pot": _quant_pot,
    "flint": _quant_flint,
    "float": _quant_float,
}


# ---------------------------------------------------------------------------
# Public interface
# ---------------------------------------------------------------------------

def _iter_slices(shape: tuple[int, ...], axis: int | None):
    """(selector, scale index) pairs covering the tensor."""
    if axis is None:
        yield (Ellipsis, 0)
    else:
        for c in range(shape[axis]):
            sel = [slice(None)] * len(shape)
            sel[axis] = c
            yield (tuple(sel), c)


def quantize(t: np.ndarray, scheme: QuantScheme) -> QTensor:
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise QuantizationError("input tensor contains non-finite values")
    axis = scheme.axis
    if axis is not None and scheme.scales.size != t.shape[axis]:
        raise QuantizationError(
            f"got {scheme.scales.size} scales for axis of length {t.shape[axis]}"
        )
    if not scheme.ntype.signed and t.size and float(t.min()) < 0:
        raise QuantizationError("unsigned type cannot quantize negative values")
    qfn = _QUANT_FNS[scheme.ntype.kind]
    codes = np.zeros(t.shape, dtype=np.uint8)
    for sel, ci in _iter_slices(t.shape, axis):
        codes[sel] = qfn(t[sel] / scheme.scales[ci], scheme.ntype)
    return QTensor(codes.ravel(), t.shape, scheme)


def dequantize(q: QTensor) -> np.ndarray:
    lut = q.scheme.ntype.code_values()
    out = lut[q.codes].reshape(q.shape)
    for sel, ci in _iter_slices(q.shape, q.scheme.axis):
        out[sel] *= q.scheme.scales[ci]
    return out


def fake_quantize(t: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    """quantize followed by dequantize."""
    return dequantize(quantize(t, scheme))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise QuantizationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.mean((a - b) ** 2))


INT8 = NumericType("int", 8, signed=True)
