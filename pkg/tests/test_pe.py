import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flintq import pe
from flintq.flint import DecodedPair
from flintq.qtypes import NumericType, QuantScheme, QuantizationError, dequantize, quantize

TYPES4 = {
    "int": NumericType("int", 4, signed=True),
    "pot": NumericType("pot", 4, signed=True),
    "flint": NumericType("flint", 4, signed=True),
}
WIDE = pe.MacState(acc_width=64, product_width=64)


def code_value(code, ntype):
    return float(ntype.code_values()[code])


# ---------------------------------------------------------------------------
# decode_operand
# ---------------------------------------------------------------------------

def test_decode_int_codes():
    t = TYPES4["int"]
    assert pe.decode_operand(3, t) == DecodedPair(3, 0)
    assert pe.decode_operand(0b1101, t) == DecodedPair(-3, 0)


def test_decode_pot_codes():
    t = TYPES4["pot"]
    assert pe.decode_operand(0, t) == DecodedPair(0, 0)
    assert pe.decode_operand(0b0011, t) == DecodedPair(1, 2)   # +4
    assert pe.decode_operand(0b1011, t) == DecodedPair(-1, 2)  # -4


def test_decode_flint_codes():
    t = TYPES4["flint"]
    assert pe.decode_operand(0b0111, t).value == 6
    assert pe.decode_operand(0b1111, t).value == -6


def test_decode_operand_matches_lut():
    for name, t in TYPES4.items():
        for code in range(16):
            pair = pe.decode_operand(code, t)
            assert pair.base * (1 << pair.exponent) == code_value(code, t), (name, code)


def test_decode_operand_rejects_bad_code_and_kind():
    with pytest.raises(QuantizationError):
        pe.decode_operand(16, TYPES4["int"])
    with pytest.raises(QuantizationError):
        pe.decode_operand(1, NumericType("float", 4, True, (2, 1)))


# ---------------------------------------------------------------------------
# mac_step
# ---------------------------------------------------------------------------

def test_mac_step_accumulates():
    s = pe.mac_step(WIDE, DecodedPair(3, 0), DecodedPair(2, 1))  # 3 * 4
    assert s.accumulator == 12
    s = pe.mac_step(s, DecodedPair(-1, 2), DecodedPair(1, 0))  # -4
    assert s.accumulator == 8
    assert not s.overflowed


def test_mac_step_is_pure():
    s0 = pe.MacState()
    pe.mac_step(s0, DecodedPair(7, 0), DecodedPair(7, 0))
    assert s0.accumulator == 0


def test_mac_exhaustive_all_type_pairs():
    # Every ordered pair of 4-bit integer-path types, every code pair:
    # the shifted integer product equals the product of decoded values.
    for ta, tb in itertools.product(TYPES4.values(), repeat=2):
        va, vb = ta.code_values(), tb.code_values()
        for ca in range(16):
            da = pe.decode_operand(ca, ta)
            for cb in range(16):
                s = pe.mac_step(WIDE, da, pe.decode_operand(cb, tb))
                assert s.accumulator == va[ca] * vb[cb]


def test_mac_policy_strict_raises():
    small = pe.MacState(acc_width=8, product_width=8, policy="strict")
    with pytest.raises(pe.DatapathError):
        pe.mac_step(small, DecodedPair(1, 7), DecodedPair(1, 7))  # 2^14


def test_mac_policy_saturate():
    small = pe.MacState(acc_width=8, product_width=8, policy="saturate")
    s = pe.mac_step(small, DecodedPair(1, 7), DecodedPair(1, 7))
    assert s.accumulator == 127 and s.overflowed
    s = pe.mac_step(s, DecodedPair(-1, 7), DecodedPair(1, 7))
    assert s.accumulator == 127 - 128  # saturated product then exact add


def test_mac_policy_wrap():
    small = pe.MacState(acc_width=8, product_width=16, policy="wrap")
    s = pe.mac_step(small, DecodedPair(10, 0), DecodedPair(13, 0))  # 130
    assert s.accumulator == 130 - 256 and s.overflowed


def test_mac_policy_widen_flags_but_keeps_exact():
    s = pe.mac_step(pe.MacState(), DecodedPair(1, 10), DecodedPair(1, 6))
    assert s.accumulator == 1 << 16  # past the 16-bit product: flagged, exact
    assert s.overflowed


def test_default_product_width_covers_flint_times_int():
    # Largest flint4 x int4 product: 16 * 8 = 128 ... signed magnitudes
    # reach 16 * 8 = 128 < 2^15, so the default 16-bit product is exact.
    t_f, t_i = TYPES4["flint"], TYPES4["int"]
    for ca in range(16):
        for cb in range(16):
            s = pe.mac_step(
                pe.MacState(), pe.decode_operand(ca, t_f), pe.decode_operand(cb, t_i)
            )
            assert not s.overflowed


# ---------------------------------------------------------------------------
# mul8_via_four
# ---------------------------------------------------------------------------

def test_mul8_exhaustive_signed():
    for a in range(-128, 128):
        for b in range(-128, 128):
            assert pe.mul8_via_four(a, b) == a * b


def test_mul8_exhaustive_unsigned():
    for a in range(0, 256, 3):
        for b in range(0, 256, 7):
            assert pe.mul8_via_four(a, b, signed=False) == a * b


def test_mul8_rejects_out_of_range():
    with pytest.raises(QuantizationError):
        pe.mul8_via_four(128, 0)
    with pytest.raises(QuantizationError):
        pe.mul8_via_four(-1, 0, signed=False)


def test_mul8_uses_only_mac_steps(monkeypatch):
    # The composition must route every partial product through the 4-bit PE.
    calls = []
    real = pe.mac_step

    def counting(state, a, b):
        calls.append((a, b))
        return real(state, a, b)

    monkeypatch.setattr(pe, "mac_step", counting)
    assert pe.mul8_via_four(-77, 55) == -77 * 55
    assert len(calls) == 4
    # Each partial multiplies nibble-sized bases only.
    for a, b in calls:
        assert -8 <= a.base <= 15 and -8 <= b.base <= 15


# ---------------------------------------------------------------------------
# dot products
# ---------------------------------------------------------------------------

@given(
    data=st.data(),
    ka=st.sampled_from(sorted(TYPES4)),
    kb=st.sampled_from(sorted(TYPES4)),
)
def test_dot_product_matches_dequantized(data, ka, kb):
    n = data.draw(st.integers(1, 32))
    codes_a = np.array(data.draw(st.lists(st.integers(0, 15), min_size=n, max_size=n)))
    codes_b = np.array(data.draw(st.lists(st.integers(0, 15), min_size=n, max_size=n)))
    ta, tb = TYPES4[ka], TYPES4[kb]
    out, state = pe.dot_product(codes_a, codes_b, ta, tb, 0.5, 0.25, state=WIDE)
    ref = float(np.dot(ta.code_values()[codes_a] * 0.5, tb.code_values()[codes_b] * 0.25))
    assert out == pytest.approx(ref)
    assert not state.overflowed


def test_dot_product_mixed_types_example():
    # flint weights times pot activations, a supported fusion.
    ta, tb = TYPES4["flint"], TYPES4["pot"]
    out, _ = pe.dot_product([0b0111, 0b1111], [0b0011, 0b0001], ta, tb, 1.0, 1.0, WIDE)
    assert out == 6 * 4 + (-6) * 1


def test_dot_product_length_mismatch():
    with pytest.raises(QuantizationError):
        pe.dot_product([1], [1, 2], TYPES4["int"], TYPES4["int"], 1.0, 1.0)


def test_qtensor_row_dot_matches_float_dot():
    rng = np.random.default_rng(11)
    w = rng.normal(size=64)
    x = rng.normal(size=64)
    qw = quantize(w, QuantScheme(TYPES4["flint"], np.array([0.3])))
    qx = quantize(x, QuantScheme(TYPES4["int"], np.array([0.2])))
    out, _ = pe.qtensor_row_dot(qw, qx, state=WIDE)
    assert out == pytest.approx(float(np.dot(dequantize(qw), dequantize(qx))))


def test_qtensor_row_dot_rejects_per_channel():
    q = quantize(
        np.ones((2, 2)), QuantScheme(TYPES4["int"], np.array([1.0, 1.0]), axis=0)
    )
    with pytest.raises(QuantizationError):
        pe.qtensor_row_dot(q, q)
