"""MSE-driven scale search, per-tensor type selection, and the layer-wise
mixed-precision promotion loop.

Scale search sweeps linear clipping ratios of the max-abs value and keeps
the scale with the lowest quantization MSE.  Type selection runs the scale
search for every candidate type and keeps the winner.  The promotion loop
starts every layer at 4 bits and promotes the worst layer (by normalized
MSE) to 8-bit int until a quality oracle is satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .qtypes import INT8, NumericType, QuantScheme, QuantizationError, fake_quantize, mse, quantize, dequantize

DEFAULT_SWEEP_STEPS = 100
DEFAULT_MIN_CLIP_RATIO = 0.2

# The integer-path datapath covers int, pot, and flint; float has no
# (base, exponent) decode, so it stays an opt-in candidate.
DEFAULT_CANDIDATES = ("int", "pot", "flint")


@dataclass
class SelectionResult:
    ntype: NumericType
    scheme: QuantScheme
    mse_value: float
    per_candidate_mse: dict[str, float]
    degenerate: bool = False  # all-zero tensor, scale fell back to 1.0

    def to_json(self) -> dict:
        return {
            "ntype": ntype_to_json(self.ntype),
            "scales": self.scheme.scales.tolist(),
            "axis": self.scheme.axis,
            "mse": self.mse_value,
            "perCandidateMse": self.per_candidate_mse,
            "degenerate": self.degenerate,
        }


def ntype_to_json(t: NumericType) -> dict:
    return {
        "kind": t.kind,
        "width": t.width,
        "signed": t.signed,
        "floatSplit": list(t.float_split) if t.float_split else None,
    }


def ntype_from_json(d: dict) -> NumericType:
    split = d.get("floatSplit")
    return NumericType(d["kind"], d["width"], d["signed"], tuple(split) if split else None)


def _best_scale_1d(
    v: np.ndarray,
    ntype: NumericType,
    steps: int,
    min_ratio: float,
) -> tuple[float, float, bool]:
    """Sweep clip ratios on one slice; returns (scale, mse, degenerate)."""
    max_abs = float(np.max(np.abs(v))) if v.size else 0.0
    if max_abs == 0.0:
        return 1.0, 0.0, True
    max_rep = ntype.max_value()
    best_scale, best_mse = None, np.inf
    for j in range(int(round(steps * min_ratio)), steps + 1):
        clip = max_abs * j / steps
        scale = clip / max_rep
        err = mse(fake_quantize(v, QuantScheme(ntype, np.array([scale]))), v)
        if err < best_mse:  # ties keep the earlier (smaller) scale
            best_mse, best_scale = err, scale
    return best_scale, best_mse, False


def argmin_mse_scale(
    t: np.ndarray,
    ntype: NumericType,
    axis: int | None = None,
    steps: int = DEFAULT_SWEEP_STEPS,
    min_ratio: float = DEFAULT_MIN_CLIP_RATIO,
) -> tuple[QuantScheme, float, bool]:
    """Per-slice MSE-minimizing scale search.

    Returns the scheme, the overall quantization MSE, and a flag set when
    any slice was all-zero (its scale falls back to 1.0).
    """
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise QuantizationError("cannot search scales on an empty tensor")
    if axis is None:
        scale, err, degenerate = _best_scale_1d(t.ravel(), ntype, steps, min_ratio)
        return QuantScheme(ntype, np.array([scale])), err, degenerate
    scales = np.empty(t.shape[axis])
    degenerate = False
    moved = np.moveaxis(t, axis, 0)
    for c in range(t.shape[axis]):
        scales[c], _, deg = _best_scale_1d(moved[c].ravel(), ntype, steps, min_ratio)
        degenerate |= deg
    scheme = QuantScheme(ntype, scales, axis=axis)
    return scheme, mse(fake_quantize(t, scheme), t), degenerate


def select_type(
    t: np.ndarray,
    candidates: Sequence[NumericType],
    axis: int | None = None,
    steps: int = DEFAULT_SWEEP_STEPS,
    min_ratio: float = DEFAULT_MIN_CLIP_RATIO,
) -> SelectionResult:
    """Pick the candidate type with the lowest quantization MSE.

    Unsigned candidates are dropped when the tensor has negative entries.
    Ties break toward the earlier candidate in the list.
    """
    t = np.asarray(t, dtype=np.float64)
    has_neg = t.size > 0 and float(t.min()) < 0
    effective = [c for c in candidates if c.signed or not has_neg]
    if not effective:
        raise QuantizationError("no usable candidate types (negatives with all-unsigned list)")
    best = None
    per_mse: dict[str, float] = {}
    for cand in effective:
        scheme, err, degenerate = argmin_mse_scale(t, cand, axis, steps, min_ratio)
        per_mse[cand.name] = err
        if best is None or err < best.mse_value:
            best = SelectionResult(cand, scheme, err, per_mse, degenerate)
    best.per_candidate_mse = per_mse
    return best


def make_candidates(
    kinds: Sequence[str] = DEFAULT_CANDIDATES,
    width: int = 4,
    signed: bool = True,
    float_split: tuple[int, int] | None = None,
) -> list[NumericType]:
    return [
        NumericType(k, width, signed, float_split if k == "float" else None)
        for k in kinds
    ]


# ---------------------------------------------------------------------------
# Mixed precision
# ---------------------------------------------------------------------------

@dataclass
class LayerTensors:
    """Calibration inputs for one GEMM layer."""

    layer_id: str
    weight: np.ndarray
    activation: np.ndarray
    weight_axis: int | None = 0  # per-channel weights by default


@dataclass
class LayerPlan:
    layer_id: str
    width: int  # 4 or 8
    weight: SelectionResult
    activation: SelectionResult
    normalized_mse: float  # at 4 bits, used for promotion ordering
    weight_4bit: SelectionResult | None = None
    activation_4bit: SelectionResult | None = None

    def to_json(self) -> dict:
        doc = {
            "layerId": self.layer_id,
            "width": self.width,
            "weightType": self.weight.to_json(),
            "activationType": self.activation.to_json(),
            "normalizedMse": self.normalized_mse,
        }
        if self.width == 8 and self.weight_4bit is not None:
            doc["fourBitCandidates"] = {
                "weight": self.weight_4bit.per_candidate_mse,
                "activation": self.activation_4bit.per_candidate_mse,
            }
        return doc


@dataclass
class PrecisionPlan:
    layers: list[LayerPlan]
    aggregate_mse: float
    promotion_order: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "layers": [l.to_json() for l in self.layers],
            "aggregateMse": self.aggregate_mse,
            "promotionOrder": self.promotion_order,
        }


def _normalized_mse(t: np.ndarray, err: float) -> float:
    power = float(np.mean(np.asarray(t, dtype=np.float64) ** 2))
    return err / power if power > 0 else 0.0


def _select_layer(
    layer: LayerTensors,
    candidates: Sequence[NumericType],
    width: int,
    steps: int,
    min_ratio: float,
) -> tuple[SelectionResult, SelectionResult, float]:
    if width == 8:
        w_scheme, w_err, w_deg = argmin_mse_scale(layer.weight, INT8, layer.weight_axis, steps, min_ratio)
        a_type = INT8 if float(np.min(layer.activation)) < 0 else NumericType("int", 8, signed=False)
        a_scheme, a_err, a_deg = argmin_mse_scale(layer.activation, a_type, None, steps, min_ratio)
        w_sel = SelectionResult(INT8, w_scheme, w_err, {INT8.name: w_err}, w_deg)
        a_sel = SelectionResult(a_type, a_scheme, a_err, {a_type.name: a_err}, a_deg)
    else:
        act_candidates = list(candidates)
        if float(np.min(layer.activation)) >= 0:
            # Post-ReLU style tensors get the unsigned variants.
            act_candidates = [
                NumericType(c.kind, c.width, signed=False, float_split=None if c.kind != "float" else None)
                for c in candidates
            ]
        w_sel = select_type(layer.weight, candidates, layer.weight_axis, steps, min_ratio)
        a_sel = select_type(layer.activation, act_candidates, None, steps, min_ratio)
    nmse = _normalized_mse(layer.weight, w_sel.mse_value) + _normalized_mse(
        layer.activation, a_sel.mse_value
    )
    return w_sel, a_sel, nmse


def plan_mixed_precision(
    layers: Sequence[LayerTensors],
    candidates: Sequence[NumericType] | None = None,
    oracle: Callable[[PrecisionPlan], float] | None = None,
    threshold: float = np.inf,
    max_promotions: int | None = None,
    steps: int = DEFAULT_SWEEP_STEPS,
    min_ratio: float = DEFAULT_MIN_CLIP_RATIO,
    workers: int | None = None,
) -> PrecisionPlan:
    """Layer-wise 4/8-bit assignment by greedy promotion.

    Every layer starts at 4-bit with its selected types.  While the oracle
    (default: aggregate normalized MSE) exceeds ``threshold``, the
    not-yet-promoted layer with the greatest 4-bit normalized MSE moves to
    8-bit int.  ``max_promotions`` caps the loop (budget mode); with every
    layer at 8 bits the loop always terminates.
    """
    candidates = list(candidates) if candidates is not None else make_candidates()
    low, high = {}, {}
    if workers and workers > 1 and len(layers) > 1:
        # Per-layer selection is independent; results are keyed by layer id,
        # so the outcome does not depend on the worker count.
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            lows = pool.map(lambda l: _select_layer(l, candidates, 4, steps, min_ratio), layers)
            highs = pool.map(lambda l: _select_layer(l, candidates, 8, steps, min_ratio), layers)
            for layer, lo_r, hi_r in zip(layers, list(lows), list(highs)):
                low[layer.layer_id] = lo_r
                high[layer.layer_id] = hi_r
    else:
        for layer in layers:
            low[layer.layer_id] = _select_layer(layer, candidates, 4, steps, min_ratio)
            high[layer.layer_id] = _select_layer(layer, candidates, 8, steps, min_ratio)

    promoted: list[str] = []

    def build() -> PrecisionPlan:
        entries = []
        total = 0.0
        for layer in layers:
            w, a, nmse = low[layer.layer_id]
            width = 4
            if layer.layer_id in promoted:
                w, a, nmse8 = high[layer.layer_id]
                width = 8
                total += nmse8
            else:
                total += nmse
            w4, a4, _ = low[layer.layer_id]
            entries.append(
                LayerPlan(layer.layer_id, width, w, a, low[layer.layer_id][2],
                          weight_4bit=w4, activation_4bit=a4)
            )
        return PrecisionPlan(entries, total, list(promoted))

    quality = oracle or (lambda plan: plan.aggregate_mse)
    plan = build()
    limit = len(layers) if max_promotions is None else min(max_promotions, len(layers))
    while quality(plan) > threshold and len(promoted) < limit:
        remaining = [l.layer_id for l in layers if l.layer_id not in promoted]
        if not remaining:
            break
        worst = max(remaining, key=lambda lid: low[lid][2])
        promoted.append(worst)
        plan = build()
    return plan
