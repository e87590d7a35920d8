"""Command-line surface for the quantization pipeline.

Subcommands: tables, quantize, select, simulate, verify.  All commands are
deterministic; every JSON artifact embeds a run manifest (command line,
tool version, input digests, seed).

Exit codes:
  0  success
  2  usage error (bad flags)
  3  missing or malformed input file
  4  validation error (shapes, types, configuration)
  5  plan/model mismatch
  6  verification failure
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, flint, pe, sim, tensor_io, verify
from .qtypes import NumericType, QuantScheme, QuantizationError, quantize
from .selector import (
    DEFAULT_CANDIDATES,
    LayerTensors,
    make_candidates,
    ntype_from_json,
    plan_mixed_precision,
)

EXIT_INPUT = 3
EXIT_VALIDATION = 4
EXIT_PLAN_MISMATCH = 5
EXIT_VERIFY = 6


class PlanMismatchError(ValueError):
    pass


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(args: argparse.Namespace, inputs: list[str], seed: int | None = None) -> dict:
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "version": __version__,
        "inputs": {os.path.basename(p): _digest(p) for p in inputs if p},
        "seed": seed,
    }


def _workers() -> int:
    env = os.environ.get("ANT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parse_ntype(args: argparse.Namespace) -> NumericType:
    split = None
    if args.float_split:
        e, m = args.float_split.split(",")
        split = (int(e), int(m))
    return NumericType(args.type, args.bits, args.signed, split)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_tables(args: argparse.Namespace) -> int:
    t = _parse_ntype(args)
    values = t.code_values()
    rows = []
    for code in range(1 << t.width):
        if t.kind in ("int", "pot", "flint"):
            pair = pe.decode_operand(code, t)
            base, exp = pair.base, pair.exponent
        else:
            base, exp = "", ""
        rows.append({
            "code": format(code, f"0{t.width}b"),
            "base": base,
            "exponent": exp,
            "value": values[code],
        })
    fields = ["code", "base", "exponent", "value"]
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields)
            w.writeheader()
            w.writerows(rows)
    else:
        print(f"# {t.name}")
        print(f"{'code':>8} {'base':>6} {'exp':>4} {'value':>10}")
        for r in rows:
            print(f"{r['code']:>8} {r['base']!s:>6} {r['exponent']!s:>4} {r['value']:>10g}")
    return 0


def cmd_quantize(args: argparse.Namespace) -> int:
    t = tensor_io.load_tensor(args.input)
    ntype = _parse_ntype(args)
    if args.scale is not None:
        scheme = QuantScheme(ntype, np.array([args.scale]), axis=args.axis)
    else:
        from .selector import argmin_mse_scale

        scheme, _, _ = argmin_mse_scale(t, ntype, axis=args.axis)
    q = quantize(t, scheme)
    tensor_io.save_qtensor(args.out, q)
    print(f"wrote {args.out}: {q.codes.size} codes ({ntype.name})")
    return 0


def _load_layer_tensors(layers: list[tensor_io.GraphLayer]) -> list[LayerTensors]:
    out = []
    for layer in layers:
        if layer.weight_path is None:
            raise tensor_io.TensorIOError(f"{layer.layer_id}: model layer has no weight tensor")
        if not layer.calibration_paths:
            raise tensor_io.TensorIOError(
                f"{layer.layer_id}: activation selection needs calibration tensors"
            )
        weight = tensor_io.load_tensor(layer.weight_path)
        acts = np.concatenate(
            [tensor_io.load_tensor(p).ravel() for p in layer.calibration_paths]
        )
        axis = 0 if weight.ndim > 1 else None
        out.append(LayerTensors(layer.layer_id, weight, acts, weight_axis=axis))
    return out


def cmd_select(args: argparse.Namespace) -> int:
    graph = tensor_io.load_model_graph(args.model)
    layer_tensors = _load_layer_tensors(graph)
    kinds = [k.strip() for k in args.candidates.split(",")]
    candidates = make_candidates(kinds, width=4, signed=True)
    plan = plan_mixed_precision(
        layer_tensors,
        candidates,
        threshold=args.threshold,
        max_promotions=args.promote_budget,
        workers=_workers(),
    )
    inputs = [args.model] + [l.weight_path for l in graph]
    doc = plan.to_json()
    doc["manifest"] = _manifest(args, inputs, seed=args.seed)
    tensor_io.save_plan(args.out, doc)
    if args.mse_csv:
        _write_mse_csv(args.mse_csv, plan)
    print(f"wrote {args.out}: {len(plan.layers)} layers, "
          f"{sum(1 for l in plan.layers if l.width == 8)} promoted to 8-bit")
    return 0


def _write_mse_csv(path: str, plan) -> None:
    """Per-tensor candidate MSEs, normalized to the flint candidate."""
    rows = []
    for layer in plan.layers:
        pairs = (
            ("weight", layer.weight_4bit or layer.weight),
            ("activation", layer.activation_4bit or layer.activation),
        )
        for role, sel in pairs:
            ref = next(
                (v for k, v in sel.per_candidate_mse.items() if "flint" in k), None
            )
            for cand, err in sel.per_candidate_mse.items():
                rows.append({
                    "layer": layer.layer_id,
                    "tensor": role,
                    "candidate": cand,
                    "mse": err,
                    "mse_normalized_to_flint": err / ref if ref else "",
                    "chosen": int(cand == sel.ntype.name),
                })
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(
            f,
            fieldnames=["layer", "tensor", "candidate", "mse", "mse_normalized_to_flint", "chosen"],
        )
        w.writeheader()
        w.writerows(rows)


def cmd_simulate(args: argparse.Namespace) -> int:
    graph = tensor_io.load_model_graph(args.model)
    plan = tensor_io.load_plan(args.plan)
    plan_layers = {l["layerId"]: l for l in plan["layers"]}
    missing = [l.layer_id for l in graph if l.layer_id not in plan_layers]
    if missing:
        raise PlanMismatchError(f"plan does not cover layers: {', '.join(missing)}")

    if args.config:
        with open(args.config) as f:
            cfg = sim.ArrayConfig.from_json(json.load(f))
    else:
        cfg = sim.ArrayConfig()
    if args.dataflow:
        cfg = sim.ArrayConfig.from_json({**cfg.to_json(), "dataflow": args.dataflow})

    layers = []
    for gl in graph:
        pl = plan_layers[gl.layer_id]
        layers.append(sim.GemmLayer(
            gl.layer_id, gl.m, gl.n, gl.k,
            width=int(pl["width"]),
            weight_type=ntype_from_json(pl["weightType"]["ntype"]).name,
            activation_type=ntype_from_json(pl["activationType"]["ntype"]).name,
        ))
    report = sim.simulate_model(cfg, sim.GemmWorkload(layers))
    inputs = [args.model, args.plan] + ([args.config] if args.config else [])
    sim.write_report_json(report, args.out + ".json", manifest=_manifest(args, inputs))
    sim.write_report_csv(report, args.out + ".csv")
    totals = report.totals()
    print(f"wrote {args.out}.json/.csv: {totals.cycles} cycles, "
          f"energy {totals.total_energy():.3g}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    ok = verify.run_all(sys.stdout)
    return 0 if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flintq",
        description="Adaptive low-bit quantization toolkit",
        epilog=__doc__.split("Exit codes:")[1].join(["Exit codes:", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tables", help="print the value table of a numeric type")
    p.add_argument("--type", required=True, choices=["int", "pot", "flint", "float"])
    p.add_argument("--bits", type=int, default=4)
    p.add_argument("--signed", action="store_true")
    p.add_argument("--float-split", help="E,M for float types")
    p.add_argument("--csv", help="write CSV instead of stdout")
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("quantize", help="quantize a tensor file")
    p.add_argument("input")
    p.add_argument("--type", required=True, choices=["int", "pot", "flint", "float"])
    p.add_argument("--bits", type=int, default=4)
    p.add_argument("--signed", action="store_true")
    p.add_argument("--float-split")
    p.add_argument("--scale", type=float, help="fixed scale (default: MSE scale search)")
    p.add_argument("--axis", type=int, help="per-channel axis")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("select", help="select types and plan mixed precision")
    p.add_argument("model", help="model graph JSON")
    p.add_argument("--candidates", default=",".join(DEFAULT_CANDIDATES))
    p.add_argument("--threshold", type=float, default=float("inf"),
                   help="aggregate normalized-MSE target for promotion")
    p.add_argument("--promote-budget", type=int, help="max layers promoted to 8-bit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="plan JSON path")
    p.add_argument("--mse-csv", help="per-tensor candidate MSE CSV")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="simulate a planned workload")
    p.add_argument("model")
    p.add_argument("plan")
    p.add_argument("--config", help="array config JSON")
    p.add_argument("--dataflow", choices=["os", "ws"])
    p.add_argument("--out", required=True, help="report path prefix (.json/.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the exhaustive decoder/MAC oracle suite")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, tensor_io.TensorIOError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QuantizationError, flint.FlintDomainError, sim.SimConfigError, ValueError) as exc:
        if isinstance(exc, PlanMismatchError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PLAN_MISMATCH
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
