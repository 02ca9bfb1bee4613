"""Layer-by-layer quantization runs over tensor files, plus reporting."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .config import (
    ExperimentConfig,
    LayerReport,
    ModelSpec,
    bits_equivalent,
    canonical_json,
    resolve_rank,
)
from .errors import ConfigError, DimensionMismatch
from .gptq import GptqConfig, build_target_weight, gptq_solve
from .hadamard import RotationPlan, apply_rotation, fuse_into_layer, is_power_of_two
from .linalg import Matrix, cholesky
from .lrc import (
    CalibStats,
    accumulate_stats,
    finalize_stats,
    lrc_objective,
    lrc_quantize_layer,
    oracle_relaxed,
    svd_baseline,
)
from .quant import (
    ActQuantConfig,
    QuantGrid,
    dequantize,
    rtn_quantize_activations,
    rtn_quantize_weight,
    search_clip_ratio,
)
from .tensorfile import read_matrix, write_tensor

logger = logging.getLogger("lrckit")


@dataclass
class LayerRun:
    """In-memory result of quantizing one layer."""

    report: LayerReport
    artifacts: dict
    predict: Callable[[Matrix], Matrix]


def load_shards(paths) -> list[Matrix]:
    shards = [read_matrix(p) for p in paths]
    if not shards:
        raise ConfigError("no calibration shards given")
    d = shards[0].shape[0]
    for p, s in zip(paths, shards):
        if s.shape[0] != d:
            raise DimensionMismatch(f"{p}: shard has {s.shape[0]} rows, expected {d}")
    return shards


def collect_stats(shards, act_cfg: ActQuantConfig, damping: float) -> CalibStats:
    stats = CalibStats.zeros(shards[0].shape[0])
    for shard in shards:
        accumulate_stats(stats, shard, act_cfg)
    return finalize_stats(stats, damping)


def _relative_error(ref_shards, out_shards) -> float:
    num = 0.0
    den = 0.0
    for ref, out in zip(ref_shards, out_shards):
        num += float(np.sum((ref - out) ** 2))
        den += float(np.sum(ref**2))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(np.sqrt(num / den))


def quantize_layer_arrays(
    W: Matrix, shards: list[Matrix], cfg: ExperimentConfig, layer_name: str
) -> LayerRun:
    """Quantize one weight matrix against calibration shards.

    Handles rotation fusion, clip-ratio search, statistics collection and
    method dispatch; returns the report, artifact arrays and a
    ``predict`` closure for the quantized layer.
    """
    t0 = time.perf_counter()
    d_out, d_in = W.shape
    if shards[0].shape[0] != d_in:
        raise DimensionMismatch(
            f"layer {layer_name}: weight has d_in={d_in}, shards have {shards[0].shape[0]} rows"
        )

    plan = None
    W_use = W
    x_shards = shards
    if cfg.rotate:
        if is_power_of_two(d_in):
            plan = RotationPlan.randomized(d_in, cfg.rotation_seed)
            W_use = fuse_into_layer(W, plan)
            x_shards = [apply_rotation(x, plan) for x in shards]
        else:
            logger.info("layer %s: d_in=%d not a power of two, skipping rotation", layer_name, d_in)

    if cfg.act_bits is None:
        clip = None
    elif len(cfg.clip_grid) == 1:
        clip = float(cfg.clip_grid[0])
    else:
        clip, _ = search_clip_ratio(
            np.concatenate(x_shards, axis=1), cfg.act_bits, cfg.clip_grid, cfg.groupsize
        )
    act_cfg = ActQuantConfig(
        bits=cfg.act_bits, clip_ratio=clip if clip is not None else 1.0, groupsize=cfg.groupsize
    )
    stats = collect_stats(x_shards, act_cfg, cfg.damping)

    k = resolve_rank(cfg.rank_spec, d_out, d_in)
    grid = QuantGrid(cfg.weight_bits)
    gcfg = GptqConfig(grid=grid)
    U = np.zeros((d_out, 0))
    V = np.zeros((d_in, 0))
    quantized = None
    rank_used = 0

    if cfg.method == "rtn":
        quantized = rtn_quantize_weight(W_use, grid)
        w_eff = dequantize(quantized)
        trace = [lrc_objective(W_use, w_eff, U, V, stats)]
    elif cfg.method in ("gptq", "svd"):
        L_y = cholesky(stats.sigma_y)
        w_target = build_target_weight(W_use, U, V, stats.sigma_xy, L_y)
        result = gptq_solve(w_target, stats.sigma_y, gcfg)
        quantized = result.quantized
        w_eff = result.dequantized
        trace = [lrc_objective(W_use, w_eff, U, V, stats)]
        if cfg.method == "svd":
            U, V = svd_baseline(W_use, w_eff, k)
            rank_used = k
            trace.append(lrc_objective(W_use, w_eff, U, V, stats))
    elif cfg.method == "lrc":
        solution = lrc_quantize_layer(W_use, stats, gcfg, k, cfg.iterations)
        quantized = solution.quantized
        w_eff = solution.w_hat
        U, V = solution.U, solution.V
        rank_used = k
        trace = list(solution.objective_trace)
    elif cfg.method == "oracle":
        w_eff, U, V, objective = oracle_relaxed(W_use, stats, k)
        rank_used = k
        trace = [objective]
    else:
        raise ConfigError(f"unknown method {cfg.method!r}")

    def predict(x: Matrix) -> Matrix:
        xr = apply_rotation(x, plan) if plan is not None else x
        y = rtn_quantize_activations(xr, act_cfg)
        return w_eff @ y + U @ (V.T @ xr)

    out_shards = [
        w_eff @ rtn_quantize_activations(xr, act_cfg) + U @ (V.T @ xr) for xr in x_shards
    ]
    ref_shards = [W @ x for x in shards]
    rel_err = _relative_error(ref_shards, out_shards)

    report = LayerReport(
        layer=layer_name,
        method=cfg.method,
        d_out=d_out,
        d_in=d_in,
        weight_bits=cfg.weight_bits,
        act_bits=cfg.act_bits,
        rank=rank_used,
        clip_ratio=clip,
        objective_trace=[float(v) for v in trace],
        relative_error=rel_err,
        bits_equivalent=bits_equivalent(cfg.weight_bits, rank_used, d_out, d_in),
        wall_time_s=time.perf_counter() - t0,
    )

    artifacts = {"u": U, "v": V}
    if quantized is not None:
        artifacts["codes"] = quantized.codes.astype(np.int8)
        artifacts["scales"] = np.asarray(quantized.scales, dtype=np.float64)
    if cfg.method == "oracle":
        artifacts["w_target"] = w_eff
    if plan is not None and plan.sign_diag is not None:
        artifacts["rotation_signs"] = plan.sign_diag

    return LayerRun(report=report, artifacts=artifacts, predict=predict)


def write_layer_run(out_dir, run: LayerRun) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"{run.report.layer}.report.json"
    report_path.write_text(run.report.canonical_json())
    (out / f"{run.report.layer}.timing.json").write_text(
        json.dumps({"wall_time_s": run.report.wall_time_s}) + "\n"
    )
    art_dir = out / run.report.layer
    art_dir.mkdir(exist_ok=True)
    for name, arr in sorted(run.artifacts.items()):
        write_tensor(art_dir / f"{name}.lrt", arr)
    return report_path


def run_layer(config: ExperimentConfig, weight_path, shard_paths) -> LayerReport:
    """Quantize a single weight file and persist report plus artifacts."""
    config.validate()
    W = read_matrix(weight_path)
    shards = load_shards(shard_paths)
    run = quantize_layer_arrays(W, shards, config, Path(weight_path).stem)
    write_layer_run(config.output_dir, run)
    return run.report


def _apply_nonlinearity(kind: str, x: Matrix) -> Matrix:
    if kind == "rectifier":
        return np.maximum(x, 0.0)
    return x


def run_model(config: ExperimentConfig, model_spec: ModelSpec):
    """Quantize a model sequentially, propagating pipeline activations.

    Calibration inputs for each layer come from the quantized pipeline
    (default) or the clean full-precision pipeline, per
    ``config.calib_propagation``. The end-to-end error always compares
    the fully quantized forward pass against the full-precision one.
    """
    config.validate()
    model_spec.validate()
    input_shards = load_shards(config.shards)
    fp_acts = input_shards
    q_acts = input_shards
    reports: list[LayerReport] = []
    total_time = 0.0
    for layer in model_spec.layers:
        W = read_matrix(layer.weight_path)
        if layer.activation_rule == "input":
            calib = input_shards
            fp_in = input_shards
            q_in = input_shards
        else:
            fp_in = fp_acts
            q_in = q_acts
            calib = fp_acts if config.calib_propagation == "clean" else q_acts
        if calib[0].shape[0] != W.shape[1]:
            raise DimensionMismatch(
                f"layer {layer.name}: weight expects d_in={W.shape[1]}, "
                f"incoming activations have {calib[0].shape[0]} rows"
            )
        run = quantize_layer_arrays(W, calib, config, layer.name)
        write_layer_run(config.output_dir, run)
        reports.append(run.report)
        total_time += run.report.wall_time_s
        q_acts = [_apply_nonlinearity(layer.nonlinearity, run.predict(x)) for x in q_in]
        fp_acts = [_apply_nonlinearity(layer.nonlinearity, W @ x) for x in fp_in]

    final_rel = _relative_error(fp_acts, q_acts)
    model_report = {
        "method": config.method,
        "final_relative_error": final_rel,
        "layers": [
            {"name": r.layer, "relative_error": r.relative_error, "rank": r.rank}
            for r in reports
        ],
    }
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model_report.json").write_text(canonical_json(model_report))
    (out / "model_timing.json").write_text(json.dumps({"wall_time_s": total_time}) + "\n")
    return reports, model_report


CSV_COLUMNS = [
    "layer",
    "method",
    "d_out",
    "d_in",
    "weight_bits",
    "act_bits",
    "rank",
    "clip_ratio",
    "relative_error",
    "bits_equivalent",
    "final_objective",
]


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def aggregate_reports(report_dir, out_dir=None) -> tuple[Path, Path]:
    """Collect layer reports into a CSV table and a JSON summary."""
    report_dir = Path(report_dir)
    out = Path(out_dir) if out_dir is not None else report_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in sorted(report_dir.glob("**/*.report.json")):
        data = json.loads(path.read_text())
        trace = data.get("objective_trace", [])
        rows.append(
            {
                "layer": data["layer"],
                "method": data["method"],
                "d_out": data["d_out"],
                "d_in": data["d_in"],
                "weight_bits": data["weight_bits"],
                "act_bits": data["act_bits"],
                "rank": data["rank"],
                "clip_ratio": data["clip_ratio"],
                "relative_error": data["relative_error"],
                "bits_equivalent": data["bits_equivalent"],
                "final_objective": trace[-1] if trace else None,
            }
        )
    rows.sort(key=lambda r: (r["layer"], r["method"]))
    csv_path = out / "report.csv"
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in CSV_COLUMNS))
    csv_path.write_text("\n".join(lines) + "\n")

    methods: dict[str, dict] = {}
    for row in rows:
        m = methods.setdefault(
            row["method"], {"layers": 0, "sum_relative_error": 0.0, "sum_bits_equivalent": 0.0}
        )
        m["layers"] += 1
        m["sum_relative_error"] += row["relative_error"]
        m["sum_bits_equivalent"] += row["bits_equivalent"]
    summary_methods = {
        name: {
            "layers": m["layers"],
            "mean_relative_error": m["sum_relative_error"] / m["layers"],
            "mean_bits_equivalent": m["sum_bits_equivalent"] / m["layers"],
        }
        for name, m in methods.items()
    }
    models = []
    for path in sorted(report_dir.glob("**/model_report.json")):
        models.append(json.loads(path.read_text()))
    summary = {"methods": summary_methods, "models": models}
    summary_path = out / "summary.json"
    summary_path.write_text(canonical_json(summary))
    return csv_path, summary_path
