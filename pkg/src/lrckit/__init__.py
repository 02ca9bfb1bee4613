"""Post-training quantization with full-precision low-rank correction.

Quantizes dense layers to a low-bit grid while a small full-precision
rank-k matrix, acting on the unquantized activations, absorbs the error
introduced by quantizing the activations. Solved layer by layer from
streamed calibration statistics.
"""

from .config import (
    ExperimentConfig,
    LayerReport,
    LayerSpec,
    ModelSpec,
    bits_equivalent,
    canonical_json,
    resolve_rank,
)
from .errors import (
    AlreadyFinalized,
    BadGroupsize,
    BadIterationCount,
    ConfigError,
    DimNotPowerOfTwo,
    DimensionMismatch,
    EmptyCandidates,
    EmptyStats,
    LrcError,
    NotPositiveDefinite,
    NotSymmetric,
    RankOutOfBounds,
    TensorFileError,
)
from .gptq import GptqConfig, GptqResult, build_target_weight, gptq_solve, quantization_objective
from .hadamard import RotationPlan, apply_rotation, fuse_into_layer, incoherence_report
from .linalg import (
    EigPair,
    LowerTriangular,
    as_matrix,
    cholesky,
    cholesky_solve,
    gram,
    matmul,
    solve_triangular,
    top_k_eigvecs,
    transpose,
)
from .lrc import (
    CalibStats,
    LrcSolution,
    ScatterMatrices,
    accumulate_stats,
    finalize_stats,
    init_lr,
    lrc_objective,
    lrc_quantize_layer,
    oracle_relaxed,
    svd_baseline,
    update_lr,
)
from .pipeline import aggregate_reports, quantize_layer_arrays, run_layer, run_model
from .quant import (
    ActQuantConfig,
    QuantGrid,
    QuantizedWeight,
    dequantize,
    rtn_quantize_activations,
    rtn_quantize_weight,
    search_clip_ratio,
)
from .synth import gen_synthetic, make_layer_data
from .tensorfile import read_matrix, read_tensor, write_tensor

__all__ = [
    "ActQuantConfig",
    "AlreadyFinalized",
    "BadGroupsize",
    "BadIterationCount",
    "CalibStats",
    "ConfigError",
    "DimNotPowerOfTwo",
    "DimensionMismatch",
    "EigPair",
    "EmptyCandidates",
    "EmptyStats",
    "ExperimentConfig",
    "GptqConfig",
    "GptqResult",
    "LayerReport",
    "LayerSpec",
    "LowerTriangular",
    "LrcError",
    "LrcSolution",
    "ModelSpec",
    "NotPositiveDefinite",
    "NotSymmetric",
    "QuantGrid",
    "QuantizedWeight",
    "RankOutOfBounds",
    "RotationPlan",
    "ScatterMatrices",
    "TensorFileError",
    "accumulate_stats",
    "aggregate_reports",
    "apply_rotation",
    "as_matrix",
    "bits_equivalent",
    "build_target_weight",
    "canonical_json",
    "cholesky",
    "cholesky_solve",
    "dequantize",
    "finalize_stats",
    "fuse_into_layer",
    "gen_synthetic",
    "gptq_solve",
    "gram",
    "incoherence_report",
    "init_lr",
    "lrc_objective",
    "lrc_quantize_layer",
    "make_layer_data",
    "matmul",
    "oracle_relaxed",
    "quantization_objective",
    "quantize_layer_arrays",
    "read_matrix",
    "read_tensor",
    "resolve_rank",
    "rtn_quantize_activations",
    "rtn_quantize_weight",
    "run_layer",
    "run_model",
    "search_clip_ratio",
    "solve_triangular",
    "svd_baseline",
    "top_k_eigvecs",
    "transpose",
    "update_lr",
    "write_tensor",
]
