"""Experiment configuration, model description and report records."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

METHODS = ("rtn", "gptq", "svd", "lrc", "oracle")
PROPAGATION_MODES = ("clean", "quantized")
DEFAULT_CLIP_GRID = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00)


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""

    def encode(o) -> str:
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            if not math.isfinite(o):
                raise ConfigError(f"non-finite float {o} in report")
            return f"{o:.17g}"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, (list, tuple)):
            return "[" + ", ".join(encode(v) for v in o) + "]"
        if isinstance(o, dict):
            items = sorted(o.items())
            return "{" + ", ".join(f"{json.dumps(k)}: {encode(v)}" for k, v in items) + "}"
        raise ConfigError(f"cannot serialize {type(o).__name__}")

    return encode(obj) + "\n"


def resolve_rank(rank_spec, d_out: int, d_in: int) -> int:
    """Turn an absolute rank or a percentage ("10%") into an integer rank.

    Percentages are taken of min(d_in, d_out), rounded down.
    """
    min_d = min(d_out, d_in)
    if isinstance(rank_spec, bool):
        raise ConfigError(f"invalid rank spec {rank_spec!r}")
    if isinstance(rank_spec, int):
        k = rank_spec
    elif isinstance(rank_spec, str) and rank_spec.endswith("%"):
        try:
            pct = float(rank_spec[:-1])
        except ValueError:
            raise ConfigError(f"invalid rank percentage {rank_spec!r}") from None
        if not 0.0 <= pct <= 100.0:
            raise ConfigError(f"rank percentage {rank_spec!r} outside [0, 100]")
        k = int(math.floor(pct / 100.0 * min_d))
    elif isinstance(rank_spec, str):
        try:
            k = int(rank_spec)
        except ValueError:
            raise ConfigError(f"invalid rank spec {rank_spec!r}") from None
    else:
        raise ConfigError(f"invalid rank spec {rank_spec!r}")
    if not 0 <= k <= min_d:
        raise ConfigError(f"rank {k} outside [0, {min_d}]")
    return k


@dataclass
class ExperimentConfig:
    method: str = "lrc"
    weight_bits: int = 4
    act_bits: int | None = 4
    rank_spec: int | str = "10%"
    iterations: int = 1
    groupsize: int | None = None
    clip_grid: list[float] = field(default_factory=lambda: list(DEFAULT_CLIP_GRID))
    rotate: bool = False
    rotation_seed: int = 0
    seed: int = 0
    damping: float = 1e-2
    calib_propagation: str = "quantized"
    shards: list[str] = field(default_factory=list)
    output_dir: str = "."

    def validate(self) -> "ExperimentConfig":
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not 2 <= self.weight_bits <= 8:
            raise ConfigError(f"weight_bits must be in 2..8, got {self.weight_bits}")
        if self.act_bits is not None and not 2 <= self.act_bits <= 8:
            raise ConfigError(f"act_bits must be identity or in 2..8, got {self.act_bits}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.groupsize is not None and self.groupsize < 1:
            raise ConfigError(f"groupsize must be positive, got {self.groupsize}")
        if not self.clip_grid:
            raise ConfigError("clip_grid must not be empty")
        for c in self.clip_grid:
            if not 0.0 < c <= 1.0:
                raise ConfigError(f"clip ratio {c} outside (0, 1]")
        if self.damping < 0.0:
            raise ConfigError(f"damping must be >= 0, got {self.damping}")
        if self.calib_propagation not in PROPAGATION_MODES:
            raise ConfigError(
                f"calib_propagation must be one of {PROPAGATION_MODES}, "
                f"got {self.calib_propagation!r}"
            )
        if isinstance(self.rank_spec, (int, str)):
            resolve_rank(self.rank_spec, 10**6, 10**6)
        else:
            raise ConfigError(f"invalid rank spec {self.rank_spec!r}")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        payload = dict(data)
        if payload.get("act_bits") in ("identity", "none"):
            payload["act_bits"] = None
        return cls(**payload).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def updated(self, overrides: dict) -> "ExperimentConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return ExperimentConfig.from_dict(merged)


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


ACTIVATION_RULES = ("input", "previous_output")
NONLINEARITIES = ("none", "rectifier")


@dataclass
class LayerSpec:
    name: str
    weight_path: str
    activation_rule: str = "previous_output"
    nonlinearity: str = "none"

    def validate(self) -> "LayerSpec":
        if self.activation_rule not in ACTIVATION_RULES:
            raise ConfigError(f"layer {self.name}: bad activation_rule {self.activation_rule!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"layer {self.name}: bad nonlinearity {self.nonlinearity!r}")
        return self


@dataclass
class ModelSpec:
    layers: list[LayerSpec]

    def validate(self) -> "ModelSpec":
        if not self.layers:
            raise ConfigError("model has no layers")
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate layer names")
        for layer in self.layers:
            layer.validate()
        if self.layers[0].activation_rule != "input":
            raise ConfigError("first layer must use activation_rule 'input'")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        if set(data) - {"layers"}:
            raise ConfigError(f"unknown model keys: {sorted(set(data) - {'layers'})}")
        layers = []
        for entry in data.get("layers", []):
            unknown = set(entry) - {"name", "weight_path", "activation_rule", "nonlinearity"}
            if unknown:
                raise ConfigError(f"unknown layer keys: {sorted(unknown)}")
            layers.append(LayerSpec(**entry))
        return cls(layers=layers).validate()

    @classmethod
    def from_file(cls, path) -> "ModelSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def bits_equivalent(weight_bits: int, rank: int, d_out: int, d_in: int) -> float:
    """Effective bits per weight once the fp16 low-rank factors are counted."""
    return weight_bits + 16.0 * rank * (d_in + d_out) / (d_in * d_out)


@dataclass
class LayerReport:
    layer: str
    method: str
    d_out: int
    d_in: int
    weight_bits: int
    act_bits: int | None
    rank: int
    clip_ratio: float | None
    objective_trace: list[float]
    relative_error: float
    bits_equivalent: float
    wall_time_s: float

    def canonical_dict(self) -> dict:
        # wall_time_s is volatile and deliberately excluded; it goes to
        # the timing sidecar so reports stay byte-identical across runs.
        d = dataclasses.asdict(self)
        d.pop("wall_time_s")
        return d

    def canonical_json(self) -> str:
        return canonical_json(self.canonical_dict())
