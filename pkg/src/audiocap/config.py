"""Run configuration: one JSON file covering every knob, strictly parsed."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .audio import FrontendConfig, SpecAugmentPolicy
from .model import DecoderConfig, EncoderConfig
from .training import TrainConfig, pretrain_defaults


class ValidationError(ValueError):
    """Bad configuration, manifest, or checkpoint contents."""


@dataclass
class Word2VecConfig:
    enabled: bool = True
    dim: int = 0  # 0 = use the decoder embedding dim
    window: int = 2
    negatives: int = 5
    epochs: int = 15
    lr: float = 0.05


@dataclass
class DecodeConfig:
    beam_size: int = 5
    max_len: int = 22
    length_norm: bool = False

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValidationError("decode.beam_size must be >= 1")
        if self.max_len < 1:
            raise ValidationError("decode.max_len must be >= 1")


def _desk_decoder() -> DecoderConfig:
    return DecoderConfig(vocab_size=0)  # vocab size is derived from the corpus


@dataclass
class RunConfig:
    seed: int = 0
    min_count: int = 1
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=_desk_decoder)
    train: TrainConfig = field(default_factory=TrainConfig)
    pretrain: TrainConfig = field(default_factory=pretrain_defaults)
    augment: SpecAugmentPolicy = field(default_factory=SpecAugmentPolicy)
    word2vec: Word2VecConfig = field(default_factory=Word2VecConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)

    def __post_init__(self):
        expected = self.frontend.frames_per_patch * self.frontend.mel_bins
        if self.encoder.patch_dim != expected:
            raise ValidationError(
                f"encoder.patch_dim {self.encoder.patch_dim} must equal "
                f"frames_per_patch * mel_bins = {expected}")


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ValidationError(f"config section {path or 'root'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f"{path}." if path else ""
        raise ValidationError(f"unknown config key(s): {', '.join(where + u for u in unknown)}")
    kwargs = {}
    for key, value in data.items():
        f = fields[key]
        if dataclasses.is_dataclass(f.type) or (isinstance(f.type, str) and
                                                f.type in _SECTION_TYPES):
            sub_cls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
            kwargs[key] = _build(sub_cls, value, f"{path}.{key}" if path else key)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config section {path or 'root'}: {exc}") from exc


_SECTION_TYPES = {
    "FrontendConfig": FrontendConfig,
    "EncoderConfig": EncoderConfig,
    "DecoderConfig": DecoderConfig,
    "TrainConfig": TrainConfig,
    "SpecAugmentPolicy": SpecAugmentPolicy,
    "Word2VecConfig": Word2VecConfig,
    "DecodeConfig": DecodeConfig,
}


def run_config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_run_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return run_config_from_dict(data)


def run_config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(run_config_to_dict(cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
