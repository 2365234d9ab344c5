"""Dataset manifests (line-delimited JSON) and feature assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import (FrontendConfig, LogMelSpectrogram, SpecAugmentPolicy,
                    compute_log_mel, patchify, read_wav, spec_augment)
from .config import ValidationError
from .synth import Event, synthesize_event_clip
from .text import Vocabulary, encode, tokenize_caption
from .training import CaptionExample, TaggingExample

MANIFEST_KEYS = {"id", "wav", "events", "synth_seed", "captions", "tags"}


@dataclass
class ManifestRecord:
    clip_id: str
    wav: str | None = None
    events: list[Event] | None = None
    synth_seed: object = None
    captions: list[str] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out: dict = {"id": self.clip_id}
        if self.wav is not None:
            out["wav"] = self.wav
        if self.events is not None:
            out["events"] = [e.to_json() for e in self.events]
            out["synth_seed"] = self.synth_seed
        if self.captions:
            out["captions"] = self.captions
        if self.tags:
            out["tags"] = self.tags
        return out


def write_manifest(path: str | Path, records: list[ManifestRecord]) -> None:
    lines = [json.dumps(r.to_json(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    records = []
    seen = set()
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{ln}: not valid JSON ({exc})") from exc
        unknown = sorted(set(d) - MANIFEST_KEYS)
        if unknown:
            raise ValidationError(f"{path}:{ln}: unknown manifest key(s): {unknown}")
        if "id" not in d:
            raise ValidationError(f"{path}:{ln}: record has no id")
        if d["id"] in seen:
            raise ValidationError(f"{path}:{ln}: duplicate clip id {d['id']!r}")
        seen.add(d["id"])
        if "wav" not in d and "events" not in d:
            raise ValidationError(f"{path}:{ln}: record needs a wav path or events")
        records.append(ManifestRecord(
            clip_id=d["id"], wav=d.get("wav"),
            events=[Event.from_json(e) for e in d["events"]] if "events" in d else None,
            synth_seed=d.get("synth_seed"),
            captions=list(d.get("captions", [])),
            tags=list(d.get("tags", []))))
    if not records:
        raise ValidationError(f"{path}: empty manifest")
    return records


def record_logmel(rec: ManifestRecord, cfg: FrontendConfig,
                  base_dir: str | Path) -> LogMelSpectrogram:
    """Features for one record: from its wav file when present, otherwise
    re-synthesized from its event spec (deterministic via synth_seed)."""
    if rec.wav is not None:
        wav_path = Path(base_dir) / rec.wav
        waveform = read_wav(wav_path)
    else:
        waveform, _, _ = synthesize_event_clip(rec.events, rec.synth_seed)
    return compute_log_mel(waveform, cfg)


@dataclass
class CaptionClip:
    clip_id: str
    logmel: LogMelSpectrogram
    tokens: list[int]


@dataclass
class TaggingClip:
    clip_id: str
    logmel: LogMelSpectrogram
    labels: np.ndarray


def load_caption_clips(records: list[ManifestRecord], cfg: FrontendConfig,
                       vocab: Vocabulary, base_dir: str | Path) -> list[CaptionClip]:
    clips = []
    for rec in records:
        if not rec.captions:
            raise ValidationError(f"clip {rec.clip_id!r} has no captions")
        tokens = encode(tokenize_caption(rec.captions[0]), vocab)
        clips.append(CaptionClip(clip_id=rec.clip_id,
                                 logmel=record_logmel(rec, cfg, base_dir),
                                 tokens=tokens))
    return clips


def tag_name_list(records: list[ManifestRecord]) -> list[str]:
    names = sorted({t for rec in records for t in rec.tags})
    if not names:
        raise ValidationError("manifest has no tags")
    return names


def load_tagging_clips(records: list[ManifestRecord], cfg: FrontendConfig,
                       tag_names: list[str], base_dir: str | Path) -> list[TaggingClip]:
    index = {t: i for i, t in enumerate(tag_names)}
    clips = []
    for rec in records:
        if not rec.tags:
            raise ValidationError(f"clip {rec.clip_id!r} has no tags")
        labels = np.zeros(len(tag_names))
        for t in rec.tags:
            if t not in index:
                raise ValidationError(f"clip {rec.clip_id!r} has unknown tag {t!r}")
            labels[index[t]] = 1.0
        clips.append(TaggingClip(clip_id=rec.clip_id,
                                 logmel=record_logmel(rec, cfg, base_dir),
                                 labels=labels))
    return clips


def _identity_policy(policy: SpecAugmentPolicy) -> bool:
    return (policy.num_time_masks == 0 and policy.num_freq_masks == 0) or (
        policy.time_mask_width_max == 0 and policy.freq_mask_width_max == 0)


def caption_examples(clips: list[CaptionClip], cfg: FrontendConfig,
                     policy: SpecAugmentPolicy | None, seed, epoch: int
                     ) -> list[CaptionExample]:
    """Patchify each clip, applying fresh SpecAugment masks per epoch."""
    examples = []
    for i, clip in enumerate(clips):
        spec = clip.logmel
        if policy is not None and not _identity_policy(policy):
            spec = spec_augment(spec, policy, [seed, epoch, i])
        patches = patchify(spec, cfg.frames_per_patch)
        examples.append(CaptionExample(patches=patches.patches, tokens=clip.tokens))
    return examples


def tagging_examples(clips: list[TaggingClip], cfg: FrontendConfig,
                     policy: SpecAugmentPolicy | None, seed, epoch: int
                     ) -> list[TaggingExample]:
    examples = []
    for i, clip in enumerate(clips):
        spec = clip.logmel
        if policy is not None and not _identity_policy(policy):
            spec = spec_augment(spec, policy, [seed, epoch, i])
        patches = patchify(spec, cfg.frames_per_patch)
        examples.append(TaggingExample(patches=patches.patches, labels=clip.labels))
    return examples
