"""Procedurally generated audio events with attribute-driven captions.

Desk-scale stand-in for large captioning corpora: each clip is a handful of
tone / noise-burst / chirp events. The caption phrase for an event is a
deterministic function of its acoustic attributes (frequency band, loudness,
sweep rate), so captions genuinely describe the audio; phrases are joined by
temporal-order connectives. Tags are the event kinds present.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .audio import CLIP_SECONDS, CLIP_SAMPLES, SAMPLE_RATE, Waveform

FADE_SECONDS = 0.01

ORDER_CONNECTIVES = ("followed by", "then")

TONE_PHRASES = {
    "low": "a deep tone hums",
    "mid": "a tone sounds",
    "high": "a high tone rings",
}
NOISE_PHRASES = {
    "soft": "soft static noise hisses",
    "loud": "a harsh burst of noise crackles",
}
CHIRP_PHRASES = {
    "slow": "a slow chirp sweeps upward",
    "fast": "a quick chirp whistles higher",
}

KIND_TAGS = ("chirp", "noise", "tone")

TONE_FREQS = (220.0, 330.0, 440.0, 660.0, 880.0, 1320.0)
CHIRP_START_FREQS = (200.0, 300.0, 400.0, 500.0)
NOISE_AMPLITUDES = (0.15, 0.45)


@dataclass
class Event:
    kind: str
    onset: float
    duration: float
    freq: float | None = None      # tone frequency / chirp start frequency
    freq_end: float | None = None  # chirp end frequency
    amplitude: float | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "onset": self.onset, "duration": self.duration}
        for key in ("freq", "freq_end", "amplitude"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "Event":
        return cls(kind=d["kind"], onset=float(d["onset"]),
                   duration=float(d["duration"]), freq=d.get("freq"),
                   freq_end=d.get("freq_end"), amplitude=d.get("amplitude"))


def event_phrase(e: Event) -> str:
    """Caption phrase determined by the event's acoustic attributes."""
    if e.kind == "tone":
        freq = e.freq or 440.0
        band = "low" if freq < 400 else ("mid" if freq < 800 else "high")
        return TONE_PHRASES[band]
    if e.kind == "noise":
        amp = e.amplitude if e.amplitude is not None else 0.3
        return NOISE_PHRASES["soft" if amp < 0.3 else "loud"]
    if e.kind == "chirp":
        f0 = e.freq or 300.0
        f1 = e.freq_end or 3.0 * f0
        rate = (f1 - f0) / e.duration  # Hz per second
        return CHIRP_PHRASES["slow" if rate < 450 else "fast"]
    raise ValueError(f"unknown event kind {e.kind!r}")


def _event_samples(e: Event, rng: np.random.Generator) -> np.ndarray:
    n = int(round(e.duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    if e.kind == "tone":
        seg = (e.amplitude or 0.5) * np.sin(2 * np.pi * (e.freq or 440.0) * t)
    elif e.kind == "noise":
        amp = e.amplitude if e.amplitude is not None else 0.3
        seg = amp * rng.standard_normal(n)
    elif e.kind == "chirp":
        f0 = e.freq or 300.0
        f1 = e.freq_end or 3.0 * f0
        # linear sweep: phase = 2*pi*(f0*t + (f1-f0)/(2*dur) * t^2)
        seg = (e.amplitude or 0.5) * np.sin(
            2 * np.pi * (f0 * t + (f1 - f0) / (2 * e.duration) * t * t))
    else:
        raise ValueError(f"unknown event kind {e.kind!r}")
    fade = min(int(FADE_SECONDS * SAMPLE_RATE), n // 2)
    if fade > 0:
        ramp = np.linspace(0.0, 1.0, fade)
        seg[:fade] *= ramp
        seg[-fade:] *= ramp[::-1]
    return seg


def synthesize_event_clip(events: Sequence[Event], seed) -> tuple[Waveform, str, set[str]]:
    """Render events into a 10 s clip; returns (waveform, caption, tags).

    Caption phrases follow event onset order, joined with alternating
    "followed by" / "then". Deterministic for a given seed.
    """
    if not events:
        raise ValueError("need at least one event")
    for e in events:
        if e.kind not in KIND_TAGS:
            raise ValueError(f"unknown event kind {e.kind!r}")
        if e.duration <= 0:
            raise ValueError("event duration must be positive")
        if e.onset < 0 or e.onset + e.duration > CLIP_SECONDS:
            raise ValueError(
                f"event at {e.onset}s for {e.duration}s exceeds the {CLIP_SECONDS}s clip")

    rng = np.random.default_rng(seed)
    ordered = sorted(events, key=lambda e: e.onset)

    parts = [event_phrase(ordered[0])]
    for i, e in enumerate(ordered[1:]):
        parts.append(ORDER_CONNECTIVES[i % len(ORDER_CONNECTIVES)])
        parts.append(event_phrase(e))
    caption = " ".join(parts)

    samples = np.zeros(CLIP_SAMPLES)
    for e in ordered:
        seg = _event_samples(e, rng)
        start = int(round(e.onset * SAMPLE_RATE))
        samples[start:start + len(seg)] += seg
    samples = np.clip(samples, -1.0, 1.0)

    tags = {e.kind for e in ordered}
    return Waveform(samples=samples), caption, tags


@dataclass
class ClipRecord:
    clip_id: str
    events: list[Event]
    caption: str
    tags: list[str]
    waveform: Waveform = field(repr=False, default=None)


def random_events(rng: np.random.Generator, max_events: int = 2) -> list[Event]:
    """Draw 1..max_events non-overlapping events on a coarse time grid."""
    n_events = int(rng.integers(1, max_events + 1))
    kinds = [KIND_TAGS[int(rng.integers(len(KIND_TAGS)))] for _ in range(n_events)]
    events = []
    cursor = float(rng.choice([0.0, 0.5, 1.0]))
    for kind in kinds:
        duration = float(rng.choice([1.5, 2.0, 2.5, 3.0]))
        if cursor + duration > CLIP_SECONDS:
            break
        e = Event(kind=kind, onset=cursor, duration=duration)
        if kind == "tone":
            e.freq = float(rng.choice(TONE_FREQS))
        elif kind == "chirp":
            e.freq = float(rng.choice(CHIRP_START_FREQS))
            e.freq_end = 3.0 * e.freq
        else:
            e.amplitude = float(rng.choice(NOISE_AMPLITUDES))
        events.append(e)
        cursor += duration + float(rng.choice([0.5, 1.0, 1.5]))
    return events


def make_corpus(count: int, seed, max_events: int = 2) -> list[ClipRecord]:
    """Deterministic corpus of `count` synthesized clips."""
    if count < 1:
        raise ValueError("count must be >= 1")
    records = []
    for i in range(count):
        clip_seed = [seed, i] if np.isscalar(seed) else list(seed) + [i]
        rng = np.random.default_rng(clip_seed)
        events = random_events(rng, max_events=max_events)
        if not events:
            events = [Event(kind="tone", onset=0.0, duration=2.0, freq=440.0)]
        waveform, caption, tags = synthesize_event_clip(events, clip_seed)
        records.append(ClipRecord(
            clip_id=f"clip{i:04d}", events=events, caption=caption,
            tags=sorted(tags), waveform=waveform))
    return records
