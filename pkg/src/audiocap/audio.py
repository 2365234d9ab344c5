"""Waveform preparation, log-mel extraction, patching and SpecAugment."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 32000
CLIP_SECONDS = 10.0
CLIP_SAMPLES = int(SAMPLE_RATE * CLIP_SECONDS)


@dataclass
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int = SAMPLE_RATE


@dataclass
class FrontendConfig:
    window: int = 1024
    hop: int = 512
    mel_bins: int = 64
    log_floor: float = 1e-10
    frames_per_patch: int = 4


@dataclass
class LogMelSpectrogram:
    frames: np.ndarray  # (T, F)
    frame_hop: int
    mel_bins: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class PatchSequence:
    """Non-overlapping time-ordered patches, each flattened time-major."""

    patches: np.ndarray  # (N, t * F)
    frames_per_patch: int

    @property
    def num_patches(self) -> int:
        return self.patches.shape[0]


@dataclass
class SpecAugmentPolicy:
    time_mask_width_max: int = 0
    freq_mask_width_max: int = 0
    num_time_masks: int = 0
    num_freq_masks: int = 0
    mask_value: float = 0.0

    def __post_init__(self):
        if self.time_mask_width_max < 0 or self.freq_mask_width_max < 0:
            raise ValueError("mask widths must be non-negative")
        if self.num_time_masks < 0 or self.num_freq_masks < 0:
            raise ValueError("mask counts must be non-negative")


def prepare_waveform(samples: np.ndarray, sample_rate: int) -> Waveform:
    """Resample to 32 kHz (linear interpolation) and fix length to 10 s."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("expected a mono waveform")
    if sample_rate != SAMPLE_RATE:
        if sample_rate <= 0:
            raise ValueError(f"bad sample rate {sample_rate}")
        n_out = int(round(len(samples) * SAMPLE_RATE / sample_rate))
        if n_out > 0:
            src_t = np.arange(len(samples)) / sample_rate
            dst_t = np.arange(n_out) / SAMPLE_RATE
            samples = np.interp(dst_t, src_t, samples)
        else:
            samples = np.zeros(0)
    if len(samples) >= CLIP_SAMPLES:
        samples = samples[:CLIP_SAMPLES]
    else:
        samples = np.concatenate([samples, np.zeros(CLIP_SAMPLES - len(samples))])
    return Waveform(samples=samples, sample_rate=SAMPLE_RATE)


def read_wav(path: str | Path) -> Waveform:
    """Read 16-bit PCM mono RIFF, resampled/padded to the canonical clip."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: only mono WAV is supported")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM WAV is supported")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return prepare_waveform(pcm, rate)


def write_wav(path: str | Path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_fft_bins: int, mel_bins: int, sample_rate: int,
                   window: int) -> np.ndarray:
    """Triangular, area-normalized filters spanning 0 Hz to Nyquist.

    Returns (mel_bins, num_fft_bins); centers linear on the mel scale.
    """
    fft_freqs = np.arange(num_fft_bins) * sample_rate / window
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), mel_bins + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((mel_bins, num_fft_bins))
    for m in range(mel_bins):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (fft_freqs - lo) / (center - lo)
        down = (hi - fft_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)  # constant filter area
    return fb


def compute_log_mel(w: Waveform, cfg: FrontendConfig) -> LogMelSpectrogram:
    """Hann-window magnitude STFT -> mel filterbank -> log with floor.

    Frames are centered (waveform zero-padded by window/2 on both sides),
    so a 10 s clip at hop 512 yields floor(320000/512) + 1 = 626 frames.
    """
    if w.samples.size == 0:
        raise ValueError("empty waveform")
    if w.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz waveform")
    window, hop = cfg.window, cfg.hop
    half = window // 2
    padded = np.concatenate([np.zeros(half), w.samples, np.zeros(half)])
    n_frames = 1 + (len(padded) - window) // hop
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(window)[None, :]
    hann = np.hanning(window)
    frames = padded[idx] * hann
    magnitude = np.abs(np.fft.rfft(frames, axis=1))  # (T, window//2 + 1)
    fb = mel_filterbank(magnitude.shape[1], cfg.mel_bins, w.sample_rate, window)
    mel_energy = magnitude @ fb.T
    logmel = np.log(np.maximum(cfg.log_floor, mel_energy))
    return LogMelSpectrogram(frames=logmel, frame_hop=hop, mel_bins=cfg.mel_bins)


def patchify(spec: LogMelSpectrogram, frames_per_patch: int) -> PatchSequence:
    """Split into N = floor(T/t) patches of t frames, flattened row-major
    (time-major, then mel); trailing frames beyond N*t are dropped."""
    t = frames_per_patch
    total = spec.num_frames
    if t < 1:
        raise ValueError("frames_per_patch must be >= 1")
    if t > total:
        raise ValueError(f"frames_per_patch {t} exceeds frame count {total}")
    n = total // t
    usable = spec.frames[: n * t]
    patches = usable.reshape(n, t * spec.mel_bins)
    return PatchSequence(patches=patches, frames_per_patch=t)


def unpatchify(p: PatchSequence, mel_bins: int) -> np.ndarray:
    """Inverse of patchify on the truncated spectrogram (exact)."""
    return p.patches.reshape(p.num_patches * p.frames_per_patch, mel_bins)


def spec_augment(spec: LogMelSpectrogram, policy: SpecAugmentPolicy,
                 seed) -> LogMelSpectrogram:
    """Mask random contiguous time/frequency bands with policy.mask_value.

    Each mask width is drawn uniformly from {0, ..., width_max} and placed
    entirely inside the spectrogram, so a width-w time mask changes exactly
    w * F cells. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    out = spec.frames.copy()
    t_total, f_total = out.shape
    for _ in range(policy.num_time_masks):
        wmax = min(policy.time_mask_width_max, t_total)
        width = int(rng.integers(0, wmax + 1))
        start = int(rng.integers(0, t_total - width + 1))
        out[start:start + width, :] = policy.mask_value
    for _ in range(policy.num_freq_masks):
        wmax = min(policy.freq_mask_width_max, f_total)
        width = int(rng.integers(0, wmax + 1))
        start = int(rng.integers(0, f_total - width + 1))
        out[:, start:start + width] = policy.mask_value
    return LogMelSpectrogram(frames=out, frame_hop=spec.frame_hop,
                             mel_bins=spec.mel_bins)
