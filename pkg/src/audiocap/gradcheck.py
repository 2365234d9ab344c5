"""Whole-model gradient verification against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import finite_diff_check
from .model import CaptionerModel, DecoderConfig, EncoderConfig
from .text import EOS, SOS
from .training import bce_with_logits, label_smoothed_ce

DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    max_error: float
    per_param: dict[str, float]
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def tiny_configs(d: int = 32, heads: int = 2, enc_layers: int = 2,
                 dec_layers: int = 1, vocab_size: int = 9, patch_dim: int = 32,
                 n_patches: int = 3) -> tuple[EncoderConfig, DecoderConfig]:
    enc = EncoderConfig(d=d, heads=heads, layers=enc_layers, ffn_dim=2 * d,
                        dropout=0.0, patch_dim=patch_dim, max_patches=n_patches)
    dec = DecoderConfig(vocab_size=vocab_size, d=d, heads=heads,
                        layers=dec_layers, ffn_dim=2 * d, dropout=0.0)
    return enc, dec


def model_gradient_check(seed=0, h: float = 1e-4, num_tags: int = 3,
                         n_patches: int = 3, caption_len: int = 4,
                         enc: EncoderConfig | None = None,
                         dec: DecoderConfig | None = None,
                         smoothing: float = 0.1) -> GradCheckReport:
    """Finite-difference check of d(loss)/d(theta) for every parameter.

    The loss is the combined objective (smoothed caption CE + tagging BCE)
    on one random clip, in double precision with dropout off, so every
    parameter tensor participates.
    """
    if enc is None or dec is None:
        enc_default, dec_default = tiny_configs(n_patches=n_patches)
        enc = enc or enc_default
        dec = dec or dec_default
    model = CaptionerModel(enc, dec, num_tags=num_tags, seed=seed)
    # re-draw parameters at a generic O(0.2) point: the 0.02-std training
    # init leaves most gradients below the finite-difference noise floor
    grng = np.random.default_rng([seed, 2])
    for name, p in model.named_parameters():
        if name.endswith("gamma"):
            p.data = 1.0 + 0.1 * grng.standard_normal(p.shape)
        else:
            p.data = 0.2 * grng.standard_normal(p.shape)
    rng = np.random.default_rng([seed, 1])
    patches = rng.normal(0.0, 1.0, (1, n_patches, enc.patch_dim))
    words = rng.integers(4, dec.vocab_size, size=caption_len)
    tokens = np.array([SOS, *words, EOS])
    inputs = tokens[None, :-1]
    targets = tokens[None, 1:]
    labels = rng.integers(0, 2, size=(1, num_tags)).astype(np.float64)

    def loss_fn() -> ad.Tensor:
        encoded = model.encode(model.embed_patches(patches), train=False)
        logits = model.decode(inputs, model.encoder_memory(encoded), train=False)
        ce = label_smoothed_ce(logits, targets, smoothing=smoothing)
        bce = bce_with_logits(model.tagging_logits(encoded), labels)
        return ad.add(ce, bce)

    per_param = {}
    for name, p in model.named_parameters():
        per_param[name] = finite_diff_check(lambda _: loss_fn(), p, h)
    return GradCheckReport(max_error=max(per_param.values()), per_param=per_param)
