"""Patch-embedding transformer encoder-decoder with tagging and caption heads.

Encoder: flattened spectrogram patches are linearly projected, a learnable
class token is prepended, trainable positional embeddings are added, and the
sequence runs through pre-norm self-attention blocks. Decoder: token
embeddings run through pre-norm blocks of masked self-attention, cross
attention over the full encoder output (class token included, so generation
sees clip-level and patch-level features), and a feed-forward sublayer,
ending in a vocabulary projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .audio import PatchSequence
from .autodiff import Tensor

INIT_STD = 0.02


@dataclass
class EncoderConfig:
    d: int = 128
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 512
    dropout: float = 0.2
    patch_dim: int = 256  # frames_per_patch * mel_bins
    max_patches: int = 160

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"encoder dim {self.d} not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.d // self.heads


@dataclass
class DecoderConfig:
    vocab_size: int
    d: int = 128
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 512
    dropout: float = 0.2

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"decoder dim {self.d} not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


# published decoder variants: embedding dim / layers / heads
DECODER_PRESETS = {
    "small": dict(d=512, layers=2, heads=4, ffn_dim=2048),
    "medium": dict(d=512, layers=4, heads=8, ffn_dim=2048),
    "large": dict(d=512, layers=6, heads=8, ffn_dim=2048),
}


def decoder_preset(name: str, vocab_size: int, dropout: float = 0.2) -> DecoderConfig:
    return DecoderConfig(vocab_size=vocab_size, dropout=dropout, **DECODER_PRESETS[name])


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True):
        self.w = Tensor(rng.normal(0.0, INIT_STD, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.w)
        return ad.add(y, self.b) if self.b is not None else y

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w
        if self.b is not None:
            yield f"{prefix}.b", self.b


class LayerNorm:
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta


class MultiHeadAttention:
    """Scaled dot-product attention with h heads and output mixing."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        self.d, self.heads, self.d_k = d, heads, d // heads
        # pure projection matrices: a key bias would be cancelled by the
        # softmax shift invariance, so none of q/k/v/o carries one
        self.wq = Linear(d, d, rng, bias=False)
        self.wk = Linear(d, d, rng, bias=False)
        self.wv = Linear(d, d, rng, bias=False)
        self.wo = Linear(d, d, rng, bias=False)
        self.last_weights: np.ndarray | None = None  # (B, h, Tq, Tk)

    def __call__(self, xq: Tensor, xkv: Tensor, mask: np.ndarray | None = None) -> Tensor:
        b, tq, _ = xq.shape
        tk = xkv.shape[1]
        if mask is not None and mask.shape != (tq, tk):
            raise ValueError(f"mask shape {mask.shape} does not match ({tq}, {tk})")

        def split(x: Tensor, t: int) -> Tensor:
            return ad.transpose(ad.reshape(x, (b, t, self.heads, self.d_k)),
                                (0, 2, 1, 3))

        q = split(self.wq(xq), tq)
        k = split(self.wk(xkv), tk)
        v = split(self.wv(xkv), tk)
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                        1.0 / np.sqrt(self.d_k))
        if mask is not None:
            scores = ad.add(scores, mask)  # -inf logits never receive weight
        attn = ad.softmax(scores, axis=-1)
        self.last_weights = attn.data
        mixed = ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3))
        return self.wo(ad.reshape(mixed, (b, tq, self.d)))

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for name, sub in (("wq", self.wq), ("wk", self.wk),
                          ("wv", self.wv), ("wo", self.wo)):
            yield from sub.named_params(f"{prefix}.{name}")


class FeedForward:
    def __init__(self, d: int, ffn_dim: int, rng: np.random.Generator):
        self.fc1 = Linear(d, ffn_dim, rng)
        self.fc2 = Linear(ffn_dim, d, rng)

    def __call__(self, x: Tensor, dropout: float, train: bool,
                 rng: np.random.Generator | None) -> Tensor:
        h = ad.gelu(self.fc1(x))
        if train and dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        return self.fc2(h)

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield from self.fc1.named_params(f"{prefix}.fc1")
        yield from self.fc2.named_params(f"{prefix}.fc2")


def _residual(x: Tensor, sublayer_out: Tensor, dropout: float, train: bool,
              rng: np.random.Generator | None) -> Tensor:
    if train and dropout > 0.0:
        sublayer_out = ad.dropout(sublayer_out, dropout, rng)
    return ad.add(x, sublayer_out)


class EncoderLayer:
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.ln1 = LayerNorm(cfg.d)
        self.attn = MultiHeadAttention(cfg.d, cfg.heads, rng)
        self.ln2 = LayerNorm(cfg.d)
        self.ffn = FeedForward(cfg.d, cfg.ffn_dim, rng)
        self.dropout = cfg.dropout

    def __call__(self, x: Tensor, train: bool, rng) -> Tensor:
        normed = self.ln1(x)
        x = _residual(x, self.attn(normed, normed), self.dropout, train, rng)
        x = _residual(x, self.ffn(self.ln2(x), self.dropout, train, rng),
                      self.dropout, train, rng)
        return x

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield from self.ln1.named_params(f"{prefix}.ln1")
        yield from self.attn.named_params(f"{prefix}.attn")
        yield from self.ln2.named_params(f"{prefix}.ln2")
        yield from self.ffn.named_params(f"{prefix}.ffn")


class DecoderLayer:
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        self.ln1 = LayerNorm(cfg.d)
        self.self_attn = MultiHeadAttention(cfg.d, cfg.heads, rng)
        self.ln2 = LayerNorm(cfg.d)
        self.cross_attn = MultiHeadAttention(cfg.d, cfg.heads, rng)
        self.ln3 = LayerNorm(cfg.d)
        self.ffn = FeedForward(cfg.d, cfg.ffn_dim, rng)
        self.dropout = cfg.dropout

    def __call__(self, x: Tensor, memory: Tensor, causal_mask: np.ndarray,
                 train: bool, rng) -> Tensor:
        normed = self.ln1(x)
        x = _residual(x, self.self_attn(normed, normed, mask=causal_mask),
                      self.dropout, train, rng)
        x = _residual(x, self.cross_attn(self.ln2(x), memory),
                      self.dropout, train, rng)
        x = _residual(x, self.ffn(self.ln3(x), self.dropout, train, rng),
                      self.dropout, train, rng)
        return x

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield from self.ln1.named_params(f"{prefix}.ln1")
        yield from self.self_attn.named_params(f"{prefix}.self_attn")
        yield from self.ln2.named_params(f"{prefix}.ln2")
        yield from self.cross_attn.named_params(f"{prefix}.cross_attn")
        yield from self.ln3.named_params(f"{prefix}.ln3")
        yield from self.ffn.named_params(f"{prefix}.ffn")


def causal_mask(t: int) -> np.ndarray:
    """(t, t) additive mask: 0 on/below the diagonal, -inf above."""
    mask = np.zeros((t, t))
    mask[np.triu_indices(t, k=1)] = -np.inf
    return mask


def adapt_pretrained_patch_embedding(kernel: np.ndarray) -> np.ndarray:
    """Collapse a 3-channel patch-embedding kernel (3, t, F, d) to (t*F, d)
    by averaging over the channel axis; layout matches the patch projection
    (time-major, then mel)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[0] != 3:
        raise ValueError(f"expected a (3, t, F, d) kernel, got shape {kernel.shape}")
    mean = kernel.mean(axis=0)
    return mean.reshape(-1, kernel.shape[-1])


class CaptionerModel:
    """Full network: patch embedding, encoder, decoder, tagging head."""

    def __init__(self, enc: EncoderConfig, dec: DecoderConfig, num_tags: int,
                 seed=0, word_embeddings: np.ndarray | None = None):
        if dec.vocab_size < 4:
            raise ValueError("decoder vocab_size must cover the 4 reserved ids")
        if num_tags < 1:
            raise ValueError("num_tags must be >= 1")
        self.enc_cfg = enc
        self.dec_cfg = dec
        self.num_tags = num_tags
        rng = np.random.default_rng(seed)

        self.patch_embed = Linear(enc.patch_dim, enc.d, rng, bias=False)
        self.cls_token = Tensor(rng.normal(0.0, INIT_STD, (1, enc.d)),
                                requires_grad=True)
        self.pos_embed = Tensor(rng.normal(0.0, INIT_STD, (enc.max_patches + 1, enc.d)),
                                requires_grad=True)
        self.enc_layers = [EncoderLayer(enc, rng) for _ in range(enc.layers)]
        self.enc_final_ln = LayerNorm(enc.d)

        self.bridge = Linear(enc.d, dec.d, rng) if enc.d != dec.d else None

        if word_embeddings is not None:
            if word_embeddings.shape != (dec.vocab_size, dec.d):
                raise ValueError(
                    f"word embeddings shape {word_embeddings.shape} does not match "
                    f"({dec.vocab_size}, {dec.d})")
            self.word_embed = Tensor(np.array(word_embeddings), requires_grad=True)
        else:
            self.word_embed = Tensor(
                rng.normal(0.0, INIT_STD, (dec.vocab_size, dec.d)), requires_grad=True)
        self.dec_layers = [DecoderLayer(dec, rng) for _ in range(dec.layers)]
        self.dec_final_ln = LayerNorm(dec.d)
        self.out_proj = Linear(dec.d, dec.vocab_size, rng)

        self.tag_head = Linear(enc.d, num_tags, rng)

    # ----- parameter plumbing -------------------------------------------
    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.patch_embed.named_params("enc.patch_embed")
        yield "enc.cls", self.cls_token
        yield "enc.pos", self.pos_embed
        for i, layer in enumerate(self.enc_layers):
            yield from layer.named_params(f"enc.layer{i}")
        yield from self.enc_final_ln.named_params("enc.final_ln")
        if self.bridge is not None:
            yield from self.bridge.named_params("bridge")
        yield "dec.word_embed", self.word_embed
        for i, layer in enumerate(self.dec_layers):
            yield from layer.named_params(f"dec.layer{i}")
        yield from self.dec_final_ln.named_params("dec.final_ln")
        yield from self.out_proj.named_params("dec.out_proj")
        yield from self.tag_head.named_params("tag_head")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def encoder_parameters(self) -> list[Tensor]:
        return [p for name, p in self.named_parameters() if name.startswith("enc.")]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # ----- forward passes -----------------------------------------------
    def embed_patches(self, patches: np.ndarray) -> Tensor:
        """(B, N, patch_dim) -> (B, N+1, d): project, prepend class token,
        add trainable positions."""
        patches = np.asarray(patches, dtype=np.float64)
        b, n, pd = patches.shape
        if pd != self.enc_cfg.patch_dim:
            raise ValueError(f"patch dim {pd} does not match config {self.enc_cfg.patch_dim}")
        if n > self.enc_cfg.max_patches:
            raise ValueError(f"{n} patches exceed max_patches {self.enc_cfg.max_patches}")
        proj = self.patch_embed(Tensor(patches))  # (B, N, d)
        cls_rows = ad.add(Tensor(np.zeros((b, 1, self.enc_cfg.d))),
                          ad.reshape(self.cls_token, (1, 1, self.enc_cfg.d)))
        x = ad.concat([cls_rows, proj], axis=1)
        return ad.add(x, self.pos_embed[: n + 1])

    def encode(self, embedded: Tensor, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        x = embedded
        for layer in self.enc_layers:
            x = layer(x, train, rng)
        return self.enc_final_ln(x)

    def encoder_memory(self, encoded: Tensor) -> Tensor:
        """Encoder rows as seen by the decoder (class token included)."""
        return self.bridge(encoded) if self.bridge is not None else encoded

    def decode(self, token_ids: np.ndarray, memory: Tensor, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Token prefixes (B, T) + memory (B, S, d_dec) -> logits (B, T, K_v)."""
        token_ids = np.asarray(token_ids)
        if token_ids.ndim != 2 or token_ids.shape[1] == 0:
            raise ValueError("decoder prefix must be a non-empty (B, T) id array")
        t = token_ids.shape[1]
        x = ad.embedding(self.word_embed, token_ids)
        mask = causal_mask(t)
        for layer in self.dec_layers:
            x = layer(x, memory, mask, train, rng)
        return self.out_proj(self.dec_final_ln(x))

    def caption_logits(self, patches: np.ndarray, token_ids: np.ndarray,
                       train: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
        encoded = self.encode(self.embed_patches(patches), train, rng)
        return self.decode(token_ids, self.encoder_memory(encoded), train, rng)

    def tagging_logits(self, encoded: Tensor) -> Tensor:
        """Pre-sigmoid tag scores (B, K_tags) from the class-token row."""
        return self.tag_head(encoded[:, 0, :])

    def tagging_probabilities(self, encoded: Tensor) -> Tensor:
        return ad.sigmoid(self.tagging_logits(encoded))

    # ----- single-clip conveniences --------------------------------------
    def encode_clip(self, patch_seq: PatchSequence, train: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
        embedded = self.embed_patches(patch_seq.patches[None, :, :])
        return self.encode(embedded, train, rng)

    def load_pretrained_patch_embedding(self, kernel: np.ndarray) -> None:
        weights = adapt_pretrained_patch_embedding(kernel)
        if weights.shape != self.patch_embed.w.shape:
            raise ValueError(
                f"adapted kernel shape {weights.shape} does not match patch "
                f"projection {self.patch_embed.w.shape}")
        self.patch_embed.w.data[...] = weights
