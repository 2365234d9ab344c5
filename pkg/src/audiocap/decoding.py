"""Autoregressive caption generation: greedy and beam search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .model import CaptionerModel
from .text import EOS, PAD, SOS, UNK

DEFAULT_MAX_LEN = 22
DEFAULT_BANNED = (PAD, UNK)


@dataclass
class BeamHypothesis:
    tokens: list[int]   # generated ids, <sos> excluded
    log_prob: float     # exact sum of per-step log-softmax values
    finished: bool      # emitted <eos>; never extended further


def step_log_probs(model: CaptionerModel, memory, prefix: list[int]) -> np.ndarray:
    """Log-softmax over the vocabulary for the next position after `prefix`."""
    with ad.no_grad():
        logits = model.decode(np.asarray([prefix]), memory)
    row = logits.data[0, -1]
    shifted = row - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def greedy_decode(model: CaptionerModel, memory, max_len: int = DEFAULT_MAX_LEN,
                  banned: tuple[int, ...] = DEFAULT_BANNED) -> list[int]:
    """Argmax decoding (ties resolve to the lowest id); stops at <eos> or
    max_len, appending <eos> if the cap was hit."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    prefix = [SOS]
    for _ in range(max_len):
        logp = step_log_probs(model, memory, prefix)
        masked = logp.copy()
        masked[list(banned)] = -np.inf
        tok = int(np.argmax(masked))
        prefix.append(tok)
        if tok == EOS:
            break
    if prefix[-1] != EOS:
        prefix.append(EOS)
    return prefix


def _rank_key(hyp: BeamHypothesis, length_norm: bool) -> tuple:
    score = hyp.log_prob / len(hyp.tokens) if length_norm and hyp.tokens else hyp.log_prob
    return (-score, hyp.tokens)


def beam_search_decode(model: CaptionerModel, memory, beam_size: int,
                       max_len: int = DEFAULT_MAX_LEN,
                       banned: tuple[int, ...] = DEFAULT_BANNED,
                       length_norm: bool = False,
                       return_topk: bool = False):
    """Breadth-limited best-first search over token sequences.

    Every live hypothesis is expanded by every allowed token; the top
    beam_size candidates by cumulative log-probability survive (ties break
    toward the lexicographically smaller sequence). Hypotheses that emit
    <eos> retire to a completed pool and are never extended. The result is
    the best-scoring hypothesis among the completed pool and the survivors
    still live at max_len (so a wide beam reduces to exhaustive search),
    plus the ranked hypothesis list when return_topk is set.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")

    live = [BeamHypothesis(tokens=[], log_prob=0.0, finished=False)]
    completed: list[BeamHypothesis] = []
    for _ in range(max_len):
        candidates: list[BeamHypothesis] = []
        for hyp in live:
            logp = step_log_probs(model, memory, [SOS] + hyp.tokens)
            for tok in range(logp.shape[0]):
                if tok in banned:
                    continue
                candidates.append(BeamHypothesis(
                    tokens=hyp.tokens + [tok],
                    log_prob=hyp.log_prob + float(logp[tok]),
                    finished=tok == EOS))
        candidates.sort(key=lambda h: (-h.log_prob, h.tokens))
        survivors = candidates[:beam_size]
        live = []
        for hyp in survivors:
            (completed if hyp.finished else live).append(hyp)
        if not live:
            break

    pool = sorted(completed + live, key=lambda h: _rank_key(h, length_norm))
    best = pool[0]
    ids = [SOS] + best.tokens
    if ids[-1] != EOS:
        ids.append(EOS)
    if return_topk:
        return ids, pool
    return ids


def hypothesis_score_by_replay(model: CaptionerModel, memory,
                               tokens: list[int]) -> float:
    """Recompute a hypothesis score with fresh forward passes (oracle for
    the stored cumulative log-probability)."""
    prefix = [SOS]
    total = 0.0
    for tok in tokens:
        total += float(step_log_probs(model, memory, prefix)[tok])
        prefix.append(tok)
    return total
