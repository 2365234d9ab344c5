"""Command-line surface: synth-data, train, caption, eval, gradcheck.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.
Every command is reproducible: config + seed + inputs determine outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .audio import patchify
from .checkpoint import (Checkpoint, load_checkpoint, load_model_state,
                         model_state, save_checkpoint)
from .config import (RunConfig, ValidationError, load_run_config,
                     run_config_from_dict, run_config_to_dict)
from .data import (ManifestRecord, caption_examples, load_caption_clips,
                   load_manifest, load_tagging_clips, record_logmel,
                   tag_name_list, tagging_examples, write_manifest)
from .decoding import beam_search_decode, greedy_decode
from .gradcheck import DEFAULT_TOLERANCE, model_gradient_check, tiny_configs
from .metrics import evaluate_captions
from .model import CaptionerModel, DecoderConfig
from .optim import Adam
from .synth import make_corpus
from .text import (Vocabulary, build_vocabulary, decode as decode_tokens,
                   save_vocabulary, tokenize_caption)
from .training import (EpochStats, pretrain_tagging, train_captioner,
                       trainable_caption_params)
from .audio import write_wav
from .word2vec import train_skipgram

DATA_DIR_ENV = "AUDIOCAP_DATA_DIR"


def _default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, "data")


# ---------------------------------------------------------------------------
# synth-data
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    if args.count < 1:
        raise ValidationError("--count must be >= 1")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = make_corpus(args.count, args.seed, max_events=args.max_events)
    caption_recs, tag_recs = [], []
    for rec in records:
        wav_name = f"{rec.clip_id}.wav"
        write_wav(out_dir / wav_name, rec.waveform)
        caption_recs.append(ManifestRecord(
            clip_id=rec.clip_id, wav=wav_name, captions=[rec.caption]))
        tag_recs.append(ManifestRecord(
            clip_id=rec.clip_id, wav=wav_name, tags=rec.tags))
    write_manifest(out_dir / "captions.jsonl", caption_recs)
    write_manifest(out_dir / "tags.jsonl", tag_recs)
    print(f"wrote {len(records)} clips to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
        cfg.pretrain.seed = args.seed
    else:
        cfg.train.seed = cfg.train.seed or cfg.seed
        cfg.pretrain.seed = cfg.pretrain.seed or cfg.seed
    return cfg


def _metrics_logger(path: Path):
    start = time.monotonic()

    def log(stats: EpochStats) -> None:
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps({
                "epoch": stats.epoch, "lr": stats.lr, "loss": stats.mean_loss,
                "wall_time": round(time.monotonic() - start, 3),
            }, sort_keys=True) + "\n")

    return log


def _latest_periodic(out_dir: Path) -> Path | None:
    candidates = sorted(out_dir.glob("ckpt_epoch_*.bin"))
    return candidates[-1] if candidates else None


def _optimizer_blobs(optimizer: Adam, names: list[str]) -> dict[str, np.ndarray]:
    blobs = {}
    for name, m, v in zip(names, optimizer.state.m, optimizer.state.v):
        blobs[f"m.{name}"] = m
        blobs[f"v.{name}"] = v
    return blobs


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_manifest(args.manifest)
    base_dir = Path(args.manifest).parent
    if args.pretrain_tagging:
        return _train_tagging(args, cfg, records, base_dir, out_dir)
    return _train_caption(args, cfg, records, base_dir, out_dir)


def _train_tagging(args, cfg: RunConfig, records, base_dir, out_dir: Path) -> int:
    tags = tag_name_list(records)
    clips = load_tagging_clips(records, cfg.frontend, tags, base_dir)
    dec_cfg = DecoderConfig(**{**run_config_to_dict(cfg)["decoder"], "vocab_size": 4})
    model = CaptionerModel(cfg.encoder, dec_cfg, num_tags=len(tags), seed=cfg.seed)

    log = _metrics_logger(out_dir / "metrics.jsonl")

    def provider(epoch: int):
        return tagging_examples(clips, cfg.frontend, cfg.augment, cfg.seed, epoch)

    def on_epoch(stats: EpochStats) -> None:
        log(stats)
        every = cfg.pretrain.checkpoint_every
        if every > 0 and stats.epoch % every == 0:
            _save(out_dir / f"ckpt_epoch_{stats.epoch:04d}.bin", stats.epoch)

    def _save(path: Path, epoch: int | None) -> None:
        save_checkpoint(path, Checkpoint(
            kind="tagging", config=run_config_to_dict(cfg), vocab=None,
            tags=tags, tensors=model_state(model), epoch=epoch))

    result = pretrain_tagging(model, provider, cfg.pretrain, on_epoch=on_epoch)
    _save(out_dir / "model.bin", result.history[-1].epoch)
    print(f"tagging pretraining done: final loss {result.final_loss:.4f}")
    print(f"checkpoint: {out_dir / 'model.bin'}")
    return 0


def _build_caption_model(cfg: RunConfig, vocab: Vocabulary,
                         corpus: list[list[str]], num_tags: int) -> CaptionerModel:
    dec_kwargs = run_config_to_dict(cfg)["decoder"]
    dec_kwargs["vocab_size"] = len(vocab)
    dec_cfg = DecoderConfig(**dec_kwargs)
    word_embeddings = None
    if cfg.word2vec.enabled:
        dim = cfg.word2vec.dim or dec_cfg.d
        if dim != dec_cfg.d:
            raise ValidationError("word2vec.dim must match the decoder dim")
        result = train_skipgram(
            corpus, vocab, dim=dim, window=cfg.word2vec.window,
            negatives=cfg.word2vec.negatives, epochs=cfg.word2vec.epochs,
            seed=cfg.seed, lr=cfg.word2vec.lr)
        word_embeddings = result.embeddings
    return CaptionerModel(cfg.encoder, dec_cfg, num_tags=max(1, num_tags),
                          seed=cfg.seed, word_embeddings=word_embeddings)


def _train_caption(args, cfg: RunConfig, records, base_dir, out_dir: Path) -> int:
    start_epoch = 1
    resume_ckpt = None
    if args.resume:
        latest = _latest_periodic(out_dir)
        if latest is None:
            raise ValidationError(f"--resume: no periodic checkpoint in {out_dir}")
        resume_ckpt = load_checkpoint(latest)
        cfg = run_config_from_dict(resume_ckpt.config)
        start_epoch = (resume_ckpt.epoch or 0) + 1

    corpus = [tokenize_caption(rec.captions[0]) if rec.captions else []
              for rec in records]
    if any(not sent for sent in corpus):
        raise ValidationError("every caption-training record needs a caption")
    if resume_ckpt is not None:
        vocab = Vocabulary(id_to_word=list(resume_ckpt.vocab),
                           word_to_id={w: i for i, w in enumerate(resume_ckpt.vocab)})
    else:
        vocab = build_vocabulary(corpus, min_count=cfg.min_count)
    clips = load_caption_clips(records, cfg.frontend, vocab, base_dir)
    tags = sorted({t for rec in records for t in rec.tags})

    model = _build_caption_model(cfg, vocab, corpus, num_tags=len(tags) or 1)
    if args.init:
        init_ckpt = load_checkpoint(args.init)
        load_model_state(model, init_ckpt.tensors, prefix="enc.")
        print(f"initialized encoder from {args.init}")
    optimizer = Adam(trainable_caption_params(model, cfg.train.freeze_encoder))
    param_names = [name for name, p in model.named_parameters()
                   if any(p is q for q in optimizer.params)]
    if resume_ckpt is not None:
        load_model_state(model, resume_ckpt.tensors)
        for i, name in enumerate(param_names):
            optimizer.state.m[i][...] = resume_ckpt.optimizer[f"m.{name}"]
            optimizer.state.v[i][...] = resume_ckpt.optimizer[f"v.{name}"]
        optimizer.state.step = resume_ckpt.optimizer_step

    log = _metrics_logger(out_dir / "metrics.jsonl")

    def _save(path: Path, epoch: int | None) -> None:
        save_checkpoint(path, Checkpoint(
            kind="caption", config=run_config_to_dict(cfg),
            vocab=vocab.id_to_word, tags=tags or None,
            tensors=model_state(model), epoch=epoch,
            optimizer=_optimizer_blobs(optimizer, param_names),
            optimizer_step=optimizer.state.step))

    def provider(epoch: int):
        return caption_examples(clips, cfg.frontend, cfg.augment, cfg.seed, epoch)

    def on_epoch(stats: EpochStats) -> None:
        log(stats)
        every = cfg.train.checkpoint_every
        if every > 0 and stats.epoch % every == 0:
            _save(out_dir / f"ckpt_epoch_{stats.epoch:04d}.bin", stats.epoch)

    if start_epoch > cfg.train.epochs:
        raise ValidationError("--resume: training already finished")
    result = train_captioner(model, provider, cfg.train, start_epoch=start_epoch,
                             optimizer=optimizer, on_epoch=on_epoch)
    _save(out_dir / "model.bin", result.history[-1].epoch)
    save_vocabulary(vocab, out_dir / "vocab.txt")
    print(f"caption training done: final loss {result.final_loss:.4f}")
    print(f"checkpoint: {out_dir / 'model.bin'}")
    return 0


# ---------------------------------------------------------------------------
# caption
# ---------------------------------------------------------------------------

def _caption_model_from_checkpoint(path: str) -> tuple[CaptionerModel, Vocabulary, RunConfig]:
    ckpt = load_checkpoint(path)
    if ckpt.vocab is None:
        raise ValidationError(
            f"{path}: checkpoint has no vocabulary (tagging checkpoint?); "
            "caption decoding needs a caption checkpoint")
    cfg = run_config_from_dict(ckpt.config)
    vocab = Vocabulary(id_to_word=list(ckpt.vocab),
                       word_to_id={w: i for i, w in enumerate(ckpt.vocab)})
    dec_kwargs = run_config_to_dict(cfg)["decoder"]
    dec_kwargs["vocab_size"] = len(vocab)
    model = CaptionerModel(cfg.encoder, DecoderConfig(**dec_kwargs),
                           num_tags=len(ckpt.tags) if ckpt.tags else 1,
                           seed=cfg.seed)
    load_model_state(model, ckpt.tensors)
    return model, vocab, cfg


def cmd_caption(args) -> int:
    model, vocab, cfg = _caption_model_from_checkpoint(args.checkpoint)
    beam = args.beam if args.beam is not None else cfg.decode.beam_size
    max_len = args.max_len if args.max_len is not None else cfg.decode.max_len

    input_path = Path(args.input)
    if input_path.suffix.lower() == ".wav":
        records = [ManifestRecord(clip_id=input_path.stem, wav=input_path.name)]
        base_dir = input_path.parent
    else:
        records = load_manifest(input_path)
        base_dir = input_path.parent

    lines = []
    for rec in sorted(records, key=lambda r: r.clip_id):
        logmel = record_logmel(rec, cfg.frontend, base_dir)
        patches = patchify(logmel, cfg.frontend.frames_per_patch)
        memory = model.encoder_memory(model.encode_clip(patches))
        if beam == 1:
            ids = greedy_decode(model, memory, max_len=max_len)
        else:
            ids = beam_search_decode(model, memory, beam_size=beam,
                                     max_len=max_len,
                                     length_norm=cfg.decode.length_norm or args.length_norm)
        words = decode_tokens(ids, vocab)
        lines.append(f"{rec.clip_id}\t{' '.join(words)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    references = {}
    for rec in load_manifest(args.references):
        if not rec.captions:
            raise ValidationError(f"reference clip {rec.clip_id!r} has no captions")
        references[rec.clip_id] = [tokenize_caption(c) for c in rec.captions]
    candidates = {}
    for ln, line in enumerate(
            Path(args.candidates).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise ValidationError(f"{args.candidates}:{ln}: expected 'id<TAB>caption'")
        clip_id, caption = line.split("\t", 1)
        candidates[clip_id] = tokenize_caption(caption)

    report = evaluate_captions(candidates, references, spice_score=args.spice,
                               bleu_smoothing=args.smoothing)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.to_key_value_text(), encoding="utf-8")
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(report.to_key_value_text())
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    if args.config:
        cfg = load_run_config(args.config)
        enc, dec = cfg.encoder, cfg.decoder
        enc.dropout = 0.0
        dec = DecoderConfig(**{**run_config_to_dict(cfg)["decoder"],
                               "vocab_size": dec.vocab_size or 9, "dropout": 0.0})
        enc.max_patches = max(enc.max_patches, 3)
        report = model_gradient_check(seed=args.seed, enc=enc, dec=dec)
    else:
        enc, dec = tiny_configs()
        report = model_gradient_check(seed=args.seed, enc=enc, dec=dec)
    worst_name = max(report.per_param, key=report.per_param.get)
    print(f"checked {len(report.per_param)} parameter tensors")
    print(f"max relative error: {report.max_error:.3e} (worst: {worst_name})")
    print(f"tolerance: {report.tolerance:.1e} -> {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audiocap",
        description="Audio captioning transformer toolkit (desk scale)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic audio corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=_default_data_dir())
    p.add_argument("--max-events", type=int, default=2)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train the captioner or pretrain tagging")
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--caption", action="store_true", default=True)
    mode.add_argument("--pretrain-tagging", action="store_true", default=False)
    p.add_argument("--init", default=None,
                   help="load encoder weights from a tagging checkpoint")
    p.add_argument("--resume", action="store_true",
                   help="continue from the latest periodic checkpoint in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="caption a wav file or manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="wav file or manifest")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("eval", help="score candidate captions")
    p.add_argument("--candidates", required=True, help="TSV: id<TAB>caption")
    p.add_argument("--references", required=True, help="reference manifest")
    p.add_argument("--out", default=os.environ.get(DATA_DIR_ENV, "."))
    p.add_argument("--spice", type=float, default=None,
                   help="externally computed SPICE score for SPIDEr")
    p.add_argument("--smoothing", action="store_true", help="add-one BLEU smoothing")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
