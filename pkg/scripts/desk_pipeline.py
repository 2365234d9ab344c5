#!/usr/bin/env python3
"""End-to-end desk-scale experiment: synthesize a corpus, pretrain the
encoder on tagging, train the captioner (from scratch and from the tagging
checkpoint), decode with beam search, and score the captions.

Usage: python scripts/desk_pipeline.py [--out runs/desk] [--seed 7]
Expect a few minutes of CPU time at the default sizes.
"""

import argparse
import json
import sys
from pathlib import Path

from audiocap.cli import main as cli

DESK_CONFIG = {
    "seed": 7,
    "encoder": {"dropout": 0.0},
    "decoder": {"dropout": 0.0},
    "train": {
        "epochs": 200, "batch_size": 2, "base_lr": 1e-4, "warmup_epochs": 5,
        "decay_every": 1000, "label_smoothing": 0.0, "dropout": 0.0,
        "checkpoint_every": 100,
    },
    "pretrain": {
        "epochs": 50, "batch_size": 2, "base_lr": 2e-4, "warmup_epochs": 5,
        "decay_every": 1000, "label_smoothing": 0.0, "dropout": 0.0,
        "checkpoint_every": 0,
    },
    "word2vec": {"epochs": 10},
    "decode": {"beam_size": 5, "max_len": 22},
}


def run(args: list[str]) -> None:
    print(f"\n$ audiocap {' '.join(args)}")
    code = cli(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = dict(DESK_CONFIG, seed=args.seed)
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2))

    caption_corpus = out / "caption_corpus"
    tagging_corpus = out / "tagging_corpus"
    run(["synth-data", "--count", "8", "--seed", str(args.seed),
         "--out", str(caption_corpus)])
    run(["synth-data", "--count", "24", "--seed", str(args.seed + 1000),
         "--out", str(tagging_corpus), "--max-events", "1"])

    run(["train", "--config", str(config_path), "--pretrain-tagging",
         "--manifest", str(tagging_corpus / "tags.jsonl"),
         "--out", str(out / "pretrain")])

    run(["train", "--config", str(config_path),
         "--manifest", str(caption_corpus / "captions.jsonl"),
         "--out", str(out / "scratch")])
    run(["train", "--config", str(config_path),
         "--manifest", str(caption_corpus / "captions.jsonl"),
         "--out", str(out / "finetune"),
         "--init", str(out / "pretrain" / "model.bin")])

    for name in ("scratch", "finetune"):
        caps = out / f"captions_{name}.tsv"
        run(["caption", "--checkpoint", str(out / name / "model.bin"),
             "--input", str(caption_corpus / "captions.jsonl"),
             "--beam", "5", "--out", str(caps)])
        run(["eval", "--candidates", str(caps),
             "--references", str(caption_corpus / "captions.jsonl"),
             "--out", str(out / f"eval_{name}")])

    print(f"\nartifacts in {out}/")


if __name__ == "__main__":
    main()
