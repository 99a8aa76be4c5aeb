"""``gcgts`` command line: train, eval, predict, visualize, generate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import List, Optional

from . import checkpoint
from .checkpoint import CheckpointError
from .corpus import CorpusError, build_vocabs, generate_synthetic_corpus, read_corpus, write_corpus
from .decode import evaluate_model, predict
from .model import GCGTS, PRESETS, ConfigError, IngestionError, ModelConfig, read_vectors
from .train import RunConfig, TrainingError, train
from .visualize import pair_channel, write_pgm

log = logging.getLogger("gcgts")

USER_ERRORS = (CorpusError, ConfigError, IngestionError, CheckpointError, TrainingError,
               OSError, KeyError)


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    updates = {}
    for key in ("train", "dev", "epochs", "vectors"):
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    if args.seed is not None:
        updates["seed"] = args.seed
        updates["model"] = dataclasses.replace(cfg.model, seed=args.seed)
    if args.out is not None:
        updates["checkpoint_dir"] = args.out
    if args.preset is not None:
        updates["preset"] = args.preset
    return dataclasses.replace(cfg, **updates) if updates else cfg


def cmd_train(cfg: RunConfig) -> List[dict]:
    """Train per ``cfg``; writes best.ckpt, last.ckpt and train_log.jsonl."""
    if not cfg.train:
        raise ConfigError("a training corpus is required (--train or config 'train')")
    train_set = read_corpus(cfg.train)
    dev_set = read_corpus(cfg.dev) if cfg.dev else None
    if not train_set:
        raise CorpusError("training corpus is empty")
    vectors = read_vectors(cfg.vectors) if cfg.vectors else None
    model = GCGTS(cfg.model, build_vocabs(train_set), vectors=vectors)
    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    best_path = os.path.join(cfg.checkpoint_dir, "best.ckpt")
    log_path = os.path.join(cfg.checkpoint_dir, "train_log.jsonl")
    checkpoint.save(model, best_path, {"epoch": 0})
    best = {"f1": -1.0}

    with open(log_path, "w", encoding="utf-8") as log_fh:
        def on_epoch(record, model):
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()
            f1 = record["dev"]["pair"]["f1"] if "dev" in record else None
            if dev_set is None or (f1 is not None and f1 > best["f1"]):
                if f1 is not None:
                    best["f1"] = f1
                checkpoint.save(model, best_path, {"epoch": record["epoch"]})

        logs = train(model, train_set, cfg.epochs, seed=cfg.seed, dev=dev_set,
                     eval_every=cfg.eval_every, on_epoch=on_epoch)
    checkpoint.save(model, os.path.join(cfg.checkpoint_dir, "last.ckpt"),
                    {"epoch": cfg.epochs})
    return logs


def cmd_eval(ckpt_path, corpus_path, gold_oracle=False, vectors_path=None) -> dict:
    vectors = read_vectors(vectors_path) if vectors_path else None
    model, _ = checkpoint.load(ckpt_path, vectors)
    sentences = read_corpus(corpus_path)
    metrics, _ = evaluate_model(model, sentences, gold_oracle=gold_oracle)
    return metrics.to_json()


def cmd_predict(ckpt_path, corpus_path, vectors_path=None) -> List[dict]:
    vectors = read_vectors(vectors_path) if vectors_path else None
    model, _ = checkpoint.load(ckpt_path, vectors)
    out = []
    for s in read_corpus(corpus_path):
        result, _ = predict(model, s)
        out.append({"id": s.id, "text": s.text, **result.to_json(s)})
    return out


def cmd_visualize(ckpt_path, corpus_path, index, out_path, vectors_path=None) -> None:
    vectors = read_vectors(vectors_path) if vectors_path else None
    model, _ = checkpoint.load(ckpt_path, vectors)
    sentences = read_corpus(corpus_path)
    if not 0 <= index < len(sentences):
        raise CorpusError(f"sentence index {index} out of range (corpus has {len(sentences)})")
    probs = model.forward(sentences[index]).final.data
    write_pgm(out_path, pair_channel(probs))


def cmd_generate(seed, count, out_path) -> None:
    write_corpus(generate_synthetic_corpus(seed, count), out_path)


def _emit(obj, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")
    else:
        print(json.dumps(obj, ensure_ascii=False, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcgts", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--epochs", type=int)
    p.add_argument("--vectors", help="GCVEC1 sidecar for the file-backed encoder")

    for name, helptext in (("eval", "score a checkpoint on a corpus"),
                           ("predict", "extract pairs as JSON lines"),
                           ("visualize", "write the pair channel as a PGM image")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--corpus", required=True)
        p.add_argument("--vectors")
        if name == "eval":
            p.add_argument("--gold-oracle", action="store_true",
                           help="bypass the model and decode gold grids")
        if name == "visualize":
            p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    common(p)
    p.add_argument("--count", type=int, default=100)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            cmd_train(_run_config(args))
        elif args.command == "eval":
            _emit(cmd_eval(args.checkpoint, args.corpus, args.gold_oracle, args.vectors), args.out)
        elif args.command == "predict":
            lines = cmd_predict(args.checkpoint, args.corpus, args.vectors)
            text = "".join(json.dumps(x, ensure_ascii=False) + "\n" for x in lines)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
        elif args.command == "visualize":
            if not args.out:
                raise ConfigError("--out is required for visualize")
            cmd_visualize(args.checkpoint, args.corpus, args.index, args.out, args.vectors)
        elif args.command == "generate":
            if not args.out:
                raise ConfigError("--out is required for generate")
            cmd_generate(0 if args.seed is None else args.seed, args.count, args.out)
    except USER_ERRORS as exc:
        print(f"gcgts {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
