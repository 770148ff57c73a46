"""``glad`` command line: data generation, training, evaluation and sweeps.

Settings resolve as command-line flag, then config file (YAML or JSON), then
built-in default. A config file may hold three sections::

    synthetic: {n_dialogues: 500, skew: 1.5, seed: 3}
    train: {epochs: 40, lr: 0.01, d_emb: 32, hidden: 24}
    data: {ontology: out/ontology.json, train: out/train.json, dev: out/dev.json}
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields

import numpy as np
import yaml

from .data import (corpus_stats, generate_synthetic, load_corpus, load_ontology, pair_counts,
                   save_corpus, save_ontology, synthetic_config_from_dict)
from .encoder import ABLATIONS
from .gradcheck import TOLERANCE, check_gradients
from .metrics import evaluate
from .model import GladModel
from .tracker import DEFAULT_THRESHOLD, track_corpus, write_predictions
from .training import TrainConfig, ablation_sweep, sweep_table, train, write_run_log
from .vocab import load_pretrained

log = logging.getLogger("glad")


def load_config_file(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)  # JSON is valid YAML
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise SystemExit(f"{path}: config must be a mapping")
    unknown = set(doc) - {"synthetic", "train", "data"}
    if unknown:
        raise SystemExit(f"{path}: unknown config sections {sorted(unknown)}")
    return doc


def train_config(args, doc):
    """TrainConfig from defaults, then the file's ``train`` section, then flags."""
    section = dict(doc.get("train") or {})
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(section) - known
    if unknown:
        raise SystemExit(f"unknown train config fields {sorted(unknown)}")
    for flag in ("seed", "ablation", "threshold"):
        value = getattr(args, flag, None)
        if value is not None:
            section[flag] = value
    try:
        return TrainConfig(**section).validate()
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"bad train config: {exc}")


def synthetic_config(args, doc, seed_flag="data_seed"):
    """``seed_flag`` names the flag that overrides the generator seed."""
    section = dict(doc.get("synthetic") or {})
    if getattr(args, seed_flag, None) is not None:
        section["seed"] = getattr(args, seed_flag)
    try:
        return synthetic_config_from_dict(section).validate()
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"bad synthetic config: {exc}")


def data_path(args, doc, name):
    value = getattr(args, name, None)
    return value if value is not None else (doc.get("data") or {}).get(name)


def _require(path, what):
    if path is None:
        raise SystemExit(f"missing --{what}")
    return path


def _load_splits(args, doc, names):
    onto = load_ontology(_require(data_path(args, doc, "ontology"), "ontology"))
    return onto, [load_corpus(_require(data_path(args, doc, n), n), onto) for n in names]


def _write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------- subcommands


def cmd_gen_data(args):
    doc = load_config_file(args.config)
    cfg = synthetic_config(args, doc, "seed")
    onto, splits = generate_synthetic(cfg)
    out = args.out or "data"
    os.makedirs(out, exist_ok=True)
    save_ontology(onto, os.path.join(out, "ontology.json"))
    for name, dialogues in splits.items():
        save_corpus(dialogues, os.path.join(out, f"{name}.json"))
    stats = corpus_stats(splits["train"], onto)
    print(f"wrote {out}: {len(splits['train'])}/{len(splits['dev'])}/{len(splits['test'])} "
          f"dialogues, rare pair fraction {stats['rare_pair_fraction']:.3f}")
    return 0


def cmd_stats(args):
    doc = load_config_file(args.config)
    if data_path(args, doc, "train") is not None:
        onto, (dialogues,) = _load_splits(args, doc, ["train"])
    else:
        onto, splits = generate_synthetic(synthetic_config(args, doc, "seed"))
        dialogues = splits["train"]
    stats = corpus_stats(dialogues, onto)
    if args.out:
        _write_json(args.out, stats)
    for key in ("dialogues", "turns", "pairs", "mean_count", "rare_below", "rare_pairs",
                "rare_pair_fraction", "turns_with_rare_joint_goal"):
        v = stats[key]
        print(f"{key:<28}{v:.4f}" if isinstance(v, float) else f"{key:<28}{v}")
    return 0


def cmd_train(args):
    doc = load_config_file(args.config)
    cfg = train_config(args, doc)
    onto, (tr, dev) = _load_splits(args, doc, ["train", "dev"])
    emb = data_path(args, doc, "embeddings")
    embeddings = None
    if emb:
        paths = emb if isinstance(emb, list) else [emb]
        init_seed = np.random.SeedSequence(cfg.seed).spawn(1)[0]
        embeddings = lambda vocab: load_pretrained(paths, vocab, np.random.default_rng(init_seed))  # noqa: E731
    model, report = train(tr, dev, onto, cfg, embeddings=embeddings)
    out = args.out or "run"
    os.makedirs(out, exist_ok=True)
    ckpt = args.checkpoint or os.path.join(out, "model.npz")
    model.save(ckpt)
    write_run_log(os.path.join(out, "run_log.json"), cfg, report)
    print(f"best epoch {report.best_epoch}: dev joint goal {report.best_dev_joint_goal:.4f}; "
          f"checkpoint {ckpt}")
    return 0


def _eval_split(args, doc):
    for name in ("test", "dev"):
        path = data_path(args, doc, name)
        if path is not None:
            return path
    raise SystemExit("missing --test (or --dev)")


def cmd_eval(args):
    doc = load_config_file(args.config)
    model = GladModel.load(_require(args.checkpoint, "checkpoint"))
    onto = model.ontology
    dialogues = load_corpus(_eval_split(args, doc), onto)
    counts = None
    train_path = data_path(args, doc, "train")
    if train_path is not None:
        counts = pair_counts(load_corpus(train_path, onto), onto)
    threshold = args.threshold if args.threshold is not None else DEFAULT_THRESHOLD
    report = evaluate(dialogues, track_corpus(dialogues, onto, model, threshold), counts)
    print(report.table())
    if args.out:
        _write_json(args.out, report.to_dict())
    return 0


def cmd_predict(args):
    doc = load_config_file(args.config)
    model = GladModel.load(_require(args.checkpoint, "checkpoint"))
    dialogues = load_corpus(_eval_split(args, doc), model.ontology)
    threshold = args.threshold if args.threshold is not None else DEFAULT_THRESHOLD
    tracked = track_corpus(dialogues, model.ontology, model, threshold)
    out = args.out or "predictions.jsonl"
    write_predictions(out, dialogues, tracked)
    print(f"wrote {sum(len(t) for t in tracked)} turn predictions to {out}")
    return 0


def cmd_grad_check(args):
    result = check_gradients(seed=args.seed or 0)
    for name, err in result.per_param.items():
        print(f"{name:<28}{err:.3e}")
    status = "ok" if result.ok else "FAIL"
    print(f"max relative error {result.max_rel_error:.3e} ({result.worst}) "
          f"over {result.n_checked} entries: {status}")
    return 0 if result.ok else 1


def cmd_ablate(args):
    doc = load_config_file(args.config)
    cfg = train_config(args, doc)
    if data_path(args, doc, "train") is not None:
        onto, (tr, dev) = _load_splits(args, doc, ["train", "dev"])
    else:
        onto, splits = generate_synthetic(synthetic_config(args, doc))
        tr, dev = splits["train"], splits["dev"]
    base = cfg.seed
    seeds = list(range(base, base + (args.seeds or 1)))
    modes = [args.ablation] if args.ablation else list(ABLATIONS)

    def report(cell):
        print(f"{cell.mode:<12} seed {cell.seed}: dev joint goal {cell.dev_joint_goal:.4f}",
              flush=True)

    cells = ablation_sweep(tr, dev, onto, cfg, seeds, modes, on_cell=report)
    print(sweep_table(cells))
    if args.out:
        _write_json(args.out, {"config": asdict(cfg), "seeds": seeds,
                               "cells": [asdict(c) for c in cells]})
    return 0


COMMANDS = {
    "gen-data": (cmd_gen_data, "write a seeded synthetic ontology and corpus splits"),
    "train": (cmd_train, "fit a tracker and write a checkpoint plus run log"),
    "eval": (cmd_eval, "score a checkpoint: joint goal, turn request, bucketed F1"),
    "predict": (cmd_predict, "dump per-turn predictions as JSON lines"),
    "grad-check": (cmd_grad_check, "finite-difference check of all gradients"),
    "ablate": (cmd_ablate, "train every ablation over several seeds"),
    "stats": (cmd_stats, "slot-value frequency statistics of a corpus"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--seeds", type=int, metavar="N", help="number of consecutive seeds")
    common.add_argument("--data-seed", type=int, metavar="N",
                        help="synthetic corpus seed when ablate generates its own data")
    common.add_argument("--ontology", metavar="PATH")
    common.add_argument("--train", metavar="PATH")
    common.add_argument("--dev", metavar="PATH")
    common.add_argument("--test", metavar="PATH")
    common.add_argument("--embeddings", metavar="PATH", nargs="+")
    common.add_argument("--checkpoint", metavar="PATH")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--ablation", choices=ABLATIONS, metavar="MODE")
    common.add_argument("--threshold", type=float, metavar="F")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="glad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"glad {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
