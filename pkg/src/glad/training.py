"""Loss, training loop with dev early stopping, and ablation configurations."""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .data import REQUEST, all_turns, corpus_sequences, pair_counts
from .encoder import ABLATIONS
from .metrics import evaluate
from .model import GladModel, ModelConfig
from .optim import AdamState, adam_step
from .tracker import DEFAULT_THRESHOLD, track_corpus
from .vocab import build_vocab

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    dropout: float = 0.2
    word_dropout: float = 0.3
    word_dropout_mode: str = "auto"  # auto: on only if the training data carries ASR lists
    patience: int = 10
    seed: int = 0
    ablation: str = "full"
    d_emb: int = 50
    hidden: int = 50
    max_negatives: int | None = None
    min_count: int = 1
    threshold: float = DEFAULT_THRESHOLD
    target_joint_goal: float | None = None  # stop as soon as dev joint goal reaches this

    def validate(self):
        for name in ("dropout", "word_dropout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.word_dropout_mode not in ("auto", "on", "off"):
            raise ValueError(f"word_dropout_mode must be auto/on/off, got {self.word_dropout_mode!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation mode {self.ablation!r}; expected one of {ABLATIONS}")
        return self


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_joint_goal: float = 0.0
    stopped_early: bool = False
    wall_clock: float = 0.0

    def log_dict(self):
        """Deterministic part of the report (no timing)."""
        d = asdict(self)
        d.pop("wall_clock")
        return d


def apply_ablation(config, mode):
    """Return ``config`` (a :class:`ModelConfig`) switched to ablation ``mode``.

    ``no-global`` keeps only local modules (gate pinned to 1), ``no-local``
    only global ones (gate pinned to 0), ``no-selfattn`` swaps both attention
    heads for masked mean pooling and ``no-lstm`` attends over raw embeddings.
    """
    if mode not in ABLATIONS:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATIONS}")
    return replace(config, mode=mode)


def turn_loss(scores, gold_label, ontology):
    """Mean binary cross-entropy of a ``{(slot, value): prob}`` map against a label."""
    gold = {tuple(p) for p in gold_label}
    pairs = ontology.pairs()
    probs = np.array([scores[p] for p in pairs])
    targets = np.array([1.0 if p in gold else 0.0 for p in pairs])
    return float(T.bce(probs, targets).data)


def label_matrix(turns, pairs):
    index = {p: i for i, p in enumerate(pairs)}
    y = np.zeros((len(turns), len(pairs)))
    for r, t in enumerate(turns):
        for p in t.turn_label:
            y[r, index[tuple(p)]] = 1.0
    return y


def _loss_weights(targets, max_negatives, rng):
    if max_negatives is None:
        return None
    w = targets.copy()
    for r in range(len(targets)):
        neg = np.flatnonzero(targets[r] == 0)
        if len(neg) > max_negatives:
            neg = rng.choice(neg, size=max_negatives, replace=False)
        w[r, neg] = 1.0
    return w


def build_model(train, ontology, config, embeddings=None, rng=None):
    vocab = build_vocab(corpus_sequences(train, ontology), config.min_count,
                        keep=[s for s in ontology.slots] + [v for _, v in ontology.pairs()] + ["="])
    if embeddings is not None and callable(embeddings):
        embeddings = embeddings(vocab)
    d_emb = embeddings.dim if embeddings is not None else config.d_emb
    mcfg = apply_ablation(ModelConfig(d_emb=d_emb, hidden=config.hidden), config.ablation)
    return GladModel(ontology, vocab, mcfg, rng, embedding=embeddings)


def dev_metrics(model, dev, threshold=DEFAULT_THRESHOLD, train_counts=None):
    tracked = track_corpus(dev, model.ontology, model, threshold)
    return evaluate(dev, tracked, train_counts)


def train(train_dialogues, dev_dialogues, ontology, config=None, embeddings=None,
          model=None, on_epoch=None):
    """Fit a tracker; returns ``(model, TrainReport)`` with best-epoch weights restored.

    ``embeddings`` may be an :class:`~glad.vocab.EmbeddingTable` or a callable
    taking the vocabulary and returning one (for pretrained files).
    """
    config = (config or TrainConfig()).validate()
    turns = all_turns(train_dialogues)
    if not turns:
        raise ValueError("training split is empty")
    if not all_turns(dev_dialogues):
        raise ValueError("dev split is empty")

    seed_init, seed_order, seed_drop = np.random.SeedSequence(config.seed).spawn(3)
    if model is None:
        model = build_model(train_dialogues, ontology, config, embeddings,
                            np.random.default_rng(seed_init))
    order_rng = np.random.default_rng(seed_order)
    drop_rng = np.random.default_rng(seed_drop)

    has_asr = any(t.asr for t in turns)
    wd = {"auto": config.word_dropout if has_asr else 0.0,
          "on": config.word_dropout, "off": 0.0}[config.word_dropout_mode]

    inputs = [t.inputs() for t in turns]
    targets = label_matrix(turns, model.pairs)
    params = model.parameters()
    state = AdamState(lr=config.lr)
    report = TrainReport()
    best = model.snapshot()
    best_score = -1.0
    bad_epochs = 0
    start = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        perm = order_rng.permutation(len(turns))
        losses = []
        for i in range(0, len(perm), config.batch_size):
            idx = perm[i:i + config.batch_size]
            batch = model.prepare([inputs[j] for j in idx], use_asr=False)
            y = targets[idx]
            with T.GradTape() as tape:
                logits = model.forward(batch, rng=drop_rng, dropout=config.dropout,
                                       word_dropout=wd)
                loss = T.bce(T.sigmoid(logits), y,
                             _loss_weights(y, config.max_negatives, order_rng))
            names = list(params)
            grads = T.backward(tape, loss, [params[n] for n in names])
            grads = dict(zip(names, grads))
            if "embedding" in grads:
                grads["embedding"][0] = 0.0
            for p in params.values():
                p.grad = None
            adam_step(params, grads, state)
            losses.append(float(loss.data))

        metrics = dev_metrics(model, dev_dialogues, config.threshold)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)),
               "dev_joint_goal": metrics.joint_goal, "dev_turn_goal": metrics.turn_goal,
               "dev_turn_request": metrics.turn_request}
        report.epochs.append(row)
        log.info("epoch %d loss %.5f dev joint %.4f request %.4f", epoch, row["train_loss"],
                 metrics.joint_goal, metrics.turn_request)
        if on_epoch is not None:
            on_epoch(row)
        if metrics.joint_goal > best_score:
            best_score = metrics.joint_goal
            best = model.snapshot()
            report.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
        if config.target_joint_goal is not None and metrics.joint_goal >= config.target_joint_goal:
            break
        if bad_epochs >= config.patience:
            report.stopped_early = True
            break

    model.restore(best)
    report.best_dev_joint_goal = best_score
    report.wall_clock = time.perf_counter() - start
    return model, report


def write_run_log(path, config, report):
    doc = {"config": asdict(config), "report": report.log_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def train_counts(train_dialogues, ontology):
    return pair_counts(train_dialogues, ontology)


@dataclass
class SweepCell:
    mode: str
    seed: int
    dev_joint_goal: float
    dev_turn_request: float
    best_epoch: int
    buckets: list


def ablation_sweep(train_dialogues, dev_dialogues, ontology, config, seeds, modes=ABLATIONS,
                   on_cell=None):
    """Train every ``mode`` x ``seed`` cell and score it on the dev split.

    Bucket F1s are computed against training-split pair counts.
    """
    counts = pair_counts(train_dialogues, ontology)
    cells = []
    for seed in seeds:
        for mode in modes:
            cfg = replace(config, seed=seed, ablation=mode)
            model, report = train(train_dialogues, dev_dialogues, ontology, cfg)
            ev = dev_metrics(model, dev_dialogues, cfg.threshold, counts)
            cell = SweepCell(mode, seed, ev.joint_goal, ev.turn_request, report.best_epoch,
                             [b.to_dict() for b in ev.buckets])
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return cells


def sweep_table(cells):
    """Mean dev joint goal per mode with per-seed values, as printable text."""
    modes = list(dict.fromkeys(c.mode for c in cells))
    lines = [f"{'mode':<12}{'mean joint':>11}  per seed"]
    for m in modes:
        vals = [c.dev_joint_goal for c in cells if c.mode == m]
        lines.append(f"{m:<12}{np.mean(vals):>11.4f}  " + " ".join(f"{v:.4f}" for v in vals))
    return "\n".join(lines)
