"""Tracking accuracies and frequency-bucketed slot-value F1."""

import math
from dataclasses import dataclass, field

from .data import REQUEST, gold_joint_goals

DEFAULT_EDGES = (0, 20, 50, 100, 200, math.inf)


def _aligned(pred, gold):
    pred, gold = list(pred), list(gold)
    if len(pred) != len(gold):
        raise ValueError(f"prediction/gold length mismatch: {len(pred)} vs {len(gold)}")
    return pred, gold


def _exact_match_rate(pred, gold):
    pred, gold = _aligned(pred, gold)
    if not gold:
        return 0.0
    return sum(1 for p, g in zip(pred, gold) if p == g) / len(gold)


def joint_goal_accuracy(pred, gold):
    """Fraction of turns whose slot->value joint goal matches exactly."""
    return _exact_match_rate([dict(p) for p in pred], [dict(g) for g in gold])


def turn_goal_accuracy(pred, gold):
    return _exact_match_rate([dict(p) for p in pred], [dict(g) for g in gold])


def turn_request_accuracy(pred, gold):
    return _exact_match_rate([set(p) for p in pred], [set(g) for g in gold])


@dataclass
class Bucket:
    lo: float
    hi: float
    pairs: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def label(self):
        hi = "inf" if math.isinf(self.hi) else f"{self.hi:g}"
        return f"[{self.lo:g},{hi})"

    @property
    def midpoint(self):
        return self.lo if math.isinf(self.hi) else (self.lo + self.hi) / 2

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def f1(self):
        """Micro F1 over the bucket's turn-level decisions; None when there were none."""
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else None

    def to_dict(self):
        return {"bucket": self.label, "lo": self.lo, "hi": None if math.isinf(self.hi) else self.hi,
                "pairs": self.pairs, "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def _check_edges(edges):
    edges = list(edges)
    if len(edges) < 2:
        raise ValueError("need at least two bucket edges")
    for a, b in zip(edges, edges[1:]):
        if not a < b:
            raise ValueError(f"bucket edges must be strictly increasing, got {edges}")
    return edges


def bucketed_f1(pred_pairs, gold_pairs, train_counts, edges=DEFAULT_EDGES):
    """Per-bucket confusion counts for turn-level slot-value decisions.

    ``pred_pairs`` and ``gold_pairs`` are aligned per-turn collections of
    ``(slot, value)``; ``train_counts`` maps every ontology pair to its
    training-split count and fixes the bucket each pair falls into.
    """
    edges = _check_edges(edges)
    pred_pairs, gold_pairs = _aligned(pred_pairs, gold_pairs)
    buckets = [Bucket(lo, hi) for lo, hi in zip(edges, edges[1:])]
    where = {}
    for pair, count in train_counts.items():
        for b in buckets:
            if b.lo <= count < b.hi:
                b.pairs += 1
                where[pair] = b
                break
    for pred, gold in zip(pred_pairs, gold_pairs):
        pred, gold = set(pred), set(gold)
        for pair in pred & gold:
            if pair in where:
                where[pair].tp += 1
        for pair in pred - gold:
            if pair in where:
                where[pair].fp += 1
        for pair in gold - pred:
            if pair in where:
                where[pair].fn += 1
    return buckets


@dataclass
class EvalReport:
    joint_goal: float
    turn_goal: float
    turn_request: float
    n_turns: int
    buckets: list = field(default_factory=list)

    def to_dict(self):
        return {"joint_goal": self.joint_goal, "turn_goal": self.turn_goal,
                "turn_request": self.turn_request, "n_turns": self.n_turns,
                "f1_average": "micro", "buckets": [b.to_dict() for b in self.buckets]}

    def series(self):
        """Plot-ready (bucket midpoint, F1) rows for non-empty buckets."""
        return [(b.midpoint, b.f1) for b in self.buckets if b.f1 is not None]

    def table(self):
        lines = [
            f"{'Joint goal':<14}{self.joint_goal:>8.1%}",
            f"{'Turn goal':<14}{self.turn_goal:>8.1%}",
            f"{'Turn request':<14}{self.turn_request:>8.1%}",
            f"{'Turns':<14}{self.n_turns:>8d}",
        ]
        if self.buckets:
            lines += ["", f"{'train count':<14}{'pairs':>6}{'tp':>7}{'fp':>7}{'fn':>7}{'F1 (micro)':>12}"]
            for b in self.buckets:
                f1 = "-" if b.f1 is None else f"{b.f1:.3f}"
                lines.append(f"{b.label:<14}{b.pairs:>6}{b.tp:>7}{b.fp:>7}{b.fn:>7}{f1:>12}")
        return "\n".join(lines)


def evaluate(dialogues, tracked, train_counts=None, edges=DEFAULT_EDGES):
    """Score tracker output (see :func:`glad.tracker.track_corpus`) against gold labels."""
    if len(dialogues) != len(tracked):
        raise ValueError("dialogue/tracked length mismatch")
    pj, gj, pg, gg, pr, gr, pp, gp = ([] for _ in range(8))
    for d, turns in zip(dialogues, tracked):
        if len(d.turns) != len(turns):
            raise ValueError(f"dialogue {d.dialogue_id}: turn count mismatch")
        for gold_turn, gold_joint, t in zip(d.turns, gold_joint_goals(d), turns):
            pj.append(t.joint_goal)
            gj.append(gold_joint)
            pg.append(t.state.goal)
            gg.append(gold_turn.goal)
            pr.append(t.state.requests)
            gr.append(gold_turn.requests)
            pp.append(set(t.state.goal.items()) | {(REQUEST, v) for v in t.state.requests})
            gp.append(set(gold_turn.goal.items()) | {(REQUEST, v) for v in gold_turn.requests})
    buckets = bucketed_f1(pp, gp, train_counts, edges) if train_counts is not None else []
    return EvalReport(joint_goal_accuracy(pj, gj), turn_goal_accuracy(pg, gg),
                      turn_request_accuracy(pr, gr), len(gj), buckets)
