"""Turn-state prediction, ASR aggregation and joint-goal accumulation."""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import REQUEST
from .tensor import sigmoid_array

DEFAULT_THRESHOLD = 0.5


@dataclass
class TurnState:
    requests: set = field(default_factory=set)
    goal: dict = field(default_factory=dict)


def decode_scores(scores, ontology, threshold=DEFAULT_THRESHOLD):
    """Turn a ``{(slot, value): prob}`` map into a :class:`TurnState`.

    Requests are every request value above ``threshold``. Each informable
    slot contributes its highest-scoring value, and only if that value is
    above ``threshold``.
    """
    state = TurnState()
    for slot in ontology.slots:
        vals = ontology.values(slot)
        if slot == REQUEST:
            state.requests = {v for v in vals if scores[(slot, v)] > threshold}
            continue
        best = max(vals, key=lambda v: scores[(slot, v)])
        if scores[(slot, best)] > threshold:
            state.goal[slot] = best
    return state


def predict_turns(turns, model, threshold=DEFAULT_THRESHOLD, use_asr=True):
    """Batched :func:`predict_turn` over a list of :class:`~glad.scoring.TurnInputs`."""
    probs = model.predict_proba(turns, use_asr=use_asr)
    out = []
    for row in probs:
        scores = dict(zip(model.pairs, row.tolist()))
        out.append((decode_scores(scores, model.ontology, threshold), scores))
    return out


def predict_turn(turn, ontology, model, threshold=DEFAULT_THRESHOLD, use_asr=True):
    if list(ontology.pairs()) != list(model.pairs):
        raise ValueError("model was built for a different ontology")
    return predict_turns([turn], model, threshold, use_asr)[0]


def aggregate_asr(scores, weights=None):
    """Sigmoid of the (optionally weighted) sum of per-hypothesis logits."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("need at least one ASR hypothesis")
    if weights is not None:
        scores = scores * np.asarray(weights, dtype=np.float64)
    return float(sigmoid_array(scores.sum()))


def accumulate(prev, turn_goal):
    """New joint goal: ``prev`` with each slot in ``turn_goal`` overwritten."""
    return {**prev, **turn_goal}


@dataclass
class TrackedTurn:
    index: int
    state: TurnState
    joint_goal: dict
    scores: dict

    def record(self, dialogue_id=None):
        rec = {
            "turn": self.index,
            "requests": sorted(self.state.requests),
            "turn_goal": dict(sorted(self.state.goal.items())),
            "joint_goal": dict(sorted(self.joint_goal.items())),
            "scores": {f"{s}={v}": round(p, 6) for (s, v), p in self.scores.items()},
        }
        if dialogue_id is not None:
            rec = {"dialogue_id": dialogue_id, **rec}
        return rec


def track_dialogue(dialogue, ontology, model, threshold=DEFAULT_THRESHOLD, use_asr=True):
    """Fold turn predictions into joint goals; returns a list of :class:`TrackedTurn`."""
    preds = predict_turns([t.inputs() for t in dialogue.turns], model, threshold, use_asr)
    joint = {}
    out = []
    for i, (state, scores) in enumerate(preds):
        joint = accumulate(joint, state.goal)
        out.append(TrackedTurn(i, state, joint, scores))
    return out


def track_corpus(dialogues, ontology, model, threshold=DEFAULT_THRESHOLD, use_asr=True):
    """Track many dialogues with one batched scoring pass."""
    flat = [t.inputs() for d in dialogues for t in d.turns]
    preds = iter(predict_turns(flat, model, threshold, use_asr))
    tracked = []
    for d in dialogues:
        joint = {}
        turns = []
        for i in range(len(d.turns)):
            state, scores = next(preds)
            joint = accumulate(joint, state.goal)
            turns.append(TrackedTurn(i, state, joint, scores))
        tracked.append(turns)
    return tracked


def write_predictions(path, dialogues, tracked):
    """Line-delimited JSON, one record per turn."""
    with open(path, "w", encoding="utf-8") as fh:
        for d, turns in zip(dialogues, tracked):
            for t in turns:
                fh.write(json.dumps(t.record(d.dialogue_id), sort_keys=True) + "\n")
