"""Finite-difference check of every model gradient on a tiny configuration."""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Dialogue, Ontology, Turn, corpus_sequences
from .model import GladModel, ModelConfig
from .training import label_matrix
from .vocab import build_vocab

DEFAULT_STEP = 1e-5
TOLERANCE = 1e-4
# denominators below this are treated as this; keeps ~1e-11 round-off on
# gradients that are zero from blowing up the ratio
REL_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    per_param: dict
    n_checked: int

    @property
    def ok(self):
        return self.max_rel_error <= TOLERANCE


def tiny_setup(seed=0, mode="full"):
    """Model and one-turn batch: d_emb=4, hidden=3, two slots with two values each,
    a two-token utterance and one system action (plus the sentinel)."""
    ontology = Ontology({"food": ["thai", "french"], "area": ["north", "south"]}, [])
    turn = Turn("thai north", [["inform", "food", "thai"]], [["food", "thai"]])
    dialogues = [Dialogue("tiny", [turn])]
    vocab = build_vocab(corpus_sequences(dialogues, ontology))
    rng = np.random.default_rng(seed)
    model = GladModel(ontology, vocab, ModelConfig(d_emb=4, hidden=3, mode=mode), rng)
    # move off the symmetric init so no gradient is accidentally zero
    for name, t in model.parameters().items():
        t.data[...] += rng.normal(scale=0.3, size=t.shape)
    model.embedding.weight.data[0] = 0.0
    batch = model.prepare([turn.inputs()], use_asr=False)
    targets = label_matrix([turn], model.pairs)
    return model, batch, targets


def _loss(model, batch, targets):
    return T.bce(T.sigmoid(model.forward(batch)), targets)


def check_gradients(model=None, batch=None, targets=None, step=DEFAULT_STEP, seed=0):
    if model is None:
        model, batch, targets = tiny_setup(seed)
    params = model.parameters()
    names = list(params)
    with T.GradTape() as tape:
        loss = _loss(model, batch, targets)
    analytic = dict(zip(names, T.backward(tape, loss, [params[n] for n in names])))
    for p in params.values():
        p.grad = None

    per_param = {}
    worst, worst_err, count = "", 0.0, 0
    for name in names:
        data = params[name].data
        numeric = np.zeros_like(data)
        for i in np.ndindex(data.shape):
            if name == "embedding" and i[0] == 0:
                continue  # pad row is held at zero
            old = data[i]
            data[i] = old + step
            up = float(_loss(model, batch, targets).data)
            data[i] = old - step
            down = float(_loss(model, batch, targets).data)
            data[i] = old
            numeric[i] = (up - down) / (2 * step)
            count += 1
        a = analytic[name]
        if name == "embedding":
            a = a.copy()
            a[0] = 0.0
        rel = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), REL_FLOOR)
        err = float(rel.max()) if rel.size else 0.0
        per_param[name] = err
        if err >= worst_err:
            worst, worst_err = name, err
    return GradCheckResult(worst_err, worst, per_param, count)
