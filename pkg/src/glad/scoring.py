"""Slot-value scorers over encoded utterances and previous system actions.

``score_utterance`` attends over utterance positions using the slot-value
context as the query. ``score_actions`` attends over previous-action contexts
(plus the sentinel) using the utterance context as the query and compares the
result with the slot-value context. ``combine`` squashes their weighted sum.

Batched shapes: utterance encodings ``(R, n, d)``, action contexts
``(R, L, d)``, slot-value contexts ``(V, d)``; both scorers return ``(R, V)``.
Unbatched single-instance forms return scalars.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .encoder import glsa_encode
from .vocab import tokenize


@dataclass(frozen=True)
class SlotValue:
    slot: str
    value: str

    @property
    def tokens(self):
        return tokenize(self.slot) + ["="] + tokenize(self.value)

    @property
    def id(self):
        return f"{self.slot}={self.value}"


@dataclass
class TurnInputs:
    """Model-facing view of a user turn: tokens only, no labels."""

    utterance: list
    actions: list = field(default_factory=list)
    asr: list | None = None


@dataclass
class UtteranceHead:
    weight: T.Tensor
    bias: T.Tensor
    action_weight: T.Tensor


def score_utterance(H_utt, c_val, weight, bias, mask=None):
    """Slot-value-conditioned attention over the utterance, then a linear head.

    Leading axes in front of ``(R, n, d)`` / ``(V, d)`` / ``(d,)`` broadcast,
    which is how all slots are scored in one call.
    """
    H_utt, c_val, weight, bias = (T.tensor(a) for a in (H_utt, c_val, weight, bias))
    single = H_utt.ndim == 2
    if single:
        H_utt = T.reshape(H_utt, (1,) + H_utt.shape)
        c_val = T.reshape(c_val, (1, -1))
    R, n, d = H_utt.shape[-3:]
    if mask is None:
        mask = np.ones((R, n), dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(R, n)
    if c_val.ndim > 2:
        c_val = T.reshape(c_val, c_val.shape[:-2] + (1,) + c_val.shape[-2:])
    # (..., R, n, V) -> (..., R, V, n)
    logits = T.swapaxes(T.matmul(H_utt, T.swapaxes(c_val, -1, -2)), -1, -2)
    probs = T.masked_softmax(logits, mask[:, None, :])
    q = T.matmul(probs, H_utt)
    lead = weight.shape[:-1]
    w = T.reshape(weight, lead + ((1,) if lead else ()) + (d, 1))
    y = T.matmul(q, w)
    y = T.reshape(y, y.shape[:-1]) + T.reshape(bias, lead + (1, 1) if lead else ())
    return T.reshape(y, ()) if single else y


def score_actions(C_act, c_utt, c_val, mask=None):
    """Utterance-conditioned attention over action contexts, scored against the value.

    Batched shapes ``(..., R, L, d)``, ``(..., R, d)``, ``(..., V, d)``.
    """
    C_act, c_utt, c_val = T.tensor(C_act), T.tensor(c_utt), T.tensor(c_val)
    single = C_act.ndim == 2
    if single:
        C_act = T.reshape(C_act, (1,) + C_act.shape)
        c_utt = T.reshape(c_utt, (1, -1))
        c_val = T.reshape(c_val, (1, -1))
    R, L, d = C_act.shape[-3:]
    if mask is None:
        mask = np.ones((R, L), dtype=bool)
    r = T.matmul(C_act, T.reshape(c_utt, c_utt.shape + (1,)))
    probs = T.masked_softmax(T.reshape(r, r.shape[:-1]), mask)
    lead = probs.shape[:-1]
    q = T.matmul(T.reshape(probs, lead + (1, L)), C_act)
    y = T.matmul(T.reshape(q, lead + (d,)), T.swapaxes(c_val, -1, -2))
    return T.reshape(y, ()) if single else y


def action_attention(C_act, c_utt, mask=None):
    """Attention distribution over actions; exposed for diagnostics and tests."""
    C_act, c_utt = T.tensor(C_act), T.tensor(c_utt)
    logits = T.matmul(C_act, c_utt)
    return T.masked_softmax(logits, mask)


def combine(y_utt, y_act, w):
    return T.sigmoid(combined_logit(y_utt, y_act, w))


def combined_logit(y_utt, y_act, w):
    return T.add(y_utt, T.mul(w, y_act))


def encode_inputs(turn, sv, model, drop=None):
    """Encode one turn and one slot-value pair under ``sv.slot``.

    Returns ``(H_utt, c_utt, C_act, c_val)`` where ``C_act`` is a list of
    action contexts whose last entry is the sentinel's.
    """
    from .encoder import Regularizer

    drop = drop or Regularizer()
    enc = model.encoder
    utt = model.token_ids(turn.utterance)
    X_utt = model.embed_ids(np.array([utt]))
    out_utt = glsa_encode(X_utt, sv.slot, enc, drop=drop)

    X_act, act_mask = model.action_inputs([turn.actions])
    out_act = glsa_encode(X_act, sv.slot, enc, mask=act_mask, drop=drop)
    n_act = X_act.shape[0]
    C_act = [out_act.c[i] for i in range(n_act)]

    val = model.token_ids(sv.tokens)
    out_val = glsa_encode(model.embed_ids(np.array([val])), sv.slot, enc, drop=drop)
    return out_utt.H[0], out_utt.c[0], C_act, out_val.c[0]
