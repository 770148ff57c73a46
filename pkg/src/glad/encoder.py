"""Global-locally self-attentive sequence encoder.

A sequence is encoded with respect to one slot. A BiLSTM shared by every
slot (global) and a BiLSTM owned by the slot (local) both read the
embeddings; their outputs are interpolated by the slot's gate
``beta = sigmoid(theta)``. Two single-head self-attention modules, again one
global and one local, then summarize the mixed encoding and their contexts
are interpolated by the same gate.

Local modules of all slots are stored stacked along a leading slot axis, so
one call of :func:`encode_slots` encodes a batch for every slot at once.
:func:`glsa_encode` is the single-slot view of the same computation.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

ABLATIONS = ("full", "no-global", "no-local", "no-selfattn", "no-lstm")
GATED = ("full", "no-selfattn", "no-lstm")


@dataclass
class LstmParams:
    w_ih: Tensor
    w_hh: Tensor
    bias: Tensor


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    @property
    def hidden(self):
        return self.fwd.w_hh.shape[-2]

    @property
    def out_dim(self):
        return 2 * self.hidden

    def tensors(self):
        return [t for half in (self.fwd, self.bwd) for t in (half.w_ih, half.w_hh, half.bias)]


@dataclass
class SelfAttentionParams:
    weight: Tensor
    bias: Tensor


@dataclass
class GlsaEncoderParams:
    """Shared modules plus per-slot modules stacked in ``slots`` order.

    ``local_lstm`` weights carry a leading slot axis, ``local_attn.weight`` is
    ``(S, d)``, ``local_attn.bias`` and ``gate`` are ``(S,)``. Modules removed
    by the ablation mode are ``None``.
    """

    slots: list
    lstm: BiLstmParams | None
    attn: SelfAttentionParams | None
    local_lstm: BiLstmParams | None
    local_attn: SelfAttentionParams | None
    gate: Tensor
    mode: str = "full"

    def slot_index(self, slot):
        try:
            return self.slots.index(slot)
        except ValueError:
            raise KeyError(f"unknown slot {slot!r}") from None

    @property
    def beta(self):
        return T.sigmoid(self.gate)


@dataclass
class EncoderOutput:
    H: Tensor
    c: Tensor


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_lstm(rng, d_in, hidden, name, stack=()):
    bias = np.zeros(stack + (4 * hidden,))
    bias[..., hidden:2 * hidden] = 1.0
    return LstmParams(
        T.parameter(_uniform(rng, stack + (d_in, 4 * hidden), d_in), f"{name}.w_ih"),
        T.parameter(_uniform(rng, stack + (hidden, 4 * hidden), hidden), f"{name}.w_hh"),
        T.parameter(bias, f"{name}.bias"),
    )


def init_bilstm(rng, d_in, hidden, name, stack=()):
    return BiLstmParams(init_lstm(rng, d_in, hidden, f"{name}.fwd", stack),
                        init_lstm(rng, d_in, hidden, f"{name}.bwd", stack))


def init_attention(rng, d, name, stack=()):
    return SelfAttentionParams(T.parameter(_uniform(rng, stack + (d,), d), f"{name}.weight"),
                               T.parameter(np.zeros(stack), f"{name}.bias"))


def init_encoder(rng, slots, d_emb, hidden, mode="full"):
    """Fresh parameters for ``slots`` under ablation ``mode``.

    Under ``no-lstm`` and ``no-selfattn`` the removed modules are not
    created. Gate-pinning ablations keep both branches so the pinned-out one
    can be checked for having no influence.
    """
    if mode not in ABLATIONS:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATIONS}")
    slots = list(slots)
    if not slots:
        raise ValueError("need at least one slot")
    S = (len(slots),)
    use_lstm = mode != "no-lstm"
    use_attn = mode != "no-selfattn"
    d_enc = 2 * hidden if use_lstm else d_emb
    return GlsaEncoderParams(
        slots=slots,
        lstm=init_bilstm(rng, d_emb, hidden, "global.lstm") if use_lstm else None,
        attn=init_attention(rng, d_enc, "global.attn") if use_attn else None,
        local_lstm=init_bilstm(rng, d_emb, hidden, "local.lstm", S) if use_lstm else None,
        local_attn=init_attention(rng, d_enc, "local.attn", S) if use_attn else None,
        gate=T.parameter(np.zeros(S), "local.gate"),
        mode=mode,
    )


def encoder_tensors(params):
    """Every encoder tensor by name, pinned gates included."""
    out = {}
    for mod in (params.lstm, params.local_lstm):
        if mod is not None:
            out.update((t.name, t) for t in mod.tensors())
    for mod in (params.attn, params.local_attn):
        if mod is not None:
            out[mod.weight.name] = mod.weight
            out[mod.bias.name] = mod.bias
    out[params.gate.name] = params.gate
    return out


def encoder_parameters(params):
    """Trainable encoder tensors; the gate is left out when the mode pins it."""
    out = encoder_tensors(params)
    if params.mode not in GATED:
        del out[params.gate.name]
    return out


# ------------------------------------------------------------------ helpers


def _batched(x, mask):
    x = T.tensor(x)
    single = x.ndim == 2
    if single:
        x = T.reshape(x, (1,) + x.shape)
    if mask is None:
        mask = np.ones(x.shape[:-1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None, :]
    return x, mask, single


def _unbatch(t, single):
    return T.reshape(t, t.shape[1:]) if single else t


def _select(t, index):
    return t if index is None else T.take(t, index, axis=0)


# --------------------------------------------------------------- operations


def bilstm(x, params, mask=None):
    """Concatenate forward and backward LSTM states at every position.

    ``x`` is ``(B, n, d)`` (or ``(n, d)``); with stacked weights the result
    gains a leading slot axis.
    """
    x, mask, single = _batched(x, mask)
    if x.shape[-2] == 0:
        raise ValueError("empty sequence")
    fwd = T.lstm(x, mask, params.fwd.w_ih, params.fwd.w_hh, params.fwd.bias, reverse=False)
    bwd = T.lstm(x, mask, params.bwd.w_ih, params.bwd.w_hh, params.bwd.bias, reverse=True)
    out = T.concat([fwd, bwd], axis=-1)
    return _unbatch(out, single) if out.ndim == 3 else out


def self_attention(h, params, mask=None):
    """Return ``(scores, probs, context)`` for a single attention head."""
    h, mask, single = _batched(h, mask)
    scores = T.matmul(h, params.weight) + params.bias
    probs = T.masked_softmax(scores, mask)
    context = T.reshape(T.matmul(T.reshape(probs, (probs.shape[0], 1, -1)), h),
                        (h.shape[0], h.shape[2]))
    return _unbatch(scores, single), _unbatch(probs, single), _unbatch(context, single)


def _stacked_attention(h, weight, bias, mask):
    """Context of ``h`` (S|1, B, n, d) under per-slot (S, d) or shared (d,) weights."""
    if weight.ndim == 2:
        S, d = weight.shape
        r = T.matmul(h, T.reshape(weight, (S, 1, d, 1)))
        scores = T.reshape(r, r.shape[:-1]) + T.reshape(bias, (S, 1, 1))
    else:
        scores = T.matmul(h, weight) + bias
    probs = T.masked_softmax(scores, mask)
    lead = probs.shape[:2]
    ctx = T.matmul(T.reshape(probs, lead + (1, probs.shape[-1])), h)
    return T.reshape(ctx, lead + (h.shape[-1],))


def mean_pool(h, mask=None):
    h, mask, single = _batched(h, mask)
    return _unbatch(T.masked_mean(h, mask), single)


@dataclass
class Regularizer:
    """Dropout settings applied inside the encoder during training."""

    rng: object = None
    rate: float = 0.0

    def __call__(self, t):
        return T.dropout(t, self.rate, self.rng)


_NO_DROP = Regularizer()


def _local_lstm(params, index):
    p = params.local_lstm
    if index is None:
        return p
    return BiLstmParams(*(LstmParams(*(T.take(t, index, axis=0)
                                       for t in (half.w_ih, half.w_hh, half.bias)))
                          for half in (p.fwd, p.bwd)))


def encode_slots(x, params, mask=None, drop=_NO_DROP, index=None):
    """Encode a batch under several slots at once.

    ``x`` is ``(B, n, d)`` shared by every slot or ``(S, B, n, d)`` with one
    batch per slot; ``mask`` follows ``x`` without the last axis. ``index``
    picks a subset of slots by position (default: all, in ``params.slots``
    order). Returns :class:`EncoderOutput` with ``H`` of shape
    ``(S, B, n, d_enc)`` and ``c`` of shape ``(S, B, d_enc)``; when neither
    the input nor any module depends on the slot, the leading axis is 1.
    """
    x = T.tensor(x)
    mask = np.asarray(mask if mask is not None else np.ones(x.shape[:-1], dtype=bool),
                      dtype=bool)
    if x.shape[-2] == 0:
        raise ValueError("empty sequence")
    if x.ndim == 3:
        x = T.reshape(x, (1,) + x.shape)
    if mask.ndim == 2:
        mask = mask[None]
    if not mask.any(axis=-1).all():
        raise ValueError("empty attention support")
    mode = params.mode
    idx = None if index is None else np.asarray(index, dtype=np.intp)
    beta = _select(params.beta, idx) if mode in GATED else None

    if mode == "no-lstm":
        H = x
    else:
        h_l = drop(bilstm(x, _local_lstm(params, idx), mask)) if mode != "no-local" else None
        h_g = drop(bilstm(x, params.lstm, mask)) if mode != "no-global" else None
        H = _mix(h_l, h_g, beta, 4)

    if mode == "no-selfattn":
        c = T.masked_mean(H, mask)
    else:
        c_l = c_g = None
        if mode != "no-local":
            la = params.local_attn
            c_l = drop(_stacked_attention(H, _select(la.weight, idx), _select(la.bias, idx), mask))
        if mode != "no-global":
            c_g = drop(_stacked_attention(H, params.attn.weight, params.attn.bias, mask))
        c = _mix(c_l, c_g, beta, 3)
    return EncoderOutput(H, c)


def glsa_encode(x, slot, params, mask=None, drop=_NO_DROP):
    """Encode ``x`` (B, n, d) or (n, d) for one ``slot``; returns :class:`EncoderOutput`."""
    s = params.slot_index(slot)
    x, mask, single = _batched(x, mask)
    out = encode_slots(x, params, mask, drop, index=[s])
    H = T.reshape(out.H, out.H.shape[1:])
    c = T.reshape(out.c, out.c.shape[1:])
    return EncoderOutput(_unbatch(H, single), _unbatch(c, single))


def _mix(local_part, global_part, beta, ndim):
    if local_part is None:
        return global_part
    if global_part is None:
        return local_part
    b = T.reshape(beta, beta.shape + (1,) * (ndim - 1))
    return b * local_part + (1.0 - b) * global_part
