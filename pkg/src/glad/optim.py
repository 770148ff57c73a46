"""Adam with bias-corrected moment estimates."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _array(p):
    # ndarray.data is a raw buffer, so only unwrap non-arrays
    return p if isinstance(p, np.ndarray) else p.data


def adam_step(params, grads, state):
    """Apply one Adam update in place.

    ``params`` and ``grads`` are dicts keyed by parameter name holding numpy
    arrays (or tensors exposing ``.data``). Moments are created lazily as
    zeros. Returns ``(params, state)`` for chaining.
    """
    for name, g in grads.items():
        p = _array(params[name])
        if np.shape(g) != p.shape:
            raise ValueError(f"shape mismatch for {name!r}: param {p.shape}, grad {np.shape(g)}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = _array(params[name])
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
