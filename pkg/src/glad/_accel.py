"""LSTM recurrence kernels.

Two interchangeable implementations of the masked LSTM scan live here: numba
``@njit`` kernels and a pure-numpy path. The numba path is used when numba
imports cleanly unless ``GLAD_DISABLE_NUMBA`` is set to a non-empty value
other than ``0``. ``benchmarks/bench_lstm.py`` times the two against each
other.

Shapes: pre-projected inputs ``xp`` are ``(S, B, n, 4h)`` where ``S`` indexes
independent weight sets (one per slot), ``mask`` is ``(S, B, n)`` float 0/1
and ``w_hh`` is ``(S, h, 4h)``. Gate layout along the last axis is
``[input, forget, candidate, output]``. Masked steps emit zeros and carry the
recurrent state through unchanged.
"""

import os

import numpy as np

_FLAG = os.environ.get("GLAD_DISABLE_NUMBA", "")
_WANT_NUMBA = _FLAG in ("", "0")

try:
    if not _WANT_NUMBA:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag in a subprocess
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


# ---------------------------------------------------------------- numpy path


def lstm_forward_numpy(xp, mask, w_hh, reverse):
    """Run the recurrence; returns ``(out, cache)`` with ``out`` (S, B, n, h).

    The cache holds gate activations, ``tanh`` of each new cell state, and
    the incoming hidden and cell states of every step.
    """
    S, B, n, four_h = xp.shape
    h = four_h // 4
    out = np.zeros((S, B, n, h))
    gates = np.zeros((S, B, n, four_h))
    tanh_c = np.zeros((S, B, n, h))
    h_prev = np.zeros((S, B, n, h))
    c_prev = np.zeros((S, B, n, h))
    h_t = np.zeros((S, B, h))
    c_t = np.zeros((S, B, h))
    for t in (range(n - 1, -1, -1) if reverse else range(n)):
        m = mask[:, :, t, None]
        a = xp[:, :, t] + h_t @ w_hh
        i = _sigmoid(a[..., :h])
        f = _sigmoid(a[..., h:2 * h])
        g = np.tanh(a[..., 2 * h:3 * h])
        o = _sigmoid(a[..., 3 * h:])
        c_new = f * c_t + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        gates[:, :, t] = np.concatenate([i, f, g, o], axis=-1)
        tanh_c[:, :, t] = tc
        h_prev[:, :, t] = h_t
        c_prev[:, :, t] = c_t
        out[:, :, t] = m * h_new
        h_t = m * h_new + (1.0 - m) * h_t
        c_t = m * c_new + (1.0 - m) * c_t
    return out, (gates, tanh_c, h_prev, c_prev)


def lstm_backward_numpy(d_out, mask, w_hh, cache, reverse):
    """Return ``(d_xp, d_w_hh)`` given the upstream gradient of ``out``."""
    gates, tanh_c, h_prev, c_prev = cache
    S, B, n, h = d_out.shape
    d_xp = np.zeros((S, B, n, 4 * h))
    d_w_hh = np.zeros_like(w_hh)
    dh = np.zeros((S, B, h))
    dc = np.zeros((S, B, h))
    w_hh_t = np.swapaxes(w_hh, 1, 2)
    for t in (range(n) if reverse else range(n - 1, -1, -1)):
        m = mask[:, :, t, None]
        gt = gates[:, :, t]
        i, f, g, o = gt[..., :h], gt[..., h:2 * h], gt[..., 2 * h:3 * h], gt[..., 3 * h:]
        tc = tanh_c[:, :, t]
        dh_new = m * (d_out[:, :, t] + dh)
        dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc_new * g * i * (1.0 - i),
            dc_new * c_prev[:, :, t] * f * (1.0 - f),
            dc_new * i * (1.0 - g * g),
            dh_new * tc * o * (1.0 - o),
        ], axis=-1)
        d_xp[:, :, t] = da
        d_w_hh += np.swapaxes(h_prev[:, :, t], 1, 2) @ da
        dh = (1.0 - m) * dh + da @ w_hh_t
        dc = (1.0 - m) * dc + dc_new * f
    return d_xp, d_w_hh


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    import math

    # libm tanh is ~4x slower than exp inside the scan
    @njit(cache=True, inline="always")
    def _sig(x):
        return 1.0 / (1.0 + math.exp(-x))

    @njit(cache=True, inline="always")
    def _tanh(x):
        e = math.exp(-2.0 * abs(x))
        t = (1.0 - e) / (1.0 + e)
        return t if x >= 0 else -t

    @njit(cache=True)
    def _lstm_forward_nb(xp, mask, w_hh, reverse):
        S, B, n, four_h = xp.shape
        h = four_h // 4
        out = np.zeros((S, B, n, h))
        gates = np.zeros((S, B, n, four_h))
        tanh_c = np.zeros((S, B, n, h))
        h_prev = np.zeros((S, B, n, h))
        c_prev = np.zeros((S, B, n, h))
        h_t = np.zeros((B, h))
        c_t = np.zeros((B, h))
        a = np.empty((B, four_h))
        for s in range(S):
            h_t[:, :] = 0.0
            c_t[:, :] = 0.0
            w = w_hh[s]
            for step in range(n):
                t = n - 1 - step if reverse else step
                a[:, :] = np.dot(h_t, w)
                for b in range(B):
                    if mask[s, b, t] == 0.0:
                        for k in range(h):
                            h_prev[s, b, t, k] = h_t[b, k]
                            c_prev[s, b, t, k] = c_t[b, k]
                        continue
                    for k in range(h):
                        h_prev[s, b, t, k] = h_t[b, k]
                        c_prev[s, b, t, k] = c_t[b, k]
                        i = _sig(a[b, k] + xp[s, b, t, k])
                        f = _sig(a[b, h + k] + xp[s, b, t, h + k])
                        g = _tanh(a[b, 2 * h + k] + xp[s, b, t, 2 * h + k])
                        o = _sig(a[b, 3 * h + k] + xp[s, b, t, 3 * h + k])
                        c_new = f * c_t[b, k] + i * g
                        tc = _tanh(c_new)
                        gates[s, b, t, k] = i
                        gates[s, b, t, h + k] = f
                        gates[s, b, t, 2 * h + k] = g
                        gates[s, b, t, 3 * h + k] = o
                        tanh_c[s, b, t, k] = tc
                        out[s, b, t, k] = o * tc
                        h_t[b, k] = o * tc
                        c_t[b, k] = c_new
        return out, gates, tanh_c, h_prev, c_prev

    @njit(cache=True)
    def _lstm_backward_nb(d_out, mask, w_hh, gates, tanh_c, h_prev, c_prev, reverse):
        S, B, n, h = d_out.shape
        d_xp = np.zeros((S, B, n, 4 * h))
        d_w_hh = np.zeros_like(w_hh)
        dh = np.zeros((B, h))
        dc = np.zeros((B, h))
        da = np.empty((B, 4 * h))
        for s in range(S):
            dh[:, :] = 0.0
            dc[:, :] = 0.0
            w_t = np.ascontiguousarray(w_hh[s].T)
            for step in range(n):
                t = step if reverse else n - 1 - step
                for b in range(B):
                    if mask[s, b, t] == 0.0:
                        da[b, :] = 0.0
                        continue
                    for k in range(h):
                        i = gates[s, b, t, k]
                        f = gates[s, b, t, h + k]
                        g = gates[s, b, t, 2 * h + k]
                        o = gates[s, b, t, 3 * h + k]
                        tc = tanh_c[s, b, t, k]
                        dh_new = d_out[s, b, t, k] + dh[b, k]
                        dc_new = dc[b, k] + dh_new * o * (1.0 - tc * tc)
                        da[b, k] = dc_new * g * i * (1.0 - i)
                        da[b, h + k] = dc_new * c_prev[s, b, t, k] * f * (1.0 - f)
                        da[b, 2 * h + k] = dc_new * i * (1.0 - g * g)
                        da[b, 3 * h + k] = dh_new * tc * o * (1.0 - o)
                        dh[b, k] = 0.0
                        dc[b, k] = dc_new * f
                d_xp[s, :, t, :] = da
                d_w_hh[s] += np.dot(np.ascontiguousarray(h_prev[s, :, t, :]).T, da)
                dh += np.dot(da, w_t)
        return d_xp, d_w_hh

    def lstm_forward_numba(xp, mask, w_hh, reverse):
        out, *cache = _lstm_forward_nb(
            np.ascontiguousarray(xp), np.ascontiguousarray(mask, dtype=np.float64),
            np.ascontiguousarray(w_hh), bool(reverse))
        return out, tuple(cache)

    def lstm_backward_numba(d_out, mask, w_hh, cache, reverse):
        return _lstm_backward_nb(
            np.ascontiguousarray(d_out), np.ascontiguousarray(mask, dtype=np.float64),
            np.ascontiguousarray(w_hh), *cache, bool(reverse))

    lstm_forward = lstm_forward_numba
    lstm_backward = lstm_backward_numba
else:
    lstm_forward = lstm_forward_numpy
    lstm_backward = lstm_backward_numpy
