"""Time the masked LSTM scan under the numba and numpy backends.

    python benchmarks/bench_lstm.py [--slots 4] [--batch 16] [--steps 15] [--hidden 50]

Both backends are imported from the same module regardless of the
``GLAD_DISABLE_NUMBA`` flag, so one run compares them side by side and also
reports the largest output difference between them.
"""

import argparse
import time

import numpy as np

from glad import _accel


def _time(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--slots", type=int, default=4, help="stacked per-slot recurrences")
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--steps", type=int, default=15)
    ap.add_argument("--hidden", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    S, B, n, h = args.slots, args.batch, args.steps, args.hidden
    xp = rng.normal(size=(S, B, n, 4 * h))
    w_hh = rng.normal(scale=h ** -0.5, size=(S, h, 4 * h))
    lengths = rng.integers(1, n + 1, size=B)
    mask = (np.arange(n)[None, :] < lengths[:, None]).astype(np.float64)
    mask = np.ascontiguousarray(np.broadcast_to(mask, (S, B, n)))
    d_out = rng.normal(size=(S, B, n, h))

    backends = {"numpy": (_accel.lstm_forward_numpy, _accel.lstm_backward_numpy)}
    if _accel.HAVE_NUMBA:
        backends["numba"] = (_accel.lstm_forward_numba, _accel.lstm_backward_numba)

    results = {}
    print(f"S={S} B={B} n={n} hidden={h}  (best of {args.repeat})")
    for name, (fwd, bwd) in backends.items():
        out, cache = fwd(xp, mask, w_hh, False)
        t_f = _time(lambda: fwd(xp, mask, w_hh, False), args.repeat)
        t_b = _time(lambda: bwd(d_out, mask, w_hh, cache, False), args.repeat)
        results[name] = (out, bwd(d_out, mask, w_hh, cache, False))
        print(f"  {name:<6} forward {t_f * 1e3:8.3f} ms   backward {t_b * 1e3:8.3f} ms")
    if len(results) == 2:
        (o1, (dx1, dw1)), (o2, (dx2, dw2)) = results.values()
        diff = max(np.abs(o1 - o2).max(), np.abs(dx1 - dx2).max(), np.abs(dw1 - dw2).max())
        print(f"  max |numba - numpy| = {diff:.2e}")


if __name__ == "__main__":
    main()
