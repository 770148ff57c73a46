"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` to see the verdict lines; the
ablation sweep behind criteria 5 and 6 trains 25 models and is marked slow
(deselect with ``-m "not slow"``).
"""

import json
import random
import time

import numpy as np
import pytest

import oracles
from conftest import make_model
from glad import tensor as T
from glad.cli import main
from glad.data import SyntheticConfig, generate_synthetic, pair_counts, save_corpus, save_ontology
from glad.encoder import encoder_parameters, glsa_encode, init_encoder
from glad.gradcheck import TOLERANCE, check_gradients, tiny_setup
from glad.scoring import TurnInputs, action_attention, score_actions, score_utterance
from glad.tracker import accumulate
from glad.training import TrainConfig, ablation_sweep, dev_metrics, train, write_run_log

MODES = ("full", "no-global", "no-local", "no-selfattn", "no-lstm")


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return report


# -------------------------------------------------------------- overfit run


OVERFIT_DATA = SyntheticConfig(n_dialogues=50, n_dev=0, n_test=0, seed=7)
OVERFIT_TRAIN = TrainConfig(epochs=200, patience=200, lr=1e-2, d_emb=32, hidden=24, seed=0,
                            target_joint_goal=1.0)


@pytest.fixture(scope="module")
def overfit(tmp_path_factory):
    onto, splits = generate_synthetic(OVERFIT_DATA)
    tr = splits["train"]
    start = time.perf_counter()
    model, report = train(tr, tr, onto, OVERFIT_TRAIN)
    elapsed = time.perf_counter() - start
    root = tmp_path_factory.mktemp("overfit")
    save_ontology(onto, root / "ontology.json")
    save_corpus(tr, root / "train.json")
    model.save(root / "model.npz")
    return {"model": model, "report": report, "elapsed": elapsed, "train": tr, "root": root,
            "metrics": dev_metrics(model, tr)}


def test_criterion_1_eval_table(overfit, verdict, capsys):
    root = overfit["root"]
    code = main(["eval", "--checkpoint", str(root / "model.npz"), "--ontology",
                 str(root / "ontology.json"), "--test", str(root / "train.json")])
    out = capsys.readouterr().out
    lines = {ln.split()[0] + " " + ln.split()[1]: ln for ln in out.splitlines()
             if len(ln.split()) >= 3}
    ok = (code == 0 and "Joint goal" in lines and "Turn request" in lines
          and lines["Joint goal"].strip().endswith("%")
          and lines["Turn request"].strip().endswith("%"))
    verdict(1, ok, "eval prints joint goal / turn request table: "
            + " | ".join(lines.get(k, "?").strip() for k in ("Joint goal", "Turn request")))


def test_criterion_2_gradient_check(verdict):
    start = time.perf_counter()
    results = {m: check_gradients(*tiny_setup(0, m)) for m in MODES}
    elapsed = time.perf_counter() - start
    worst = max(r.max_rel_error for r in results.values())
    ok = worst <= TOLERANCE and elapsed < 60 and all(r.ok for r in results.values())
    verdict(2, ok, f"max relative error {worst:.2e} over {sum(r.n_checked for r in results.values())} "
            f"entries in {len(MODES)} modes (tol {TOLERANCE:g}), {elapsed:.1f}s (< 60s)")


def test_criterion_3_forward_oracle(verdict):
    rng = np.random.default_rng(42)
    enc = init_encoder(rng, ["food", "area"], 4, 3)
    for t in encoder_parameters(enc).values():
        t.data[...] += rng.normal(scale=0.4, size=t.shape)
    X = rng.normal(size=(3, 4))
    c_val = rng.normal(size=6)
    C = np.vstack([rng.normal(size=(2, 6)), np.zeros((1, 6))])  # two actions + sentinel
    w, b = rng.normal(size=6), 0.3
    err = 0.0
    for s, slot in enumerate(enc.slots):
        out = glsa_encode(X, slot, enc)

        def lists(p):
            return ((p.fwd.w_ih.data[s].tolist(), p.fwd.w_hh.data[s].tolist(),
                     p.fwd.bias.data[s].tolist()),
                    (p.bwd.w_ih.data[s].tolist(), p.bwd.w_hh.data[s].tolist(),
                     p.bwd.bias.data[s].tolist()))

        glob = tuple(tuple(t.data.tolist() for t in (h.w_ih, h.w_hh, h.bias))
                     for h in (enc.lstm.fwd, enc.lstm.bwd))
        H_ref, c_ref = oracles.glsa(
            X.tolist(), glob, lists(enc.local_lstm),
            (enc.attn.weight.data.tolist(), float(enc.attn.bias.data)),
            (enc.local_attn.weight.data[s].tolist(), float(enc.local_attn.bias.data[s])),
            oracles.sig(float(enc.gate.data[s])))
        err = max(err, np.abs(out.H.data - H_ref).max(), np.abs(out.c.data - c_ref).max())
        y_u = float(score_utterance(out.H, c_val, w, b).data)
        y_a = float(score_actions(C, out.c, c_val).data)
        err = max(err, abs(y_u - oracles.score_utterance(H_ref, c_val.tolist(), w.tolist(), b)),
                  abs(y_a - oracles.score_actions(C.tolist(), c_ref, c_val.tolist())))
    verdict(3, err <= 1e-10, f"max abs deviation from straight-line oracle {err:.2e} (tol 1e-10)")


def test_criterion_4_overfit(overfit, verdict):
    m, rep = overfit["metrics"], overfit["report"]
    ok = (m.joint_goal >= 0.95 and m.turn_request >= 0.98 and len(rep.epochs) <= 200
          and overfit["elapsed"] < 300)
    verdict(4, ok, f"train joint goal {m.joint_goal:.3f} (>= 0.95), request "
            f"{m.turn_request:.3f} (>= 0.98) after {len(rep.epochs)} epochs, "
            f"{overfit['elapsed']:.0f}s (< 300s)")


# ------------------------------------------------------------ ablation sweep


SWEEP_DATA = SyntheticConfig(n_dialogues=500, n_dev=100, n_test=0, skew=1.5, seed=11)
SWEEP_TRAIN = TrainConfig(epochs=40, patience=8, lr=1e-2, d_emb=32, hidden=24)
SWEEP_SEEDS = [0, 1, 2, 3, 4]


@pytest.fixture(scope="module")
def sweep():
    onto, splits = generate_synthetic(SWEEP_DATA)
    cells = ablation_sweep(splits["train"], splits["dev"], onto, SWEEP_TRAIN, SWEEP_SEEDS, MODES)
    return {(c.mode, c.seed): c for c in cells}


def _bucket_f1(cell, index):
    return cell.buckets[index]["f1"]


@pytest.mark.slow
def test_criterion_5_ablation_ordering(sweep, verdict):
    jg = {m: [sweep[(m, s)].dev_joint_goal for s in SWEEP_SEEDS] for m in MODES}
    mean = {m: float(np.mean(v)) for m, v in jg.items()}
    wins = {m: sum(f >= a for f, a in zip(jg["full"], jg[m])) for m in MODES[1:]}
    ok = (all(mean["full"] >= mean[m] for m in MODES[1:])
          and wins["no-global"] >= 4 and wins["no-lstm"] >= 4)
    detail = ", ".join(f"{m} {mean[m]:.4f} ({wins.get(m, '-')}/5)" for m in MODES)
    verdict(5, ok, f"mean dev joint goal (full >= ablation in n/5 seeds): {detail}")


@pytest.mark.slow
def test_criterion_6_rare_pairs(sweep, verdict):
    variants = {"full": "full", "global-only": "no-local", "local-only": "no-global"}
    rare = {k: [_bucket_f1(sweep[(m, s)], 0) for s in SWEEP_SEEDS] for k, m in variants.items()}
    wins = {k: sum(f >= o for f, o in zip(rare["full"], rare[k]))
            for k in ("global-only", "local-only")}
    # most frequent non-empty bucket
    top_index = max(i for i, b in enumerate(sweep[("full", 0)].buckets) if b["pairs"])
    top = {k: float(np.mean([_bucket_f1(sweep[(m, s)], top_index) for s in SWEEP_SEEDS]))
           for k, m in variants.items()}
    spread = max(top.values()) - min(top.values())
    ok = wins["global-only"] >= 4 and wins["local-only"] >= 4 and spread <= 0.05
    rare_mean = {k: float(np.mean(v)) for k, v in rare.items()}
    verdict(6, ok, "rare-bucket F1 " + ", ".join(f"{k} {v:.3f}" for k, v in rare_mean.items())
            + f"; full wins {wins['global-only']}/5 vs global-only, "
            f"{wins['local-only']}/5 vs local-only; top-bucket spread {spread:.3f} (<= 0.05)")


# ------------------------------------------------------------- accumulation


def test_criterion_7_accumulation(verdict):
    g = accumulate({}, {"food": "thai"})
    examples = [
        accumulate(g, {"area": "north"}) == {"food": "thai", "area": "north"},
        accumulate(g, {"food": "french"}) == {"food": "french"},
        accumulate(g, {}) == g,
        accumulate(accumulate(g, {"area": "east"}), {"area": "east"})
        == accumulate(g, {"area": "east"}),
    ]
    rng = random.Random(2024)
    slots = ["food", "area", "pricerange", "name", "stars"]
    agree = 0
    for _ in range(1000):
        goals = [{s: rng.randrange(5) for s in rng.sample(slots, rng.randrange(len(slots) + 1))}
                 for _ in range(rng.randrange(0, 10))]
        joint = {}
        for turn in goals:
            joint = accumulate(joint, turn)
        brute = {}
        for s in slots:
            writers = [t[s] for t in goals if s in t]
            if writers:
                brute[s] = writers[-1]
        agree += joint == brute
    verdict(7, all(examples) and agree == 1000,
            f"{sum(examples)}/4 examples, {agree}/1000 randomized fold == last-writer cases")


# -------------------------------------------------------------- determinism


def test_criterion_8_determinism(tmp_path, verdict):
    onto, splits = generate_synthetic(SyntheticConfig(n_dialogues=30, n_dev=10, n_test=0,
                                                      seed=5))
    cfg = TrainConfig(epochs=3, d_emb=12, hidden=8, lr=1e-2, dropout=0.3, seed=4)
    artifacts = []
    for run in ("a", "b"):
        model, report = train(splits["train"], splits["dev"], onto, cfg)
        model.save(tmp_path / f"{run}.npz")
        write_run_log(tmp_path / f"{run}.json", cfg, report)
        ev = dev_metrics(model, splits["dev"], train_counts=pair_counts(splits["train"], onto))
        artifacts.append(((tmp_path / f"{run}.npz").read_bytes(),
                          (tmp_path / f"{run}.json").read_bytes(),
                          json.dumps(ev.to_dict(), sort_keys=True)))
    same = [x == y for x, y in zip(*artifacts)]
    verdict(8, all(same), "bit-identical across two runs: checkpoint %s, log %s, metrics %s"
            % tuple("yes" if s else "NO" for s in same))


# ----------------------------------------------------------------- invariants


def _softmax_ok(rng):
    n = rng.integers(1, 9)
    x = rng.uniform(-30, 30, size=n)
    mask = rng.random(n) < 0.6
    mask[rng.integers(n)] = True
    p = T.masked_softmax(x, mask).data
    return abs(p.sum() - 1) <= 1e-12 and (p[~mask] == 0).all() and (p >= 0).all()


def _sigmoid_ok(rng):
    x = rng.uniform(-30, 30)
    s = T.sigmoid_array(x)
    return 0 < s < 1 and abs(s + T.sigmoid_array(-x) - 1) <= 1e-15


def _endpoints_ok(rng):
    from dataclasses import replace
    enc = init_encoder(rng, ["food"], 4, 3)
    for t in encoder_parameters(enc).values():
        t.data[...] += rng.normal(scale=0.3, size=t.shape)
    X = rng.normal(size=(int(rng.integers(1, 5)), 4))
    ok = True
    for theta, pinned in ((-50.0, "no-local"), (50.0, "no-global")):
        enc.gate.data[0] = theta
        a, b = glsa_encode(X, "food", enc), glsa_encode(X, "food", replace(enc, mode=pinned))
        ok &= np.abs(a.H.data - b.H.data).max() <= 1e-10
        ok &= np.abs(a.c.data - b.c.data).max() <= 1e-10
    return ok


def _sentinel_ok(rng):
    p = action_attention(rng.normal(size=(1, 6)), rng.normal(size=6)).data
    return p.shape == (1,) and p[0] == 1.0


def _permutation_ok(rng):
    enc = init_encoder(rng, ["food", "area"], 4, 3, "no-lstm")
    for t in encoder_parameters(enc).values():
        t.data[...] += rng.normal(scale=0.3, size=t.shape)
    X = rng.normal(size=(5, 4))
    perm = rng.permutation(5)
    a = glsa_encode(X, "area", enc).c.data
    b = glsa_encode(X[perm], "area", enc).c.data
    return np.abs(a - b).max() <= 1e-12


def _gate_gradients(theta, seed):
    model = make_model(_invariant_ontology(), d_emb=4, hidden=3, seed=seed, jitter=0.3)
    model.encoder.gate.data[...] = theta
    batch = model.prepare([TurnInputs(["thai", "north"], [["request", "(", "food", ")"]])])
    target = np.zeros((1, len(model.pairs)))
    target[0, 0] = 1.0
    params = model.parameters()
    with T.GradTape() as tape:
        loss = T.bce(T.sigmoid(model.forward(batch)), target)
    grads = dict(zip(params, T.backward(tape, loss, list(params.values()))))
    prefix = "local." if theta < 0 else "global."
    dead = max(np.abs(g).max() for k, g in grads.items()
               if k.startswith(prefix) and k != "local.gate")
    alive = max(np.abs(g).max() for k, g in grads.items()
                if k.startswith("global." if theta < 0 else "local.") and k != "local.gate")
    return dead, alive


def _invariant_ontology():
    from glad.data import Ontology
    return Ontology({"food": ["thai", "french"], "area": ["north", "south"]}, ["phone"])


def test_criterion_9_invariants(verdict):
    rng = np.random.default_rng(9)
    checks = {
        "softmax normalization": all(_softmax_ok(rng) for _ in range(300)),
        "sigmoid range/symmetry": all(_sigmoid_ok(rng) for _ in range(300)),
        "mixture endpoints": all(_endpoints_ok(rng) for _ in range(30)),
        "sentinel-only attention": all(_sentinel_ok(rng) for _ in range(50)),
        "no-lstm permutation invariance": all(_permutation_ok(rng) for _ in range(50)),
    }
    worst = 0.0
    live = True
    for theta in (-50.0, 50.0):
        for seed in range(3):
            dead, alive = _gate_gradients(theta, seed)
            worst = max(worst, dead)
            live &= alive > 1e-8
    checks["gate-endpoint gradients"] = worst <= 1e-15 and live
    failed = [k for k, v in checks.items() if not v]
    verdict(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} invariant families hold; "
            f"max gradient through a closed gate {worst:.1e} (tol 1e-15)"
            + (f"; failing: {', '.join(failed)}" if failed else ""))
