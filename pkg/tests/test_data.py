import json
from collections import Counter

import numpy as np
import pytest

from conftest import EXAMPLE_ONTOLOGY
from glad.data import (REQUEST, DataError, Dialogue, Ontology, SyntheticConfig, Turn,
                       corpus_stats, dump_corpus, generate_synthetic, load_corpus, load_ontology,
                       pair_counts, parse_corpus, save_corpus, save_ontology,
                       synthetic_config_from_dict, synthetic_ontology)
from glad.data import _Sampler


# ----------------------------------------------------------------- ontology


def test_ontology_slots_and_pairs():
    o = Ontology({"food": ["thai"], "area": ["north", "south"]}, ["phone"])
    assert o.slots == ["food", "area", REQUEST]
    assert o.pairs() == [("food", "thai"), ("area", "north"), ("area", "south"),
                         (REQUEST, "phone")]
    assert ("area", "south") in o and ("area", "east") not in o
    assert Ontology({"food": ["thai"]}).slots == ["food"]


@pytest.mark.parametrize("informable,req", [({"food": []}, []), ({"food": ["a", "a"]}, []),
                                            ({"request": ["x"]}, []), ({"f": ["a"]}, ["p", "p"])])
def test_ontology_validation(informable, req):
    with pytest.raises(DataError):
        Ontology(informable, req)


def test_ontology_round_trip(tmp_path):
    o = Ontology(EXAMPLE_ONTOLOGY["informable"], EXAMPLE_ONTOLOGY["requestable"])
    save_ontology(o, tmp_path / "o.json")
    assert load_ontology(tmp_path / "o.json") == o


def test_ontology_values_layout():
    o = Ontology.from_dict({"slots": ["food", "request"],
                            "values": {"food": ["thai"], "request": ["phone"]}})
    assert o.pairs() == [("food", "thai"), (REQUEST, "phone")]


def test_ontology_bad_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"informable": {"food": [\n')
    with pytest.raises(DataError, match="line"):
        load_ontology(p)
    p.write_text("[1, 2]")
    with pytest.raises(DataError):
        load_ontology(p)


# ------------------------------------------------------------------- corpus


EXAMPLE_FILE = {
    "dialogues": [{
        "dialogue_id": "example",
        "turns": [
            {"system_acts": [],
             "transcript": "Im looking for an expensive restaurant in the south part of town",
             "turn_label": [["pricerange", "expensive"], ["area", "south"]]},
            {"system_acts": [["request", "(", "food", ")"]],
             "transcript": "korean food please",
             "turn_label": [["food", "korean"]]},
        ],
    }]
}


def test_example_file_parses(tmp_path):
    path = tmp_path / "example.json"
    path.write_text(json.dumps(EXAMPLE_FILE))
    onto = Ontology(EXAMPLE_ONTOLOGY["informable"], EXAMPLE_ONTOLOGY["requestable"])
    (d,) = load_corpus(path, onto)
    assert d.dialogue_id == "example"
    assert d.turns[0].goal == {"pricerange": "expensive", "area": "south"}
    assert d.turns[1].goal == {"food": "korean"}
    assert d.turns[1].system_acts == [["request", "(", "food", ")"]]
    assert d.turns[0].inputs().utterance[:3] == ["im", "looking", "for"]


def test_corpus_round_trip(tmp_path):
    onto, splits = generate_synthetic(SyntheticConfig(n_dialogues=20, n_dev=0, n_test=0,
                                                      asr_nbest=3, seed=5))
    save_corpus(splits["train"], tmp_path / "c.json")
    again = load_corpus(tmp_path / "c.json", onto)
    assert again == splits["train"]
    assert dump_corpus(again) == dump_corpus(splits["train"])


def test_unknown_label_names_the_turn(tmp_path):
    doc = json.loads(json.dumps(EXAMPLE_FILE))
    doc["dialogues"][0]["turns"][1]["turn_label"] = [["food", "klingon"]]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    onto = Ontology(EXAMPLE_ONTOLOGY["informable"], EXAMPLE_ONTOLOGY["requestable"])
    with pytest.raises(DataError, match=r"dialogue example turn 1: unknown slot-value food=klingon"):
        load_corpus(path, onto)


def test_malformed_corpus(tmp_path):
    onto = Ontology({"food": ["thai"]})
    path = tmp_path / "c.json"
    path.write_text('{"dialogues": [{"dialogue_id": "a"}]}')
    with pytest.raises(DataError, match="malformed"):
        load_corpus(path, onto)
    path.write_text('{"dialogues": [{"turns": [{"turn_label": [["food"]]}]}]}')
    with pytest.raises(DataError, match="turn 0"):
        load_corpus(path, onto)


def test_empty_corpus():
    onto = Ontology({"food": ["thai"]})
    assert parse_corpus({"dialogues": []}, onto) == []
    assert pair_counts([], onto) == {("food", "thai"): 0}
    assert corpus_stats([], onto)["turns"] == 0


def test_act_normalization():
    onto = Ontology({"food": ["thai"]})
    doc = [{"turns": [{"transcript": ["thai", "please"],
                       "system_acts": ["request(food)", ["food", "thai"], ["area", ""]]}]}]
    (d,) = parse_corpus(doc, onto)
    t = d.turns[0]
    assert t.transcript == "thai please"
    assert t.system_acts == [["request", "(", "food", ")"],
                             ["confirm", "(", "food", "=", "thai", ")"],
                             ["request", "(", "area", ")"]]


def test_turn_goal_last_entry_wins():
    t = Turn("x", [], [("food", "thai"), ("food", "korean"), (REQUEST, "phone")])
    assert t.goal == {"food": "korean"} and t.requests == {"phone"}


def test_pair_counts_count_turns():
    onto = Ontology({"food": ["thai", "korean"]}, ["phone"])
    d = Dialogue("a", [Turn("x", [], [("food", "thai"), ("food", "thai")]),
                       Turn("y", [], [("food", "thai"), (REQUEST, "phone")])])
    assert pair_counts([d], onto) == {("food", "thai"): 2, ("food", "korean"): 0,
                                      (REQUEST, "phone"): 1}


# ---------------------------------------------------------------- synthetic


def test_generation_is_byte_deterministic():
    cfg = SyntheticConfig(n_dialogues=60, n_dev=10, n_test=10, asr_nbest=2, seed=9)
    a = generate_synthetic(cfg)
    b = generate_synthetic(SyntheticConfig(n_dialogues=60, n_dev=10, n_test=10, asr_nbest=2,
                                           seed=9))
    for name in ("train", "dev", "test"):
        assert dump_corpus(a[1][name]) == dump_corpus(b[1][name])
    c = generate_synthetic(SyntheticConfig(n_dialogues=60, n_dev=10, n_test=10, seed=10))
    assert dump_corpus(a[1]["train"]) != dump_corpus(c[1]["train"])


def test_split_sizes_and_ids():
    onto, splits = generate_synthetic(SyntheticConfig(n_dialogues=12, n_dev=3, n_test=4))
    assert [len(splits[k]) for k in ("train", "dev", "test")] == [12, 3, 4]
    assert splits["dev"][0].dialogue_id == "dev-0"
    for d in splits["train"]:
        assert 1 <= len(d.turns) <= 4
        for t in d.turns:
            assert all(p in onto for p in t.turn_label)


def test_synthetic_ontology_shape():
    onto = synthetic_ontology(SyntheticConfig(slots={"food": 45, "area": 3, "stars": 2}))
    assert len(onto.informable["food"]) == 46 and onto.informable["food"][-1] == "dontcare"
    assert onto.informable["area"][:3] == ["centre", "north", "south"]
    values = [v for vs in onto.informable.values() for v in vs if v != "dontcare"]
    assert len(values) == len(set(values))


def test_uniform_sampler_chi_square():
    cfg = SyntheticConfig(skew=0.0)
    onto = synthetic_ontology(cfg)
    sampler = _Sampler(onto, 0.0, np.random.default_rng(0))
    n = 24000
    counts = Counter(sampler.value("food") for _ in range(n))
    k = len(sampler.probs["food"][0])
    assert k == 24 and len(counts) == k
    expected = n / k
    chi2 = sum((counts[v] - expected) ** 2 / expected for v in sampler.probs["food"][0])
    # chi-square 0.999 quantile with 23 degrees of freedom
    assert chi2 < 49.728


def test_skewed_corpus_has_rare_pairs():
    onto, splits = generate_synthetic(SyntheticConfig(n_dialogues=500, skew=1.5, seed=0))
    stats = corpus_stats(splits["train"], onto)
    assert stats["rare_pair_fraction"] >= 0.20
    counts = pair_counts(splits["train"], onto)
    food = sorted((counts[("food", v)] for v in onto.informable["food"] if v != "dontcare"),
                  reverse=True)
    assert food[0] > 10 * max(food[-1], 1)


REQUEST_CUES = {"address": "address", "phone": "phone", "postcode": "post", "food": "food",
                "area": ("area", "part"), "pricerange": ("price", "expensive")}


def _explained(turn, slot, value):
    """Independent reverse reading: can the label be recovered from text plus acts?"""
    words = turn.transcript.split()
    acts = [" ".join(a) for a in turn.system_acts]
    if slot == REQUEST:
        cues = REQUEST_CUES[value]
        cues = cues if isinstance(cues, tuple) else (cues,)
        return any(c in turn.transcript for c in cues) or f"offer ( {value} )" in acts
    if value == "dontcare":
        return "any" in words or "care" in words
    if value in words:
        return True
    return f"confirm ( {slot} = {value} )" in acts and words[0] in ("yes", "that", "yeah")


def test_labels_are_recoverable_from_text():
    onto, splits = generate_synthetic(SyntheticConfig(n_dialogues=200, seed=4))
    n = 0
    for d in splits["train"]:
        for t in d.turns:
            for slot, value in t.turn_label:
                assert _explained(t, slot, value), (t, slot, value)
                n += 1
    assert n > 300


def test_template_families_can_be_disabled():
    _, splits = generate_synthetic(SyntheticConfig(n_dialogues=80, templates=("inform",),
                                                   seed=2))
    for d in splits["train"]:
        for t in d.turns:
            assert not t.requests
            assert not t.system_acts or t.system_acts[0][0] in ("request", "inform")


def test_asr_lists():
    _, splits = generate_synthetic(SyntheticConfig(n_dialogues=5, asr_nbest=3, seed=1))
    t = splits["train"][0].turns[0]
    assert len(t.asr) == 3 and t.asr[0][0] == t.transcript
    assert abs(sum(c for _, c in t.asr) - 1.0) < 1e-5


@pytest.mark.parametrize("bad", [{"n_dialogues": 0}, {"min_turns": 3, "max_turns": 2},
                                 {"skew": -1.0}, {"slots": {"food": 0}},
                                 {"templates": ("inform", "poetry")}])
def test_synthetic_config_validation(bad):
    with pytest.raises(ValueError):
        SyntheticConfig(**bad).validate()


def test_synthetic_config_from_dict():
    cfg = synthetic_config_from_dict({"n_dialogues": 7, "templates": ["inform"]})
    assert cfg.n_dialogues == 7 and cfg.templates == ("inform",)
    with pytest.raises(ValueError, match="unknown"):
        synthetic_config_from_dict({"dialogs": 3})
