"""Ontologies, dialogue corpora and the seeded synthetic corpus generator.

File formats (UTF-8 JSON):

ontology::

    {"informable": {"food": ["thai", ...], "area": [...]},
     "requestable": ["address", "phone", ...]}

corpus::

    {"dialogues": [{"dialogue_id": "d0",
                    "turns": [{"system_acts": [["request", "(", "food", ")"]],
                               "transcript": "thai food please",
                               "asr": [["thai food please", 0.9], ...],
                               "turn_label": [["food", "thai"], ["request", "phone"]]}]}]}

``asr`` is optional. ``system_acts`` entries may also be plain strings, and
``transcript`` may be a token list; both are normalized on load.
"""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .scoring import TurnInputs
from .vocab import tokenize

REQUEST = "request"


class DataError(ValueError):
    pass


@dataclass
class Ontology:
    informable: dict
    requestable: list = field(default_factory=list)

    def __post_init__(self):
        self.informable = {s: list(vs) for s, vs in self.informable.items()}
        self.requestable = list(self.requestable)
        if REQUEST in self.informable:
            raise DataError(f"{REQUEST!r} is reserved for requestable values")
        for slot, values in list(self.informable.items()) + [(REQUEST, self.requestable)]:
            if slot != REQUEST and not values:
                raise DataError(f"slot {slot!r} has no values")
            dupes = [v for v, c in Counter(values).items() if c > 1]
            if dupes:
                raise DataError(f"slot {slot!r} has duplicate values {dupes}")

    @property
    def slots(self):
        """Model slots: informable slots in file order, then ``request`` if any."""
        return list(self.informable) + ([REQUEST] if self.requestable else [])

    def values(self, slot):
        return self.requestable if slot == REQUEST else self.informable[slot]

    def pairs(self):
        return [(s, v) for s in self.slots for v in self.values(s)]

    def __contains__(self, pair):
        slot, value = pair
        if slot == REQUEST:
            return value in self.requestable
        return slot in self.informable and value in self.informable[slot]

    def to_dict(self):
        return {"informable": self.informable, "requestable": self.requestable}

    @classmethod
    def from_dict(cls, doc):
        if "informable" in doc:
            return cls(doc["informable"], doc.get("requestable", []))
        if "values" in doc:  # {"slots": [...], "values": {slot: [...]}} layout
            values = dict(doc["values"])
            req = values.pop(REQUEST, [])
            return cls(values, req)
        raise DataError("ontology needs an 'informable' or 'values' field")


def load_ontology(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: top level must be an object")
    try:
        return Ontology.from_dict(doc)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    except (TypeError, AttributeError) as exc:
        raise DataError(f"{path}: malformed ontology ({exc})") from None


def save_ontology(ontology, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ontology.to_dict(), fh, indent=1)
        fh.write("\n")


# -------------------------------------------------------------------- corpus


@dataclass
class Turn:
    transcript: str
    system_acts: list = field(default_factory=list)
    turn_label: list = field(default_factory=list)
    asr: list | None = None

    @property
    def goal(self):
        """Informable part of the label; a later entry for a slot wins."""
        return {s: v for s, v in self.turn_label if s != REQUEST}

    @property
    def requests(self):
        return {v for s, v in self.turn_label if s == REQUEST}

    def inputs(self):
        asr = None if self.asr is None else [(tokenize(t), c) for t, c in self.asr]
        return TurnInputs(tokenize(self.transcript), [list(a) for a in self.system_acts], asr)

    def to_dict(self):
        d = {"system_acts": [list(a) for a in self.system_acts],
             "transcript": self.transcript,
             "turn_label": [list(p) for p in self.turn_label]}
        if self.asr is not None:
            d["asr"] = [[t, c] for t, c in self.asr]
        return d


@dataclass
class Dialogue:
    dialogue_id: str
    turns: list = field(default_factory=list)

    def to_dict(self):
        return {"dialogue_id": self.dialogue_id, "turns": [t.to_dict() for t in self.turns]}


def _norm_act(act):
    if isinstance(act, str):
        return tokenize(act)
    if isinstance(act, (list, tuple)) and len(act) == 2 and all(isinstance(a, str) for a in act) \
            and not any(t in ("(", ")", "=") for t in act):
        # [slot, value] pairs in some preprocessed dumps mean "confirm ( slot = value )"
        slot, value = act
        if value:
            return ["confirm", "("] + tokenize(slot) + ["="] + tokenize(value) + [")"]
        return ["request", "("] + tokenize(slot) + [")"]
    return tokenize(list(act))


def parse_corpus(doc, ontology, source="<corpus>"):
    raw = doc["dialogues"] if isinstance(doc, dict) else doc
    dialogues = []
    for di, d in enumerate(raw):
        did = str(d.get("dialogue_id", d.get("dialogue_idx", di)))
        turns = []
        for ti, t in enumerate(d["turns"]):
            where = f"{source}: dialogue {did} turn {ti}"
            transcript = t.get("transcript", "")
            if not isinstance(transcript, str):
                transcript = " ".join(transcript)
            label = []
            for pair in t.get("turn_label", []):
                if len(pair) != 2:
                    raise DataError(f"{where}: label entry {pair!r} is not a [slot, value] pair")
                pair = (str(pair[0]), str(pair[1]))
                if pair not in ontology:
                    raise DataError(f"{where}: unknown slot-value {pair[0]}={pair[1]}")
                label.append(pair)
            asr = t.get("asr")
            if asr is not None:
                asr = [(h if isinstance(h, str) else " ".join(h), float(c)) for h, c in asr]
            turns.append(Turn(transcript, [_norm_act(a) for a in t.get("system_acts", [])],
                              label, asr))
        dialogues.append(Dialogue(did, turns))
    return dialogues


def load_corpus(path, ontology):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_corpus(doc, ontology, source=str(path))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed corpus ({exc!r})") from None


def dump_corpus(dialogues):
    return json.dumps({"dialogues": [d.to_dict() for d in dialogues]}, indent=1) + "\n"


def save_corpus(dialogues, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_corpus(dialogues))


def all_turns(dialogues):
    return [t for d in dialogues for t in d.turns]


def corpus_sequences(dialogues, ontology):
    """Every text sequence the vocabulary must cover."""
    for d in dialogues:
        for t in d.turns:
            yield t.transcript
            for a in t.system_acts:
                yield a
            for h, _ in t.asr or ():
                yield h
    for s in ontology.slots:
        yield s
        for v in ontology.values(s):
            yield v
    yield "="


def pair_counts(dialogues, ontology):
    """Training-occurrence count of every ontology pair (turn-label mentions)."""
    counts = Counter()
    for t in all_turns(dialogues):
        for pair in set(t.turn_label):
            counts[pair] += 1
    return {p: counts.get(p, 0) for p in ontology.pairs()}


def gold_joint_goals(dialogue):
    goals, joint = [], {}
    for t in dialogue.turns:
        joint = {**joint, **t.goal}
        goals.append(joint)
    return goals


def corpus_stats(dialogues, ontology, rare_below=20):
    counts = pair_counts(dialogues, ontology)
    informable = [p for p in counts if p[0] != REQUEST]
    rare = {p for p in informable if counts[p] < rare_below}
    turns = all_turns(dialogues)
    rare_turns = 0
    for d in dialogues:
        for goal in gold_joint_goals(d):
            if any(p in rare for p in goal.items()):
                rare_turns += 1
    n_pairs = len(counts)
    return {
        "dialogues": len(dialogues),
        "turns": len(turns),
        "pairs": n_pairs,
        "mean_count": float(np.mean(list(counts.values()))) if counts else 0.0,
        "rare_below": rare_below,
        "rare_pairs": sum(1 for c in counts.values() if c < rare_below),
        "rare_pair_fraction": (sum(1 for c in counts.values() if c < rare_below) / n_pairs
                               if n_pairs else 0.0),
        "turns_with_rare_joint_goal": rare_turns / len(turns) if turns else 0.0,
        "counts": {f"{s}={v}": c for (s, v), c in counts.items()},
    }


# ----------------------------------------------------------------- synthetic

FOODS = [
    "italian", "chinese", "indian", "thai", "french", "korean", "japanese",
    "spanish", "turkish", "greek", "mexican", "british", "vietnamese",
    "lebanese", "portuguese", "african", "european", "polynesian", "moroccan",
    "persian", "malaysian", "indonesian", "jamaican", "cuban", "brazilian",
    "german", "swiss", "belgian", "danish", "russian", "scandinavian",
    "australian", "caribbean", "tuscan", "catalan", "basque", "swedish",
    "hungarian", "austrian", "irish",
]
AREAS = ["centre", "north", "south", "east", "west"]
PRICES = ["cheap", "moderate", "expensive"]
REQUESTABLE = ["address", "phone", "postcode", "food", "area", "pricerange"]
BUILTIN_VALUES = {"food": FOODS, "area": AREAS, "pricerange": PRICES}

_SYLLABLES = ["ka", "lo", "mi", "ren", "tu", "sa", "vor", "qui", "zel", "pa", "nor", "di"]

INFORM_TEMPLATES = {
    "food": ["{v} food", "i want {v} food", "how about {v} food",
             "a restaurant serving {v} food", "i would like some {v} food"],
    "area": ["in the {v}", "in the {v} part of town", "somewhere in the {v}",
             "it should be in the {v} area"],
    "pricerange": ["a {v} restaurant", "something {v}", "in the {v} price range",
                   "it should be {v}"],
}
GENERIC_INFORM = ["{v} {slot}", "the {slot} should be {v}"]
DONTCARE_TEMPLATES = ["any {slot}", "i do not care about the {slot}", "any {slot} is fine"]
NEGATION_TEMPLATES = ["not {neg} , {pos} {slot} please", "i do not want {neg} , i want {pos}",
                      "no {neg} {slot} , {pos} instead"]
REQUEST_TEMPLATES = {
    "address": ["what is the address", "the address please", "can i have the address"],
    "phone": ["what is the phone number", "the phone number please", "their phone number"],
    "postcode": ["what is the post code", "the postcode please"],
    "food": ["what type of food do they serve", "what kind of food is it"],
    "area": ["what area is it in", "which part of town is it"],
    "pricerange": ["what is the price range", "how expensive is it"],
}
GENERIC_REQUEST = ["what is the {v}", "the {v} please"]
AFFIRM = ["yes", "yes please", "that is right", "yeah"]
DENY = ["no", "no thanks"]
PREFIXES = ["", "", "hello ,", "i need a restaurant", "hi i am looking for a place to eat"]
CLOSINGS = ["thank you goodbye", "thanks", "okay bye"]

TEMPLATE_FAMILIES = ("inform", "negation", "dontcare", "request", "confirm", "offer")


@dataclass
class SyntheticConfig:
    n_dialogues: int = 500
    n_dev: int = 100
    n_test: int = 100
    min_turns: int = 1
    max_turns: int = 4
    slots: dict = field(default_factory=lambda: {"food": 24, "area": 5, "pricerange": 3})
    requestable: list = field(default_factory=lambda: list(REQUESTABLE))
    dontcare: bool = True
    skew: float = 1.5
    p_negation: float = 0.15
    p_confirm: float = 0.25
    p_offer: float = 0.1
    p_request: float = 0.35
    asr_nbest: int = 0
    asr_drop: float = 0.15
    templates: tuple = TEMPLATE_FAMILIES
    seed: int = 0

    def validate(self):
        if self.n_dialogues <= 0:
            raise ValueError("n_dialogues must be positive")
        if self.n_dev < 0 or self.n_test < 0:
            raise ValueError("split sizes must be non-negative")
        if not 1 <= self.min_turns <= self.max_turns:
            raise ValueError("need 1 <= min_turns <= max_turns")
        if not self.slots or any(n < 1 for n in self.slots.values()):
            raise ValueError("every slot needs at least one value")
        if self.skew < 0:
            raise ValueError("skew must be non-negative")
        unknown = set(self.templates) - set(TEMPLATE_FAMILIES)
        if unknown:
            raise ValueError(f"unknown template families {sorted(unknown)}")
        return self


def _pseudo_words(slot, n, taken):
    words = []
    i = 0
    while len(words) < n:
        a, b = divmod(i, len(_SYLLABLES))
        w = _SYLLABLES[b] + _SYLLABLES[(a * 5 + b + len(slot)) % len(_SYLLABLES)] + \
            _SYLLABLES[a % len(_SYLLABLES)]
        i += 1
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def synthetic_ontology(config):
    taken = set()
    informable = {}
    for slot, n in config.slots.items():
        builtin = [v for v in BUILTIN_VALUES.get(slot, []) if v not in taken][:n]
        taken.update(builtin)
        values = builtin + _pseudo_words(slot, n - len(builtin), taken)
        if config.dontcare:
            values.append("dontcare")
        informable[slot] = values
    return Ontology(informable, list(config.requestable))


class _Sampler:
    """Zipf-like value sampler: rank r has weight (r + 1) ** -skew."""

    def __init__(self, ontology, skew, rng):
        self.rng = rng
        self.ontology = ontology
        self.probs = {}
        for slot, values in ontology.informable.items():
            real = [v for v in values if v != "dontcare"]
            w = (np.arange(len(real)) + 1.0) ** -skew
            self.probs[slot] = (real, w / w.sum())

    def value(self, slot, exclude=None):
        real, p = self.probs[slot]
        if exclude is not None and len(real) > 1:
            keep = [i for i, v in enumerate(real) if v != exclude]
            q = p[keep] / p[keep].sum()
            return real[keep[self.rng.choice(len(keep), p=q)]]
        return real[self.rng.choice(len(real), p=p)]


def _choice(rng, items):
    return items[rng.integers(len(items))]


def _slot_phrase(slot):
    return " ".join(tokenize(slot))


def _realize_inform(slot, value, rng):
    if value == "dontcare":
        return _choice(rng, DONTCARE_TEMPLATES).format(slot=_slot_phrase(slot))
    pool = INFORM_TEMPLATES.get(slot, GENERIC_INFORM)
    return _choice(rng, pool).format(v=value, slot=_slot_phrase(slot))


def _realize_request(value, rng):
    pool = REQUEST_TEMPLATES.get(value, GENERIC_REQUEST)
    return _choice(rng, pool).format(v=" ".join(tokenize(value)))


def _act(*tokens):
    return [t for part in tokens for t in tokenize(part)]


def _user_turn(cfg, onto, sampler, rng, pending, joint):
    """Sample one user turn given the system's previous acts."""
    fam = set(cfg.templates)
    slots = list(onto.informable)
    label, phrases = [], []
    kind, payload = pending

    if kind == "confirm":
        slot, value = payload
        if rng.random() < 0.8:
            label.append((slot, value))
            phrases.append(_choice(rng, AFFIRM))
        else:
            other = sampler.value(slot, exclude=value)
            label.append((slot, other))
            phrases.append(f"{_choice(rng, DENY)} , {_realize_inform(slot, other, rng)}")
    elif kind == "offer":
        if rng.random() < 0.8:
            for v in payload:
                label.append((REQUEST, v))
            phrases.append(_choice(rng, AFFIRM))
        else:
            phrases.append(_choice(rng, DENY))
    else:
        if kind == "ask" and rng.random() < 0.7:
            chosen = [payload]
        else:
            k = rng.choice([0, 1, 1, 2, 2, 3])
            chosen = list(rng.permutation(slots)[:k]) if "inform" in fam else []
        for slot in chosen:
            slot = str(slot)
            if cfg.dontcare and "dontcare" in fam and rng.random() < 0.08:
                value = "dontcare"
                text = _realize_inform(slot, value, rng)
            elif "negation" in fam and len(sampler.probs[slot][0]) > 1 and \
                    rng.random() < cfg.p_negation:
                value = sampler.value(slot)
                neg = sampler.value(slot, exclude=value)
                text = _choice(rng, NEGATION_TEMPLATES).format(
                    neg=neg, pos=value, slot=_slot_phrase(slot))
            else:
                value = sampler.value(slot)
                text = _realize_inform(slot, value, rng)
            label.append((slot, value))
            phrases.append(text)

    if "request" in fam and onto.requestable and rng.random() < cfg.p_request:
        n_req = 1 if rng.random() < 0.7 else 2
        for v in rng.permutation(onto.requestable)[:n_req]:
            v = str(v)
            if (REQUEST, v) not in label:
                label.append((REQUEST, v))
                phrases.append(_realize_request(v, rng))
    if not phrases:
        phrases.append(_choice(rng, CLOSINGS))
    if kind == "none" and label and rng.random() < 0.5:
        prefix = _choice(rng, PREFIXES)
        if prefix:
            phrases.insert(0, prefix)
    return " ".join(" , ".join(phrases).split()), label


def _system_turn(cfg, onto, sampler, rng, joint):
    """Acts the system emits after a user turn, and what they prime."""
    fam = set(cfg.templates)
    r = rng.random()
    if "confirm" in fam and r < cfg.p_confirm:
        slot = str(_choice(rng, list(onto.informable)))
        value = sampler.value(slot)
        return [_act("confirm (", slot, "=", value, ")")], ("confirm", (slot, value))
    r -= cfg.p_confirm
    if "offer" in fam and onto.requestable and r < cfg.p_offer:
        k = 1 if rng.random() < 0.5 else 2
        vals = [str(v) for v in rng.permutation(onto.requestable)[:k]]
        return [_act("offer (", v, ")") for v in vals], ("offer", vals)
    open_slots = [s for s in onto.informable if s not in joint]
    if open_slots and rng.random() < 0.6:
        slot = str(_choice(rng, open_slots))
        return [_act("request (", slot, ")")], ("ask", slot)
    if joint:
        return [_act("inform ( name = restaurant )")], ("none", None)
    return [], ("none", None)


def _asr(text, cfg, rng):
    words = text.split()
    hyps = []
    for k in range(cfg.asr_nbest):
        rate = cfg.asr_drop * k / max(cfg.asr_nbest - 1, 1) if k else 0.0
        kept = [w for w in words if rng.random() >= rate] or words[:1]
        hyps.append(" ".join(kept))
    conf = np.exp(-np.arange(cfg.asr_nbest, dtype=float))
    conf /= conf.sum()
    return [(h, round(float(c), 6)) for h, c in zip(hyps, conf)]


def _dialogue(cfg, onto, sampler, rng, did):
    n_turns = int(rng.integers(cfg.min_turns, cfg.max_turns + 1))
    pending = ("none", None)
    acts = []
    joint = {}
    turns = []
    for _ in range(n_turns):
        text, label = _user_turn(cfg, onto, sampler, rng, pending, joint)
        asr = _asr(text, cfg, rng) if cfg.asr_nbest else None
        turns.append(Turn(text, acts, label, asr))
        joint = {**joint, **{s: v for s, v in label if s != REQUEST}}
        acts, pending = _system_turn(cfg, onto, sampler, rng, joint)
    return Dialogue(did, turns)


def generate_synthetic(config):
    """Return ``(ontology, {"train": [...], "dev": [...], "test": [...]})``.

    Generation is a pure function of ``config`` (including its seed).
    """
    config.validate()
    onto = synthetic_ontology(config)
    splits = {}
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    for (name, n), ss in zip((("train", config.n_dialogues), ("dev", config.n_dev),
                              ("test", config.n_test)), seeds):
        rng = np.random.default_rng(ss)
        sampler = _Sampler(onto, config.skew, rng)
        splits[name] = [_dialogue(config, onto, sampler, rng, f"{name}-{i}") for i in range(n)]
    return onto, splits


def synthetic_config_from_dict(doc):
    doc = dict(doc)
    if "templates" in doc:
        doc["templates"] = tuple(doc["templates"])
    known = SyntheticConfig.__dataclass_fields__
    unknown = set(doc) - set(known)
    if unknown:
        raise ValueError(f"unknown synthetic config fields {sorted(unknown)}")
    return SyntheticConfig(**doc)
