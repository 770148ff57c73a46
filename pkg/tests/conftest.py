import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from glad.data import Dialogue, Ontology, Turn, corpus_sequences  # noqa: E402
from glad.model import GladModel, ModelConfig  # noqa: E402
from glad.vocab import build_vocab  # noqa: E402


@pytest.fixture
def tiny_ontology():
    return Ontology({"food": ["thai", "french"], "area": ["north", "south"]}, ["phone"])


def example_dialogue():
    """Three-turn restaurant dialogue in the style of the running example."""
    return Dialogue("example", [
        Turn("Im looking for an expensive restaurant in the south part of town", [],
             [["pricerange", "expensive"], ["area", "south"]]),
        Turn("korean food please", [["request", "(", "food", ")"]], [["food", "korean"]]),
        Turn("what is the phone number and address",
             [["inform", "(", "name", "=", "kimchi", "house", ")"]],
             [["request", "phone"], ["request", "address"]]),
    ])


EXAMPLE_ONTOLOGY = {
    "informable": {"food": ["korean", "thai", "italian"],
                   "area": ["south", "north", "centre"],
                   "pricerange": ["expensive", "cheap"]},
    "requestable": ["phone", "address"],
}


def make_model(ontology, dialogues=(), mode="full", d_emb=4, hidden=3, seed=0, jitter=0.0):
    vocab = build_vocab(list(corpus_sequences(list(dialogues), ontology)) + ["the food please"])
    rng = np.random.default_rng(seed)
    model = GladModel(ontology, vocab, ModelConfig(d_emb=d_emb, hidden=hidden, mode=mode), rng)
    if jitter:
        for t in model.all_tensors().values():
            t.data[...] += rng.normal(scale=jitter, size=t.shape)
        model.embedding.weight.data[0] = 0.0
    return model


def example_corpus():
    """The running example plus a few variations so the slots are not constant."""
    extra = [
        Dialogue("v1", [
            Turn("i want a cheap restaurant in the north", [],
                 [["pricerange", "cheap"], ["area", "north"]]),
            Turn("thai food please", [["request", "(", "food", ")"]], [["food", "thai"]]),
        ]),
        Dialogue("v2", [
            Turn("italian food in the centre", [], [["food", "italian"], ["area", "centre"]]),
            Turn("what is the address", [["inform", "(", "name", "=", "da", "vinci", ")"]],
                 [["request", "address"]]),
        ]),
        Dialogue("v3", [
            Turn("korean food", [], [["food", "korean"]]),
            Turn("something expensive", [["request", "(", "pricerange", ")"]],
                 [["pricerange", "expensive"]]),
            Turn("the phone number please", [], [["request", "phone"]]),
        ]),
        Dialogue("v4", [
            Turn("a cheap place in the south", [], [["pricerange", "cheap"], ["area", "south"]]),
            Turn("thai", [["request", "(", "food", ")"]], [["food", "thai"]]),
        ]),
        Dialogue("v5", [
            Turn("expensive italian food", [], [["pricerange", "expensive"], ["food", "italian"]]),
            Turn("north part of town", [["request", "(", "area", ")"]], [["area", "north"]]),
        ]),
    ]
    return [example_dialogue()] + extra
