"""Tokenization, vocabularies, embedding tables and word dropout."""

import re
from collections import Counter

import numpy as np

from .tensor import Tensor, parameter, scale_rows, take, tensor

PAD = "<pad>"
UNK = "<unk>"

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*|[^\sa-z0-9]")


def tokenize(text):
    """Lowercase and split on whitespace and punctuation boundaries.

    Pre-tokenized input (a list of strings) is re-tokenized token by token so
    both forms normalize identically.
    """
    if not isinstance(text, str):
        text = " ".join(text)
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens=()):
        self.itos = [PAD, UNK]
        self.stoi = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @property
    def pad_index(self):
        return 0

    @property
    def unk_index(self):
        return 1

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def index(self, token):
        return self.stoi.get(token, 1)

    def encode(self, tokens):
        return [self.stoi.get(t, 1) for t in tokens]


def build_vocab(sequences, min_count=1, keep=()):
    """Count tokens over ``sequences`` (strings or token lists).

    Tokens seen at least ``min_count`` times are kept, as is everything in
    ``keep``. Order after the reserved entries is by descending frequency,
    ties broken alphabetically, so the result is independent of input order.
    """
    counts = Counter()
    n_seq = 0
    for seq in sequences:
        n_seq += 1
        counts.update(tokenize(seq))
    if n_seq == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = {t for t, c in counts.items() if c >= min_count}
    for seq in keep:
        kept.update(tokenize(seq))
    kept -= {PAD, UNK}
    ordered = sorted(kept, key=lambda t: (-counts.get(t, 0), t))
    return Vocabulary(ordered)


class EmbeddingTable:
    """|vocab| x d_emb lookup table whose padding row is pinned at zero."""

    def __init__(self, weight, trainable=True):
        w = np.array(weight, dtype=np.float64)
        w[0] = 0.0
        self.weight = parameter(w, name="embedding") if trainable else Tensor(w, name="embedding")
        self.trainable = trainable

    @property
    def dim(self):
        return self.weight.shape[1]

    def __len__(self):
        return self.weight.shape[0]

    @classmethod
    def random(cls, vocab_size, dim, rng, scale=0.1):
        return cls(rng.uniform(-scale, scale, size=(vocab_size, dim)), trainable=True)

    def zero_pad_grad(self, grad):
        grad[0] = 0.0
        return grad


def embed(tokens, table):
    """Rows of ``table`` for an index array of any shape."""
    weight = table.weight if isinstance(table, EmbeddingTable) else tensor(table)
    return take(weight, np.asarray(tokens, dtype=np.intp), axis=0)


def word_dropout(x, p, rng):
    """Zero whole embedding rows with probability ``p``; survivors are not rescaled."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"word dropout probability must be in [0, 1), got {p}")
    x = tensor(x)
    if p == 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape[:-1]) >= p).astype(np.float64)
    return scale_rows(x, keep[..., None])


# ------------------------------------------------------------ text format IO


def read_embedding_file(path):
    """Parse ``token f1 f2 ...`` lines; returns (tokens, matrix)."""
    tokens, rows = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            try:
                vec = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad float ({exc})") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            tokens.append(parts[0])
            rows.append(vec)
    if dim is None:
        raise ValueError(f"{path}: no embeddings found")
    return tokens, np.array(rows, dtype=np.float64)


def write_embedding_file(path, tokens, matrix):
    with open(path, "w", encoding="utf-8") as fh:
        for tok, row in zip(tokens, matrix):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_pretrained(paths, vocab, rng, scale=0.1):
    """Build a frozen table from one or more text files, stacked column-wise.

    Vocabulary tokens missing from a file get a uniform random block.
    """
    if isinstance(paths, str):
        paths = [paths]
    blocks = []
    for path in paths:
        toks, mat = read_embedding_file(path)
        lookup = dict(zip(toks, mat))
        block = rng.uniform(-scale, scale, size=(len(vocab), mat.shape[1]))
        for i, tok in enumerate(vocab.itos):
            if tok in lookup:
                block[i] = lookup[tok]
        blocks.append(block)
    return EmbeddingTable(np.hstack(blocks), trainable=False)
