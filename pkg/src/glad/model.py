"""The full tracker network: embeddings, encoder, scoring heads, checkpoints."""

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .encoder import Regularizer, encode_slots, encoder_parameters, encoder_tensors, init_encoder
from .scoring import UtteranceHead, score_actions, score_utterance, SlotValue
from .vocab import EmbeddingTable, Vocabulary, tokenize

CHECKPOINT_FORMAT = "glad-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    d_emb: int = 50
    hidden: int = 50  # per direction; encodings have 2 * hidden columns
    mode: str = "full"
    asr_confidence_weighting: bool = False

    @property
    def d_enc(self):
        return self.d_emb if self.mode == "no-lstm" else 2 * self.hidden


@dataclass
class Batch:
    """Index arrays for a set of turns; everything here is constant w.r.t. parameters."""

    utt_ids: np.ndarray      # (R, n) one row per utterance or ASR hypothesis
    utt_mask: np.ndarray
    agg: np.ndarray          # (B, R) hypothesis-to-turn summation weights
    act_ids: np.ndarray      # (A, m) every real action in the batch
    act_mask: np.ndarray
    act_index: np.ndarray    # (R, L + 1) rows into [actions..., sentinel]
    act_valid: np.ndarray

    @property
    def n_turns(self):
        return self.agg.shape[0]


def _pad(seqs, pad=0):
    width = max((len(s) for s in seqs), default=0)
    ids = np.full((len(seqs), max(width, 1)), pad, dtype=np.intp)
    mask = np.zeros(ids.shape, dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


class GladModel:
    def __init__(self, ontology, vocab, config=None, rng=None, embedding=None):
        self.config = config or ModelConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.ontology = ontology
        self.vocab = vocab
        cfg = self.config
        self.embedding = embedding or EmbeddingTable.random(len(vocab), cfg.d_emb, rng)
        if self.embedding.dim != cfg.d_emb:
            raise ValueError(f"embedding width {self.embedding.dim} != d_emb {cfg.d_emb}")
        self.sentinel = T.parameter(np.zeros(cfg.d_emb), "sentinel")
        self.encoder = init_encoder(rng, ontology.slots, cfg.d_emb, cfg.hidden, cfg.mode)
        S, d = len(ontology.slots), cfg.d_enc
        bound = 1.0 / np.sqrt(d)
        # per-slot heads, stacked in ontology.slots order
        self.head = UtteranceHead(
            T.parameter(rng.uniform(-bound, bound, size=(S, d)), "head.weight"),
            T.parameter(np.zeros(S), "head.bias"),
            T.parameter(np.ones(S), "head.action_weight"),
        )
        self.pairs = ontology.pairs()
        per_slot = [[self.token_ids(SlotValue(s, v).tokens) for v in ontology.values(s)]
                    for s in ontology.slots]
        v_max = max(len(v) for v in per_slot)
        width = max(len(t) for v in per_slot for t in v)
        self._value_ids = np.zeros((S, v_max, width), dtype=np.intp)
        self._value_mask = np.zeros((S, v_max, width), dtype=bool)
        self._value_mask[:, :, 0] = True  # filler rows score a lone <pad> and are dropped
        for i, seqs in enumerate(per_slot):
            ids, mask = _pad(seqs)
            self._value_ids[i, :len(seqs), :ids.shape[1]] = ids
            self._value_mask[i, :len(seqs)] = False
            self._value_mask[i, :len(seqs), :ids.shape[1]] = mask
        slot_pos = {s: i for i, s in enumerate(ontology.slots)}
        value_pos = {p: j for s, seqs in zip(ontology.slots, per_slot)
                     for j, p in enumerate((s, v) for v in ontology.values(s))}
        self._columns = np.array([slot_pos[p[0]] * v_max + value_pos[p] for p in self.pairs],
                                 dtype=np.intp)

    # ------------------------------------------------------------- params

    def _head_tensors(self):
        h = self.head
        return {t.name: t for t in (h.weight, h.bias, h.action_weight)}

    def parameters(self):
        """Trainable tensors by stable name."""
        out = {}
        if self.embedding.trainable:
            out["embedding"] = self.embedding.weight
        out["sentinel"] = self.sentinel
        out.update(encoder_parameters(self.encoder))
        out.update(self._head_tensors())
        return out

    def all_tensors(self):
        """Every tensor including frozen embeddings and pinned gates."""
        out = {"embedding": self.embedding.weight, "sentinel": self.sentinel}
        out.update(encoder_tensors(self.encoder))
        out.update(self._head_tensors())
        return out

    def snapshot(self):
        return {k: t.data.copy() for k, t in self.all_tensors().items()}

    def restore(self, snap):
        for k, t in self.all_tensors().items():
            t.data[...] = snap[k]

    # ------------------------------------------------------------- inputs

    def token_ids(self, tokens):
        if isinstance(tokens, str):
            tokens = tokenize(tokens)
        ids = self.vocab.encode(tokens)
        return ids or [self.vocab.unk_index]

    def embed_ids(self, ids):
        return T.take(self.embedding.weight, np.asarray(ids, dtype=np.intp), axis=0)

    def action_inputs(self, action_lists):
        """Embedded actions of all turns plus a trailing sentinel sequence."""
        seqs = [self.token_ids(a) for acts in action_lists for a in acts]
        ids, mask = _pad(seqs)
        return self._action_tensor(ids, mask)

    def _action_tensor(self, ids, mask):
        width = ids.shape[1]
        d = self.config.d_emb
        sent = T.reshape(self.sentinel, (1, 1, d))
        if width > 1:
            sent = T.concat([sent, T.Tensor(np.zeros((1, width - 1, d)))], axis=1)
        X = T.concat([self.embed_ids(ids), sent], axis=0) if len(ids) else sent
        sent_mask = np.zeros((1, width), dtype=bool)
        sent_mask[0, 0] = True
        return X, np.concatenate([mask, sent_mask])

    def prepare(self, turns, use_asr=True):
        """Turn a list of :class:`TurnInputs` into a :class:`Batch`."""
        utts, owners, weights = [], [], []
        for b, turn in enumerate(turns):
            if use_asr and turn.asr:
                for text, conf in turn.asr:
                    utts.append(self.token_ids(text))
                    owners.append(b)
                    weights.append(conf if self.config.asr_confidence_weighting else 1.0)
            else:
                utts.append(self.token_ids(turn.utterance))
                owners.append(b)
                weights.append(1.0)
        utt_ids, utt_mask = _pad(utts)
        agg = np.zeros((len(turns), len(utts)))
        agg[owners, np.arange(len(utts))] = weights

        act_seqs, starts = [], []
        for turn in turns:
            starts.append(len(act_seqs))
            act_seqs.extend(self.token_ids(a) for a in turn.actions)
        sentinel_row = len(act_seqs)
        act_ids, act_mask = _pad(act_seqs)
        width = 1 + max((len(t.actions) for t in turns), default=0)
        turn_index = np.full((len(turns), width), sentinel_row, dtype=np.intp)
        turn_valid = np.zeros((len(turns), width), dtype=bool)
        for b, turn in enumerate(turns):
            k = len(turn.actions)
            turn_index[b, :k] = np.arange(starts[b], starts[b] + k)
            turn_valid[b, :k + 1] = True
        owners = np.asarray(owners, dtype=np.intp)
        return Batch(utt_ids, utt_mask, agg, act_ids, act_mask,
                     turn_index[owners], turn_valid[owners])

    # ------------------------------------------------------------ forward

    def forward(self, batch, rng=None, dropout=0.0, word_dropout=0.0):
        """Pre-sigmoid scores ``(B, P)`` over ``self.pairs`` for every turn."""
        from .vocab import word_dropout as apply_word_dropout

        drop = Regularizer(rng, dropout if rng is not None else 0.0)
        enc = self.encoder
        head = self.head
        S = len(enc.slots)

        X_u = self.embed_ids(batch.utt_ids)
        if rng is not None and word_dropout > 0:
            X_u = apply_word_dropout(X_u, word_dropout, rng)
        out_u = encode_slots(drop(X_u), enc, batch.utt_mask, drop)

        X_a, a_mask = self._action_tensor(batch.act_ids, batch.act_mask)
        out_a = encode_slots(drop(X_a), enc, a_mask, drop)
        C = T.take(out_a.c, batch.act_index, axis=1)

        X_v = drop(self.embed_ids(self._value_ids))
        c_v = encode_slots(X_v, enc, self._value_mask, drop).c

        y_u = score_utterance(out_u.H, c_v, head.weight, head.bias, batch.utt_mask)
        y_a = score_actions(C, out_u.c, c_v, batch.act_valid)
        z = y_u + T.reshape(head.action_weight, (S, 1, 1)) * y_a       # (S, R, V)
        per_turn = T.matmul(T.Tensor(batch.agg), z)                     # (S, B, V)
        flat = T.reshape(T.swapaxes(per_turn, 0, 1), (batch.n_turns, -1))
        return T.take(flat, self._columns, axis=1)

    def predict_proba(self, turns, use_asr=True, batch_size=64):
        """Sigmoid scores ``(len(turns), P)`` with dropout off."""
        out = []
        for i in range(0, len(turns), batch_size):
            batch = self.prepare(turns[i:i + batch_size], use_asr=use_asr)
            out.append(T.sigmoid_array(self.forward(batch).data))
        if not out:
            return np.zeros((0, len(self.pairs)))
        return np.concatenate(out)

    # --------------------------------------------------------- checkpoints

    def save(self, path):
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "embedding_trainable": self.embedding.trainable,
            "vocab": self.vocab.itos,
            "ontology": self.ontology.to_dict(),
            "tensors": {k: list(t.shape) for k, t in self.all_tensors().items()},
        }
        arrays = {k: t.data for k, t in self.all_tensors().items()}
        arrays["__header__"] = np.frombuffer(
            # insertion order, not sorted: slot order fixes the stacked parameter layout
            json.dumps(header).encode("utf-8"), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path):
        from .data import Ontology

        with np.load(path) as npz:
            header = json.loads(bytes(npz["__header__"]).decode("utf-8"))
            if header.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: not a checkpoint")
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
            arrays = {k: npz[k] for k in header["tensors"]}
        vocab = Vocabulary(header["vocab"][2:])
        ontology = Ontology.from_dict(header["ontology"])
        config = ModelConfig(**header["config"])
        emb = EmbeddingTable(arrays["embedding"], trainable=header["embedding_trainable"])
        model = cls(ontology, vocab, config, np.random.default_rng(0), embedding=emb)
        model.restore(arrays)
        return model
