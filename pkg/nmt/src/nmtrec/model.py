"""Encoder-decoder over subword token streams, predicting one semantic
category per state variable.

The encoder turns the token stream into per-position representations; the
positions where a state variable occurs are mean-pooled into one vector
per variable.  The decoder runs one step per variable: the step input is
the embedding of the previously predicted category plus that variable's
pooled vector plus a position term, attending causally over earlier steps
and by cross-attention over the encoder output.  A linear projection and
softmax give the category distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .autograd import Tensor, log_softmax, softmax

BOS = 0   # first decoder step sees the start-of-sequence label embedding


class EmptyOccurrenceSet(Exception):
    pass


class OOVToken(Exception):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    n_categories: int
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 128
    max_len: int = 512
    pooling: str = "mean"          # "mean" | "max"
    seed: int = 0

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _positional(max_len, dim):
    position = np.arange(max_len)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-np.log(10000.0) / dim))
    table = np.zeros((max_len, dim))
    table[:, 0::2] = np.sin(position * div)
    table[:, 1::2] = np.cos(position * div)
    return table


class Model:
    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.params = {}

        def weight(name, *shape, scale=0.02):
            self.params[name] = Tensor(rng.normal(0.0, scale, shape),
                                       requires_grad=True)

        def zeros(name, *shape):
            self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

        d, f = config.dim, config.ffn
        weight("tok_emb", config.vocab_size, d)
        weight("lab_emb", config.n_categories + 1, d)   # +1 for BOS
        for side, layers in (("enc", config.layers), ("dec", config.layers)):
            for i in range(layers):
                p = f"{side}{i}"
                for proj in ("q", "k", "v", "o"):
                    weight(f"{p}.att.{proj}", d, d)
                    zeros(f"{p}.att.{proj}b", d)
                if side == "dec":
                    for proj in ("q", "k", "v", "o"):
                        weight(f"{p}.cross.{proj}", d, d)
                        zeros(f"{p}.cross.{proj}b", d)
                weight(f"{p}.ffn.w1", d, f)
                zeros(f"{p}.ffn.b1", f)
                weight(f"{p}.ffn.w2", f, d)
                zeros(f"{p}.ffn.b2", d)
                for ln in ("ln1", "ln2", "ln3"):
                    self.params[f"{p}.{ln}.g"] = Tensor(np.ones(d),
                                                        requires_grad=True)
                    zeros(f"{p}.{ln}.b", d)
        weight("out.w", d, config.n_categories)
        zeros("out.b", config.n_categories)
        self._pos = _positional(config.max_len, d)

    # -- pieces -----------------------------------------------------------

    def _layernorm(self, x, prefix):
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        normed = centered / (var + 1e-5).sqrt()
        return normed * self.params[f"{prefix}.g"] + self.params[f"{prefix}.b"]

    def _attention(self, prefix, queries, keys_values, mask=None):
        cfg = self.config
        head_dim = cfg.dim // cfg.heads
        p = self.params

        def project(x, name):
            out = x @ p[f"{prefix}.{name}"] + p[f"{prefix}.{name}b"]
            t = out.shape[0]
            return out.reshape(t, cfg.heads, head_dim).transpose(1, 0, 2)

        q = project(queries, "q")
        k = project(keys_values, "k")
        v = project(keys_values, "v")
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / np.sqrt(head_dim))
        if mask is not None:
            scores = scores + Tensor(mask * -1e9)
        attn = softmax(scores, axis=-1)
        ctx = attn @ v
        t = queries.shape[0]
        merged = ctx.transpose(1, 0, 2).reshape(t, cfg.dim)
        return merged @ p[f"{prefix}.o"] + p[f"{prefix}.ob"]

    def _ffn(self, x, prefix):
        p = self.params
        hidden = (x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"]).tanh()
        return hidden @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]

    # -- encoder ------------------------------------------------------------

    def encode(self, token_ids, pad_mask=None):
        """token ids -> H with one row per position.

        `pad_mask` marks padding positions (1 = pad); padded rows are
        excluded from every attention so the real rows do not depend on
        their content.
        """
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.size == 0:
            raise OOVToken("empty token stream")
        if ids.max() >= self.config.vocab_size:
            raise OOVToken(f"token id {ids.max()} outside vocabulary")
        x = self.params["tok_emb"].gather_rows(ids) + Tensor(self._pos[:len(ids)])
        attn_mask = None
        if pad_mask is not None:
            attn_mask = np.broadcast_to(
                np.asarray(pad_mask, dtype=np.float64)[None, None, :],
                (self.config.heads, len(ids), len(ids)))
        for i in range(self.config.layers):
            p = f"enc{i}"
            x = x + self._attention(f"{p}.att", self._layernorm(x, f"{p}.ln1"),
                                    self._layernorm(x, f"{p}.ln1"), attn_mask)
            x = x + self._ffn(self._layernorm(x, f"{p}.ln2"), f"{p}.ffn")
        return x

    # -- pooling ---------------------------------------------------------------

    def pool_occurrences(self, H, indices):
        if len(indices) == 0:
            raise EmptyOccurrenceSet("state variable with no occurrences")
        rows = H.gather_rows(np.asarray(indices, dtype=np.int64))
        if self.config.pooling == "max":
            return _max_pool(rows)
        return rows.mean(axis=0)

    # -- decoder ------------------------------------------------------------------

    def _decode(self, H, pooled, prev_labels):
        """Decoder forward over `len(pooled)` steps; returns logits (T, C)."""
        cfg = self.config
        steps = len(pooled)
        lab_ids = np.asarray([BOS] + [l + 1 for l in prev_labels[:steps - 1]],
                             dtype=np.int64)
        lab = self.params["lab_emb"].gather_rows(lab_ids)
        stacked = _stack(pooled)
        x = lab + stacked + Tensor(self._pos[:steps])
        causal = np.triu(np.ones((steps, steps)), k=1)[None, :, :]
        causal = np.broadcast_to(causal, (cfg.heads, steps, steps))
        for i in range(cfg.layers):
            p = f"dec{i}"
            normed = self._layernorm(x, f"{p}.ln1")
            x = x + self._attention(f"{p}.att", normed, normed, causal)
            x = x + self._attention(f"{p}.cross",
                                    self._layernorm(x, f"{p}.ln2"), H)
            x = x + self._ffn(self._layernorm(x, f"{p}.ln3"), f"{p}.ffn")
        return x @ self.params["out.w"] + self.params["out.b"]

    def decode_step(self, H, pooled_prefix, prev_labels):
        """Distribution over categories for the step whose pooled vector is
        last in `pooled_prefix`, conditioned on the previous labels."""
        logits = self._decode(H, pooled_prefix, prev_labels)
        probs = softmax(logits, axis=-1)
        return probs.data[-1]

    def sequence_logits(self, H, pooled, gold_labels):
        """Teacher-forced logits for a whole label sequence."""
        return self._decode(H, pooled, list(gold_labels))

    def loss(self, token_ids, occurrence_sets, gold_labels, pad_mask=None):
        return self.loss_and_picks(token_ids, occurrence_sets, gold_labels,
                                   pad_mask)[0]

    def loss_and_picks(self, token_ids, occurrence_sets, gold_labels,
                       pad_mask=None):
        """Teacher-forced loss plus the argmax picks of the same pass."""
        H = self.encode(token_ids, pad_mask)
        pooled = [self.pool_occurrences(H, idx) for idx in occurrence_sets]
        logits = self.sequence_logits(H, pooled, gold_labels)
        logp = log_softmax(logits, axis=-1)
        onehot = np.zeros((len(gold_labels), self.config.n_categories))
        onehot[np.arange(len(gold_labels)), gold_labels] = 1.0
        picked = (logp * Tensor(onehot)).sum()
        loss = -picked * (1.0 / len(gold_labels))
        return loss, logits.data.argmax(axis=-1)

    def sequence_log_prob(self, token_ids, occurrence_sets, labels):
        """log P(Y|X) evaluated as one teacher-forced pass."""
        H = self.encode(token_ids)
        pooled = [self.pool_occurrences(H, idx) for idx in occurrence_sets]
        logits = self._decode(H, pooled, list(labels))
        logp = log_softmax(logits, axis=-1).data
        return float(sum(logp[t, labels[t]] for t in range(len(labels))))

    def trainable(self):
        return list(self.params.values())


def _stack(tensors):
    """Stack 1-D tensors into a 2-D tensor along a new first axis."""
    rows = [t.reshape(1, -1) for t in tensors]
    out = rows[0]
    for row in rows[1:]:
        out = _concat_rows(out, row)
    return out


def _concat_rows(a, b):
    data = np.concatenate([a.data, b.data], axis=0)
    na = a.shape[0]

    def backward(g):
        return (g[:na], g[na:])

    return Tensor._node(data, (a, b), backward)


def _max_pool(rows):
    data = rows.data
    pick = np.argmax(data, axis=0)
    cols = np.arange(data.shape[1])

    def backward(g):
        grad = np.zeros_like(data)
        grad[pick, cols] = g
        return (grad,)

    return Tensor._node(data[pick, cols], (rows,), backward)
