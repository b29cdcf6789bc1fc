"""Training: Adam over teacher-forced cross-entropy, checkpointing."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .bpe import Bpe
from .corpus import DegenerateCorpus, split_by_contract
from .model import Model, ModelConfig


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    vocab_size: int = 200
    seed: int = 0
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 128
    pooling: str = "mean"
    target_accuracy: float | None = None   # early stop once reached


class Adam:
    def __init__(self, params, config):
        self.params = params
        self.lr = config.lr
        self.beta1, self.beta2, self.eps = config.beta1, config.beta2, config.eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def encode_sample(bpe, sample, strict=True):
    """Subword-encode a sample's tokens; occurrence indices map onto the
    flattened subword positions of the occurring token."""
    ids = []
    spans = []
    for token in sample.tokens:
        piece_ids = bpe.encode_ids(token, strict=strict)
        spans.append((len(ids), len(ids) + len(piece_ids)))
        ids.extend(piece_ids)
    occ_positions = []
    for occurrence in sample.occurrences:
        positions = []
        for token_index in occurrence:
            lo, hi = spans[token_index]
            positions.extend(range(lo, hi))
        occ_positions.append(positions)
    return ids, occ_positions


def category_vocab(samples):
    return sorted({label for s in samples for label in s.labels})


def train(samples, config=None, categories=None, log=None):
    """-> (model, bpe, categories, history).  Token accuracy is the share
    of state variables whose teacher-forced argmax matches the gold label."""
    config = config or TrainConfig()
    usable = [s for s in samples if s.labels and s.var_names]
    if not usable:
        raise DegenerateCorpus("corpus has no labeled samples")
    categories = categories or category_vocab(usable)
    if len(categories) < 2:
        raise DegenerateCorpus("need at least two categories")
    cat_ids = {c: i for i, c in enumerate(categories)}

    bpe = Bpe.train([t for s in usable for t in s.tokens], config.vocab_size)
    encoded = []
    for s in usable:
        ids, occ = encode_sample(bpe, s)
        labels = [cat_ids[l] for l in s.labels]
        encoded.append((ids, occ, labels))

    model = Model(ModelConfig(
        vocab_size=bpe.vocab_size, n_categories=len(categories),
        dim=config.dim, layers=config.layers, heads=config.heads,
        ffn=config.ffn, pooling=config.pooling, seed=config.seed,
        max_len=max(512, max(len(ids) for ids, _, _ in encoded) + 1)))
    optimizer = Adam(model.trainable(), config)
    order = list(range(len(encoded)))
    rng = random.Random(config.seed)
    history = []
    for epoch in range(config.epochs):
        rng.shuffle(order)
        total_loss = 0.0
        correct = 0
        total = 0
        for idx in order:
            ids, occ, labels = encoded[idx]
            optimizer.zero_grad()
            loss, picks = model.loss_and_picks(ids, occ, labels)
            loss.backward()
            optimizer.step()
            total_loss += float(loss.data)
            correct += int((picks == np.asarray(labels)).sum())
            total += len(labels)
        accuracy = correct / total
        history.append((total_loss / len(encoded), accuracy))
        if log:
            log(f"epoch {epoch + 1}: loss {history[-1][0]:.4f} "
                f"acc {accuracy:.3f}")
        if config.target_accuracy is not None \
                and accuracy >= config.target_accuracy:
            break
    return model, bpe, categories, history


def token_accuracy(model, encoded):
    correct = 0
    total = 0
    for ids, occ, labels in encoded:
        H = model.encode(ids)
        pooled = [model.pool_occurrences(H, o) for o in occ]
        logits = model.sequence_logits(H, pooled, labels)
        picks = logits.data.argmax(axis=-1)
        correct += int((picks == np.asarray(labels)).sum())
        total += len(labels)
    return correct / total if total else 0.0


def save_checkpoint(directory, model, bpe, categories):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savez(directory / "params.npz",
             **{name: p.data for name, p in model.params.items()})
    (directory / "model.json").write_text(model.config.to_json())
    (directory / "bpe.json").write_text(bpe.to_json())
    (directory / "categories.json").write_text(
        json.dumps(categories, sort_keys=False))


def load_checkpoint(directory):
    directory = Path(directory)
    config = ModelConfig.from_json((directory / "model.json").read_text())
    model = Model(config)
    loaded = np.load(directory / "params.npz")
    for name, p in model.params.items():
        p.data = loaded[name]
    bpe = Bpe.from_json((directory / "bpe.json").read_text())
    categories = json.loads((directory / "categories.json").read_text())
    return model, bpe, categories


def split_corpus(samples, seed=0):
    return split_by_contract(samples, seed=seed)
