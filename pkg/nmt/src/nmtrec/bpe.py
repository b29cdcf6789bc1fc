"""Byte-pair encoding over whitespace-separated tokens.

Words end with an explicit end-of-word marker so merges never cross token
boundaries and decoding is the exact inverse of encoding.  Merge order is
deterministic: highest pair count first, lexicographically smallest pair
on ties.
"""

from __future__ import annotations

import json
from collections import Counter

EOW = "</w>"
UNK = "<unk>"


class VocabTooSmall(Exception):
    pass


class Bpe:
    def __init__(self, merges, alphabet):
        self.merges = [tuple(m) for m in merges]
        self.alphabet = sorted(alphabet)
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        pieces = list(self.alphabet)
        for a, b in self.merges:
            pieces.append(a + b)
        self.pieces = [UNK] + pieces
        self.piece_ids = {p: i for i, p in enumerate(self.pieces)}

    @property
    def vocab_size(self):
        return len(self.pieces)

    # -- training ------------------------------------------------------------

    @classmethod
    def train(cls, tokens, vocab_size):
        """Learn merges from an iterable of tokens until the vocabulary
        reaches `vocab_size` or no pair repeats."""
        words = Counter(tokens)
        alphabet = sorted({ch for w in words for ch in w} | {EOW})
        if vocab_size < len(alphabet) + 1:
            raise VocabTooSmall(
                f"vocab_size {vocab_size} below alphabet size {len(alphabet) + 1}")
        sequences = {w: tuple(w) + (EOW,) for w in words}
        merges = []
        while len(alphabet) + len(merges) + 1 < vocab_size:
            counts = Counter()
            for w, seq in sequences.items():
                n = words[w]
                for pair in zip(seq, seq[1:]):
                    counts[pair] += n
            repeated = [pair for pair, n in counts.items() if n >= 2]
            if not repeated:
                break
            pair = min(repeated, key=lambda p: (-counts[p], p))
            merges.append(pair)
            sequences = {w: _apply_merge(seq, pair)
                         for w, seq in sequences.items()}
        return cls(merges, alphabet)

    # -- coding ---------------------------------------------------------------

    def encode_token(self, token):
        seq = tuple(token) + (EOW,)
        while True:
            best_rank = None
            best_pair = None
            for pair in zip(seq, seq[1:]):
                rank = self.ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = pair
            if best_pair is None:
                return list(seq)
            seq = _apply_merge(seq, best_pair)

    def encode_ids(self, token, strict=True):
        """Piece ids for one token.  Strict coding raises on pieces outside
        the vocabulary; lenient coding maps them to the UNK piece, which is
        what inference on foreign text wants."""
        ids = []
        for piece in self.encode_token(token):
            piece_id = self.piece_ids.get(piece)
            if piece_id is None:
                if strict:
                    from .model import OOVToken
                    raise OOVToken(f"piece {piece!r} outside the vocabulary")
                piece_id = self.piece_ids[UNK]
            ids.append(piece_id)
        return ids

    def decode(self, pieces):
        text = "".join(pieces)
        return text[:-len(EOW)] if text.endswith(EOW) else text

    def decode_ids(self, ids):
        return self.decode([self.pieces[i] for i in ids])

    # -- persistence -------------------------------------------------------------

    def to_json(self):
        return json.dumps({"merges": self.merges, "alphabet": self.alphabet},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        return cls(payload["merges"], payload["alphabet"])


def _apply_merge(seq, pair):
    out = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and (seq[i], seq[i + 1]) == pair:
            out.append(seq[i] + seq[i + 1])
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return tuple(out)
