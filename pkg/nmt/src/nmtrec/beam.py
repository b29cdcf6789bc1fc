"""Beam search over category sequences."""

from __future__ import annotations

import math


def beam_search(model, H, pooled, width):
    """-> (labels, total_log_prob, per_step_probs) of the best beam.

    Width 1 is exactly greedy decoding.  Beams are scored by accumulated
    log probability; ties break on the label sequence for determinism.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    steps = len(pooled)
    beams = [([], 0.0, [])]           # labels, logprob, step probs
    for t in range(steps):
        expanded = []
        for labels, logprob, step_probs in beams:
            dist = model.decode_step(H, pooled[:t + 1], labels)
            for cat, p in enumerate(dist):
                lp = math.log(max(p, 1e-300))
                expanded.append((labels + [cat], logprob + lp,
                                 step_probs + [float(p)]))
        expanded.sort(key=lambda b: (-b[1], b[0]))
        beams = expanded[:width]
    return beams[0]


def greedy(model, H, pooled):
    labels = []
    probs = []
    total = 0.0
    for t in range(len(pooled)):
        dist = model.decode_step(H, pooled[:t + 1], labels)
        cat = int(dist.argmax())
        labels.append(cat)
        probs.append(float(dist[cat]))
        total += math.log(max(dist[cat], 1e-300))
    return labels, total, probs
