"""Prediction sidecar emission: the analyzer's ingestion format.

One line per state variable: `<contract> <slot=N|mapping=N> <Category>
<confidence>`, confidence being the best beam's probability for that
step.  A variable seen in several functions keeps its highest-confidence
prediction.
"""

from __future__ import annotations

from .beam import beam_search
from .irtext import tokenize_universe
from .model import EmptyOccurrenceSet
from .train import encode_sample


def predict_universe(model, bpe, categories, ir_text, width=3):
    """-> sorted sidecar lines for every state variable occurring in the IR."""
    best = {}
    for sample in tokenize_universe(ir_text):
        if not sample.var_names:
            continue
        ids, occ = encode_sample(bpe, sample, strict=False)
        H = model.encode(ids)
        try:
            pooled = [model.pool_occurrences(H, o) for o in occ]
        except EmptyOccurrenceSet:
            continue
        labels, _, step_probs = beam_search(model, H, pooled, width)
        for vi, (slot, kind) in enumerate(zip(sample.slots, sample.kinds)):
            key = (sample.contract, slot)
            record = (step_probs[vi], categories[labels[vi]], kind)
            if key not in best or record[0] > best[key][0]:
                best[key] = record

    lines = []
    for (contract, slot), (conf, category, kind) in sorted(best.items()):
        spec = f"mapping={slot}" if kind == "mapping" else f"slot={slot}"
        lines.append(f"{contract} {spec} {category} {conf:.4f}")
    return lines


def emit_predictions(model, bpe, categories, ir_text, out_path, width=3):
    lines = predict_universe(model, bpe, categories, ir_text, width)
    with open(out_path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")
    return lines
