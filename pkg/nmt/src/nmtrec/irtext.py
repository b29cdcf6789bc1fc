"""Reader for the analyzer's textual IR, kept deliberately independent of
the analyzer package: the `.ir` grammar is a versioned external interface.

Functions become token streams in the same shape the synthetic corpus
uses.  State variable names are anonymized to `stor_N` / `map_N` /
`arr_N` by declared slot, the way decompiled identifiers look, and every
occurrence position is recorded per variable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Sample


class MalformedIR(Exception):
    pass


@dataclass
class IrStateVar:
    name: str
    slot: int
    kind: str


def _anon(kind, slot):
    prefix = {"scalar": "stor", "mapping": "map", "array": "arr"}[kind]
    return f"{prefix}_{slot}"


def tokenize_universe(text):
    """-> list of Samples (labels empty; inference input)."""
    samples = []
    contract = None
    state_vars = {}
    current = None

    def flush():
        nonlocal current
        if current is None:
            return
        tokens, names = current["tokens"], current["vars"]
        ordered = sorted(names, key=lambda n: state_vars[n].slot)
        var_names = [_anon(state_vars[n].kind, state_vars[n].slot)
                     for n in ordered]
        occurrences = [[i for i, t in enumerate(tokens) if t == v]
                       for v in var_names]
        samples.append(Sample(
            contract=contract, function=current["name"], tokens=tokens,
            var_names=var_names, occurrences=occurrences, labels=[],
            slots=[state_vars[n].slot for n in ordered],
            kinds=[state_vars[n].kind for n in ordered]))
        current = None

    lines = [l.split("#", 1)[0].strip() for l in text.splitlines()]
    lines = [l for l in lines if l]
    if not lines:
        return []
    if lines[0] != "ir-version 1":
        raise MalformedIR("expected 'ir-version 1' header")
    for line in lines[1:]:
        tokens = line.split()
        head = tokens[0]
        if head == "contract":
            flush()
            contract = tokens[1]
            state_vars = {}
        elif head == "statevar":
            attrs = dict(t.split("=", 1) for t in tokens[2:] if "=" in t)
            try:
                state_vars[tokens[1]] = IrStateVar(
                    tokens[1], int(attrs["slot"], 0), attrs["kind"])
            except (KeyError, ValueError) as exc:
                raise MalformedIR(f"bad statevar line {line!r}") from exc
        elif head == "function":
            flush()
            # header normalized to the corpus shape: visibility and the
            # parameter list carry no label signal
            current = {"name": tokens[1], "tokens": ["function", tokens[1]],
                       "vars": set()}
        elif current is not None:
            _rewrite(current, tokens, state_vars, append=True)
    flush()
    return samples


def _rewrite(current, tokens, state_vars, append=False):
    out = []
    for tok in tokens:
        base = tok[1:] if tok.startswith("@") else tok
        name = base.split(".", 1)[0] if "." in base else base
        if name in state_vars:
            sv = state_vars[name]
            current["vars"].add(name)
            out.append(_anon(sv.kind, sv.slot))
        else:
            out.append(tok)
    if append:
        current["tokens"].extend(out)
    else:
        current["tokens"] = out
