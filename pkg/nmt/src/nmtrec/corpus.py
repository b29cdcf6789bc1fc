"""Synthetic training corpus of decompiled-style functions.

Each sample is one function rendered as IR-flavored tokens with anonymous
`stor_N` / `map_N` storage identifiers, plus the occurrence positions and
the gold category of every storage identifier.  Records travel as JSON
lines.  Splits partition by contract name so no contract straddles sets.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

CATEGORIES = [
    "TimeUint", "BalanceMapping", "OwnerAddress", "AmountUint",
    "SupplyUint", "NonreentrantBool", "AllowanceMapping", "PausedBool",
]


@dataclass
class Sample:
    contract: str
    function: str
    tokens: list
    var_names: list        # statevar surface names, one per predicted slot
    occurrences: list      # list of index lists, aligned with var_names
    labels: list           # category names, aligned with var_names
    slots: list = field(default_factory=list)
    kinds: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "contract": self.contract, "function": self.function,
            "tokens": self.tokens, "var_names": self.var_names,
            "occurrences": self.occurrences, "labels": self.labels,
            "slots": self.slots, "kinds": self.kinds}, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(**d)


def _lines_for(category, var, rng):
    """IR-shaped token lines whose structure identifies the category."""
    t = rng.randrange(4)
    if category == "TimeUint":
        return [f"v{t} = TIMESTAMP",
                f"v{t+1} = SLOAD {var}",
                f"v{t+2} = GT v{t} v{t+1}",
                f"JUMPI v{t+2} b1 b2"]
    if category == "BalanceMapping":
        return [f"v{t} = CALLER",
                f"v{t+1} = SLOAD {var} v{t}",
                f"v{t+2} = CALLVALUE",
                f"v{t+3} = ADD v{t+1} v{t+2}",
                f"SSTORE {var} v{t} v{t+3}"]
    if category == "OwnerAddress":
        return [f"v{t} = CALLER",
                f"v{t+1} = SLOAD {var}",
                f"v{t+2} = EQ v{t} v{t+1}",
                f"JUMPI v{t+2} b1 b2",
                "block b2", "REVERT"]
    if category == "AmountUint":
        return [f"v{t} = CALLDATALOAD 4",
                f"v{t+1} = SLOAD {var}",
                f"v{t+2} = ADD v{t+1} v{t}",
                f"SSTORE {var} v{t+2}"]
    if category == "SupplyUint":
        return [f"v{t} = SLOAD {var}",
                f"v{t+1} = CALLDATALOAD 4",
                f"v{t+2} = SUB v{t} v{t+1}",
                f"SSTORE {var} v{t+2}"]
    if category == "NonreentrantBool":
        return [f"v{t} = SLOAD {var}",
                f"v{t+1} = ISZERO v{t}",
                f"JUMPI v{t+1} b1 b2",
                f"SSTORE {var} 1",
                f"v{t+2} = CALLVALUECALL 0 ?",
                f"SSTORE {var} 0"]
    if category == "AllowanceMapping":
        return [f"v{t} = CALLER",
                f"v{t+1} = CALLDATALOAD 4",
                f"v{t+2} = SLOAD {var} v{t}",
                f"v{t+3} = SUB v{t+2} v{t+1}",
                f"SSTORE {var} v{t} v{t+3}"]
    if category == "PausedBool":
        return [f"v{t} = SLOAD {var}",
                f"JUMPI v{t} b2 b1",
                "block b2", "REVERT"]
    raise ValueError(category)


def generate_corpus(n_samples=50, seed=7, categories=None):
    rng = random.Random(seed)
    categories = categories or CATEGORIES
    samples = []
    n_contracts = max(10, n_samples // 3)
    for i in range(n_samples):
        contract = f"K{i % n_contracts}"
        n_vars = rng.randint(1, 3)
        chosen = rng.sample(categories, k=min(n_vars, len(categories)))
        tokens = ["function", f"f{i}", "block", "b0"]
        var_names = []
        occurrences = []
        labels = []
        slots = []
        kinds = []
        for slot, category in enumerate(chosen):
            kind = "mapping" if category.endswith("Mapping") else "scalar"
            var = f"map_{slot}" if kind == "mapping" else f"stor_{slot}"
            for line in _lines_for(category, var, rng):
                tokens.extend(line.split())
            var_names.append(var)
            occurrences.append([])
            labels.append(category)
            slots.append(slot)
            kinds.append(kind)
        tokens.append("STOP")
        for vi, var in enumerate(var_names):
            occurrences[vi] = [p for p, tok in enumerate(tokens) if tok == var]
        samples.append(Sample(contract=contract, function=f"f{i}",
                              tokens=tokens, var_names=var_names,
                              occurrences=occurrences, labels=labels,
                              slots=slots, kinds=kinds))
    return samples


def write_corpus(samples, path):
    with open(path, "w") as fh:
        for s in samples:
            fh.write(s.to_json() + "\n")


def read_corpus(path):
    with open(path) as fh:
        return [Sample.from_json(line) for line in fh if line.strip()]


class DegenerateCorpus(Exception):
    pass


def split_by_contract(samples, seed=0, ratios=(8, 1, 1)):
    """Shuffle contract names and deal them 8:1:1; a contract's samples
    never land in two splits."""
    if not samples:
        raise DegenerateCorpus("no samples")
    contracts = sorted({s.contract for s in samples})
    rng = random.Random(seed)
    rng.shuffle(contracts)
    total = sum(ratios)
    n_train = max(1, round(len(contracts) * ratios[0] / total))
    n_valid = max(1, round(len(contracts) * ratios[1] / total)) \
        if len(contracts) > 2 else 0
    train_set = set(contracts[:n_train])
    valid_set = set(contracts[n_train:n_train + n_valid])
    test_set = set(contracts[n_train + n_valid:])
    buckets = {"train": [], "valid": [], "test": []}
    for s in samples:
        if s.contract in train_set:
            buckets["train"].append(s)
        elif s.contract in valid_set:
            buckets["valid"].append(s)
        else:
            buckets["test"].append(s)
    return buckets
