"""Semantic categories for state variables and label-driven suppression.

Labels come from three sources with fixed trust: explicit labels in the IR
beat model predictions from a sidecar file, which beat the built-in
heuristics.  Heuristics recognize the usage shapes that identify the most
common categories; everything else stays Unknown and unlabeled.

The sidecar is line oriented, one record per line:

    <contract> <slot=N|mapping=N> <Category> <confidence>
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import CALL_OPCODES, Diagnostic, SEMANTIC_CATEGORIES


class PredictionError(Exception):
    """Raised for malformed sidecar records."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Prediction:
    contract: str
    slot: int
    kind_hint: str | None     # "mapping" when written as mapping=N
    category: str
    confidence: float
    source: str               # "heuristic" | "model"


_SOURCE_PRIORITY = {"heuristic": 1, "model": 2, "ir": 3}
HEURISTIC_CONFIDENCE = 0.5


def _deriving_values(fn, roots):
    """Forward def-use closure from the given value names."""
    derived = set(roots)
    changed = True
    while changed:
        changed = False
        for blk in fn.blocks.values():
            for instr in blk.instructions:
                if instr.result and instr.result not in derived:
                    if any(isinstance(op, str) and op in derived
                           for op in instr.operands):
                        derived.add(instr.result)
                        changed = True
    return derived


def _results_of(fn, opcode):
    out = []
    for blk in fn.blocks.values():
        for instr in blk.instructions:
            if instr.opcode == opcode and instr.result:
                out.append(instr.result)
    return out


def _instructions(fn):
    for blk in fn.sorted_blocks():
        for instr in blk.instructions:
            yield blk, instr


def label_heuristic(universe):
    """Deterministic usage-pattern labeler; confidence is fixed and low so
    any decent model prediction wins."""
    predictions = []
    for contract in universe.sorted_contracts():
        for name in sorted(contract.state_vars,
                           key=lambda n: contract.state_vars[n].slot):
            sv = contract.state_vars[name]
            category = (_balance_mapping(universe, contract, sv)
                        or _time_uint(universe, contract, sv)
                        or _owner_address(universe, contract, sv)
                        or _nonreentrant_bool(universe, contract, sv)
                        or "Unknown")
            predictions.append(Prediction(
                contract=contract.name, slot=sv.slot,
                kind_hint="mapping" if sv.kind == "mapping" else None,
                category=category, confidence=HEURISTIC_CONFIDENCE,
                source="heuristic"))
    return predictions


def _balance_mapping(universe, contract, sv):
    if sv.kind != "mapping":
        return None
    for fn in contract.functions.values():
        if fn.visibility != "public":
            continue
        callvalue = _results_of(fn, "CALLVALUE")
        if not callvalue:
            continue
        derived = _deriving_values(fn, callvalue)
        for _, instr in _instructions(fn):
            if instr.opcode == "SSTORE" and instr.state_ref == sv.name:
                stored = instr.operands[-1]
                if isinstance(stored, str) and stored in derived:
                    return "BalanceMapping"
    return None


def _comparison_pairs(fn):
    for _, instr in _instructions(fn):
        if instr.opcode in ("LT", "GT", "EQ"):
            yield instr


def _time_uint(universe, contract, sv):
    if sv.kind != "scalar":
        return None
    for fn in contract.functions.values():
        loads = [i.result for _, i in _instructions(fn)
                 if i.opcode == "SLOAD" and i.state_ref == sv.name and i.result]
        if not loads:
            continue
        time_derived = _deriving_values(
            fn, _results_of(fn, "TIMESTAMP") + _results_of(fn, "NUMBER"))
        load_derived = _deriving_values(fn, loads)
        for cmp_instr in _comparison_pairs(fn):
            ops = [op for op in cmp_instr.operands if isinstance(op, str)]
            if any(o in time_derived for o in ops) and \
                    any(o in load_derived for o in ops):
                return "TimeUint"
    return None


def _owner_address(universe, contract, sv):
    from .graphs import straight_reverts
    if sv.kind != "scalar":
        return None
    for fn in contract.functions.values():
        loads = [i.result for _, i in _instructions(fn)
                 if i.opcode == "SLOAD" and i.state_ref == sv.name and i.result]
        if not loads:
            continue
        caller_derived = _deriving_values(fn, _results_of(fn, "CALLER"))
        load_set = set(loads)
        for cmp_instr in _comparison_pairs(fn):
            if cmp_instr.opcode != "EQ":
                continue
            ops = [op for op in cmp_instr.operands if isinstance(op, str)]
            if not (any(o in caller_derived for o in ops)
                    and any(o in load_set for o in ops)):
                continue
            guard = _deriving_values(fn, [cmp_instr.result]) if cmp_instr.result else set()
            for _, instr in _instructions(fn):
                if instr.opcode == "JUMPI" and instr.operands \
                        and instr.operands[0] in guard:
                    if any(straight_reverts(fn, tgt) for tgt in instr.targets):
                        return "OwnerAddress"
    return None


def _nonreentrant_bool(universe, contract, sv):
    if sv.kind != "scalar":
        return None
    for fn in contract.functions.values():
        stores = []
        calls = []
        order = 0
        for _, instr in _instructions(fn):
            order += 1
            if instr.opcode == "SSTORE" and instr.state_ref == sv.name:
                if isinstance(instr.operands[-1], int):
                    stores.append(order)
            elif instr.opcode in CALL_OPCODES:
                calls.append(order)
        for call_pos in calls:
            if any(s < call_pos for s in stores) and \
                    any(s > call_pos for s in stores):
                return "NonreentrantBool"
    return None


def parse_predictions(text):
    """Parse a sidecar file into Prediction records."""
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise PredictionError(no, "expected: <contract> <slot-spec> <category> <confidence>")
        contract, slot_spec, category, conf_src = parts
        if "=" not in slot_spec:
            raise PredictionError(no, f"bad slot spec {slot_spec!r}")
        key, _, value = slot_spec.partition("=")
        if key not in ("slot", "mapping") or not value.isdigit():
            raise PredictionError(no, f"bad slot spec {slot_spec!r}")
        if category not in SEMANTIC_CATEGORIES:
            raise PredictionError(no, f"unknown category {category!r}")
        try:
            confidence = float(conf_src)
        except ValueError:
            raise PredictionError(no, f"bad confidence {conf_src!r}") from None
        if not 0.0 <= confidence <= 1.0:
            raise PredictionError(no, f"confidence {confidence} out of range")
        out.append(Prediction(
            contract=contract, slot=int(value),
            kind_hint="mapping" if key == "mapping" else None,
            category=category, confidence=confidence, source="model"))
    return out


def apply_labels(universe, predictions, confidence_threshold=0.8):
    """Resolve each state variable's label from the competing sources.

    Model records below the confidence threshold are ignored.  Among the
    surviving candidates the highest confidence wins, source priority
    breaking ties, with explicit IR labels carrying confidence 1.  Unknown
    never materializes as a stored label.  Idempotent.
    """
    diagnostics = []
    candidates = {}
    for pred in predictions:
        contract = universe.contracts.get(pred.contract)
        sv = contract.state_var_by_slot(pred.slot) if contract else None
        if sv is None or (pred.kind_hint == "mapping" and sv.kind != "mapping"):
            diagnostics.append(Diagnostic(
                "unresolvable-slot",
                f"no state variable for {pred.contract} slot={pred.slot}"
                + (f" kind={pred.kind_hint}" if pred.kind_hint else ""),
                f"{pred.contract}.slot{pred.slot}"))
            continue
        if pred.source == "model" and pred.confidence < confidence_threshold:
            continue
        key = (pred.contract, sv.name)
        candidates.setdefault(key, []).append(pred)

    for contract in universe.sorted_contracts():
        for name in sorted(contract.state_vars):
            sv = contract.state_vars[name]
            ranked = []
            if sv.label_source == "ir" and sv.semantic_label:
                ranked.append((1.0, _SOURCE_PRIORITY["ir"], sv.semantic_label, "ir"))
            for pred in candidates.get((contract.name, name), ()):
                ranked.append((pred.confidence, _SOURCE_PRIORITY[pred.source],
                               pred.category, pred.source))
            if not ranked:
                continue
            ranked.sort(reverse=True)
            confidence, _, category, source = ranked[0]
            if category == "Unknown":
                if sv.label_source != "ir":
                    sv.semantic_label = None
                    sv.label_source = None
                continue
            sv.semantic_label = category
            sv.label_source = source
    return diagnostics


def ingest_predictions(universe, path, confidence_threshold=0.8):
    """Read a sidecar file and apply its labels; returns diagnostics."""
    with open(path) as fh:
        predictions = parse_predictions(fh.read())
    return apply_labels(universe, predictions, confidence_threshold)


def suppress_by_semantics(universe, findings, suppression_rules):
    """Partition findings into (kept, suppressed); suppressed ones carry the
    matching rule id and the downgraded severity."""
    kept = []
    suppressed = []
    for finding in findings:
        rule_id = overflow_suppression_rule(universe, finding.indicator,
                                            suppression_rules) \
            if finding.indicator is not None else None
        if rule_id is None:
            kept.append(finding)
        else:
            finding.severity = "suppressed"
            finding.suppressed_by = rule_id
            suppressed.append(finding)
    return kept, suppressed


def overflow_suppression_rule(universe, indicator, suppression_rules):
    """Return the id of the first suppression rule matching this Overflow
    indicator, or None.  A rule matches when every operand of the flagged
    arithmetic is the result of loading a state variable whose label is in
    the rule's allowed set."""
    if indicator.rule != "Overflow":
        return None
    contract_name, fn_name, label = indicator.block.rsplit(".", 2)
    fn = universe.contracts[contract_name].functions[fn_name]
    blk = fn.blocks[label]
    target = None
    for instr in blk.instructions:
        if instr.iid == indicator.span[0] and instr.opcode in ("ADD", "SUB", "MUL"):
            target = instr
    if target is None:
        return None

    defs = {}
    for b in fn.blocks.values():
        for instr in b.instructions:
            if instr.result:
                defs[instr.result] = instr

    for idx, rule in enumerate(suppression_rules):
        if rule.get("rule") != "Overflow":
            continue
        allowed = set(rule.get("operand_labels", ()))
        ok = bool(target.operands)
        for op in target.operands:
            if not isinstance(op, str):
                ok = False
                break
            definition = defs.get(op)
            if definition is None or definition.opcode != "SLOAD":
                ok = False
                break
            sv = universe.contracts[contract_name].state_vars[definition.state_ref]
            if sv.semantic_label not in allowed:
                ok = False
                break
        if ok:
            return f"semantic-{idx}:" + "|".join(sorted(allowed))
    return None
