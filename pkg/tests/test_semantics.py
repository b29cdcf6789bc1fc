"""Heuristic labeling, sidecar ingestion, overflow suppression."""

import pytest

from support import load_fixture_text
from crossinspect.config import AnalysisConfig
from crossinspect.detect import detect_indicators
from crossinspect.ir import parse_ir
from crossinspect.semantics import (
    PredictionError,
    apply_labels,
    label_heuristic,
    overflow_suppression_rule,
    parse_predictions,
)

DEFAULT_RULES = AnalysisConfig().suppression_rules


def _by_name(universe, predictions):
    out = {}
    for p in predictions:
        contract = universe.contracts[p.contract]
        sv = contract.state_var_by_slot(p.slot)
        out[f"{p.contract}.{sv.name}"] = p.category
    return out


def test_heuristics_on_lock_fixture():
    universe = parse_ir(load_fixture_text("lock.ir"))
    cats = _by_name(universe, label_heuristic(universe))
    assert cats["Vault.deposits"] == "BalanceMapping"
    assert cats["Vault.deadline"] == "TimeUint"
    assert cats["Vault.owner"] == "OwnerAddress"
    assert cats["Vault.locked"] == "NonreentrantBool"
    assert cats["Vault.spare"] == "Unknown"


def test_heuristics_on_fig2(fig2_universe):
    cats = _by_name(fig2_universe, label_heuristic(fig2_universe))
    assert cats["FundsHandler.refunds"] == "BalanceMapping"
    assert cats["FundsHandler.endTimestamp"] == "TimeUint"
    assert cats["FundsHandler.auction"] == "OwnerAddress"
    assert cats["Auction.owner"] == "OwnerAddress"
    assert cats["FundsHandler.seller"] == "Unknown"


def test_apply_heuristic_labels(fig2_universe):
    diags = apply_labels(fig2_universe, label_heuristic(fig2_universe))
    assert diags == []
    fh = fig2_universe.contracts["FundsHandler"]
    assert fh.state_vars["refunds"].semantic_label == "BalanceMapping"
    assert fh.state_vars["refunds"].label_source == "heuristic"
    assert fh.state_vars["seller"].semantic_label is None


def test_apply_labels_idempotent(fig2_universe):
    preds = label_heuristic(fig2_universe)
    apply_labels(fig2_universe, preds)
    first = {sv.qualified_name: (sv.semantic_label, sv.label_source)
             for c in fig2_universe.sorted_contracts()
             for sv in c.state_vars.values()}
    apply_labels(fig2_universe, preds)
    second = {sv.qualified_name: (sv.semantic_label, sv.label_source)
              for c in fig2_universe.sorted_contracts()
              for sv in c.state_vars.values()}
    assert first == second


def test_sidecar_parsing():
    preds = parse_predictions(
        "FreezableToken mapping=0 BalanceMapping 0.95\n"
        "# comment\n"
        "FreezableToken slot=1 TimeUint 0.4\n")
    assert len(preds) == 2
    assert preds[0].kind_hint == "mapping"
    assert preds[0].confidence == 0.95
    assert preds[1].kind_hint is None


@pytest.mark.parametrize("line", [
    "OnlyThree fields here",
    "C slot=x BalanceMapping 0.9",
    "C slot=1 NotACategory 0.9",
    "C slot=1 BalanceMapping nine",
    "C slot=1 BalanceMapping 1.5",
])
def test_sidecar_malformed(line):
    with pytest.raises(PredictionError):
        parse_predictions(line + "\n")


def test_model_overrides_heuristic(fig2_universe):
    heur = label_heuristic(fig2_universe)
    model = parse_predictions("FundsHandler mapping=3 AllowanceMapping 0.95\n")
    apply_labels(fig2_universe, heur + model)
    assert fig2_universe.contracts["FundsHandler"].state_vars["refunds"] \
        .semantic_label == "AllowanceMapping"


def test_low_confidence_model_does_not_override(fig2_universe):
    heur = label_heuristic(fig2_universe)
    model = parse_predictions("FundsHandler mapping=3 AllowanceMapping 0.55\n")
    apply_labels(fig2_universe, heur + model)
    assert fig2_universe.contracts["FundsHandler"].state_vars["refunds"] \
        .semantic_label == "BalanceMapping"


def test_ir_label_beats_model():
    universe = parse_ir(
        "ir-version 1\ncontract A\n"
        "statevar when slot=0 kind=scalar label=TimeUint\n"
        "function f public()\nblock b0\n  STOP\n")
    model = parse_predictions("A slot=0 AmountUint 0.99\n")
    apply_labels(universe, model)
    assert universe.contracts["A"].state_vars["when"].semantic_label == "TimeUint"


def test_unresolvable_slot_is_warning(fig9_universe):
    model = parse_predictions("FreezableToken slot=9 BalanceMapping 0.9\n"
                              "Nope slot=0 BalanceMapping 0.9\n"
                              "FreezableToken mapping=0 BalanceMapping 0.9\n")
    diags = apply_labels(fig9_universe, model)
    assert [d.code for d in diags] == ["unresolvable-slot", "unresolvable-slot"]
    assert fig9_universe.contracts["FreezableToken"].state_vars["balances"] \
        .semantic_label == "BalanceMapping"


def test_empty_sidecar_changes_nothing(fig9_universe):
    before = {sv.qualified_name: sv.semantic_label
              for c in fig9_universe.sorted_contracts()
              for sv in c.state_vars.values()}
    apply_labels(fig9_universe, parse_predictions(""))
    after = {sv.qualified_name: sv.semantic_label
             for c in fig9_universe.sorted_contracts()
             for sv in c.state_vars.values()}
    assert before == after


# --- suppression ---------------------------------------------------------------

def _fig9_balanceof_indicator(universe):
    for ind in detect_indicators(universe):
        if ind.rule == "Overflow" and ind.block == "FreezableToken.balanceOf.b0":
            return ind
    raise AssertionError("expected the balanceOf overflow indicator")


def test_fig9_suppressed_with_labels(fig9_universe):
    preds = parse_predictions(load_fixture_text("fig9.pred"))
    apply_labels(fig9_universe, preds)
    ind = _fig9_balanceof_indicator(fig9_universe)
    rule = overflow_suppression_rule(fig9_universe, ind, DEFAULT_RULES)
    assert rule is not None and rule.startswith("semantic-0:")


def test_fig9_not_suppressed_without_labels(fig9_universe):
    ind = _fig9_balanceof_indicator(fig9_universe)
    assert overflow_suppression_rule(fig9_universe, ind, DEFAULT_RULES) is None


def test_one_unknown_operand_blocks_suppression(fig9_universe):
    preds = parse_predictions("FreezableToken mapping=0 BalanceMapping 0.9\n")
    apply_labels(fig9_universe, preds)
    ind = _fig9_balanceof_indicator(fig9_universe)
    assert overflow_suppression_rule(fig9_universe, ind, DEFAULT_RULES) is None


def test_param_operand_blocks_suppression(fig9_universe):
    preds = parse_predictions(load_fixture_text("fig9.pred"))
    apply_labels(fig9_universe, preds)
    transfer_adds = [i for i in detect_indicators(fig9_universe)
                     if i.rule == "Overflow"
                     and i.block == "FreezableToken.transfer.b1"]
    assert transfer_adds
    for ind in transfer_adds:
        assert overflow_suppression_rule(fig9_universe, ind, DEFAULT_RULES) is None


def test_suppression_never_touches_other_rules(fig2_universe):
    apply_labels(fig2_universe, label_heuristic(fig2_universe))
    for ind in detect_indicators(fig2_universe):
        if ind.rule != "Overflow":
            assert overflow_suppression_rule(
                fig2_universe, ind, DEFAULT_RULES) is None


def test_ingest_predictions_from_file(fig9_universe, tmp_path):
    from crossinspect.semantics import ingest_predictions
    path = tmp_path / "p.pred"
    path.write_text("FreezableToken mapping=0 BalanceMapping 0.9\n")
    diags = ingest_predictions(fig9_universe, path)
    assert diags == []
    assert fig9_universe.contracts["FreezableToken"].state_vars["balances"] \
        .semantic_label == "BalanceMapping"


def test_suppress_by_semantics_partitions(fig9_universe):
    from crossinspect.semantics import suppress_by_semantics
    from crossinspect.pipeline import Finding
    preds = parse_predictions(load_fixture_text("fig9.pred"))
    apply_labels(fig9_universe, preds)

    findings = []
    for ind in detect_indicators(fig9_universe):
        contract, fn, _ = ind.block.rsplit(".", 2)
        findings.append(Finding(
            rule=ind.rule, severity="confirmed", contract=contract,
            function=f"{contract}.{fn}", block=ind.block, span=ind.span,
            detail=ind.detail, path="", tainted_functions=[],
            tainted_state_vars=[], indicator=ind))
    kept, suppressed = suppress_by_semantics(
        fig9_universe, findings, DEFAULT_RULES)
    assert {f.block for f in suppressed} == {"FreezableToken.balanceOf.b0"}
    assert all(f.severity == "suppressed" and f.suppressed_by for f in suppressed)
    assert all(f.severity != "suppressed" for f in kept)
