"""Manifest handling, end-to-end pipeline behavior, CLI surface."""

import json

import jsonschema
import pytest
from click.testing import CliRunner

from support import FIXTURES
from crossinspect.cli import main as cli_main
from crossinspect.config import AnalysisConfig
from crossinspect.manifest import ManifestError, load_manifest, parse_manifest
from crossinspect.pipeline import (
    PipelineInputError,
    render_report,
    run_pipeline,
)

FIG8_PATH = ("Auction.bid→FundsHandler.recordBid→[refunds]"
             "→FundsHandler.finalizeAuction→[seller,itemOwner]")


def fig2_manifest():
    return load_manifest(FIXTURES / "fig2.manifest")


# --- manifest -----------------------------------------------------------------

def test_manifest_parses_fig2():
    m = fig2_manifest()
    assert set(m.contracts) == {"Auction", "FundsHandler"}
    assert m.bindings == {("Auction", 3): "FundsHandler"}
    assert m.entries == {"Auction.bid", "Auction.endAuction"}


def test_manifest_rejects_duplicate_contract():
    with pytest.raises(ManifestError):
        parse_manifest("manifest-version 1\ncontract A ir=x.ir\n"
                       "contract A ir=y.ir\n")


def test_manifest_rejects_unknown_binding_target():
    with pytest.raises(ManifestError):
        parse_manifest("manifest-version 1\ncontract A ir=x.ir\n"
                       "bind A slot=0 -> Ghost\n")


def test_manifest_rejects_bad_header():
    with pytest.raises(ManifestError):
        parse_manifest("contract A ir=x.ir\n")


def test_missing_contract_in_ir_is_input_error(tmp_path):
    (tmp_path / "x.ir").write_text("ir-version 1\ncontract B\n")
    m = parse_manifest("manifest-version 1\ncontract A ir=x.ir\n",
                       base_dir=tmp_path)
    with pytest.raises(PipelineInputError):
        run_pipeline(m)


def test_missing_file_is_input_error(tmp_path):
    m = parse_manifest("manifest-version 1\ncontract A ir=missing.ir\n",
                       base_dir=tmp_path)
    with pytest.raises(PipelineInputError):
        run_pipeline(m)


# --- end to end -----------------------------------------------------------------

def test_fig2_expected_findings():
    result = run_pipeline(fig2_manifest())
    findings = result.report["findings"]
    timestamp = [f for f in findings if f["rule"] == "Timestamp"
                 and f["block"] == "FundsHandler.recordBid.b1"]
    assert len(timestamp) == 1
    assert timestamp[0]["severity"] == "confirmed"
    assert timestamp[0]["path"] == FIG8_PATH

    reentrancy = [f for f in findings if f["rule"] == "Reentrancy"
                  and f["block"] == "FundsHandler.finalizeAuction.b5"]
    assert len(reentrancy) == 1
    assert reentrancy[0]["severity"] == "confirmed"
    assert result.exit_code == 1


def test_fig2_text_format_contains_fig8_fragment():
    result = run_pipeline(fig2_manifest())
    text = render_report(result.report, "text")
    assert "→[refunds]→" in text


def test_empty_manifest_empty_report():
    m = parse_manifest("manifest-version 1\n")
    result = run_pipeline(m)
    assert result.report["findings"] == []
    assert result.exit_code == 0
    assert render_report(result.report, "text").startswith("No findings.")


def test_unknown_format_rejected():
    m = parse_manifest("manifest-version 1\n")
    result = run_pipeline(m)
    with pytest.raises(ValueError):
        render_report(result.report, "yaml")


def test_serial_and_parallel_reports_identical():
    base = run_pipeline(fig2_manifest(), AnalysisConfig())
    serial = run_pipeline(fig2_manifest(), AnalysisConfig(serial=True))
    assert base.report["findings"] == serial.report["findings"]
    assert base.report["taint"] == serial.report["taint"]


def test_fig2_sd_ablation_direction():
    full = run_pipeline(fig2_manifest(), AnalysisConfig())
    bare = run_pipeline(fig2_manifest(), AnalysisConfig(sd_edges=False))
    n_full = full.report["counters"]["tainted_functions"]
    n_bare = bare.report["counters"]["tainted_functions"]
    assert n_bare < n_full
    assert "FundsHandler.finalizeAuction" in full.report["taint"]["tainted_functions"]
    assert "FundsHandler.finalizeAuction" not in bare.report["taint"]["tainted_functions"]
    assert "FundsHandler.itemOwner" in full.report["taint"]["tainted_state_vars"]
    assert "FundsHandler.itemOwner" not in bare.report["taint"]["tainted_state_vars"]


def test_fig9_suppression_toggle():
    manifest = load_manifest(FIXTURES / "fig9.manifest")
    with_labels = run_pipeline(manifest, AnalysisConfig(
        heuristics=False, predictions_path=str(FIXTURES / "fig9.pred")))
    blocks = {f["block"] for f in with_labels.report["findings"]
              if f["rule"] == "Overflow"}
    assert "FreezableToken.balanceOf.b0" not in blocks
    suppressed = {f["block"] for f in with_labels.report["suppressed"]}
    assert "FreezableToken.balanceOf.b0" in suppressed

    without = run_pipeline(manifest, AnalysisConfig(heuristics=False))
    blocks = {f["block"] for f in without.report["findings"]
              if f["rule"] == "Overflow"}
    assert "FreezableToken.balanceOf.b0" in blocks
    assert without.report["suppressed"] == []


def test_fig11_dos_finding():
    manifest = load_manifest(FIXTURES / "fig11.manifest")
    result = run_pipeline(manifest)
    dos = [f for f in result.report["findings"] if f["rule"] == "DoS"]
    assert [f["block"] for f in dos] == ["Test2.bet.b1"]
    assert dos[0]["severity"] == "confirmed"


def test_semantics_off_equals_empty_predictions(tmp_path):
    manifest = load_manifest(FIXTURES / "fig9.manifest")
    empty = tmp_path / "empty.pred"
    empty.write_text("")
    off = run_pipeline(manifest, AnalysisConfig(heuristics=False))
    with_empty = run_pipeline(manifest, AnalysisConfig(
        heuristics=False, predictions_path=str(empty)))
    off.report["config"]["predictions"] = None
    with_empty.report["config"]["predictions"] = None
    assert off.report == with_empty.report


# --- determinism ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["fig2.manifest", "fig9.manifest",
                                  "fig11.manifest"])
def test_reports_byte_identical_across_runs(name):
    manifest = load_manifest(FIXTURES / name)
    a = render_report(run_pipeline(manifest).report, "json")
    b = render_report(run_pipeline(manifest).report, "json")
    assert a == b


@pytest.mark.parametrize("name", ["fig2.manifest", "fig11.manifest"])
def test_reports_byte_identical_across_worker_counts(name):
    manifest = load_manifest(FIXTURES / name)
    outputs = set()
    for workers in (1, 2, 4, 8):
        config = AnalysisConfig(workers=workers, taint_workers=workers)
        outputs.add(render_report(run_pipeline(manifest, config).report, "json"))
    assert len(outputs) == 1


def test_timing_is_opt_in():
    result = run_pipeline(fig2_manifest(), AnalysisConfig(include_timing=True))
    assert result.report["timing"] is not None
    assert result.report["timing"]["wall_clock_ms"] >= 0


# --- schema -----------------------------------------------------------------------

def _schema():
    import crossinspect
    from pathlib import Path
    return json.loads(
        (Path(crossinspect.__file__).parent / "report.schema.json").read_text())


@pytest.mark.parametrize("name", ["fig2.manifest", "fig9.manifest",
                                  "fig11.manifest"])
def test_reports_schema_validate(name):
    manifest = load_manifest(FIXTURES / name)
    report = run_pipeline(manifest).report
    jsonschema.validate(report, _schema())


def test_empty_report_schema_validates():
    report = run_pipeline(parse_manifest("manifest-version 1\n")).report
    jsonschema.validate(report, _schema())


# --- CLI --------------------------------------------------------------------------

def test_cli_json_run():
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
        "--format", "json"])
    assert result.exit_code == 1            # findings present
    report = json.loads(result.output)
    assert any(f["path"] == FIG8_PATH for f in report["findings"])


def test_cli_exit_zero_flag():
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
        "--exit-zero"])
    assert result.exit_code == 0


def test_cli_input_error_exit_2(tmp_path):
    bad = tmp_path / "bad.manifest"
    bad.write_text("manifest-version 1\ncontract A ir=missing.ir\n")
    runner = CliRunner()
    result = runner.invoke(cli_main, ["analyze", "--manifest", str(bad)])
    assert result.exit_code == 2


def test_cli_emit_graph_and_ir(tmp_path):
    runner = CliRunner()
    ir_out = tmp_path / "dump.ir"
    graph_out = tmp_path / "graph.txt"
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
        "--emit-ir", str(ir_out), "--emit-graph", "sdg",
        "--graph-out", str(graph_out), "--exit-zero"])
    assert result.exit_code == 0
    assert ir_out.read_text().startswith("ir-version 1")
    assert "state-revert" in graph_out.read_text()
    dot_out = tmp_path / "graph.dot"
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
        "--emit-graph", "callgraph", "--graph-out", str(dot_out),
        "--exit-zero"])
    assert result.exit_code == 0
    assert dot_out.read_text().startswith("digraph callgraph")


def test_cli_serial_flag_matches_default():
    runner = CliRunner()
    args = ["analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
            "--format", "json", "--exit-zero"]
    default = json.loads(runner.invoke(cli_main, args).output)
    serial = json.loads(runner.invoke(cli_main, args + ["--serial"]).output)
    assert default["findings"] == serial["findings"]
    assert default["taint"] == serial["taint"]


def test_cli_semantics_file_mode():
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig9.manifest"),
        "--semantics", f"file:{FIXTURES / 'fig9.pred'}",
        "--format", "json", "--exit-zero"])
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert report["state_var_labels"]["FreezableToken.balances"]["label"] == \
        "BalanceMapping"
    assert {f["block"] for f in report["suppressed"]} == \
        {"FreezableToken.balanceOf.b0"}


def test_cli_rejects_bad_semantics_mode():
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
        "--semantics", "telepathy"])
    assert result.exit_code != 0


# --- bytecode sources ---------------------------------------------------------------

def test_bytecode_manifest_contract(tmp_path):
    from crossinspect.frontend.asm import assemble
    code = assemble([
        "PUSH1 0x00", "CALLDATALOAD", "PUSH1 0xe0", "SHR",
        "DUP1", "PUSH4 0x11110001", "EQ", "PUSH2 @f", "JUMPI",
        "PUSH1 0x00", "PUSH1 0x00", "REVERT",
        ":f",
        "TIMESTAMP", "PUSH1 0x00", "SLOAD", "GT", "PUSH2 @y", "JUMPI",
        "PUSH1 0x00", "PUSH1 0x00", "REVERT",
        ":y", "CALLVALUE", "PUSH1 0x01", "SSTORE", "STOP",
    ])
    (tmp_path / "c.hex").write_text(code.hex())
    (tmp_path / "m.manifest").write_text(
        "manifest-version 1\ncontract C bytecode=c.hex\n")
    manifest = load_manifest(tmp_path / "m.manifest")
    result = run_pipeline(manifest)
    rules = {f["rule"] for f in result.report["findings"]}
    assert "Timestamp" in rules
    assert "C" in result.report["contracts"]


# --- report path validity ------------------------------------------------------

@pytest.mark.parametrize("name", ["fig2.manifest", "fig9.manifest",
                                  "fig11.manifest"])
def test_report_paths_correspond_to_real_edges(name):
    """Every hop in an emitted path string is backed by SDG structure: a
    call edge between the two functions, or a state dependency crossing
    tagged with the bracketed variables."""
    manifest = load_manifest(FIXTURES / name)
    result = run_pipeline(manifest)
    universe = result.universe
    call_pairs = set()
    for e in result.callgraph.edges:
        call_pairs.add((e.caller, e.callee))
    crossings = result.taint_state.crossings

    for f in result.report["findings"] + result.report["suppressed"]:
        parts = f["path"].split("→")
        i = 0
        while i + 1 < len(parts):
            src = parts[i]
            nxt = parts[i + 1]
            if nxt.startswith("["):
                if i + 2 >= len(parts):
                    break          # terminal affected-vars bracket
                dst = parts[i + 2]
                contract = dst.split(".", 1)[0]
                vars_ = {f"{contract}.{v}" for v in nxt.strip("[]").split(",")}
                assert any((src, sv, dst) in crossings for sv in vars_), \
                    (f["path"], src, nxt, dst)
                i += 2
            else:
                assert (src, nxt) in call_pairs, (f["path"], src, nxt)
                i += 1


def test_cli_log_env_accepted(monkeypatch):
    monkeypatch.setenv("CROSSINSPECT_LOG", "INFO")
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "analyze", "--manifest", str(FIXTURES / "fig2.manifest"),
        "--exit-zero", "--format", "json"])
    assert result.exit_code == 0
