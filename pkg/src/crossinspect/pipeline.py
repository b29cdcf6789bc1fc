"""End-to-end orchestration: sources, labels, graphs, detection, taint,
suppression, and deterministic reports.

The machine-readable report is canonical JSON: keys sorted, counters
instead of wall-clock numbers, every list explicitly ordered.  Two runs on
the same manifest and configuration are byte-identical, whatever the
worker count.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from . import __version__
from .config import AnalysisConfig
from .detect import (
    detect_indicators,
    entry_blocks,
    find_paths_parallel,
    find_paths_serial,
    prune_wcc,
)
from .graphs import build_all
from .ir import Diagnostic, IrError, Universe, parse_ir
from .manifest import Manifest, ManifestError
from .semantics import (
    PredictionError,
    apply_labels,
    label_heuristic,
    parse_predictions,
    suppress_by_semantics,
)
from .taint import (
    build_network,
    build_path_string,
    confirm_indicators,
    propagate_parallel,
    propagate_serial,
    seed_sources,
)


class PipelineInputError(Exception):
    """Bad manifest, unreadable source, or invalid IR; exit code 2."""


@dataclass
class Finding:
    rule: str
    severity: str            # confirmed | reachable | suppressed
    contract: str
    function: str
    block: str
    span: tuple
    detail: str
    path: str
    tainted_functions: list
    tainted_state_vars: list
    suppressed_by: str | None = None
    indicator: object = None          # detect.Indicator; not serialized

    def to_dict(self):
        return {
            "rule": self.rule,
            "severity": self.severity,
            "contract": self.contract,
            "function": self.function,
            "block": self.block,
            "instructions": list(self.span),
            "detail": self.detail,
            "path": self.path,
            "tainted_functions": self.tainted_functions,
            "tainted_state_vars": self.tainted_state_vars,
            "suppressed_by": self.suppressed_by,
        }


@dataclass
class PipelineResult:
    report: dict
    universe: Universe
    callgraph: object = None
    icfg: object = None
    sdg: object = None
    taint_state: object = None
    findings: list = field(default_factory=list)
    suppressed: list = field(default_factory=list)

    @property
    def exit_code(self):
        if self.report["findings"] and self.report["config"]["fail_on_findings"]:
            return 1
        return 0


def _load_universe(manifest, diagnostics):
    universe = Universe()
    ir_cache = {}
    for name in sorted(manifest.contracts):
        source = manifest.contracts[name]
        try:
            if source.kind == "ir":
                if source.path not in ir_cache:
                    ir_cache[source.path] = parse_ir(source.path.read_text())
                parsed = ir_cache[source.path]
                if name not in parsed.contracts:
                    raise PipelineInputError(
                        f"contract {name!r} not found in {source.path}")
                universe.contracts[name] = parsed.contracts[name]
            else:
                from .frontend import lift_contract_from_hex
                contract, lift_diags = lift_contract_from_hex(
                    name, source.path.read_text())
                universe.contracts[name] = contract
                diagnostics.extend(
                    ("frontend", Diagnostic("lift", d)) for d in lift_diags)
        except OSError as exc:
            raise PipelineInputError(f"cannot read {source.path}: {exc}") from exc
        except IrError as exc:
            raise PipelineInputError(f"{source.path}: {exc}") from exc
    return universe


def _apply_semantics(universe, config, diagnostics):
    predictions = []
    if config.heuristics:
        predictions.extend(label_heuristic(universe))
    if config.predictions_path:
        try:
            text = open(config.predictions_path).read()
        except OSError as exc:
            raise PipelineInputError(
                f"cannot read predictions {config.predictions_path}: {exc}") from exc
        try:
            predictions.extend(parse_predictions(text))
        except PredictionError as exc:
            raise PipelineInputError(
                f"{config.predictions_path}: {exc}") from exc
    if predictions:
        diags = apply_labels(universe, predictions, config.confidence_threshold)
        diagnostics.extend(("semantics", d) for d in diags)


def _chain_functions(path_string):
    return [p for p in path_string.split("→") if not p.startswith("[")]


def _chain_vars(path_string):
    vars_ = []
    for part in path_string.split("→"):
        if part.startswith("["):
            vars_.extend(part.strip("[]").split(","))
    return vars_


def run_pipeline(manifest, config=None):
    config = config or AnalysisConfig()
    started = time.monotonic()
    staged_diags = []

    universe = _load_universe(manifest, staged_diags)
    _apply_semantics(universe, config, staged_diags)

    callgraph, icfg, rw, revert, sdg = build_all(
        universe, manifest.bindings, sd_edges=config.sd_edges)
    staged_diags.extend(("graphs", d) for d in callgraph.diagnostics)
    staged_diags.extend(("graphs", d) for d in sdg.diagnostics)

    indicators = detect_indicators(universe, sdg)
    entries = entry_blocks(universe, allowed=manifest.entries)
    if manifest.entries is not None:
        known = {fn.qualified_name for fn in universe.functions()}
        for name in sorted(manifest.entries - known):
            staged_diags.append(("detect", Diagnostic(
                "unknown-entry", f"allow-listed entry {name!r} not in universe", name)))

    entry_fns = {universe.function_of_block(b) for b in entries}
    indicator_fns = {universe.function_of_block(i.block) for i in indicators}
    pruned = prune_wcc(callgraph, entry_fns, indicator_fns)

    search = find_paths_serial if config.serial else find_paths_parallel
    paths, search_counters, search_diags = search(
        universe, icfg, entries, indicators, pruned, config)
    staged_diags.extend(("detect", d) for d in search_diags)

    network = build_network(universe, revert, manifest.bindings,
                            sd_edges=config.sd_edges)
    seeds = seed_sources(universe, allowed=manifest.entries,
                         bindings=manifest.bindings)
    if config.serial:
        state = propagate_serial(universe, network, seeds, paths, config)
    else:
        state = propagate_parallel(universe, network, seeds, sdg, entries,
                                   paths, config)
    staged_diags.extend(("taint", d) for d in state.diagnostics)

    taint_report = confirm_indicators(universe, state, indicators, paths, config)
    confirmed_keys = {i.key for i in taint_report.confirmed_indicators}

    all_findings = []
    unreached = []
    for ind in indicators:
        witnessed = taint_report.taint_path_witnesses.get(ind.key)
        if witnessed is None:
            unreached.append(ind)
            continue
        _, path_string = witnessed
        confirmed = ind.key in confirmed_keys
        contract, fn, _ = ind.block.rsplit(".", 2)
        chain = _chain_functions(path_string)
        all_findings.append(Finding(
            rule=ind.rule,
            severity="confirmed" if confirmed else "reachable",
            contract=contract,
            function=f"{contract}.{fn}",
            block=ind.block,
            span=ind.span,
            detail=ind.detail,
            path=path_string,
            tainted_functions=sorted(set(chain) & state.tainted_functions),
            tainted_state_vars=sorted(set(_chain_vars(path_string))),
            indicator=ind,
        ))
    findings, suppressed = suppress_by_semantics(
        universe, all_findings, config.suppression_rules)

    for ind in unreached:
        staged_diags.append(("detect", Diagnostic(
            "unreached-indicator",
            f"no entry path reaches {ind.rule} at {ind.block}", ind.block)))

    labels = {}
    for contract in universe.sorted_contracts():
        for name in sorted(contract.state_vars):
            sv = contract.state_vars[name]
            if sv.semantic_label:
                labels[sv.qualified_name] = {
                    "label": sv.semantic_label, "source": sv.label_source}

    counters = {
        "block_expansions": search_counters.expansions,
        "memo_hits": search_counters.memo_hits,
        "memo_publishes": search_counters.memo_publishes,
        "paths_found": search_counters.paths_found,
        "indicators": len(indicators),
        "pruned_functions": len(pruned),
        "taint_merge_iterations": state.merge_iterations,
        "taint_pending_fired": state.pending_fired,
        "taint_steps": state.steps,
        "tainted_values": len(state.tainted),
        "tainted_state_vars": len(state.tainted_state),
        "tainted_functions": len(state.tainted_functions),
    }

    report = {
        "version": 1,
        "tool": {"name": "crossinspect", "version": __version__},
        "manifest": str(manifest.path) if manifest.path else None,
        "contracts": sorted(universe.contracts),
        "entries": entries,
        "config": {
            "serial": config.serial,
            "sd_edges": config.sd_edges,
            "heuristics": config.heuristics,
            "predictions": config.predictions_path,
            "max_paths_per_pair": config.max_paths_per_pair,
            "max_depth": config.max_depth,
            "overflow_requires_taint": config.overflow_requires_taint,
            "fail_on_findings": config.fail_on_findings,
        },
        "findings": [f.to_dict() for f in findings],
        "suppressed": [f.to_dict() for f in suppressed],
        "diagnostics": [f"{stage}: {d.render()}" for stage, d in staged_diags],
        "taint": {
            "tainted_functions": sorted(state.tainted_functions),
            "tainted_state_vars": sorted(state.tainted_state),
            "affected_functions": sorted(state.affected_functions),
        },
        "state_var_labels": labels,
        "counters": counters,
        "timing": None,
    }
    if config.include_timing:
        report["timing"] = {
            "wall_clock_ms": round((time.monotonic() - started) * 1000, 3)}

    return PipelineResult(report=report, universe=universe, callgraph=callgraph,
                          icfg=icfg, sdg=sdg, taint_state=state,
                          findings=findings, suppressed=suppressed)


def render_report(report, fmt="text"):
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    lines = []
    findings = report["findings"]
    if not findings:
        lines.append("No findings.")
    else:
        by_rule = {}
        for f in findings:
            by_rule.setdefault(f["rule"], []).append(f)
        for rule in sorted(by_rule):
            lines.append(f"== {rule} ({len(by_rule[rule])}) ==")
            for f in by_rule[rule]:
                lines.append(f"  [{f['severity']}] {f['block']} {f['detail']}")
                lines.append(f"    path: {f['path']}")
                if f["tainted_state_vars"]:
                    lines.append("    state: " + ", ".join(f["tainted_state_vars"]))
            lines.append("")
    if report["suppressed"]:
        lines.append(f"Suppressed findings: {len(report['suppressed'])}")
        for f in report["suppressed"]:
            lines.append(f"  [{f['rule']}] {f['block']} by {f['suppressed_by']}")
    if report["diagnostics"]:
        lines.append(f"Diagnostics: {len(report['diagnostics'])}")
        for d in report["diagnostics"]:
            lines.append(f"  {d}")
    return "\n".join(lines).rstrip("\n") + "\n"
