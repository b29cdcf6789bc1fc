"""Command line interface.

    crossinspect analyze --manifest fixtures/fig2.manifest --format json

Exit codes: 0 clean, 1 findings reported (unless --exit-zero), 2 input
errors.  CROSSINSPECT_LOG sets the logging level.
"""

from __future__ import annotations

import logging
import os
import sys

import click

from .config import AnalysisConfig
from .graphs import render_dot, render_edge_list
from .ir import serialize_ir
from .manifest import ManifestError, load_manifest
from .pipeline import PipelineInputError, render_report, run_pipeline

log = logging.getLogger("crossinspect")


def _setup_logging():
    level = os.environ.get("CROSSINSPECT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_semantics_mode(mode):
    """off | heuristic | file:<path> | heuristic+file:<path>"""
    heuristics = False
    path = None
    if mode == "off":
        pass
    elif mode == "heuristic":
        heuristics = True
    elif mode.startswith("file:"):
        path = mode[len("file:"):]
    elif mode.startswith("heuristic+file:"):
        heuristics = True
        path = mode[len("heuristic+file:"):]
    else:
        raise click.BadParameter(
            f"unknown semantics mode {mode!r}; use off, heuristic, "
            "file:<path> or heuristic+file:<path>")
    return heuristics, path


def _write(text, dest):
    if dest == "-":
        click.echo(text, nl=False)
    else:
        with open(dest, "w") as fh:
            fh.write(text)


@click.group()
def main():
    """Cross-contract vulnerability analysis for EVM contracts."""
    _setup_logging()


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True), help="Deployment manifest.")
@click.option("--serial", is_flag=True,
              help="Disable memoized search and merged taint (differential runs).")
@click.option("--workers", default=0, show_default=True,
              help="Searcher cap; 0 means one per entry block.")
@click.option("--semantics", "semantics_mode", default="heuristic",
              show_default=True,
              help="off | heuristic | file:<path> | heuristic+file:<path>")
@click.option("--emit-ir", "emit_ir", default=None, metavar="DEST",
              help="Dump the canonical textual IR to DEST ('-' for stdout).")
@click.option("--emit-graph", "emit_graph", default=None,
              type=click.Choice(["callgraph", "icfg", "sdg"]),
              help="Dump a graph instead of nothing extra.")
@click.option("--graph-out", default="-", show_default=True, metavar="DEST",
              help="Where --emit-graph writes; *.dot selects GraphViz output.")
@click.option("--format", "fmt", default="text", show_default=True,
              type=click.Choice(["text", "json"]))
@click.option("--out", default="-", show_default=True, metavar="DEST",
              help="Where the report goes.")
@click.option("--no-sd-edges", is_flag=True,
              help="Drop state read/write and revert edges (ablation).")
@click.option("--no-overflow-taint", is_flag=True,
              help="Confirm Overflow structurally instead of via taint.")
@click.option("--max-paths-per-pair", default=64, show_default=True)
@click.option("--max-depth", default=512, show_default=True)
@click.option("--timing", is_flag=True,
              help="Include wall clock in the report (breaks byte-stability).")
@click.option("--exit-zero", is_flag=True, help="Exit 0 even with findings.")
def analyze(manifest_path, serial, workers, semantics_mode, emit_ir,
            emit_graph, graph_out, fmt, out, no_sd_edges, no_overflow_taint,
            max_paths_per_pair, max_depth, timing, exit_zero):
    """Run the full pipeline over a manifest and report findings."""
    heuristics, predictions = _parse_semantics_mode(semantics_mode)
    config = AnalysisConfig(
        serial=serial,
        workers=workers,
        taint_workers=workers,
        heuristics=heuristics,
        predictions_path=predictions,
        sd_edges=not no_sd_edges,
        overflow_requires_taint=not no_overflow_taint,
        max_paths_per_pair=max_paths_per_pair,
        max_depth=max_depth,
        include_timing=timing,
        fail_on_findings=not exit_zero,
    )
    try:
        manifest = load_manifest(manifest_path)
        result = run_pipeline(manifest, config)
    except (ManifestError, PipelineInputError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    if emit_ir is not None:
        _write(serialize_ir(result.universe), emit_ir)
    if emit_graph is not None:
        renderer = render_dot if str(graph_out).endswith(".dot") else render_edge_list
        _write(renderer(emit_graph, callgraph=result.callgraph,
                        icfg=result.icfg, sdg=result.sdg), graph_out)

    _write(render_report(result.report, fmt), out)
    sys.exit(result.exit_code)


if __name__ == "__main__":
    main()
