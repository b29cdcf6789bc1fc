"""Analysis configuration shared across the pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class AnalysisConfig:
    max_paths_per_pair: int = 64
    max_depth: int = 512
    workers: int = 0                 # 0 = one searcher per entry block
    taint_workers: int = 0           # 0 = one propagator per entry
    iteration_limit: int = 10000     # worklist steps per function frame
    overflow_requires_taint: bool = True
    sd_edges: bool = True            # state read/write + revert edges in SDG
    serial: bool = False             # disables memoized search and taint merge
    heuristics: bool = True          # heuristic semantic labeler
    predictions_path: str | None = None
    confidence_threshold: float = 0.8
    suppression_rules: list = field(default_factory=lambda: [
        {"rule": "Overflow", "operand_labels": ["BalanceMapping", "SupplyUint"]},
    ])
    fail_on_findings: bool = True
    include_timing: bool = False     # wall clock is opt-in to keep reports byte-stable
    schedule_seed: int | None = None  # tests only: permutes entry order
