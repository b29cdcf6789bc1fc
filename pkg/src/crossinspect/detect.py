"""Vulnerability indicators, call-graph pruning and entry-path search.

Path search runs in two modes with identical results:

* serial: plain depth-first enumeration of simple paths, successors in
  block-id order, capped per (entry, indicator) pair;
* memoized: entry searchers share a table of completed suffix sets.  A
  table entry for a block holds every simple path from that block to every
  indicator, so a searcher arriving with any prefix can splice the stored
  suffixes (dropping the ones that collide with its prefix) instead of
  descending.  An entry is published only when the exploration below the
  block was exhaustive: no strict ancestor was touched, no depth or path
  budget fired.  Publishing follows Tarjan's root rule, so cyclic regions
  simply stay unpublished and get re-explored per context.

Searchers process entries in a deterministic order (optionally permuted by
a schedule seed); path sets, and therefore reports, are identical for any
worker count and any schedule.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field

from .config import AnalysisConfig
from .ir import (
    CALL_OPCODES,
    Diagnostic,
    block_id_sort_key,
)
from .graphs import EXTERNAL_NODE, straight_reverts

RULES = ("Reentrancy", "Timestamp", "DoS", "Overflow")

_INF = float("inf")


@dataclass(frozen=True)
class Indicator:
    rule: str
    block: str                # block id
    span: tuple               # (first iid, last iid) of the witness
    detail: str = ""

    @property
    def key(self):
        return (self.rule, self.block, self.span)

    def sort_key(self):
        return (self.rule, block_id_sort_key(self.block), self.span)


@dataclass(frozen=True)
class EntryPath:
    entry: str
    indicator: Indicator
    blocks: tuple

    def sort_key(self):
        return (block_id_sort_key(self.entry), self.indicator.sort_key(),
                tuple(block_id_sort_key(b) for b in self.blocks))


@dataclass
class SearchCounters:
    expansions: int = 0
    expansions_by_block: dict = field(default_factory=dict)
    memo_hits: int = 0
    memo_publishes: int = 0
    paths_found: int = 0

    def bump(self, block):
        self.expansions += 1
        self.expansions_by_block[block] = self.expansions_by_block.get(block, 0) + 1


class MemoTable:
    """Shared suffix store.  Entries are immutable once published and carry
    the complete suffix set for the full indicator set, so duplicate
    publishes are idempotent and readers never see partial data."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries = {}

    def get(self, block):
        with self._lock:
            return self._entries.get(block)

    def publish(self, block, suffixes):
        with self._lock:
            self._entries.setdefault(block, suffixes)

    def __len__(self):
        return len(self._entries)


# --- indicators -------------------------------------------------------------

def _is_external_call(instr, own_contract):
    if instr.opcode not in CALL_OPCODES:
        return False
    tgt = instr.call
    if tgt.contract is not None:
        return tgt.contract != own_contract
    return True   # statevar-held or unknown targets are external until bound


def _def_use_consumers(fn):
    consumers = {}
    for blk in fn.blocks.values():
        for instr in blk.instructions:
            for op in instr.operands:
                if isinstance(op, str):
                    consumers.setdefault(op, []).append((blk, instr))
    return consumers


def _values_reaching_jumpi(fn, sources):
    """Blocks of JUMPIs whose condition depends on any source value."""
    consumers = _def_use_consumers(fn)
    hit = []
    seen = set()
    work = list(sources)
    while work:
        val = work.pop()
        if val in seen:
            continue
        seen.add(val)
        for blk, instr in consumers.get(val, ()):
            if instr.opcode == "JUMPI":
                hit.append((blk, instr))
            elif instr.result is not None:
                work.append(instr.result)
    return hit


def _loop_blocks(fn):
    """Blocks inside natural loops, via DFS back edges; irreducible regions
    count as loops too."""
    succs = {lbl: [t for t in (blk.terminator.targets if blk.terminator else ())
                   if t in fn.blocks]
             for lbl, blk in fn.blocks.items()}
    preds = {lbl: [] for lbl in fn.blocks}
    for lbl, targets in succs.items():
        for t in targets:
            preds[t].append(lbl)

    back_edges = []
    state = {}   # label -> "active" | "done"
    if fn.entry_label in fn.blocks:
        stack = [(fn.entry_label, iter(succs[fn.entry_label]))]
        state[fn.entry_label] = "active"
        while stack:
            label, it = stack[-1]
            advanced = False
            for nxt in it:
                if state.get(nxt) == "active":
                    back_edges.append((label, nxt))
                elif nxt not in state:
                    state[nxt] = "active"
                    stack.append((nxt, iter(succs[nxt])))
                    advanced = True
                    break
            if not advanced:
                state[label] = "done"
                stack.pop()

    in_loop = set()
    for tail, head in back_edges:
        body = {head, tail}
        work = [tail]
        while work:
            cur = work.pop()
            for p in preds[cur]:
                if p not in body:
                    body.add(p)
                    work.append(p)
        in_loop |= body
    return in_loop


def _overflow_checked(fn, arith):
    """Solidity >=0.8 generated-check shape: the result is compared against
    one of the arithmetic operands and the comparison guards a revert."""
    result = arith.result
    if result is None:
        return False
    operand_values = {op for op in arith.operands if isinstance(op, str)}
    consumers = _def_use_consumers(fn)
    for blk, instr in consumers.get(result, ()):
        if instr.opcode not in ("LT", "GT", "EQ"):
            continue
        others = [op for op in instr.operands if op != result]
        if not any(op in operand_values for op in others):
            continue
        # follow the comparison through ISZERO chains into a JUMPI
        work = [instr.result]
        seen = set()
        while work:
            val = work.pop()
            if val is None or val in seen:
                continue
            seen.add(val)
            for _, use in consumers.get(val, ()):
                if use.opcode == "ISZERO":
                    work.append(use.result)
                elif use.opcode == "JUMPI":
                    if any(straight_reverts(fn, tgt) for tgt in use.targets):
                        return True
    return False


def detect_indicators(universe, sdg=None):
    """Pure function of the universe; the four Table-style rules."""
    found = set()
    for contract in universe.sorted_contracts():
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            external_calls = []
            value_calls = []
            timestamp_sources = []
            for blk in fn.sorted_blocks():
                for instr in blk.instructions:
                    if _is_external_call(instr, contract.name):
                        external_calls.append((blk, instr))
                        if instr.opcode == "CALLVALUECALL":
                            value_calls.append((blk, instr))
                    if instr.opcode in ("TIMESTAMP", "NUMBER") and instr.result:
                        timestamp_sources.append(instr)

            if external_calls and value_calls:
                for blk, instr in value_calls:
                    found.add(Indicator("Reentrancy", blk.block_id,
                                        (instr.iid, instr.iid),
                                        "value-bearing external call"))

            if timestamp_sources:
                sources = [i.result for i in timestamp_sources]
                opcodes = sorted({i.opcode for i in timestamp_sources})
                for blk, jumpi in _values_reaching_jumpi(fn, sources):
                    found.add(Indicator("Timestamp", blk.block_id,
                                        (jumpi.iid, jumpi.iid),
                                        f"{'/'.join(opcodes)} guards a branch"))

            loops = _loop_blocks(fn)
            if loops:
                for blk, instr in external_calls:
                    if blk.label in loops:
                        found.add(Indicator("DoS", blk.block_id,
                                            (instr.iid, instr.iid),
                                            "external call inside a loop"))

            for blk in fn.sorted_blocks():
                for instr in blk.instructions:
                    if instr.opcode in ("ADD", "SUB", "MUL") and \
                            not _overflow_checked(fn, instr):
                        found.add(Indicator("Overflow", blk.block_id,
                                            (instr.iid, instr.iid),
                                            f"unchecked {instr.opcode}"))
    return sorted(found, key=lambda i: i.sort_key())


# --- pruning ----------------------------------------------------------------

def entry_blocks(universe, allowed=None):
    """Entry block ids of publicly callable functions, optionally filtered
    by a manifest allow-list of qualified names."""
    out = []
    for fn in universe.functions():
        if fn.visibility != "public":
            continue
        if allowed is not None and fn.qualified_name not in allowed:
            continue
        out.append(fn.entry_block_id)
    return sorted(out, key=block_id_sort_key)


def prune_wcc(callgraph, entry_functions, indicator_functions):
    """Keep every weakly connected component holding at least one entry
    function and one indicator function; return the union of their members."""
    adjacency = callgraph.undirected_adjacency()
    seen = set()
    kept = set()
    for node in sorted(adjacency):
        if node in seen:
            continue
        component = set()
        work = [node]
        while work:
            cur = work.pop()
            if cur in component:
                continue
            component.add(cur)
            work.extend(adjacency[cur] - component)
        seen |= component
        if component & set(entry_functions) and component & set(indicator_functions):
            kept |= component
    return kept


# --- path search -------------------------------------------------------------

SEARCH_EDGE_KINDS = ("intra-cfg", "inter-call")


def _search_successors(icfg, universe, pruned):
    """Successor map the searchers walk: intra + inter-call edges between
    blocks of retained functions.  Return edges exist for taint only; at
    block granularity the call-site block itself is the continuation."""
    succ = icfg.successors(kinds=SEARCH_EDGE_KINDS)
    if pruned is None:
        return succ
    allowed = {b for b in icfg.blocks if universe.function_of_block(b) in pruned}
    return {src: [d for d in dsts if d in allowed]
            for src, dsts in succ.items() if src in allowed}


class _PairCollector:
    def __init__(self, entry, indicators, cap):
        self.entry = entry
        self.cap = cap
        self.counts = {ind.key: 0 for ind in indicators}
        self.paths = []

    def record(self, indicator, path):
        n = self.counts[indicator.key]
        if n >= self.cap:
            return
        self.counts[indicator.key] = n + 1
        self.paths.append(EntryPath(self.entry, indicator, tuple(path)))

    def capped_pairs(self):
        return sorted(key for key, n in self.counts.items() if n >= self.cap)

    def all_capped(self):
        return bool(self.counts) and all(n >= self.cap for n in self.counts.values())


class _Searcher:
    """One depth-first search per entry; memo is optional and shared."""

    def __init__(self, successors, indicators_at, config, counters, memo=None):
        self.successors = successors
        self.indicators_at = indicators_at
        self.config = config
        self.counters = counters
        self.memo = memo

    def run(self, entry, collector):
        self.collector = collector
        self.path = [entry]
        self.on_path = {entry: 0}
        self._explore(entry, 0)

    def _explore(self, block, depth):
        cfg = self.config
        counters = self.counters
        collector = self.collector

        if self.memo is not None:
            stored = self.memo.get(block)
            if stored is not None:
                counters.memo_hits += 1
                return self._splice(stored, block, depth)

        counters.bump(block)
        suffixes = {}
        truncated = False
        low = _INF

        for ind in self.indicators_at.get(block, ()):
            collector.record(ind, self.path)
            suffixes.setdefault(ind, []).append((block,))
        if collector.all_capped():
            return suffixes, low, True

        successors = self.successors.get(block, ())
        if successors and len(self.path) >= cfg.max_depth:
            return suffixes, low, True

        for nxt in successors:
            if nxt in self.on_path:
                low = min(low, self.on_path[nxt])
                continue
            self.path.append(nxt)
            self.on_path[nxt] = depth + 1
            child_suffixes, child_low, child_trunc = self._explore(nxt, depth + 1)
            self.path.pop()
            del self.on_path[nxt]
            low = min(low, child_low)
            truncated = truncated or child_trunc
            for ind, sfx_list in child_suffixes.items():
                bucket = suffixes.setdefault(ind, [])
                bucket.extend((block,) + s for s in sfx_list)
            if collector.all_capped():
                return suffixes, low, True

        if self.memo is not None and not truncated and low >= depth:
            frozen = {ind: tuple(sorted(sfx, key=self._suffix_key))
                      for ind, sfx in suffixes.items()}
            self.memo.publish(block, frozen)
            counters.memo_publishes += 1
        return suffixes, low, truncated

    def _splice(self, stored, block, depth):
        suffixes = {}
        truncated = False
        low = _INF
        prefix = self.path[:-1]
        for ind in sorted(stored, key=lambda i: i.sort_key()):
            bucket = suffixes.setdefault(ind, [])
            for sfx in stored[ind]:
                collide = [self.on_path[b] for b in sfx[1:] if b in self.on_path]
                if collide:
                    low = min(low, min(collide))
                    continue
                if len(prefix) + len(sfx) > self.config.max_depth:
                    truncated = True
                    continue
                self.collector.record(ind, tuple(prefix) + sfx)
                bucket.append(sfx)
        return suffixes, low, truncated

    @staticmethod
    def _suffix_key(suffix):
        return tuple(block_id_sort_key(b) for b in suffix)


def _run_search(universe, icfg, entries, indicators, pruned, config, memo,
                schedule=None):
    succ = _search_successors(icfg, universe, pruned)
    if pruned is not None:
        entries = [e for e in entries if universe.function_of_block(e) in pruned]
        indicators = [i for i in indicators
                      if universe.function_of_block(i.block) in pruned]
    indicators_at = {}
    for ind in indicators:
        indicators_at.setdefault(ind.block, []).append(ind)
    for block in indicators_at:
        indicators_at[block].sort(key=lambda i: i.sort_key())

    counters = SearchCounters()
    paths = []
    diagnostics = []
    ordered = sorted(entries, key=block_id_sort_key)
    if schedule is not None:
        ordered = schedule(ordered)
    limit = max(sys.getrecursionlimit(), config.max_depth * 4 + 200)
    sys.setrecursionlimit(limit)
    if indicators:
        for entry in ordered:
            collector = _PairCollector(entry, indicators, config.max_paths_per_pair)
            searcher = _Searcher(succ, indicators_at, config, counters, memo)
            searcher.run(entry, collector)
            paths.extend(collector.paths)
            for key in collector.capped_pairs():
                diagnostics.append(Diagnostic(
                    "path-budget-exhausted",
                    f"pair ({entry}, {key[0]}@{key[1]}) hit max_paths_per_pair",
                    entry))
    counters.paths_found = len(paths)
    paths.sort(key=lambda p: p.sort_key())
    return paths, counters, diagnostics


def find_paths_serial(universe, icfg, entries, indicators, pruned=None,
                      config=None):
    """Depth-first enumeration of simple entry-to-indicator paths."""
    config = config or AnalysisConfig()
    return _run_search(universe, icfg, entries, indicators, pruned, config,
                       memo=None)


def find_paths_parallel(universe, icfg, entries, indicators, pruned=None,
                        config=None, workers=None, schedule=None):
    """Memoized multi-entry search.  Entry searchers share one MemoTable;
    results are the serial path set for every worker count and schedule,
    which also keeps report counters machine-independent."""
    config = config or AnalysisConfig()
    memo = MemoTable()
    paths, counters, diagnostics = _run_search(
        universe, icfg, entries, indicators, pruned, config, memo, schedule)
    return paths, counters, diagnostics
