"""Entry-path search: serial enumeration, memoized sharing, oracles."""

import random

import pytest

from genu import build_random_universe
from crossinspect.config import AnalysisConfig
from crossinspect.detect import (
    EntryPath,
    Indicator,
    detect_indicators,
    entry_blocks,
    find_paths_parallel,
    find_paths_serial,
    prune_wcc,
    _search_successors,
)
from crossinspect.graphs import Icfg, IcfgEdge, build_all


def path_set(paths):
    return {(p.entry, p.indicator.key, p.blocks) for p in paths}


def synthetic_icfg(edges):
    icfg = Icfg()
    for a, b in edges:
        icfg.blocks.add(a)
        icfg.blocks.add(b)
        icfg.edges.append(IcfgEdge(a, b, "intra-cfg"))
    return icfg


def n2b(i):
    return f"G.g.b{i}"


def make_indicators(blocks):
    return [Indicator("Timestamp", b, (0, 0)) for b in blocks]


# --- fixtures ---------------------------------------------------------------

def fig2_search_inputs(universe):
    callgraph, icfg, *_ = build_all(universe, {("Auction", 3): "FundsHandler"})
    indicators = detect_indicators(universe)
    entries = entry_blocks(universe, allowed={"Auction.bid", "Auction.endAuction"})
    ind_fns = {universe.function_of_block(i.block) for i in indicators}
    entry_fns = {universe.function_of_block(b) for b in entries}
    pruned = prune_wcc(callgraph, entry_fns, ind_fns)
    return icfg, entries, indicators, pruned


def test_fig2_timestamp_entry_path(fig2_universe):
    icfg, entries, indicators, pruned = fig2_search_inputs(fig2_universe)
    paths, counters, diags = find_paths_serial(
        fig2_universe, icfg, entries, indicators, pruned)
    assert diags == []
    wanted = [p for p in paths
              if p.indicator.rule == "Timestamp"
              and p.indicator.block == "FundsHandler.recordBid.b1"]
    assert [p.blocks for p in wanted] == [
        ("Auction.bid.b0", "FundsHandler.recordBid.b0", "FundsHandler.recordBid.b1")]


def test_entry_equals_indicator_block_is_singleton():
    icfg = synthetic_icfg([(n2b(0), n2b(1))])
    inds = make_indicators([n2b(0)])
    paths, *_ = find_paths_serial(None, icfg, [n2b(0)], inds)
    assert path_set(paths) == {(n2b(0), inds[0].key, (n2b(0),))}


def test_paths_follow_call_edges_not_return_edges(fig2_universe):
    icfg, entries, indicators, pruned = fig2_search_inputs(fig2_universe)
    paths, *_ = find_paths_serial(fig2_universe, icfg, entries, indicators, pruned)
    # no path leaves a callee through an inter-return edge into a foreign entry
    for p in paths:
        succ = _search_successors(icfg, fig2_universe, pruned)
        for a, b in zip(p.blocks, p.blocks[1:]):
            assert b in succ.get(a, []), (a, b)


# --- oracle: exhaustive recursive enumeration --------------------------------

def brute_force_paths(succ, entry, indicator_blocks, max_depth=10**9):
    """Independent enumerator: all simple paths entry -> target blocks."""
    out = []

    def rec(node, path):
        if node in indicator_blocks:
            out.append(tuple(path))
        if len(path) >= max_depth:
            return
        for nxt in succ.get(node, []):
            if nxt not in path:
                path.append(nxt)
                rec(nxt, path)
                path.pop()

    rec(entry, [entry])
    return out


def random_dag(rng, max_nodes=40):
    n = rng.randint(4, max_nodes)
    edges = []
    prob = 0.14 if n <= 20 else 0.08
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < prob:
                edges.append((n2b(i), n2b(j)))
    entries = sorted({n2b(rng.randrange(0, max(1, n // 3)))
                      for _ in range(rng.randint(1, 3))})
    targets = sorted({n2b(rng.randrange(n // 2, n))
                      for _ in range(rng.randint(1, 3))})
    return synthetic_icfg(edges), entries, targets


@pytest.mark.parametrize("seed", range(50))
def test_serial_matches_brute_force_on_dags(seed):
    rng = random.Random(seed)
    icfg, entries, targets = random_dag(rng)
    inds = make_indicators(targets)
    config = AnalysisConfig(max_paths_per_pair=10**9, max_depth=10**6)
    paths, *_ = find_paths_serial(None, icfg, entries, inds, config=config)

    succ = icfg.successors(kinds=("intra-cfg",))
    expected = set()
    by_block = {i.block: i for i in inds}
    for entry in entries:
        for p in brute_force_paths(succ, entry, set(targets)):
            expected.add((entry, by_block[p[-1]].key, p))
    assert path_set(paths) == expected


# --- serial/parallel equivalence ---------------------------------------------

def random_cyclic_graph(rng):
    n = rng.randint(5, 14)
    edges = set()
    for _ in range(int(n * rng.uniform(1.2, 2.2))):
        a, b = rng.randrange(n), rng.randrange(n)
        if a != b:
            edges.add((n2b(a), n2b(b)))
    entries = sorted({n2b(rng.randrange(n)) for _ in range(rng.randint(1, 3))})
    targets = sorted({n2b(rng.randrange(n)) for _ in range(rng.randint(1, 3))})
    return synthetic_icfg(sorted(edges)), entries, targets


def make_schedule(seed):
    def schedule(entries):
        rng = random.Random(seed)
        shuffled = list(entries)
        rng.shuffle(shuffled)
        return shuffled
    return schedule


@pytest.mark.parametrize("seed", range(25))
def test_parallel_equals_serial_on_dags(seed):
    rng = random.Random(1000 + seed)
    icfg, entries, targets = random_dag(rng, max_nodes=24)
    inds = make_indicators(targets)
    serial, *_ = find_paths_serial(None, icfg, entries, inds)
    for workers in (1, 2, 4, 8):
        for sched_seed in range(10):
            par, counters, _ = find_paths_parallel(
                None, icfg, entries, inds, workers=workers,
                schedule=make_schedule(sched_seed))
            assert path_set(par) == path_set(serial)


@pytest.mark.parametrize("seed", range(25))
def test_parallel_equals_serial_on_cyclic_graphs(seed):
    rng = random.Random(2000 + seed)
    icfg, entries, targets = random_cyclic_graph(rng)
    inds = make_indicators(targets)
    serial, *_ = find_paths_serial(None, icfg, entries, inds)
    for workers in (1, 2, 4, 8):
        for sched_seed in range(10):
            par, *_ = find_paths_parallel(
                None, icfg, entries, inds, workers=workers,
                schedule=make_schedule(sched_seed))
            assert path_set(par) == path_set(serial)


def test_parallel_equals_serial_with_binding_caps():
    rng = random.Random(77)
    # dense diamond stack: plenty of paths so the pair cap actually binds
    edges = []
    for layer in range(6):
        for a in range(2):
            for b in range(2):
                edges.append((n2b(layer * 2 + a), n2b(layer * 2 + 2 + b)))
    icfg = synthetic_icfg(edges)
    inds = make_indicators([n2b(12), n2b(13)])
    config = AnalysisConfig(max_paths_per_pair=5)
    serial, _, sdiags = find_paths_serial(None, icfg, [n2b(0)], inds, config=config)
    par, _, pdiags = find_paths_parallel(None, icfg, [n2b(0)], inds, config=config)
    assert path_set(par) == path_set(serial)
    assert len([p for p in serial if p.indicator.block == n2b(12)]) == 5
    assert {d.code for d in sdiags} == {"path-budget-exhausted"}
    assert {d.code for d in pdiags} == {"path-budget-exhausted"}


def test_max_depth_limits_path_length():
    edges = [(n2b(i), n2b(i + 1)) for i in range(10)]
    icfg = synthetic_icfg(edges)
    inds = make_indicators([n2b(10)])
    config = AnalysisConfig(max_depth=5)
    serial, *_ = find_paths_serial(None, icfg, [n2b(0)], inds, config=config)
    par, *_ = find_paths_parallel(None, icfg, [n2b(0)], inds, config=config)
    assert serial == [] and par == []


# --- fixture equivalence -------------------------------------------------------

@pytest.mark.parametrize("fixture", ["fig2", "fig7", "fig9", "fig10", "fig11"])
def test_parallel_equals_serial_on_fixtures(fixture, request):
    universe = request.getfixturevalue(f"{fixture}_universe")
    bindings = {("Auction", 3): "FundsHandler"} if fixture == "fig2" else \
               ({("Test2", 2): "Test1"} if fixture == "fig11" else {})
    callgraph, icfg, *_ = build_all(universe, bindings)
    indicators = detect_indicators(universe)
    entries = entry_blocks(universe)
    serial, *_ = find_paths_serial(universe, icfg, entries, indicators)
    for workers in (1, 2, 4, 8):
        for sched_seed in range(10):
            par, *_ = find_paths_parallel(
                universe, icfg, entries, indicators, workers=workers,
                schedule=make_schedule(sched_seed))
            assert path_set(par) == path_set(serial)


def test_memo_spliced_paths_are_valid_icfg_paths(fig7_universe):
    callgraph, icfg, *_ = build_all(fig7_universe)
    indicators = detect_indicators(fig7_universe)
    entries = entry_blocks(fig7_universe)
    paths, *_ = find_paths_parallel(fig7_universe, icfg, entries, indicators)
    succ = _search_successors(icfg, fig7_universe, None)
    assert paths
    for p in paths:
        assert p.blocks[0] == p.entry
        assert p.blocks[-1] == p.indicator.block
        for a, b in zip(p.blocks, p.blocks[1:]):
            assert b in succ.get(a, []), (a, b)
        assert len(set(p.blocks)) == len(p.blocks)   # simple path


# --- memoization work sharing ---------------------------------------------------

def fig7_search(universe, mode, entries=None):
    callgraph, icfg, *_ = build_all(universe)
    indicators = detect_indicators(universe)
    entries = entries if entries is not None else entry_blocks(universe)
    fn = find_paths_serial if mode == "serial" else find_paths_parallel
    return fn(universe, icfg, entries, indicators)


def test_fig7_memoization_reduces_expansions(fig7_universe):
    serial_paths, serial_counters, _ = fig7_search(fig7_universe, "serial")
    par_paths, par_counters, _ = fig7_search(fig7_universe, "parallel")
    assert path_set(par_paths) == path_set(serial_paths)
    assert par_counters.expansions < serial_counters.expansions
    assert par_counters.memo_hits > 0


def test_fig7_shared_subtree_expanded_exactly_once(fig7_universe):
    _, counters, _ = fig7_search(fig7_universe, "parallel")
    g_blocks = [f"Par.g.b{i}" for i in range(6)]
    for blk in g_blocks:
        assert counters.expansions_by_block.get(blk, 0) == 1, blk
    # serial re-expands the shared subtree per entry and per diamond arm
    _, serial_counters, _ = fig7_search(fig7_universe, "serial")
    assert serial_counters.expansions_by_block["Par.g.b3"] >= 2


def test_fig7_single_entry_still_memoizes(fig7_universe):
    entries = ["Par.f1.b0"]
    serial_paths, _, _ = fig7_search(fig7_universe, "serial", entries)
    par_paths, counters, _ = fig7_search(fig7_universe, "parallel", entries)
    assert path_set(par_paths) == path_set(serial_paths)
    assert counters.memo_hits > 0   # diamond reconvergence inside one entry


def test_fig7_counters_identical_across_worker_counts(fig7_universe):
    callgraph, icfg, *_ = build_all(fig7_universe)
    indicators = detect_indicators(fig7_universe)
    entries = entry_blocks(fig7_universe)
    baseline = None
    for workers in (1, 2, 4, 8):
        _, counters, _ = find_paths_parallel(
            fig7_universe, icfg, entries, indicators, workers=workers)
        snapshot = (counters.expansions, counters.memo_hits,
                    counters.memo_publishes,
                    tuple(sorted(counters.expansions_by_block.items())))
        if baseline is None:
            baseline = snapshot
        assert snapshot == baseline


# --- pruning safety ----------------------------------------------------------

@pytest.mark.parametrize("seed", range(12))
def test_pruning_loses_no_paths(seed):
    universe = build_random_universe(seed, n_contracts=2, max_funcs=3)
    callgraph, icfg, *_ = build_all(universe)
    indicators = detect_indicators(universe)
    entries = entry_blocks(universe)
    ind_fns = {universe.function_of_block(i.block) for i in indicators}
    entry_fns = {universe.function_of_block(b) for b in entries}
    pruned = prune_wcc(callgraph, entry_fns, ind_fns)

    unpruned_paths, *_ = find_paths_serial(universe, icfg, entries, indicators)
    pruned_paths, *_ = find_paths_serial(universe, icfg, entries, indicators, pruned)
    assert path_set(pruned_paths) == path_set(unpruned_paths)
