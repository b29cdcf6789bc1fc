"""Taint sources, serial and merged propagation, fixpoint oracles."""

import random

import pytest

from genu import build_random_universe
from crossinspect.config import AnalysisConfig
from crossinspect.detect import entry_blocks
from crossinspect.graphs import build_all, extract_revert_deps, extract_rw_deps
from crossinspect.ir import parse_ir
from crossinspect.taint import (
    build_network,
    propagate_parallel,
    propagate_serial,
    seed_sources,
)

FIG2_BINDINGS = {("Auction", 3): "FundsHandler"}
FIG2_ENTRIES = {"Auction.bid", "Auction.endAuction"}
FIG11_BINDINGS = {("Test2", 2): "Test1"}


def taint_setup(universe, bindings=None, allowed=None, sd_edges=True):
    callgraph, icfg, rw, revert, sdg = build_all(universe, bindings,
                                                 sd_edges=sd_edges)
    network = build_network(universe, revert, bindings, sd_edges=sd_edges)
    seeds = seed_sources(universe, allowed=allowed, bindings=bindings)
    entries = entry_blocks(universe, allowed=allowed)
    return network, seeds, sdg, entries


# --- seeds -------------------------------------------------------------------

def test_fig2_default_seeds(fig2_universe):
    seeds = seed_sources(fig2_universe, bindings=FIG2_BINDINGS)
    assert "FundsHandler.recordBid.bidder" in seeds      # public parameter
    assert "FundsHandler.recordBid.v8" in seeds          # its msg.value read
    assert "Auction.bid.v0" in seeds                     # caller-side msg.value


def test_fig2_allow_list_restricts_seeds(fig2_universe):
    seeds = seed_sources(fig2_universe, allowed=FIG2_ENTRIES,
                         bindings=FIG2_BINDINGS)
    assert "Auction.bid.v0" in seeds and "Auction.bid.v1" in seeds
    assert "Auction.endAuction.v0" in seeds
    assert not any(s.startswith("FundsHandler.") for s in seeds)


def test_private_only_universe_has_empty_seed():
    universe = parse_ir(
        "ir-version 1\ncontract A\nfunction f private(x:uint)\n"
        "block b0\n  v0 = CALLER\n  STOP\n")
    assert seed_sources(universe) == set()


@pytest.mark.parametrize("seed", range(20))
def test_seed_scan_oracle(seed):
    universe = build_random_universe(seed)
    got = seed_sources(universe)
    expected = set()
    for contract in universe.sorted_contracts():
        for fn in contract.functions.values():
            qn = fn.qualified_name
            if fn.visibility == "public":
                expected |= {f"{qn}.{p.name}" for p in fn.params}
                for blk in fn.blocks.values():
                    for ins in blk.instructions:
                        if ins.opcode in ("CALLDATALOAD", "CALLVALUE", "CALLER") \
                                and ins.result:
                            expected.add(f"{qn}.{ins.result}")
            for blk in fn.blocks.values():
                for ins in blk.instructions:
                    if ins.opcode in ("CALL", "CALLVALUECALL", "STATICCALL",
                                      "DELEGATECALL") and ins.call.contract \
                            and ins.call.function \
                            and ins.call.contract != contract.name:
                        callee_c = universe.contracts.get(ins.call.contract)
                        callee = callee_c.functions.get(ins.call.function) \
                            if callee_c else None
                        if callee:
                            expected |= {f"{ins.call.contract}.{callee.name}.{p.name}"
                                         for p in callee.params}
    assert got == expected


# --- serial propagation --------------------------------------------------------

def test_fig2_serial_taint_story(fig2_universe):
    network, seeds, sdg, entries = taint_setup(
        fig2_universe, FIG2_BINDINGS, allowed=FIG2_ENTRIES)
    state = propagate_serial(fig2_universe, network, seeds)
    assert "FundsHandler.refunds" in state.tainted_state
    assert "FundsHandler.itemOwner" in state.tainted_state
    assert "FundsHandler.finalizeAuction" in state.affected_functions
    assert state.affected_vars["FundsHandler.finalizeAuction"] == {
        "FundsHandler.seller", "FundsHandler.itemOwner"}
    assert ("FundsHandler.recordBid", "FundsHandler.refunds",
            "FundsHandler.finalizeAuction") in state.crossings
    assert state.tainted_functions == {
        "Auction.bid", "Auction.endAuction",
        "FundsHandler.recordBid", "FundsHandler.finalizeAuction"}


def test_fig2_without_sd_edges_loses_finalize(fig2_universe):
    network, seeds, sdg, entries = taint_setup(
        fig2_universe, FIG2_BINDINGS, allowed=FIG2_ENTRIES, sd_edges=False)
    state = propagate_serial(fig2_universe, network, seeds)
    assert state.tainted_state == set()
    assert state.tainted_functions == {
        "Auction.bid", "Auction.endAuction", "FundsHandler.recordBid"}


def test_fig2_deleting_only_revert_edges_drops_item_owner(fig2_universe):
    rw = extract_rw_deps(fig2_universe)
    network = build_network(fig2_universe, revert_deps=[],
                            bindings=FIG2_BINDINGS, sd_edges=True)
    seeds = seed_sources(fig2_universe, allowed=FIG2_ENTRIES,
                         bindings=FIG2_BINDINGS)
    state = propagate_serial(fig2_universe, network, seeds)
    assert "FundsHandler.refunds" in state.tainted_state
    assert "FundsHandler.itemOwner" not in state.tainted_state
    assert "FundsHandler.finalizeAuction" not in state.affected_functions


def test_no_seeds_no_taint(fig2_universe):
    network, _, sdg, entries = taint_setup(fig2_universe, FIG2_BINDINGS)
    state = propagate_serial(fig2_universe, network, set())
    assert state.tainted == set()
    assert state.tainted_state == set()
    assert state.tainted_functions == set()


def straight_line_program(rng):
    n_vals = rng.randint(3, 10)
    lines = ["ir-version 1", "contract P",
             "function f public(x:uint)", "block b0"]
    chains = {}
    defined = ["x"]
    for i in range(n_vals):
        if rng.random() < 0.3:
            lines.append(f"  v{i} = CONST {rng.randint(0, 9)}")
            chains[f"v{i}"] = set()
        else:
            a, b = rng.choice(defined), rng.choice(defined)
            op = rng.choice(["ADD", "SUB", "MUL", "AND", "OR", "LT"])
            lines.append(f"  v{i} = {op} {a} {b}")
            chains[f"v{i}"] = {a, b}
        defined.append(f"v{i}")
    lines.append("  STOP")
    return parse_ir("\n".join(lines) + "\n"), chains


@pytest.mark.parametrize("seed", range(25))
def test_straight_line_closure_oracle(seed):
    rng = random.Random(seed)
    universe, chains = straight_line_program(rng)
    network = build_network(universe)
    seeds = {"P.f.x"}
    state = propagate_serial(universe, network, seeds)

    # independent transitive closure over the recorded operand chains
    tainted = {"x"}
    changed = True
    while changed:
        changed = False
        for val, srcs in chains.items():
            if val not in tainted and srcs & tainted:
                tainted.add(val)
                changed = True
    assert state.tainted == {f"P.f.{v}" for v in tainted}


# --- parallel propagation -------------------------------------------------------

def make_schedule(seed):
    def schedule(items):
        rng = random.Random(seed)
        shuffled = list(items)
        rng.shuffle(shuffled)
        return shuffled
    return schedule


def test_fig10_cross_flows_found_at_merge(fig10_universe):
    network, seeds, sdg, entries = taint_setup(fig10_universe)
    serial = propagate_serial(fig10_universe, network, seeds)
    par = propagate_parallel(fig10_universe, network, seeds, sdg, entries)
    assert par.observable() == serial.observable()
    assert par.pending_fired > 0
    assert par.merge_iterations >= 2
    assert {"Mix.s1", "Mix.s2", "Mix.s3", "Mix.s4"} <= par.tainted_state


def test_merge_leaves_no_fireable_pending(fig10_universe):
    network, seeds, sdg, entries = taint_setup(fig10_universe)
    par = propagate_parallel(fig10_universe, network, seeds, sdg, entries)
    for src, dst in par.pending:
        assert src not in par.tainted
        assert src not in par.tainted_state


def test_single_entry_parallel_equals_serial(fig5_universe):
    network, seeds, sdg, _ = taint_setup(fig5_universe)
    serial = propagate_serial(fig5_universe, network, seeds)
    par = propagate_parallel(fig5_universe, network, seeds, sdg,
                             entries=["Gate.store.b0", "Gate.check.b0"])
    assert par.observable() == serial.observable()


@pytest.mark.parametrize("fixture,bindings,allowed", [
    ("fig2", FIG2_BINDINGS, FIG2_ENTRIES),
    ("fig5", {}, None),
    ("fig7", {}, None),
    ("fig9", {}, None),
    ("fig10", {}, None),
    ("fig11", FIG11_BINDINGS, None),
])
def test_parallel_equals_serial_on_fixtures(fixture, bindings, allowed, request):
    universe = request.getfixturevalue(f"{fixture}_universe")
    network, seeds, sdg, entries = taint_setup(universe, bindings, allowed)
    serial = propagate_serial(universe, network, seeds)
    for workers in (1, 2, 4, 8):
        for sched in range(10):
            par = propagate_parallel(universe, network, seeds, sdg, entries,
                                     workers=workers,
                                     schedule=make_schedule(sched))
            assert par.observable() == serial.observable()


@pytest.mark.parametrize("seed", range(50))
def test_parallel_equals_serial_on_random_universes(seed):
    universe = build_random_universe(seed, n_contracts=2, max_funcs=3)
    network, seeds, sdg, entries = taint_setup(universe)
    serial = propagate_serial(universe, network, seeds)
    for workers in (1, 4):
        for sched in range(4):
            par = propagate_parallel(universe, network, seeds, sdg, entries,
                                     workers=workers,
                                     schedule=make_schedule(sched))
            assert par.observable() == serial.observable()


def test_monotone_growth_under_extra_seeds(fig2_universe):
    network, seeds, sdg, entries = taint_setup(
        fig2_universe, FIG2_BINDINGS, allowed=FIG2_ENTRIES)
    base = propagate_serial(fig2_universe, network, seeds)
    more = propagate_serial(fig2_universe, network,
                            seeds | {"FundsHandler.finalizeAuction.highestBidder"})
    assert base.tainted <= more.tainted
    assert base.tainted_state <= more.tainted_state


def test_fig11_cross_contract_chain(fig11_universe):
    network, seeds, sdg, entries = taint_setup(fig11_universe, FIG11_BINDINGS)
    state = propagate_serial(fig11_universe, network, seeds)
    # setSeed(x) -> seed -> getSeed return -> bet's index -> winner
    assert "Test1.seed" in state.tainted_state
    assert "Test2.bet.v4" in state.tainted
    assert "Test2.winner" in state.tainted_state
    assert "Test2.transferToWinner" in state.affected_functions
    assert state.tainted_functions >= {
        "Test1.setSeed", "Test1.getSeed", "Test2.bet", "Test2.transferToWinner"}


def test_sd_mean_direction_across_fixture_suite(request):
    cases = [("fig2", FIG2_BINDINGS, FIG2_ENTRIES), ("fig5", {}, None),
             ("fig9", {}, None), ("fig10", {}, None),
             ("fig11", FIG11_BINDINGS, None)]
    with_sd, without_sd = [], []
    for fixture, bindings, allowed in cases:
        universe = request.getfixturevalue(f"{fixture}_universe")
        for sd, bucket in ((True, with_sd), (False, without_sd)):
            network, seeds, sdg, entries = taint_setup(
                universe, bindings, allowed, sd_edges=sd)
            state = propagate_serial(universe, network, seeds)
            bucket.append(len(state.tainted_functions))
    assert sum(with_sd) / len(with_sd) > sum(without_sd) / len(without_sd)


# --- confirmation ---------------------------------------------------------------

def _confirm_setup(universe, bindings, allowed):
    from crossinspect.detect import find_paths_serial
    from crossinspect.graphs import build_all
    callgraph, icfg, rw, revert, sdg = build_all(universe, bindings)
    from crossinspect.detect import detect_indicators
    indicators = detect_indicators(universe)
    entries = entry_blocks(universe, allowed=allowed)
    paths, *_ = find_paths_serial(universe, icfg, entries, indicators)
    network = build_network(universe, revert, bindings)
    seeds = seed_sources(universe, allowed=allowed, bindings=bindings)
    state = propagate_serial(universe, network, seeds)
    return state, indicators, paths


def test_confirm_indicators_fig2_witness_string(fig2_universe):
    from crossinspect.taint import confirm_indicators
    state, indicators, paths = _confirm_setup(
        fig2_universe, FIG2_BINDINGS, FIG2_ENTRIES)
    report = confirm_indicators(fig2_universe, state, indicators, paths)
    target = next(i for i in indicators if i.rule == "Timestamp"
                  and i.block == "FundsHandler.recordBid.b1")
    assert target in report.confirmed_indicators
    _, path_string = report.taint_path_witnesses[target.key]
    assert path_string == ("Auction.bid→FundsHandler.recordBid→[refunds]"
                           "→FundsHandler.finalizeAuction→[seller,itemOwner]")
    assert report.tainted_state_vars == state.tainted_state
    assert {i.key for i in report.confirmed_indicators} <= \
        set(report.taint_path_witnesses)


def test_confirm_overflow_needs_tainted_operand():
    from crossinspect.taint import confirm_indicators
    universe = parse_ir(
        "ir-version 1\ncontract A\nstatevar s slot=0 kind=scalar\n"
        "function f public()\nblock b0\n"
        "  v0 = CONST 2\n  v1 = CONST 3\n  v2 = ADD v0 v1\n"
        "  SSTORE s v2\n  STOP\n")
    state, indicators, paths = _confirm_setup(universe, {}, None)
    assert [i.rule for i in indicators] == ["Overflow"]
    report = confirm_indicators(universe, state, indicators, paths)
    assert report.confirmed_indicators == []        # constant-only operands
    assert indicators[0].key in report.taint_path_witnesses


def test_confirm_overflow_taint_requirement_togglable():
    from crossinspect.taint import confirm_indicators
    universe = parse_ir(
        "ir-version 1\ncontract A\nstatevar s slot=0 kind=scalar\n"
        "function f public()\nblock b0\n"
        "  v0 = CONST 2\n  v1 = CONST 3\n  v2 = ADD v0 v1\n"
        "  SSTORE s v2\n  STOP\n")
    state, indicators, paths = _confirm_setup(universe, {}, None)
    report = confirm_indicators(universe, state, indicators, paths,
                                AnalysisConfig(overflow_requires_taint=False))
    assert [i.rule for i in report.confirmed_indicators] == ["Overflow"]


def test_iteration_limit_yields_partial_state(fig2_universe):
    network, seeds, sdg, entries = taint_setup(
        fig2_universe, FIG2_BINDINGS, allowed=FIG2_ENTRIES)
    full = propagate_serial(fig2_universe, network, seeds)
    starved = propagate_serial(fig2_universe, network, seeds,
                               config=AnalysisConfig(iteration_limit=1))
    assert any(d.code == "iteration-limit" for d in starved.diagnostics)
    assert starved.tainted <= full.tainted
    assert len(starved.tainted) < len(full.tainted)
