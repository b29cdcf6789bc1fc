"""Taint propagation over the state dependency graph.

The rule network is monotone: value-to-value def-use edges, memory through
one summarized cell per function, storage writes and reads (when state
dependency edges are enabled), call argument and return passing, and the
state-revert rule.  A revert rule fires once the guarded variable has been
written with tainted data; it marks the guarded function affected, taints
the loads of that variable inside the guarded straight branch, and taints
the variables written there, whose persistence the guard controls.

Serial propagation closes the whole network at once.  Parallel propagation
gives each entry its own propagator restricted to the SDG region reachable
from that entry; edges a propagator examined but could not fire are kept as
pending, and the merge step re-fires pending edges and revert rules until
nothing grows.  Both orders compute the same least fixpoint, so the final
states are equal for every worker count and schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import AnalysisConfig
from .ir import CALL_OPCODES, Diagnostic, block_id_sort_key
from .graphs import resolve_call_target

MEM_CELL = "%mem"


def _mem(fn_qualified):
    return f"{fn_qualified}.{MEM_CELL}"


@dataclass(frozen=True)
class CallRecord:
    block: str
    function: str            # caller
    inputs: tuple            # global value ids feeding the call
    via_statevar: str | None  # qualified statevar holding the target address
    callee: str | None       # resolved qualified callee
    result: str | None


@dataclass(frozen=True)
class RevertRule:
    writer_block: str
    writer_function: str
    state_var: str
    target_function: str
    region_loads: tuple       # results of SLOAD <s> inside the guarded branch
    region_writes: tuple      # qualified statevars stored inside the branch


@dataclass
class TaintReport:
    tainted_functions: set = field(default_factory=set)
    tainted_state_vars: set = field(default_factory=set)
    confirmed_indicators: list = field(default_factory=list)
    taint_path_witnesses: dict = field(default_factory=dict)  # key -> (path, string)


@dataclass
class TaintState:
    tainted: set = field(default_factory=set)          # values and memory cells
    tainted_state: set = field(default_factory=set)    # qualified statevars
    affected_functions: set = field(default_factory=set)
    pending: list = field(default_factory=list)        # deferred (src, dst) edges
    visited_blocks: set = field(default_factory=set)
    crossings: set = field(default_factory=set)        # (from_fn, statevar, to_fn)
    affected_vars: dict = field(default_factory=dict)  # fn -> set of statevars
    tainted_functions: set = field(default_factory=set)
    merge_iterations: int = 0
    pending_fired: int = 0
    steps: int = 0
    diagnostics: list = field(default_factory=list)

    def observable(self):
        """The comparison key for serial/parallel equivalence."""
        return (frozenset(self.tainted), frozenset(self.tainted_state),
                frozenset(self.affected_functions),
                frozenset(self.tainted_functions),
                frozenset(self.crossings))


def seed_sources(universe, allowed=None, bindings=None):
    """Initial tainted set.

    Without an allow-list every public function is externally reachable:
    its parameters and environment reads are sources, and arguments of
    resolved cross-contract call sites seed the callee frame.  With an
    allow-list only the allowed entry frames are seeded; callee frames pick
    their taint up through argument propagation instead.
    """
    bindings = bindings or {}
    seeds = set()
    for contract in universe.sorted_contracts():
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            if fn.visibility != "public":
                continue
            if allowed is not None and fn.qualified_name not in allowed:
                continue
            for p in fn.params:
                seeds.add(f"{fn.qualified_name}.{p.name}")
            for blk in fn.sorted_blocks():
                for instr in blk.instructions:
                    if instr.opcode in ("CALLDATALOAD", "CALLVALUE", "CALLER") \
                            and instr.result:
                        seeds.add(f"{fn.qualified_name}.{instr.result}")
    if allowed is None:
        for contract in universe.sorted_contracts():
            for fn_name in sorted(contract.functions):
                fn = contract.functions[fn_name]
                for blk in fn.sorted_blocks():
                    for instr in blk.instructions:
                        if instr.opcode not in CALL_OPCODES:
                            continue
                        callee, _ = resolve_call_target(
                            universe, contract, instr, bindings)
                        if callee is None:
                            continue
                        callee_contract, callee_name = callee.split(".", 1)
                        if callee_contract == contract.name:
                            continue
                        callee_fn = universe.contracts[callee_contract] \
                            .functions[callee_name]
                        for p in callee_fn.params:
                            seeds.add(f"{callee}.{p.name}")
    return seeds


class RuleNetwork:
    """Static propagation rules extracted from one universe."""

    def __init__(self, universe, revert_deps=None, bindings=None, sd_edges=True):
        self.universe = universe
        self.sd_edges = sd_edges
        bindings = bindings or {}
        self.edges_by_owner = {}     # block id -> [(src, dst)]
        self.sstores = []            # (block, fn, statevar, value id or None)
        self.sloads = []             # (block, fn, statevar, result id)
        self.calls = []              # CallRecord
        self.revert_rules = []
        self.block_values = {}       # block id -> value ids defined there

        for contract in universe.sorted_contracts():
            for fn_name in sorted(contract.functions):
                self._function_rules(universe, contract,
                                     contract.functions[fn_name], bindings)
        if sd_edges:
            for dep in (revert_deps or []):
                self._revert_rule(universe, dep)

    # -- construction -------------------------------------------------------

    def _add(self, owner_block, src, dst):
        self.edges_by_owner.setdefault(owner_block, []).append((src, dst))

    def _function_rules(self, universe, contract, fn, bindings):
        qn = fn.qualified_name
        mem = _mem(qn)

        def vid(local):
            return f"{qn}.{local}"

        returns = []
        for blk in fn.sorted_blocks():
            bid = blk.block_id
            defined = self.block_values.setdefault(bid, set())
            for instr in blk.instructions:
                result = vid(instr.result) if instr.result else None
                if result:
                    defined.add(result)
                value_ops = [vid(op) for op in instr.operands
                             if isinstance(op, str)]
                op = instr.opcode
                if op == "SSTORE":
                    sv = f"{contract.name}.{instr.state_ref}"
                    val = instr.operands[-1]
                    val_id = vid(val) if isinstance(val, str) else None
                    self.sstores.append((bid, qn, sv, val_id))
                    if self.sd_edges and val_id:
                        self._add(bid, val_id, sv)
                elif op == "SLOAD":
                    sv = f"{contract.name}.{instr.state_ref}"
                    self.sloads.append((bid, qn, sv, result))
                    if self.sd_edges:
                        self._add(bid, sv, result)
                elif op == "MSTORE":
                    if len(value_ops) >= 1:
                        self._add(bid, value_ops[-1], mem)
                elif op == "MLOAD":
                    self._add(bid, mem, result)
                elif op == "SHA3":
                    self._add(bid, mem, result)
                    for src in value_ops:
                        self._add(bid, src, result)
                elif op == "INTERNALCALL":
                    callee = contract.functions.get(instr.internal_callee)
                    callee_qn = f"{contract.name}.{instr.internal_callee}"
                    self._call_flow(bid, qn, instr, value_ops, callee,
                                    callee_qn, None, returns_sink=result)
                elif op in CALL_OPCODES:
                    callee_qn, _ = resolve_call_target(
                        universe, contract, instr, bindings)
                    callee = None
                    if callee_qn:
                        cc, cf = callee_qn.split(".", 1)
                        callee = universe.contracts[cc].functions[cf]
                    via = (f"{contract.name}.{instr.call.via_statevar}"
                           if instr.call.via_statevar else None)
                    self._call_flow(bid, qn, instr, value_ops, callee,
                                    callee_qn, via, returns_sink=result)
                elif op == "RETURN":
                    returns.extend(value_ops)
                elif result is not None and op != "CONST":
                    for src in value_ops:
                        self._add(bid, src, result)
        self._returns_of = getattr(self, "_returns_of", {})
        self._returns_of[qn] = returns

    def _call_flow(self, bid, caller_qn, instr, value_ops, callee, callee_qn,
                   via_statevar, returns_sink):
        inputs = list(value_ops) + [_mem(caller_qn)]
        args = instr.operands
        amount = None
        if instr.opcode == "CALLVALUECALL":
            amount = instr.operands[0]
            args = instr.operands[1:]
        if callee is not None:
            callee_full = f"{callee.contract}.{callee.name}"
            for param, arg in zip(callee.params, args):
                if isinstance(arg, str):
                    self._add(bid, f"{caller_qn}.{arg}",
                              f"{callee_full}.{param.name}")
            if isinstance(amount, str):
                for blk in callee.sorted_blocks():
                    for cins in blk.instructions:
                        if cins.opcode == "CALLVALUE" and cins.result:
                            self._add(bid, f"{caller_qn}.{amount}",
                                      f"{callee_full}.{cins.result}")
        self.calls.append(CallRecord(
            block=bid, function=caller_qn, inputs=tuple(inputs),
            via_statevar=via_statevar, callee=callee_qn,
            result=returns_sink))

    def finish(self):
        """Wire return values to call results once every function is known."""
        for record in self.calls:
            if record.callee and record.result:
                for ret in self._returns_of.get(record.callee, ()):
                    self._add(record.block, ret, record.result)
        return self

    def _revert_rule(self, universe, dep):
        target_fn = universe.function_of_block(dep.target_block)
        contract_name, fn_name = target_fn.split(".", 1)
        fn = universe.contracts[contract_name].functions[fn_name]
        region = self._guarded_region(fn, dep.target_block.rsplit(".", 2)[2])
        loads = []
        writes = []
        for lbl in region:
            blk = fn.blocks[lbl]
            for instr in blk.instructions:
                ref = (f"{contract_name}.{instr.state_ref}"
                       if instr.state_ref else None)
                if instr.opcode == "SLOAD" and ref == dep.state_var:
                    loads.append(f"{target_fn}.{instr.result}")
                elif instr.opcode == "SSTORE":
                    writes.append(ref)
        self.revert_rules.append(RevertRule(
            writer_block=dep.writer_block,
            writer_function=self.universe.function_of_block(dep.writer_block),
            state_var=dep.state_var,
            target_function=target_fn,
            region_loads=tuple(sorted(loads)),
            region_writes=tuple(sorted(set(writes)))))

    @staticmethod
    def _guarded_region(fn, start_label):
        """The straight branch from `start_label`: follow unconditional flow
        and the non-reverting side of guard JUMPIs."""
        from .graphs import straight_reverts
        region = []
        label = start_label
        seen = set()
        while label in fn.blocks and label not in seen:
            seen.add(label)
            region.append(label)
            term = fn.blocks[label].terminator
            if term is None or term.opcode in ("RETURN", "STOP", "REVERT"):
                break
            if term.opcode == "JUMP":
                label = term.targets[0] if term.targets else None
                continue
            # JUMPI: continue along the only non-reverting side
            live = [t for t in term.targets if not straight_reverts(fn, t)]
            if len(live) == 1:
                label = live[0]
            else:
                break
        return region

    def all_owner_blocks(self):
        return set(self.edges_by_owner)


def build_network(universe, revert_deps=None, bindings=None, sd_edges=True):
    return RuleNetwork(universe, revert_deps, bindings, sd_edges).finish()


class _Propagator:
    """Worklist closure over a block-restricted view of the network."""

    def __init__(self, network, config, region=None):
        self.network = network
        self.config = config
        self.region = region      # None = every block
        self.tainted = set()
        self.tainted_state = set()
        self.affected = set()
        self.worklist = []
        self.frame_steps = {}
        self.steps = 0
        self.diagnostics = []
        self._adjacency = None

    def _allowed(self, block):
        return self.region is None or block in self.region

    def adjacency(self):
        if self._adjacency is None:
            adj = {}
            for block, edges in self.network.edges_by_owner.items():
                if not self._allowed(block):
                    continue
                for src, dst in edges:
                    adj.setdefault(src, []).append(dst)
            self._adjacency = adj
        return self._adjacency

    def _frame_ok(self, node):
        frame = node.rsplit(".", 1)[0]
        n = self.frame_steps.get(frame, 0) + 1
        self.frame_steps[frame] = n
        if n == self.config.iteration_limit + 1:
            self.diagnostics.append(Diagnostic(
                "iteration-limit", f"worklist budget exhausted in {frame}", frame))
        return n <= self.config.iteration_limit

    def add(self, node):
        if node in self.tainted or node in self.tainted_state:
            return
        if self._is_statevar(node):
            self.tainted_state.add(node)
        else:
            self.tainted.add(node)
        self.worklist.append(node)

    def _is_statevar(self, node):
        parts = node.split(".")
        if len(parts) != 2:
            return False
        contract = self.network.universe.contracts.get(parts[0])
        return contract is not None and parts[1] in contract.state_vars

    def run(self, seeds):
        self.worklist = []
        for seed in sorted(seeds):
            self.add(seed)
        adjacency = self.adjacency()
        while True:
            progress = False
            while self.worklist:
                node = self.worklist.pop()
                self.steps += 1
                if not self._frame_ok(node):
                    continue
                for dst in adjacency.get(node, ()):
                    if dst not in self.tainted and dst not in self.tainted_state:
                        self.add(dst)
                        progress = True
            if self.region is None and self._fire_revert_rules():
                progress = True
            if not progress and not self.worklist:
                break
        return self

    def _tainted_write_blocks(self):
        fired = set()
        for block, fn, sv, val_id in self.network.sstores:
            if val_id is not None and val_id in self.tainted:
                fired.add((block, sv))
        return fired

    def _fire_revert_rules(self):
        """Returns True when new facts appeared."""
        progress = False
        writes = self._tainted_write_blocks()
        for rule in self.network.revert_rules:
            if (rule.writer_block, rule.state_var) not in writes:
                continue
            if rule.state_var not in self.tainted_state:
                continue
            if rule.target_function not in self.affected:
                self.affected.add(rule.target_function)
                progress = True
            for load in rule.region_loads:
                if load not in self.tainted:
                    self.add(load)
                    progress = True
            for sv in rule.region_writes:
                if sv not in self.tainted_state:
                    self.add(sv)
                    progress = True
        return progress

    def pending_edges(self):
        """Edges in this propagator's view whose source never got tainted."""
        out = []
        for block, edges in self.network.edges_by_owner.items():
            if not self._allowed(block):
                continue
            for src, dst in edges:
                if src not in self.tainted and src not in self.tainted_state:
                    out.append((src, dst))
        return out


def _finalize(network, prop, state):
    """Fill the derived report fields from a closed propagator."""
    state.tainted = set(prop.tainted)
    state.tainted_state = set(prop.tainted_state)
    state.affected_functions = set(prop.affected)
    state.steps += prop.steps
    state.diagnostics.extend(prop.diagnostics)

    universe = network.universe
    writers = {}
    for block, fn, sv, val_id in network.sstores:
        tainted_write = val_id is not None and val_id in state.tainted
        region_write = any(
            sv in rule.region_writes and rule.target_function == fn
            and _rule_fired(rule, state, network)
            for rule in network.revert_rules)
        if tainted_write or (region_write and sv in state.tainted_state):
            writers.setdefault(sv, set()).add(fn)
            state.affected_vars.setdefault(fn, set()).add(sv)

    for block, fn, sv, result in network.sloads:
        if sv in state.tainted_state and result in state.tainted:
            for writer_fn in writers.get(sv, ()):
                if writer_fn != fn:
                    state.crossings.add((writer_fn, sv, fn))

    for rule in network.revert_rules:
        if _rule_fired(rule, state, network) and \
                rule.writer_function != rule.target_function:
            state.crossings.add((rule.writer_function, rule.state_var,
                                 rule.target_function))

    for record in network.calls:
        if any(i in state.tainted for i in record.inputs):
            if record.via_statevar:
                state.affected_vars.setdefault(record.function, set()) \
                    .add(record.via_statevar)

    tainted_fns = set(state.affected_functions)
    for value in state.tainted:
        if value.endswith(MEM_CELL):
            tainted_fns.add(value.rsplit(".", 1)[0])
            continue
        contract, fn, _ = value.rsplit(".", 2)
        if contract in universe.contracts and fn in universe.contracts[contract].functions:
            tainted_fns.add(f"{contract}.{fn}")
    for block, fn, sv, _ in network.sstores:
        if sv in state.tainted_state:
            tainted_fns.add(fn)
    for block, fn, sv, _ in network.sloads:
        if sv in state.tainted_state:
            tainted_fns.add(fn)
    state.tainted_functions = tainted_fns

    for block, values in network.block_values.items():
        if any(v in state.tainted for v in values):
            state.visited_blocks.add(block)
    for block, fn, sv, _ in network.sstores + network.sloads:
        if sv in state.tainted_state:
            state.visited_blocks.add(block)
    return state


def _rule_fired(rule, state, network):
    """A revert rule fired iff its variable is tainted and its writer block
    actually stored tainted data (the same condition the engines check)."""
    if rule.state_var not in state.tainted_state:
        return False
    for block, fn, sv, val_id in network.sstores:
        if block == rule.writer_block and sv == rule.state_var \
                and val_id is not None and val_id in state.tainted:
            return True
    return False


def propagate_serial(universe, network, seeds, paths=None, config=None):
    """Close the whole rule network from the seeds."""
    config = config or AnalysisConfig()
    prop = _Propagator(network, config).run(seeds)
    state = TaintState()
    state.pending = prop.pending_edges()
    return _finalize(network, prop, state)


def _region_of(sdg, entry_block):
    succ = {}
    for e in sdg.edges:
        succ.setdefault(e.src, set()).add(e.dst)
    seen = {entry_block}
    work = [entry_block]
    while work:
        cur = work.pop()
        for nxt in succ.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                work.append(nxt)
    return seen


def propagate_parallel(universe, network, seeds, sdg, entries, paths=None,
                       config=None, workers=None, schedule=None):
    """Per-entry propagators plus a pending-edge merge loop.

    Workers own private states and never touch shared data; the merge is a
    single-threaded reduction re-run until no pending edge fires, which
    makes the result equal to serial propagation for any worker count.
    """
    config = config or AnalysisConfig()
    ordered = sorted(entries, key=block_id_sort_key)
    if schedule is not None:
        ordered = schedule(ordered)

    entry_fn_of = {e: network.universe.function_of_block(e) for e in ordered}
    worker_states = []
    covered = set()
    for entry in ordered:
        region = _region_of(sdg, entry)
        covered |= region
        entry_seeds = {s for s in seeds
                       if s.rsplit(".", 1)[0] == entry_fn_of[entry]}
        prop = _Propagator(network, config, region=region).run(entry_seeds)
        worker_states.append(prop)

    state = TaintState()
    merged = _Propagator(network, config)
    for prop in worker_states:
        merged.tainted |= prop.tainted
        merged.tainted_state |= prop.tainted_state
        merged.affected |= prop.affected
        state.steps += prop.steps
        state.diagnostics.extend(prop.diagnostics)

    pending = []
    seen_edges = set()
    for prop in worker_states:
        for edge in prop.pending_edges():
            if edge not in seen_edges:
                seen_edges.add(edge)
                pending.append(edge)
    for block, edges in network.edges_by_owner.items():
        if block in covered:
            continue
        for edge in edges:
            if edge not in seen_edges:
                seen_edges.add(edge)
                pending.append(edge)
    # seeds outside every worker frame (e.g. call-site seeding of frames
    # nobody reaches) still count
    leftover = set(seeds) - merged.tainted - merged.tainted_state
    for seed in sorted(leftover):
        merged.tainted.add(seed)

    while True:
        state.merge_iterations += 1
        fired_any = False
        still = []
        for src, dst in pending:
            if src in merged.tainted or src in merged.tainted_state:
                if dst not in merged.tainted and dst not in merged.tainted_state:
                    if merged._is_statevar(dst):
                        merged.tainted_state.add(dst)
                    else:
                        merged.tainted.add(dst)
                state.pending_fired += 1
                fired_any = True
            else:
                still.append((src, dst))
        pending = still
        if merged._fire_revert_rules():
            fired_any = True
        if not fired_any:
            break

    state.pending = pending
    return _finalize(network, merged, state)


# --- confirmation and report paths -------------------------------------------

def _slot_of(universe, qualified):
    contract, name = qualified.split(".", 1)
    return universe.contracts[contract].state_vars[name].slot


def _function_sequence(universe, blocks):
    seq = []
    for b in blocks:
        fn = universe.function_of_block(b)
        if not seq or seq[-1] != fn:
            seq.append(fn)
    return seq


def build_path_string(universe, state, entry_path):
    """Report paths: function hops joined by arrows, bracketed state
    variables naming the dependency that carried the flow, and the affected
    variables of the terminal function."""
    seq = _function_sequence(universe, entry_path.blocks)
    parts = list(seq)
    visited = set(seq)
    cur = seq[-1]

    def names(vars_):
        ordered = sorted(vars_, key=lambda q: (_slot_of(universe, q), q))
        return "[" + ",".join(q.split(".", 1)[1] for q in ordered) + "]"

    while True:
        outs = {}
        for src, sv, dst in state.crossings:
            if src == cur and dst not in visited:
                outs.setdefault(dst, set()).add(sv)
        if not outs:
            break
        target = min(outs, key=lambda d: (
            min(_slot_of(universe, s) for s in outs[d]), d))
        parts.append(names(outs[target]))
        parts.append(target)
        visited.add(target)
        cur = target

    terminal = state.affected_vars.get(cur, ())
    if terminal:
        parts.append(names(terminal))
    return "→".join(parts)


def select_witness(universe, candidates):
    """Deterministic witness path per indicator: cross-function entries
    first, then the shortest, then block order."""
    def key(p):
        entry_fn = universe.function_of_block(p.entry)
        ind_fn = universe.function_of_block(p.indicator.block)
        return (0 if entry_fn != ind_fn else 1, len(p.blocks), p.sort_key())
    return min(candidates, key=key)


def overflow_operand_tainted(universe, indicator, state):
    contract, fn_name, label = indicator.block.rsplit(".", 2)
    fn = universe.contracts[contract].functions[fn_name]
    for instr in fn.blocks[label].instructions:
        if instr.iid == indicator.span[0]:
            qn = f"{contract}.{fn_name}"
            return any(isinstance(op, str) and f"{qn}.{op}" in state.tainted
                       for op in instr.operands)
    return False


def confirm_indicators(universe, state, indicators, paths, config=None):
    """Assemble the taint report: an indicator is confirmed when an entry
    path reaches it; Overflow additionally needs a tainted operand (the one
    rule whose witness is purely data-flow)."""
    config = config or AnalysisConfig()
    by_indicator = {}
    for p in paths:
        by_indicator.setdefault(p.indicator.key, []).append(p)

    report = TaintReport(
        tainted_functions=set(state.tainted_functions),
        tainted_state_vars=set(state.tainted_state))
    for ind in indicators:
        candidates = by_indicator.get(ind.key)
        if not candidates:
            continue
        witness = select_witness(universe, candidates)
        confirmed = True
        if ind.rule == "Overflow" and config.overflow_requires_taint:
            confirmed = overflow_operand_tainted(universe, ind, state)
        if confirmed:
            report.confirmed_indicators.append(ind)
        report.taint_path_witnesses[ind.key] = (
            witness, build_path_string(universe, state, witness))
    return report
