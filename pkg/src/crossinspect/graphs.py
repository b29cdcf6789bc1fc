"""Call graph, inter-contract CFG and state dependency graph construction.

Three layers, each feeding the next:

* the call graph links functions through INTERNALCALL and resolved
  CALL-family instructions;
* the ICFG is the union of every per-function CFG plus inter-call edges
  (call-site block to callee entry) and inter-return edges (callee exit
  back to the call-site block, where post-call execution continues);
* the SDG adds state variable nodes, one read/write edge per storage
  instruction, and state-revert edges from writer blocks to the start of
  the straight branch whose revert guard reads the written variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    CALL_OPCODES,
    Diagnostic,
    Universe,
    block_id_sort_key,
)

EXTERNAL_NODE = "EXTERNAL"


@dataclass(frozen=True)
class CallEdge:
    caller: str            # qualified function name
    callee: str            # qualified function name or EXTERNAL
    kind: str              # "internal" | "cross-contract"
    site_block: str        # block id of the call site


@dataclass
class CallGraph:
    nodes: set = field(default_factory=set)
    edges: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def edge_pairs(self):
        return {(e.caller, e.callee) for e in self.edges}

    def undirected_adjacency(self):
        adj = {n: set() for n in self.nodes}
        for e in self.edges:
            if e.callee == EXTERNAL_NODE:
                continue
            adj[e.caller].add(e.callee)
            adj[e.callee].add(e.caller)
        return adj


@dataclass(frozen=True)
class IcfgEdge:
    src: str
    dst: str
    kind: str              # "intra-cfg" | "inter-call" | "inter-return"


@dataclass
class Icfg:
    blocks: set = field(default_factory=set)
    edges: list = field(default_factory=list)

    def successors(self, kinds=("intra-cfg", "inter-call", "inter-return")):
        out = {}
        for e in self.edges:
            if e.kind in kinds:
                out.setdefault(e.src, []).append(e.dst)
        for src in out:
            out[src] = sorted(set(out[src]), key=block_id_sort_key)
        return out


@dataclass(frozen=True)
class RwDep:
    block: str             # block id
    state_var: str         # qualified statevar name
    access: str            # "read" | "write"
    iid: int               # storage instruction id, keeps the edge multiset exact


@dataclass(frozen=True)
class RevertDep:
    writer_block: str
    target_block: str      # start of the guarded straight branch
    state_var: str


@dataclass(frozen=True)
class SdgEdge:
    src: str
    dst: str
    kind: str              # icfg kinds + state-write/state-read/state-revert
    state_var: str | None = None


@dataclass
class Sdg:
    icfg: Icfg
    state_vars: set = field(default_factory=set)
    edges: list = field(default_factory=list)
    revert_deps: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)


def resolve_call_target(universe, contract, instr, bindings):
    """Resolution order: explicit IR name, manifest binding of the address
    statevar, then EXTERNAL.  Returns (qualified callee or None, diagnostic)."""
    tgt = instr.call
    diag = None
    target_contract = None
    if tgt.contract is not None:
        target_contract = tgt.contract
    elif tgt.via_statevar is not None:
        sv = contract.state_vars.get(tgt.via_statevar)
        if sv is not None:
            target_contract = bindings.get((contract.name, sv.slot))
    if target_contract is None or tgt.function is None:
        return None, diag
    callee_contract = universe.contracts.get(target_contract)
    if callee_contract is None:
        diag = Diagnostic("manifest-target-unknown",
                          f"bound target contract {target_contract!r} not in universe",
                          instr.call.render())
        return None, diag
    if tgt.function not in callee_contract.functions:
        diag = Diagnostic("unknown-callee",
                          f"function {tgt.function!r} not found on {target_contract}",
                          instr.call.render())
        return None, diag
    return f"{target_contract}.{tgt.function}", diag


def build_callgraph(universe, bindings=None):
    """One edge per distinct (caller, callee, site); unresolved externals
    dangle on the EXTERNAL node."""
    bindings = bindings or {}
    graph = CallGraph()
    for fn in universe.functions():
        graph.nodes.add(fn.qualified_name)
    for contract in universe.sorted_contracts():
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            for blk in fn.sorted_blocks():
                for instr in blk.instructions:
                    if instr.opcode == "INTERNALCALL":
                        callee = f"{contract.name}.{instr.internal_callee}"
                        if callee in graph.nodes:
                            graph.edges.append(CallEdge(
                                fn.qualified_name, callee, "internal", blk.block_id))
                        else:
                            graph.diagnostics.append(Diagnostic(
                                "unknown-internal-callee",
                                f"{instr.internal_callee!r} not in {contract.name}",
                                blk.block_id))
                    elif instr.opcode in CALL_OPCODES:
                        callee, diag = resolve_call_target(
                            universe, contract, instr, bindings)
                        if diag:
                            graph.diagnostics.append(diag)
                        if callee is not None:
                            kind = ("internal"
                                    if callee.split(".", 1)[0] == contract.name
                                    else "cross-contract")
                            graph.edges.append(CallEdge(
                                fn.qualified_name, callee, kind, blk.block_id))
                        else:
                            graph.edges.append(CallEdge(
                                fn.qualified_name, EXTERNAL_NODE,
                                "cross-contract", blk.block_id))
    graph.edges = sorted(set(graph.edges),
                         key=lambda e: (e.caller, e.callee, e.site_block, e.kind))
    return graph


def build_icfg(universe, callgraph):
    icfg = Icfg()
    entry_of = {}
    exits_of = {}
    for fn in universe.functions():
        entry_of[fn.qualified_name] = fn.entry_block_id
        exits = []
        for blk in fn.sorted_blocks():
            icfg.blocks.add(blk.block_id)
            term = blk.terminator
            if term is None:
                continue
            for tgt in term.targets:
                if tgt in fn.blocks:
                    icfg.edges.append(IcfgEdge(
                        blk.block_id, f"{fn.contract}.{fn.name}.{tgt}", "intra-cfg"))
            if term.opcode in ("RETURN", "STOP"):
                exits.append(blk.block_id)
        exits_of[fn.qualified_name] = exits

    for edge in callgraph.edges:
        if edge.callee == EXTERNAL_NODE:
            continue
        callee_entry = entry_of[edge.callee]
        icfg.edges.append(IcfgEdge(edge.site_block, callee_entry, "inter-call"))
        for exit_block in exits_of[edge.callee]:
            icfg.edges.append(IcfgEdge(exit_block, edge.site_block, "inter-return"))

    icfg.edges = sorted(set(icfg.edges), key=lambda e: (
        block_id_sort_key(e.src), block_id_sort_key(e.dst), e.kind))
    return icfg


def extract_rw_deps(universe):
    """One dep per storage instruction, attributed to its block and the
    normalized state variable."""
    deps = []
    for contract in universe.sorted_contracts():
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            for blk in fn.sorted_blocks():
                for instr in blk.instructions:
                    if instr.opcode == "SLOAD":
                        deps.append(RwDep(blk.block_id,
                                          f"{contract.name}.{instr.state_ref}",
                                          "read", instr.iid))
                    elif instr.opcode == "SSTORE":
                        deps.append(RwDep(blk.block_id,
                                          f"{contract.name}.{instr.state_ref}",
                                          "write", instr.iid))
    return deps


def _def_use_reaches_jumpi(fn, start_value):
    """Does `start_value` flow through intra-function def-use chains into
    some JUMPI condition?  Returns the blocks of the reached JUMPIs."""
    consumers = {}
    for blk in fn.blocks.values():
        for instr in blk.instructions:
            for op in instr.operands:
                if isinstance(op, str):
                    consumers.setdefault(op, []).append((blk, instr))
    reached = []
    seen = set()
    work = [start_value]
    while work:
        val = work.pop()
        if val in seen:
            continue
        seen.add(val)
        for blk, instr in consumers.get(val, ()):
            if instr.opcode == "JUMPI":
                reached.append(blk)
            elif instr.result is not None:
                work.append(instr.result)
    return reached


def straight_reverts(fn, start_label):
    """True when the path from `start_label` reaches REVERT through
    unconditional flow only (no intervening JUMPI)."""
    label = start_label
    seen = set()
    while label in fn.blocks and label not in seen:
        seen.add(label)
        term = fn.blocks[label].terminator
        if term is None:
            return False
        if term.opcode == "REVERT":
            return True
        if term.opcode == "JUMP" and term.targets:
            label = term.targets[0]
            continue
        return False
    return False


def _guarded_reads(fn):
    """SLOAD instructions whose loaded value guards a revert branch.
    Yields (block, statevar local name)."""
    out = []
    for blk in fn.sorted_blocks():
        for instr in blk.instructions:
            if instr.opcode != "SLOAD" or instr.result is None:
                continue
            for jumpi_block in _def_use_reaches_jumpi(fn, instr.result):
                term = jumpi_block.terminator
                if any(straight_reverts(fn, tgt) for tgt in term.targets):
                    out.append((blk, instr.state_ref))
                    break
    return out


def _intra_predecessors(fn):
    preds = {lbl: set() for lbl in fn.blocks}
    for lbl, blk in fn.blocks.items():
        term = blk.terminator
        if term is None:
            continue
        for tgt in term.targets:
            if tgt in preds:
                preds[tgt].add(lbl)
    return preds


def extract_revert_deps(universe, rw_deps):
    """For every write of s and guarded read of s, point the writer block at
    the start of the guarded straight branch: the unique predecessor of the
    reading block when one exists, else the reading block itself."""
    deps = set()
    diagnostics = []
    writers = {}
    for dep in rw_deps:
        if dep.access == "write":
            writers.setdefault(dep.state_var, set()).add(dep.block)

    for contract in universe.sorted_contracts():
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            preds = _intra_predecessors(fn)
            for read_block, sv_local in _guarded_reads(fn):
                qualified = f"{contract.name}.{sv_local}"
                if qualified not in writers:
                    continue
                read_preds = sorted(preds[read_block.label])
                if len(read_preds) == 1:
                    target = f"{contract.name}.{fn.name}.{read_preds[0]}"
                elif not read_preds:
                    target = read_block.block_id
                else:
                    target = read_block.block_id
                    diagnostics.append(Diagnostic(
                        "multi-pred-guard",
                        "guarded read has several predecessors; edge kept on the read block",
                        read_block.block_id))
                for writer_block in writers[qualified]:
                    deps.add(RevertDep(writer_block, target, qualified))

    ordered = sorted(deps, key=lambda d: (
        block_id_sort_key(d.writer_block), block_id_sort_key(d.target_block), d.state_var))
    return ordered, diagnostics


def build_sdg(universe, icfg, rw_deps, revert_deps, diagnostics=None):
    """Union of the ICFG with state variable nodes and state edges; the edge
    list is a multiset keyed by (src, dst, kind, s)."""
    sdg = Sdg(icfg=icfg, diagnostics=list(diagnostics or []))
    for contract in universe.sorted_contracts():
        for name in sorted(contract.state_vars):
            sdg.state_vars.add(f"{contract.name}.{name}")
    for e in icfg.edges:
        sdg.edges.append(SdgEdge(e.src, e.dst, e.kind))
    for dep in rw_deps:
        if dep.access == "write":
            sdg.edges.append(SdgEdge(dep.block, dep.state_var, "state-write", dep.state_var))
        else:
            sdg.edges.append(SdgEdge(dep.state_var, dep.block, "state-read", dep.state_var))
    for dep in revert_deps:
        sdg.edges.append(SdgEdge(dep.writer_block, dep.target_block,
                                 "state-revert", dep.state_var))
        sdg.revert_deps.append(dep)
    return sdg


def build_all(universe, bindings=None, sd_edges=True):
    """Convenience pipeline: callgraph, ICFG and SDG from one universe."""
    callgraph = build_callgraph(universe, bindings)
    icfg = build_icfg(universe, callgraph)
    if sd_edges:
        rw = extract_rw_deps(universe)
        revert, diags = extract_revert_deps(universe, rw)
    else:
        rw, revert, diags = [], [], []
    sdg = build_sdg(universe, icfg, rw, revert, diags)
    return callgraph, icfg, rw, revert, sdg


def render_edge_list(kind, callgraph=None, icfg=None, sdg=None):
    """Deterministic `src -> dst [kind] [s=<var>]` listing."""
    lines = []
    if kind == "callgraph":
        for e in callgraph.edges:
            lines.append(f"{e.caller} -> {e.callee} [{e.kind}]")
    elif kind == "icfg":
        for e in icfg.edges:
            lines.append(f"{e.src} -> {e.dst} [{e.kind}]")
    elif kind == "sdg":
        for e in sdg.edges:
            suffix = f" s={e.state_var}" if e.state_var else ""
            lines.append(f"{e.src} -> {e.dst} [{e.kind}]{suffix}")
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def render_dot(kind, callgraph=None, icfg=None, sdg=None):
    """GraphViz rendering of the same edge sets."""
    lines = [f"digraph {kind} {{"]
    if kind == "callgraph":
        for e in callgraph.edges:
            style = ' style=dashed' if e.kind == "cross-contract" else ""
            lines.append(f'  "{e.caller}" -> "{e.callee}" [label="{e.kind}"{style}];')
    elif kind == "icfg":
        for e in icfg.edges:
            lines.append(f'  "{e.src}" -> "{e.dst}" [label="{e.kind}"];')
    elif kind == "sdg":
        for sv in sorted(sdg.state_vars):
            lines.append(f'  "{sv}" [shape=box];')
        for e in sdg.edges:
            label = e.kind if e.state_var is None else f"{e.kind} {e.state_var}"
            lines.append(f'  "{e.src}" -> "{e.dst}" [label="{label}"];')
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    lines.append("}")
    return "\n".join(lines) + "\n"
