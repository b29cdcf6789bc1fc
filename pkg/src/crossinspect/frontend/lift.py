"""Stack-machine to three-address lifting.

Each recovered block is simulated with a symbolic stack: PUSH immediates
stay literal operands, value-producing opcodes define fresh locals, and
unknown stack slots entering a block materialize as zero-operand PHI
definitions (opaque block inputs).  Storage addresses are normalized while
simulating: a constant address is a scalar slot, a KECCAK256 over the
canonical (key, slot) memory image is a mapping keyed on the base slot, a
KECCAK256 over a bare slot word is an array.  Function bodies are the
blocks reachable from their dispatch entry without crossing another entry;
blocks shared between entries are cloned per function so every function
keeps a self-contained CFG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import BasicBlock, Contract, Function, Instruction, StateVar
from .cfg import UNKNOWN
from .opcodes import TABLE, is_push

_WORD_MASKS = {(1 << (8 * n)) - 1 for n in range(1, 33)}

# opcode families the lifter maps onto the closed IR set
_DIRECT = {"ADD", "SUB", "MUL", "DIV", "LT", "GT", "EQ", "ISZERO", "AND",
           "OR", "CALLER", "CALLVALUE", "TIMESTAMP", "NUMBER", "MLOAD"}
_AS_AND = {"MOD", "SMOD", "SDIV", "EXP", "ADDMOD", "MULMOD", "SIGNEXTEND",
           "BYTE"}                      # taint-preserving, not overflow-prone
_AS_DIV = {"SHL", "SHR", "SAR"}
_AS_LT = {"SLT"}
_AS_GT = {"SGT"}
_AS_ISZERO = {"NOT"}
_OPAQUE = {"ADDRESS", "ORIGIN", "GASPRICE", "COINBASE", "GASLIMIT",
           "CHAINID", "SELFBALANCE", "BASEFEE", "PREVRANDAO", "PC", "MSIZE",
           "GAS", "CALLDATASIZE", "CODESIZE", "RETURNDATASIZE", "BLOCKHASH",
           "BALANCE", "EXTCODESIZE", "EXTCODEHASH"}


class StackUnderflow(Exception):
    def __init__(self, block_start):
        super().__init__(f"stack underflow in block {block_start:#x}")
        self.block_start = block_start


@dataclass
class SymVal:
    token: object                  # int literal or local value name
    meta: tuple | None = None      # ("sload", name) | ("map", slot, key)
                                   # | ("arr", slot)


@dataclass
class StorageRegistry:
    """Slot -> StateVar bookkeeping for one contract."""
    state_vars: dict = field(default_factory=dict)   # name -> StateVar
    by_slot: dict = field(default_factory=dict)      # slot -> name
    diagnostics: list = field(default_factory=list)
    dynamic_count: int = 0

    def ensure(self, contract_name, slot, kind):
        if slot in self.by_slot:
            name = self.by_slot[slot]
            sv = self.state_vars[name]
            if sv.kind != kind:
                self.diagnostics.append(
                    f"slot {slot} used both as {sv.kind} and {kind}; keeping {sv.kind}")
            return name
        prefix = {"scalar": "stor", "mapping": "map", "array": "arr"}[kind]
        name = f"{prefix}_{slot}"
        self.state_vars[name] = StateVar(
            contract=contract_name, name=name, slot=slot, kind=kind)
        self.by_slot[slot] = name
        return name

    def dynamic(self, contract_name):
        self.dynamic_count += 1
        slot = 0x10000 + self.dynamic_count
        name = f"stor_dyn{self.dynamic_count}"
        self.state_vars[name] = StateVar(
            contract=contract_name, name=name, slot=slot, kind="scalar")
        self.by_slot[slot] = name
        self.diagnostics.append(
            f"dynamic storage address normalized as {name}")
        return name


class _BlockLifter:
    def __init__(self, fn_lifter, block, entry_stack, strict_entry):
        self.fn = fn_lifter
        self.block = block
        self.strict_entry = strict_entry
        self.phis = []
        self.body = []
        self.memory = {}       # const offset -> SymVal
        self.stack = [self._entry_slot(v) for v in entry_stack]

    def _entry_slot(self, value):
        if value is UNKNOWN:
            return self._phantom()
        return SymVal(value)

    def _phantom(self):
        name = self.fn.fresh()
        self.phis.append(Instruction(iid=-1, opcode="PHI", result=name))
        return SymVal(name)

    def pop(self):
        if self.stack:
            return self.stack.pop()
        if self.strict_entry:
            raise StackUnderflow(self.block.start)
        val = self._phantom()
        return val

    def push(self, val):
        self.stack.append(val)

    def emit(self, opcode, operands=(), state_ref=None, call=None,
             internal_callee=None, targets=(), result=True):
        name = self.fn.fresh() if result else None
        self.body.append(Instruction(
            iid=-1, opcode=opcode, result=name,
            operands=tuple(o.token if isinstance(o, SymVal) else o
                           for o in operands),
            state_ref=state_ref, call=call, targets=tuple(targets)))
        return SymVal(name) if name else None

    # -- opcode handling ------------------------------------------------

    def run(self):
        for op in self.block.ops:
            self._op(op)
        return self

    def _op(self, op):
        name = op.mnemonic
        if is_push(name):
            self.push(SymVal(op.immediate_value()))
        elif name == "PUSH0":
            self.push(SymVal(0))
        elif name == "JUMPDEST":
            pass
        elif name == "POP":
            self.pop()
        elif name.startswith("DUP"):
            n = int(name[3:])
            while len(self.stack) < n:
                if self.strict_entry:
                    raise StackUnderflow(self.block.start)
                self.stack.insert(0, self._phantom())
            self.push(self.stack[-n])
        elif name.startswith("SWAP"):
            n = int(name[4:])
            while len(self.stack) < n + 1:
                if self.strict_entry:
                    raise StackUnderflow(self.block.start)
                self.stack.insert(0, self._phantom())
            self.stack[-1], self.stack[-n - 1] = \
                self.stack[-n - 1], self.stack[-1]
        elif name == "SLOAD":
            self._sload()
        elif name == "SSTORE":
            self._sstore()
        elif name == "KECCAK256":
            self._keccak()
        elif name == "MSTORE" or name == "MSTORE8":
            off, val = self.pop(), self.pop()
            if isinstance(off.token, int):
                self.memory[off.token] = val
            self.emit("MSTORE", (off, val), result=False)
        elif name == "CALLDATALOAD":
            off = self.pop()
            self.push(self.emit("CALLDATALOAD", (off,)))
        elif name == "CALLDATACOPY":
            dst, src, _length = self.pop(), self.pop(), self.pop()
            loaded = self.emit("CALLDATALOAD", (src,))
            if isinstance(dst.token, int):
                self.memory[dst.token] = loaded
            self.emit("MSTORE", (dst, loaded), result=False)
        elif name in ("CODECOPY", "RETURNDATACOPY", "EXTCODECOPY"):
            pops = TABLE[op.byte][2]
            args = [self.pop() for _ in range(pops)]
            self.emit("MSTORE", (args[0], SymVal(0)), result=False)
        elif name.startswith("LOG"):
            for _ in range(TABLE[op.byte][2]):
                self.pop()
        elif name in ("CREATE", "CREATE2"):
            for _ in range(TABLE[op.byte][2]):
                self.pop()
            self.push(SymVal(0))
            self.fn.diag(f"block {self.block.start:#x}: CREATE lowered to constant")
        elif name in ("CALL", "CALLCODE"):
            self._call_7(name)
        elif name == "DELEGATECALL":
            self._call_6("DELEGATECALL")
        elif name == "STATICCALL":
            self._call_6("STATICCALL")
        elif name in _OPAQUE:
            for _ in range(TABLE[op.byte][2]):
                self.pop()
            self.push(SymVal(0))
        elif name in _DIRECT or name in _AS_AND or name in _AS_DIV \
                or name in _AS_LT or name in _AS_GT or name in _AS_ISZERO:
            self._value_op(op, name)
        elif name in ("JUMP", "JUMPI", "STOP", "RETURN", "REVERT", "INVALID",
                      "SELFDESTRUCT"):
            self._terminator(op, name)
        else:
            # unknown decoded as INVALID elsewhere; treat defensively
            for _ in range(TABLE.get(op.byte, ("", 0, 0, 0))[2]):
                self.pop()
            self.fn.diag(f"block {self.block.start:#x}: opcode {name} ignored")

    def _value_op(self, op, name):
        pops = TABLE[op.byte][2]
        args = [self.pop() for _ in range(pops)]
        opcode = name
        if name in _AS_AND:
            opcode = "AND"
        elif name in _AS_DIV:
            opcode = "DIV"
        elif name in _AS_LT:
            opcode = "LT"
        elif name in _AS_GT:
            opcode = "GT"
        elif name in _AS_ISZERO:
            opcode = "ISZERO"
        result = self.emit(opcode, args[:3])
        # address masking keeps storage provenance alive
        if opcode == "AND":
            metas = [a.meta for a in args if a.meta is not None]
            masks = [a.token for a in args
                     if isinstance(a.token, int) and a.token in _WORD_MASKS]
            if len(metas) == 1 and masks:
                result.meta = metas[0]
        self.push(result)

    def _sload(self):
        addr = self.pop()
        name = self._resolve_storage(addr, writing=False)
        sv = self.fn.registry.state_vars[name]
        if sv.kind == "mapping":
            key = addr.meta[2]
            result = self.emit("SLOAD", (SymVal(key),), state_ref=name)
        elif sv.kind == "array" and addr.meta and addr.meta[0] == "arr":
            result = self.emit("SLOAD", (), state_ref=name)
        else:
            result = self.emit("SLOAD", (), state_ref=name)
        result.meta = ("sload", name)
        self.push(result)

    def _sstore(self):
        addr, value = self.pop(), self.pop()
        name = self._resolve_storage(addr, writing=True)
        sv = self.fn.registry.state_vars[name]
        if sv.kind == "mapping":
            key = addr.meta[2]
            self.emit("SSTORE", (SymVal(key), value), state_ref=name,
                      result=False)
        else:
            self.emit("SSTORE", (value,), state_ref=name, result=False)

    def _resolve_storage(self, addr, writing):
        contract = self.fn.contract_name
        if isinstance(addr.token, int) and addr.meta is None:
            return self.fn.registry.ensure(contract, addr.token, "scalar")
        if addr.meta and addr.meta[0] == "map":
            return self.fn.registry.ensure(contract, addr.meta[1], "mapping")
        if addr.meta and addr.meta[0] == "arr":
            return self.fn.registry.ensure(contract, addr.meta[1], "array")
        return self.fn.registry.dynamic(contract)

    def _keccak(self):
        off, length = self.pop(), self.pop()
        result = self.emit("SHA3", (off, length))
        if isinstance(off.token, int) and isinstance(length.token, int):
            if length.token == 0x40:
                key = self.memory.get(off.token)
                slot = self.memory.get(off.token + 0x20)
                if key is not None and slot is not None \
                        and isinstance(slot.token, int):
                    result.meta = ("map", slot.token, key.token)
            elif length.token == 0x20:
                slot = self.memory.get(off.token)
                if slot is not None and isinstance(slot.token, int):
                    result.meta = ("arr", slot.token)
        self.push(result)

    def _call_7(self, name):
        _gas = self.pop()
        addr = self.pop()
        value = self.pop()
        for _ in range(4):
            self.pop()
        target = self._call_target(addr)
        if isinstance(value.token, int) and value.token == 0:
            self.push(self.emit("CALL", (), call=target))
        else:
            self.push(self.emit("CALLVALUECALL", (value,), call=target))

    def _call_6(self, opcode):
        _gas = self.pop()
        addr = self.pop()
        for _ in range(4):
            self.pop()
        self.push(self.emit(opcode, (), call=self._call_target(addr)))

    def _call_target(self, addr):
        from ..ir import CallTarget
        if addr.meta and addr.meta[0] == "sload":
            return CallTarget(via_statevar=addr.meta[1])
        return CallTarget()

    def _terminator(self, op, name):
        cfg = self.fn.cfg
        start = self.block.start
        in_fn = self.fn.block_labels
        resolved = sorted(d for s, d in cfg.edges
                          if s == start and isinstance(d, int))
        if name == "JUMP":
            self.pop()
            targets = [d for d in resolved if d in in_fn]
            if len(targets) == 1:
                self.emit("JUMP", targets=(f"b{targets[0]}",), result=False)
                if (start, "UNRESOLVED") in cfg.edges:
                    self.fn.diag(f"block {start:#x}: partially resolved jump; "
                                 f"kept b{targets[0]} only")
            elif len(targets) > 1:
                self.emit("JUMP", targets=(), result=False)
                self.fn.diag(f"block {start:#x}: several jump targets; "
                             "terminator left unresolved")
            else:
                self.emit("STOP", result=False)
                if (start, "UNRESOLVED") in cfg.edges:
                    self.fn.diag(f"block {start:#x}: unresolved jump lowered to STOP")
                elif resolved:
                    self.fn.diag(f"block {start:#x}: jump leaves the function; "
                                 "lowered to STOP")
        elif name == "JUMPI":
            self.pop()
            cond = self.pop()
            fall = self.fn.fallthrough_of(start)
            taken = [d for d in resolved if d in in_fn and d != fall]
            if taken and fall in in_fn:
                self.emit("JUMPI", (cond,),
                          targets=(f"b{taken[0]}", f"b{fall}"), result=False)
            elif fall in in_fn:
                self.emit("JUMP", targets=(f"b{fall}",), result=False)
                self.fn.diag(f"block {start:#x}: conditional target unresolved; "
                             "kept fallthrough only")
            elif taken:
                self.emit("JUMP", targets=(f"b{taken[0]}",), result=False)
            else:
                self.emit("STOP", result=False)
        elif name == "RETURN":
            self.pop()
            self.pop()
            self.emit("RETURN", result=False)
        elif name in ("REVERT", "INVALID"):
            if name == "REVERT":
                self.pop()
                self.pop()
            self.emit("REVERT", result=False)
        elif name == "SELFDESTRUCT":
            self.pop()
            self.emit("STOP", result=False)
            self.fn.diag(f"block {start:#x}: SELFDESTRUCT lowered to STOP")
        else:   # STOP
            self.emit("STOP", result=False)


class _FunctionLifter:
    def __init__(self, contract_name, fn_name, cfg, entry, block_labels,
                 registry, diagnostics):
        self.contract_name = contract_name
        self.fn_name = fn_name
        self.cfg = cfg
        self.entry = entry
        self.block_labels = block_labels     # set of owned block offsets
        self.registry = registry
        self.diagnostics = diagnostics
        self.counter = 0

    def fresh(self):
        name = f"v{self.counter}"
        self.counter += 1
        return name

    def diag(self, message):
        self.diagnostics.append(f"{self.contract_name}.{self.fn_name}: {message}")

    def fallthrough_of(self, start):
        starts = sorted(self.cfg.blocks)
        idx = starts.index(start)
        return starts[idx + 1] if idx + 1 < len(starts) else None

    def lift(self):
        fn = Function(name=self.fn_name, contract=self.contract_name,
                      visibility="public", params=[])
        for start in sorted(self.block_labels):
            label = f"b{start}"
            block = BasicBlock(label=label, contract=self.contract_name,
                               function=self.fn_name)
            entry_stack = self.cfg.entry_stacks.get(start, ())
            strict = (start == 0 and start == self.entry)
            try:
                lifter = _BlockLifter(self, self.cfg.blocks[start],
                                      entry_stack, strict).run()
                instructions = lifter.phis + lifter.body
                if not instructions or not instructions[-1].is_terminator:
                    fall = self.fallthrough_of(start)
                    term = Instruction(iid=-1, opcode="JUMP",
                                       targets=(f"b{fall}",)) \
                        if fall in self.block_labels else \
                        Instruction(iid=-1, opcode="STOP")
                    instructions.append(term)
                block.instructions = instructions
            except StackUnderflow:
                block.instructions = [Instruction(iid=-1, opcode="STOP")]
                self.diag(f"block {start:#x}: stack underflow; marked unanalyzable")
            fn.blocks[label] = block
            if start == self.entry:
                fn.entry_label = label
        self._prune_unreachable(fn)
        self._renumber(fn)
        return fn

    @staticmethod
    def _prune_unreachable(fn):
        """Unanalyzable blocks lose their terminators, which can orphan
        their successors in the lifted CFG; drop everything the entry no
        longer reaches."""
        reached = {fn.entry_label}
        work = [fn.entry_label]
        while work:
            blk = fn.blocks[work.pop()]
            term = blk.terminator
            for target in (term.targets if term else ()):
                if target in fn.blocks and target not in reached:
                    reached.add(target)
                    work.append(target)
        for label in [l for l in fn.blocks if l not in reached]:
            del fn.blocks[label]

    def _renumber(self, fn):
        iid = 0
        entry_first = [fn.entry_label] + [
            lbl for lbl in sorted(fn.blocks, key=lambda l: int(l[1:]))
            if lbl != fn.entry_label]
        for lbl in entry_first:
            for instr in fn.blocks[lbl].instructions:
                instr.iid = iid
                iid += 1


def function_block_set(cfg, entry, other_entries):
    """Blocks reachable from `entry` without crossing another entry block."""
    seen = {entry}
    work = [entry]
    while work:
        cur = work.pop()
        for dst in cfg.successors(cur):
            if dst in other_entries or dst in seen or dst not in cfg.reached:
                continue
            seen.add(dst)
            work.append(dst)
    return seen & cfg.reached


def lift_to_ir(contract_name, cfg, entries):
    """Assemble the IR contract from recovered blocks and dispatch entries."""
    registry = StorageRegistry()
    diagnostics = []
    contract = Contract(name=contract_name)
    entry_blocks = {e.entry_block for e in entries}
    for entry in entries:
        others = entry_blocks - {entry.entry_block}
        owned = function_block_set(cfg, entry.entry_block, others)
        if entry.entry_block not in cfg.reached:
            diagnostics.append(
                f"{contract_name}.{entry.function_name}: entry block "
                f"{entry.entry_block:#x} unreachable; skipped")
            continue
        lifter = _FunctionLifter(contract_name, entry.function_name, cfg,
                                 entry.entry_block, owned, registry,
                                 diagnostics)
        fn = lifter.lift()
        contract.functions[entry.function_name] = fn
    contract.state_vars = registry.state_vars
    diagnostics.extend(registry.diagnostics)
    return contract, diagnostics
