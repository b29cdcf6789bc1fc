"""Basic block recovery and jump resolution over raw EVM code.

Jump targets come from a worklist constant-stack simulation: abstract stack
slots are either a concrete word or unknown, the join across predecessors
keeps equal values and drops the rest to unknown, and every block is
re-simulated at most twice after its first visit.  Edges found under any
visit accumulate, so a jump observed with two different constant targets
keeps both.  Jumps whose target never resolves get an edge to the
distinguished UNRESOLVED node; that is data for the report, not a failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .opcodes import BLOCK_TERMINATORS, TABLE, is_push

UNRESOLVED = "UNRESOLVED"
UNKNOWN = None

_WORD = (1 << 256) - 1

MAX_REVISITS = 2
_STACK_CAP = 256


@dataclass
class EvmBlock:
    start: int
    ops: list = field(default_factory=list)

    @property
    def end_op(self):
        return self.ops[-1]

    @property
    def is_jumpdest(self):
        return self.ops[0].mnemonic == "JUMPDEST"


@dataclass
class Cfg:
    blocks: dict = field(default_factory=dict)    # start offset -> EvmBlock
    edges: set = field(default_factory=set)       # (src, dst or UNRESOLVED)
    entry_stacks: dict = field(default_factory=dict)  # start -> tuple of values
    reached: set = field(default_factory=set)
    diagnostics: list = field(default_factory=list)

    def successors(self, start):
        return sorted(d for s, d in self.edges if s == start and d != UNRESOLVED)


def split_blocks(ops):
    """Leaders: offset 0, every JUMPDEST, and the op after a terminator."""
    if not ops:
        return {}
    leaders = {ops[0].offset}
    for idx, op in enumerate(ops):
        if op.mnemonic == "JUMPDEST":
            leaders.add(op.offset)
        if op.mnemonic in BLOCK_TERMINATORS and idx + 1 < len(ops):
            leaders.add(ops[idx + 1].offset)
    blocks = {}
    current = None
    for op in ops:
        if op.offset in leaders:
            current = EvmBlock(op.offset)
            blocks[op.offset] = current
        current.ops.append(op)
    return blocks


def _fold(mnemonic, args):
    """Constant folding for the value-tracking subset; EVM word semantics."""
    try:
        if mnemonic == "ADD":
            return (args[0] + args[1]) & _WORD
        if mnemonic == "SUB":
            return (args[0] - args[1]) & _WORD
        if mnemonic == "MUL":
            return (args[0] * args[1]) & _WORD
        if mnemonic == "DIV":
            return args[0] // args[1] if args[1] else 0
        if mnemonic == "AND":
            return args[0] & args[1]
        if mnemonic == "OR":
            return args[0] | args[1]
        if mnemonic == "XOR":
            return args[0] ^ args[1]
        if mnemonic == "NOT":
            return args[0] ^ _WORD
        if mnemonic == "SHL":
            return (args[1] << args[0]) & _WORD if args[0] < 256 else 0
        if mnemonic == "SHR":
            return args[1] >> args[0] if args[0] < 256 else 0
        if mnemonic == "EQ":
            return int(args[0] == args[1])
        if mnemonic == "LT":
            return int(args[0] < args[1])
        if mnemonic == "GT":
            return int(args[0] > args[1])
        if mnemonic == "ISZERO":
            return int(args[0] == 0)
    except TypeError:
        return UNKNOWN
    return UNKNOWN


_FOLDABLE = {"ADD", "SUB", "MUL", "DIV", "AND", "OR", "XOR", "NOT",
             "SHL", "SHR", "EQ", "LT", "GT", "ISZERO"}


class _AbstractStack:
    __slots__ = ("slots",)

    def __init__(self, slots=()):
        self.slots = list(slots)

    def push(self, value):
        self.slots.append(value)
        if len(self.slots) > _STACK_CAP:
            del self.slots[0]

    def pop(self):
        return self.slots.pop() if self.slots else UNKNOWN

    def step(self, op):
        """Returns the op's popped values (top first)."""
        name = op.mnemonic
        if is_push(name):
            self.push(op.immediate_value())
            return []
        if name == "PUSH0":
            self.push(0)
            return []
        if name.startswith("DUP"):
            n = int(name[3:])
            value = self.slots[-n] if len(self.slots) >= n else UNKNOWN
            self.push(value)
            return []
        if name.startswith("SWAP"):
            n = int(name[4:])
            if len(self.slots) >= n + 1:
                self.slots[-1], self.slots[-n - 1] = \
                    self.slots[-n - 1], self.slots[-1]
            else:
                self.slots = [UNKNOWN] * (n + 1 - len(self.slots)) + self.slots
                self.slots[-1], self.slots[-n - 1] = \
                    self.slots[-n - 1], self.slots[-1]
            return []
        info = TABLE.get(op.byte)
        pops = info[2] if info else 0
        pushes = info[3] if info else 0
        args = [self.pop() for _ in range(pops)]
        if pushes:
            if name in _FOLDABLE and all(a is not UNKNOWN for a in args):
                self.push(_fold(name, args))
            else:
                for _ in range(pushes):
                    self.push(UNKNOWN)
        return args


def _join(a, b):
    """Positional join aligned at the stack top: equal values survive."""
    if a is None:
        return list(b), True
    la, lb = len(a), len(b)
    keep = min(la, lb)
    joined = []
    changed = la != keep
    for i in range(1, keep + 1):
        va, vb = a[-i], b[-i]
        value = va if va == vb else UNKNOWN
        joined.append(value)
        changed = changed or value != va
    joined.reverse()
    return joined, changed


def recover_blocks(ops):
    """Split into blocks and resolve jump targets."""
    cfg = Cfg(blocks=split_blocks(ops))
    if not cfg.blocks:
        return cfg
    starts = sorted(cfg.blocks)
    next_start = {s: starts[i + 1] if i + 1 < len(starts) else None
                  for i, s in enumerate(starts)}

    states = {starts[0]: []}
    visits = {}
    work = [starts[0]]
    while work:
        start = work.pop(0)
        visits[start] = visits.get(start, 0) + 1
        cfg.reached.add(start)
        block = cfg.blocks[start]
        stack = _AbstractStack(states[start])

        popped = []
        for op in block.ops:
            popped = stack.step(op)

        last = block.end_op
        out_states = []
        if last.mnemonic == "JUMP":
            target = popped[0] if popped else UNKNOWN
            out_states += _jump_edges(cfg, start, target, stack)
        elif last.mnemonic == "JUMPI":
            target = popped[0] if popped else UNKNOWN
            out_states += _jump_edges(cfg, start, target, stack)
            fall = next_start[start]
            if fall is not None:
                cfg.edges.add((start, fall))
                out_states.append((fall, stack.slots))
        elif last.mnemonic in BLOCK_TERMINATORS:
            pass
        else:
            fall = next_start[start]
            if fall is not None:
                cfg.edges.add((start, fall))
                out_states.append((fall, stack.slots))

        for dst, slots in out_states:
            joined, changed = _join(states.get(dst), slots)
            first_time = dst not in states
            states[dst] = joined
            if first_time:
                work.append(dst)
            elif changed and visits.get(dst, 0) <= MAX_REVISITS:
                if dst not in work:
                    work.append(dst)

    cfg.entry_stacks = {s: tuple(v) for s, v in states.items()}
    return cfg


def _jump_edges(cfg, start, target, stack):
    if target is UNKNOWN:
        cfg.edges.add((start, UNRESOLVED))
        return []
    dst_block = cfg.blocks.get(target)
    if dst_block is None or not dst_block.is_jumpdest:
        cfg.diagnostics.append(
            f"block {start:#x}: jump to non-JUMPDEST {target:#x}")
        return []
    cfg.edges.add((start, target))
    return [(target, stack.slots)]
