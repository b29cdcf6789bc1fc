"""Three-address IR data model plus the line-oriented textual format.

The universe (a set of contracts) is the shared input of every analysis.
Fixtures and external decompilers talk to the analyzer through `.ir` files;
the grammar is versioned by the leading ``ir-version 1`` line and is kept
deliberately small:

    ir-version 1
    contract <Name> [@<hex-address>]
    statevar <name> slot=<n> kind=<scalar|mapping|array> [label=<Category>]
    function <name> <public|private>(<param:type>, ...)
    block <bN>
    <vK> = <OPCODE> <operand> ...        value-producing instruction
    <OPCODE> <operand> ...               effect-only instruction
    JUMP <bM> | JUMP ?                   terminators
    JUMPI <v> <bM> <bK>
    RETURN [<v>] | REVERT | STOP

Operands are local value names (``v0``), parameter names, or integer
literals (decimal or 0x-hex).  SLOAD/SSTORE name a declared state variable
first; mapping accesses add a key operand.  Call targets are written
``Contract.fn`` (explicit), ``@statevar.fn`` (address held in a state
variable, resolved through the deployment manifest) or ``?.fn`` / ``?``
(unknown).  Lines starting with ``#`` are comments; indentation is free.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Closed opcode set of the IR.
OPCODES = frozenset({
    "CONST", "ADD", "SUB", "MUL", "DIV", "LT", "GT", "EQ", "ISZERO",
    "AND", "OR", "SHA3", "SLOAD", "SSTORE", "MLOAD", "MSTORE",
    "CALLDATALOAD", "CALLER", "CALLVALUE", "TIMESTAMP", "NUMBER",
    "CALL", "CALLVALUECALL", "STATICCALL", "DELEGATECALL",
    "JUMP", "JUMPI", "RETURN", "REVERT", "STOP", "PHI", "INTERNALCALL",
})

TERMINATOR_OPCODES = frozenset({"JUMP", "JUMPI", "RETURN", "REVERT", "STOP"})
CALL_OPCODES = frozenset({"CALL", "CALLVALUECALL", "STATICCALL", "DELEGATECALL"})
EXTERNAL_CALL_OPCODES = CALL_OPCODES
ARITH_OPCODES = frozenset({"ADD", "SUB", "MUL"})
COMPARISON_OPCODES = frozenset({"LT", "GT", "EQ"})

STATEVAR_KINDS = ("scalar", "mapping", "array")
PARAM_TYPES = ("uint", "address", "bool", "bytes")

# Closed category list; `semantics` builds on it but the parser owns
# rejection of unknown labels.
SEMANTIC_CATEGORIES = (
    "AmountUint", "TimeUint", "PriceUint", "SupplyUint",
    "NameString", "SymbolString", "UriString",
    "BalanceMapping", "AllowanceMapping",
    "PausedBool", "EnableBool", "NonreentrantBool",
    "OwnerAddress", "WalletAddress",
    "Unknown",
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_VALUE_RE = re.compile(r"v\d+$")
_BLOCK_RE = re.compile(r"b\d+$")
_ADDRESS_RE = re.compile(r"0x[0-9a-fA-F]{1,40}$")


class IrError(Exception):
    """Base class for IR-level failures."""


class IrSyntaxError(IrError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownOpcode(IrSyntaxError):
    pass


class DuplicateBlockId(IrSyntaxError):
    pass


class UndefinedValueUse(IrSyntaxError):
    pass


class IrValidationError(IrError):
    def __init__(self, violations):
        super().__init__("; ".join(v.message for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class CallTarget:
    """Where a CALL-family instruction goes.

    Exactly one of `contract` / `via_statevar` is set for resolvable
    targets; both None means the target is unknown at the IR level.
    """
    contract: str | None = None
    via_statevar: str | None = None
    function: str | None = None

    def render(self):
        fn = self.function if self.function is not None else "?"
        if self.contract is not None:
            return f"{self.contract}.{fn}"
        if self.via_statevar is not None:
            return f"@{self.via_statevar}.{fn}"
        return f"?.{fn}"


@dataclass
class Instruction:
    iid: int
    opcode: str
    result: str | None = None
    operands: tuple = ()
    state_ref: str | None = None          # statevar name, SLOAD/SSTORE only
    call: CallTarget | None = None        # CALL family only
    internal_callee: str | None = None    # INTERNALCALL only
    targets: tuple = ()                   # block labels, JUMP/JUMPI only

    @property
    def is_terminator(self):
        return self.opcode in TERMINATOR_OPCODES


@dataclass
class BasicBlock:
    label: str                 # local label, e.g. "b0"
    contract: str
    function: str
    instructions: list = field(default_factory=list)

    @property
    def block_id(self):
        return f"{self.contract}.{self.function}.{self.label}"

    @property
    def terminator(self):
        return self.instructions[-1] if self.instructions else None


@dataclass
class Param:
    name: str
    type: str


@dataclass
class Function:
    name: str
    contract: str
    visibility: str            # "public" | "private"
    params: list = field(default_factory=list)
    blocks: dict = field(default_factory=dict)   # label -> BasicBlock
    entry_label: str | None = None

    @property
    def qualified_name(self):
        return f"{self.contract}.{self.name}"

    @property
    def entry_block_id(self):
        return f"{self.contract}.{self.name}.{self.entry_label}"

    def sorted_blocks(self):
        return [self.blocks[lbl] for lbl in sorted(self.blocks, key=_block_sort_key)]


@dataclass
class StateVar:
    contract: str
    name: str
    slot: int
    kind: str                  # "scalar" | "mapping" | "array"
    semantic_label: str | None = None
    label_source: str | None = None   # "ir" | "heuristic" | "model"

    @property
    def qualified_name(self):
        return f"{self.contract}.{self.name}"


@dataclass
class Contract:
    name: str
    address: str | None = None
    state_vars: dict = field(default_factory=dict)   # name -> StateVar
    functions: dict = field(default_factory=dict)    # name -> Function

    def state_var_by_slot(self, slot):
        for sv in self.state_vars.values():
            if sv.slot == slot:
                return sv
        return None


@dataclass
class Universe:
    contracts: dict = field(default_factory=dict)    # name -> Contract

    def sorted_contracts(self):
        return [self.contracts[n] for n in sorted(self.contracts)]

    def functions(self):
        for c in self.sorted_contracts():
            for fn in sorted(c.functions):
                yield c.functions[fn]

    def blocks(self):
        for fn in self.functions():
            for blk in fn.sorted_blocks():
                yield blk

    def block_by_id(self, block_id):
        contract, fn, label = block_id.rsplit(".", 2)
        return self.contracts[contract].functions[fn].blocks[label]

    def function_of_block(self, block_id):
        contract, fn, _ = block_id.rsplit(".", 2)
        return f"{contract}.{fn}"

    def state_var(self, qualified):
        contract, name = qualified.split(".", 1)
        return self.contracts[contract].state_vars[name]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: str = ""

    def render(self):
        loc = f" [{self.location}]" if self.location else ""
        return f"{self.code}: {self.message}{loc}"


def _block_sort_key(label):
    return (len(label), label) if not label[1:].isdigit() else (0, int(label[1:]))


def block_id_sort_key(block_id):
    contract, fn, label = block_id.rsplit(".", 2)
    return (contract, fn, _block_sort_key(label))


def value_id(contract, function, local):
    """Universe-wide identity of a function-local value."""
    return f"{contract}.{function}.{local}"


def _parse_literal(tok):
    if tok.startswith("0x") or tok.startswith("0X"):
        return int(tok, 16)
    if tok.isdigit() or (tok.startswith("-") and tok[1:].isdigit()):
        return int(tok)
    return None


def _render_literal(n):
    return str(n) if n < 10**6 else hex(n)


def _parse_call_target(tok, line_no):
    if tok == "?":
        return CallTarget()
    if "." not in tok:
        raise IrSyntaxError(line_no, f"call target {tok!r} must look like Contract.fn, @statevar.fn or ?")
    left, fn = tok.split(".", 1)
    fn = None if fn == "?" else fn
    if left == "?":
        return CallTarget(function=fn)
    if left.startswith("@"):
        return CallTarget(via_statevar=left[1:], function=fn)
    return CallTarget(contract=left, function=fn)


class _Parser:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.universe = Universe()
        self.contract = None
        self.function = None
        self.block = None
        self.defined_values = None     # per-function set of value/param names
        self.uses = []                 # (line, contract, function, token)
        self.iid = 0

    def parse(self):
        saw_header = False
        for idx, raw in enumerate(self.lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if not saw_header:
                if line != "ir-version 1":
                    raise IrSyntaxError(idx, "expected 'ir-version 1' header")
                saw_header = True
                continue
            self._line(idx, line)
        self._check_uses()
        return self.universe

    def _line(self, no, line):
        tokens = line.split()
        head = tokens[0]
        if head == "contract":
            self._contract(no, tokens)
        elif head == "statevar":
            self._statevar(no, tokens)
        elif head == "function":
            self._function(no, line, tokens)
        elif head == "block":
            self._block(no, tokens)
        else:
            self._instruction(no, tokens)

    def _contract(self, no, tokens):
        if len(tokens) not in (2, 3):
            raise IrSyntaxError(no, "contract <Name> [@address]")
        name = tokens[1]
        if not _IDENT_RE.match(name):
            raise IrSyntaxError(no, f"bad contract name {name!r}")
        if name in self.universe.contracts:
            raise IrSyntaxError(no, f"duplicate contract {name!r}")
        address = None
        if len(tokens) == 3:
            if not tokens[2].startswith("@") or not _ADDRESS_RE.match(tokens[2][1:]):
                raise IrSyntaxError(no, f"bad address {tokens[2]!r}")
            address = tokens[2][1:].lower()
        self.contract = Contract(name=name, address=address)
        self.universe.contracts[name] = self.contract
        self.function = None
        self.block = None

    def _statevar(self, no, tokens):
        if self.contract is None or self.function is not None:
            raise IrSyntaxError(no, "statevar must appear directly under a contract")
        if len(tokens) not in (4, 5):
            raise IrSyntaxError(no, "statevar <name> slot=<n> kind=<k> [label=<cat>]")
        name = tokens[1]
        if not _IDENT_RE.match(name):
            raise IrSyntaxError(no, f"bad statevar name {name!r}")
        if name in self.contract.state_vars:
            raise IrSyntaxError(no, f"duplicate statevar {name!r}")
        attrs = dict(t.split("=", 1) for t in tokens[2:] if "=" in t)
        if set(attrs) - {"slot", "kind", "label"} or "slot" not in attrs or "kind" not in attrs:
            raise IrSyntaxError(no, "statevar needs slot= and kind=")
        slot = _parse_literal(attrs["slot"])
        if slot is None or slot < 0:
            raise IrSyntaxError(no, f"bad slot {attrs['slot']!r}")
        if attrs["kind"] not in STATEVAR_KINDS:
            raise IrSyntaxError(no, f"bad kind {attrs['kind']!r}")
        label = attrs.get("label")
        if label is not None and label not in SEMANTIC_CATEGORIES:
            raise IrSyntaxError(no, f"unknown semantic label {label!r}")
        self.contract.state_vars[name] = StateVar(
            contract=self.contract.name, name=name, slot=slot,
            kind=attrs["kind"], semantic_label=label,
            label_source="ir" if label else None,
        )

    def _function(self, no, line, tokens):
        if self.contract is None:
            raise IrSyntaxError(no, "function outside contract")
        m = re.match(r"function\s+(\w+)\s+(public|private)\s*\((.*)\)\s*$", line)
        if not m:
            raise IrSyntaxError(no, "function <name> <public|private>(<p:type>,...)")
        name, visibility, params_src = m.group(1), m.group(2), m.group(3)
        if name in self.contract.functions:
            raise IrSyntaxError(no, f"duplicate function {name!r}")
        params = []
        if params_src.strip():
            for part in params_src.split(","):
                part = part.strip()
                if ":" not in part:
                    raise IrSyntaxError(no, f"bad parameter {part!r}")
                pname, ptype = (s.strip() for s in part.split(":", 1))
                if not _IDENT_RE.match(pname) or ptype not in PARAM_TYPES:
                    raise IrSyntaxError(no, f"bad parameter {part!r}")
                params.append(Param(pname, ptype))
        fn = Function(name=name, contract=self.contract.name,
                      visibility=visibility, params=params)
        self.contract.functions[name] = fn
        self.function = fn
        self.block = None
        self.defined_values = {p.name for p in params}
        self.iid = 0

    def _block(self, no, tokens):
        if self.function is None:
            raise IrSyntaxError(no, "block outside function")
        if len(tokens) != 2 or not _BLOCK_RE.match(tokens[1]):
            raise IrSyntaxError(no, "block <bN>")
        label = tokens[1]
        if label in self.function.blocks:
            raise DuplicateBlockId(no, f"duplicate block {label!r} in {self.function.qualified_name}")
        blk = BasicBlock(label=label, contract=self.contract.name,
                         function=self.function.name)
        self.function.blocks[label] = blk
        if self.function.entry_label is None:
            self.function.entry_label = label
        self.block = blk

    def _instruction(self, no, tokens):
        if self.block is None:
            raise IrSyntaxError(no, f"instruction outside block: {' '.join(tokens)!r}")
        result = None
        if len(tokens) >= 2 and tokens[1] == "=":
            result = tokens[0]
            if not _VALUE_RE.match(result):
                raise IrSyntaxError(no, f"bad result name {result!r}")
            tokens = tokens[2:]
            if not tokens:
                raise IrSyntaxError(no, "missing opcode after '='")
        opcode = tokens[0]
        if opcode not in OPCODES:
            raise UnknownOpcode(no, f"unknown opcode {opcode!r}")
        args = tokens[1:]
        instr = Instruction(iid=self.iid, opcode=opcode, result=result)
        self.iid += 1

        if opcode in ("JUMP", "JUMPI", "RETURN", "REVERT", "STOP"):
            self._terminator(no, instr, opcode, args, result)
        elif opcode in ("SLOAD", "SSTORE"):
            self._storage(no, instr, opcode, args, result)
        elif opcode in CALL_OPCODES:
            self._call(no, instr, opcode, args)
        elif opcode == "INTERNALCALL":
            if not args or not _IDENT_RE.match(args[0]):
                raise IrSyntaxError(no, "INTERNALCALL <fn> args...")
            instr.internal_callee = args[0]
            instr.operands = tuple(self._operand(no, a) for a in args[1:])
        elif opcode == "CONST":
            if len(args) != 1 or _parse_literal(args[0]) is None:
                raise IrSyntaxError(no, "CONST <literal>")
            instr.operands = (_parse_literal(args[0]),)
        else:
            instr.operands = tuple(self._operand(no, a) for a in args)

        if result is not None:
            if result in self.defined_values:
                raise IrSyntaxError(no, f"value {result!r} defined twice")
            self.defined_values.add(result)
        self.block.instructions.append(instr)

    def _terminator(self, no, instr, opcode, args, result):
        if result is not None:
            raise IrSyntaxError(no, f"{opcode} cannot produce a value")
        if opcode == "JUMP":
            if len(args) != 1 or (args[0] != "?" and not _BLOCK_RE.match(args[0])):
                raise IrSyntaxError(no, "JUMP <bN> | JUMP ?")
            instr.targets = () if args[0] == "?" else (args[0],)
        elif opcode == "JUMPI":
            if len(args) != 3 or not all(_BLOCK_RE.match(a) for a in args[1:]):
                raise IrSyntaxError(no, "JUMPI <v> <bTrue> <bFalse>")
            instr.operands = (self._operand(no, args[0]),)
            instr.targets = (args[1], args[2])
        elif opcode == "RETURN":
            if len(args) > 1:
                raise IrSyntaxError(no, "RETURN [<v>]")
            instr.operands = tuple(self._operand(no, a) for a in args)
        elif args:
            raise IrSyntaxError(no, f"{opcode} takes no operands")

    def _storage(self, no, instr, opcode, args, result):
        if not args:
            raise IrSyntaxError(no, f"{opcode} needs a statevar operand")
        sv_name = args[0]
        if sv_name not in self.contract.state_vars:
            raise IrSyntaxError(no, f"unknown statevar {sv_name!r}")
        instr.state_ref = sv_name
        instr.operands = tuple(self._operand(no, a) for a in args[1:])
        kind = self.contract.state_vars[sv_name].kind
        if opcode == "SLOAD":
            if result is None:
                raise IrSyntaxError(no, "SLOAD must produce a value")
            if kind == "mapping" and len(instr.operands) != 1:
                raise IrSyntaxError(no, "mapping SLOAD needs a key")
            if kind == "scalar" and instr.operands:
                raise IrSyntaxError(no, "scalar SLOAD takes no key")
        else:
            if kind == "scalar" and len(instr.operands) != 1:
                raise IrSyntaxError(no, "scalar SSTORE <var> <value>")
            if kind == "mapping" and len(instr.operands) != 2:
                raise IrSyntaxError(no, "mapping SSTORE <var> <key> <value>")

    def _call(self, no, instr, opcode, args):
        if opcode == "CALLVALUECALL":
            if len(args) < 2:
                raise IrSyntaxError(no, "CALLVALUECALL <vAmount> <target> args...")
            amount = self._operand(no, args[0])
            instr.call = _parse_call_target(args[1], no)
            instr.operands = (amount,) + tuple(self._operand(no, a) for a in args[2:])
        else:
            if len(args) < 1:
                raise IrSyntaxError(no, f"{opcode} <target> args...")
            instr.call = _parse_call_target(args[0], no)
            instr.operands = tuple(self._operand(no, a) for a in args[1:])
        if instr.call.via_statevar and instr.call.via_statevar not in self.contract.state_vars:
            raise IrSyntaxError(no, f"unknown statevar {instr.call.via_statevar!r} in call target")

    def _operand(self, no, tok):
        lit = _parse_literal(tok)
        if lit is not None:
            return lit
        if not _IDENT_RE.match(tok):
            raise IrSyntaxError(no, f"bad operand {tok!r}")
        self.uses.append((no, self.contract.name, self.function.name, tok))
        return tok

    def _check_uses(self):
        for no, contract, fn_name, tok in getattr(self, "uses", []):
            fn = self.universe.contracts[contract].functions[fn_name]
            defined = {p.name for p in fn.params}
            for blk in fn.blocks.values():
                for ins in blk.instructions:
                    if ins.result:
                        defined.add(ins.result)
            if tok not in defined:
                raise UndefinedValueUse(no, f"use of undefined value {tok!r} in {contract}.{fn_name}")


def parse_ir(text, validate_universe=True):
    """Parse `.ir` text into a Universe.

    Whitespace-only input yields an empty universe.  With
    ``validate_universe`` (the default) structural invariants are enforced
    and an IrValidationError carrying the violations is raised.
    """
    if not text.strip():
        return Universe()
    universe = _Parser(text).parse()
    if validate_universe:
        violations = validate(universe)
        if violations:
            raise IrValidationError(violations)
    return universe


def serialize_ir(universe):
    """Canonical text for a universe: sorted, stable, reparseable."""
    out = ["ir-version 1"]
    for contract in universe.sorted_contracts():
        header = f"contract {contract.name}"
        if contract.address:
            header += f" @{contract.address}"
        out.append(header)
        for name in sorted(contract.state_vars, key=lambda n: (contract.state_vars[n].slot, n)):
            sv = contract.state_vars[name]
            line = f"statevar {sv.name} slot={sv.slot} kind={sv.kind}"
            if sv.semantic_label and sv.label_source == "ir":
                line += f" label={sv.semantic_label}"
            out.append(line)
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            params = ",".join(f"{p.name}:{p.type}" for p in fn.params)
            out.append(f"function {fn.name} {fn.visibility}({params})")
            labels = [fn.entry_label] + [
                lbl for lbl in sorted(fn.blocks, key=_block_sort_key) if lbl != fn.entry_label
            ]
            for lbl in labels:
                blk = fn.blocks[lbl]
                out.append(f"block {lbl}")
                for ins in blk.instructions:
                    out.append("  " + _render_instruction(ins))
    return "\n".join(out) + "\n"


def _render_instruction(ins):
    parts = []
    if ins.result is not None:
        parts += [ins.result, "="]
    parts.append(ins.opcode)
    if ins.opcode == "CONST":
        parts.append(_render_literal(ins.operands[0]))
    elif ins.opcode in ("SLOAD", "SSTORE"):
        parts.append(ins.state_ref)
        parts += [_render_operand(o) for o in ins.operands]
    elif ins.opcode == "CALLVALUECALL":
        parts.append(_render_operand(ins.operands[0]))
        parts.append(ins.call.render())
        parts += [_render_operand(o) for o in ins.operands[1:]]
    elif ins.opcode in CALL_OPCODES:
        parts.append(ins.call.render())
        parts += [_render_operand(o) for o in ins.operands]
    elif ins.opcode == "INTERNALCALL":
        parts.append(ins.internal_callee)
        parts += [_render_operand(o) for o in ins.operands]
    elif ins.opcode == "JUMP":
        parts.append(ins.targets[0] if ins.targets else "?")
    elif ins.opcode == "JUMPI":
        parts.append(_render_operand(ins.operands[0]))
        parts += list(ins.targets)
    else:
        parts += [_render_operand(o) for o in ins.operands]
    return " ".join(parts)


def _render_operand(op):
    return _render_literal(op) if isinstance(op, int) else op


def validate(universe):
    """Check every structural invariant; violations come back as data."""
    out = []

    def bad(code, message, location=""):
        out.append(Diagnostic(code, message, location))

    seen_block_ids = set()
    for contract in universe.sorted_contracts():
        slots = {}
        for name in sorted(contract.state_vars):
            sv = contract.state_vars[name]
            if sv.slot in slots:
                bad("duplicate-slot",
                    f"slot {sv.slot} declared by {slots[sv.slot]!r} and {name!r}",
                    contract.name)
            else:
                slots[sv.slot] = name
            if sv.semantic_label is not None and sv.semantic_label not in SEMANTIC_CATEGORIES:
                bad("bad-label", f"unknown semantic label {sv.semantic_label!r}",
                    sv.qualified_name)
        for fn_name in sorted(contract.functions):
            fn = contract.functions[fn_name]
            _validate_function(universe, contract, fn, seen_block_ids, bad)
    return out


def _validate_function(universe, contract, fn, seen_block_ids, bad):
    where = fn.qualified_name
    if fn.entry_label not in fn.blocks:
        bad("missing-entry", f"entry block {fn.entry_label!r} not in function", where)
        return
    labels = set(fn.blocks)
    for lbl in sorted(fn.blocks, key=_block_sort_key):
        blk = fn.blocks[lbl]
        bid = blk.block_id
        if bid in seen_block_ids:
            bad("duplicate-block-id", f"block id {bid} not unique", where)
        seen_block_ids.add(bid)
        if not blk.instructions:
            bad("empty-block", "block has no instructions", bid)
            continue
        terminators = [i for i, ins in enumerate(blk.instructions) if ins.is_terminator]
        if len(terminators) != 1 or terminators[0] != len(blk.instructions) - 1:
            bad("terminator", "block must end with exactly one terminator", bid)
        for ins in blk.instructions:
            if len(ins.operands) > 3:
                bad("operand-count", f"instruction {ins.opcode} has >3 operands", bid)
            if ins.opcode == "CALLVALUECALL" and not ins.operands:
                bad("missing-value-operand", "CALLVALUECALL needs a value operand", bid)
            for tgt in ins.targets:
                if tgt not in labels:
                    bad("missing-target", f"jump target {tgt!r} undefined", bid)

    _check_reachability(fn, bad)
    _check_def_before_use(fn, bad)


def _successor_labels(blk):
    term = blk.terminator
    return list(term.targets) if term is not None else []


def _check_reachability(fn, bad):
    seen = {fn.entry_label}
    work = [fn.entry_label]
    while work:
        lbl = work.pop()
        blk = fn.blocks.get(lbl)
        if blk is None:
            continue
        for nxt in _successor_labels(blk):
            if nxt in fn.blocks and nxt not in seen:
                seen.add(nxt)
                work.append(nxt)
    for lbl in sorted(set(fn.blocks) - seen, key=_block_sort_key):
        bad("unreachable-block", f"block {lbl} unreachable from entry",
            fn.blocks[lbl].block_id)


def _check_def_before_use(fn, bad):
    """Must-reach definition analysis: a use is legal only when the value is
    defined on every path from the entry."""
    params = {p.name for p in fn.params}
    preds = {lbl: [] for lbl in fn.blocks}
    for lbl, blk in fn.blocks.items():
        for nxt in _successor_labels(blk):
            if nxt in preds:
                preds[nxt].append(lbl)

    all_values = set(params)
    for blk in fn.blocks.values():
        for ins in blk.instructions:
            if ins.result:
                all_values.add(ins.result)

    in_sets = {lbl: set(all_values) for lbl in fn.blocks}
    in_sets[fn.entry_label] = set(params)
    changed = True
    while changed:
        changed = False
        for lbl in sorted(fn.blocks, key=_block_sort_key):
            if lbl == fn.entry_label:
                incoming = set(params)
            elif preds[lbl]:
                incoming = set.intersection(*(_out_set(fn.blocks[p], in_sets[p]) for p in preds[lbl]))
            else:
                incoming = set()
            if incoming != in_sets[lbl]:
                in_sets[lbl] = incoming
                changed = True

    for lbl in sorted(fn.blocks, key=_block_sort_key):
        blk = fn.blocks[lbl]
        defined = set(in_sets[lbl])
        for ins in blk.instructions:
            if ins.opcode != "PHI":   # PHI reads along edges, not at the use site
                for op in ins.operands:
                    if isinstance(op, str) and op not in defined:
                        bad("use-before-def",
                            f"value {op!r} used before definition on some path",
                            blk.block_id)
            if ins.result:
                defined.add(ins.result)


def _out_set(blk, in_set):
    out = set(in_set)
    for ins in blk.instructions:
        if ins.result:
            out.add(ins.result)
    return out
