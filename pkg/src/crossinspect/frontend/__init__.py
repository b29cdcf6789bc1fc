"""EVM bytecode frontend: hex to three-address IR."""

from .cfg import UNRESOLVED, recover_blocks, split_blocks
from .disasm import (
    BytecodeError,
    EmptyBytecode,
    EvmOp,
    OddHexLength,
    RawBytecode,
    decode_hex,
    disassemble,
    serialize_ops,
)
from .dispatch import DispatchEntry, identify_functions
from .lift import StackUnderflow, function_block_set, lift_to_ir


def lift_contract_from_hex(contract_name, hex_text):
    """hex text -> (ir.Contract, diagnostics); the full frontend pipeline."""
    raw = decode_hex(contract_name, hex_text)
    ops = disassemble(raw)
    diagnostics = []
    if any(op.truncated for op in ops):
        diagnostics.append(f"{contract_name}: trailing PUSH immediate "
                           "truncated; padded with zeros (likely metadata)")
    cfg = recover_blocks(ops)
    diagnostics.extend(cfg.diagnostics)
    entries, dispatch_diags = identify_functions(cfg)
    diagnostics.extend(f"{contract_name}: {d}" for d in dispatch_diags)
    contract, lift_diags = lift_to_ir(contract_name, cfg, entries)
    diagnostics.extend(lift_diags)
    return contract, diagnostics
