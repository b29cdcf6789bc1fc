"""EVM opcode table: mnemonics, PUSH immediate widths, stack effects."""

# value -> (mnemonic, immediate width, pops, pushes)
TABLE = {
    0x00: ("STOP", 0, 0, 0),
    0x01: ("ADD", 0, 2, 1),
    0x02: ("MUL", 0, 2, 1),
    0x03: ("SUB", 0, 2, 1),
    0x04: ("DIV", 0, 2, 1),
    0x05: ("SDIV", 0, 2, 1),
    0x06: ("MOD", 0, 2, 1),
    0x07: ("SMOD", 0, 2, 1),
    0x08: ("ADDMOD", 0, 3, 1),
    0x09: ("MULMOD", 0, 3, 1),
    0x0A: ("EXP", 0, 2, 1),
    0x0B: ("SIGNEXTEND", 0, 2, 1),
    0x10: ("LT", 0, 2, 1),
    0x11: ("GT", 0, 2, 1),
    0x12: ("SLT", 0, 2, 1),
    0x13: ("SGT", 0, 2, 1),
    0x14: ("EQ", 0, 2, 1),
    0x15: ("ISZERO", 0, 1, 1),
    0x16: ("AND", 0, 2, 1),
    0x17: ("OR", 0, 2, 1),
    0x18: ("XOR", 0, 2, 1),
    0x19: ("NOT", 0, 1, 1),
    0x1A: ("BYTE", 0, 2, 1),
    0x1B: ("SHL", 0, 2, 1),
    0x1C: ("SHR", 0, 2, 1),
    0x1D: ("SAR", 0, 2, 1),
    0x20: ("KECCAK256", 0, 2, 1),
    0x30: ("ADDRESS", 0, 0, 1),
    0x31: ("BALANCE", 0, 1, 1),
    0x32: ("ORIGIN", 0, 0, 1),
    0x33: ("CALLER", 0, 0, 1),
    0x34: ("CALLVALUE", 0, 0, 1),
    0x35: ("CALLDATALOAD", 0, 1, 1),
    0x36: ("CALLDATASIZE", 0, 0, 1),
    0x37: ("CALLDATACOPY", 0, 3, 0),
    0x38: ("CODESIZE", 0, 0, 1),
    0x39: ("CODECOPY", 0, 3, 0),
    0x3A: ("GASPRICE", 0, 0, 1),
    0x3B: ("EXTCODESIZE", 0, 1, 1),
    0x3C: ("EXTCODECOPY", 0, 4, 0),
    0x3D: ("RETURNDATASIZE", 0, 0, 1),
    0x3E: ("RETURNDATACOPY", 0, 3, 0),
    0x3F: ("EXTCODEHASH", 0, 1, 1),
    0x40: ("BLOCKHASH", 0, 1, 1),
    0x41: ("COINBASE", 0, 0, 1),
    0x42: ("TIMESTAMP", 0, 0, 1),
    0x43: ("NUMBER", 0, 0, 1),
    0x44: ("PREVRANDAO", 0, 0, 1),
    0x45: ("GASLIMIT", 0, 0, 1),
    0x46: ("CHAINID", 0, 0, 1),
    0x47: ("SELFBALANCE", 0, 0, 1),
    0x48: ("BASEFEE", 0, 0, 1),
    0x50: ("POP", 0, 1, 0),
    0x51: ("MLOAD", 0, 1, 1),
    0x52: ("MSTORE", 0, 2, 0),
    0x53: ("MSTORE8", 0, 2, 0),
    0x54: ("SLOAD", 0, 1, 1),
    0x55: ("SSTORE", 0, 2, 0),
    0x56: ("JUMP", 0, 1, 0),
    0x57: ("JUMPI", 0, 2, 0),
    0x58: ("PC", 0, 0, 1),
    0x59: ("MSIZE", 0, 0, 1),
    0x5A: ("GAS", 0, 0, 1),
    0x5B: ("JUMPDEST", 0, 0, 0),
    0x5F: ("PUSH0", 0, 0, 1),
    0xF0: ("CREATE", 0, 3, 1),
    0xF1: ("CALL", 0, 7, 1),
    0xF2: ("CALLCODE", 0, 7, 1),
    0xF3: ("RETURN", 0, 2, 0),
    0xF4: ("DELEGATECALL", 0, 6, 1),
    0xF5: ("CREATE2", 0, 4, 1),
    0xFA: ("STATICCALL", 0, 6, 1),
    0xFD: ("REVERT", 0, 2, 0),
    0xFE: ("INVALID", 0, 0, 0),
    0xFF: ("SELFDESTRUCT", 0, 1, 0),
}

for _i in range(1, 33):
    TABLE[0x5F + _i] = (f"PUSH{_i}", _i, 0, 1)
for _i in range(1, 17):
    TABLE[0x7F + _i] = (f"DUP{_i}", 0, _i, _i + 1)
    TABLE[0x8F + _i] = (f"SWAP{_i}", 0, _i + 1, _i + 1)
for _i in range(5):
    TABLE[0xA0 + _i] = (f"LOG{_i}", 0, 2 + _i, 0)

NAME_TO_BYTE = {info[0]: byte for byte, info in TABLE.items()}

# splitting an instruction stream into basic blocks stops after these
BLOCK_TERMINATORS = frozenset({
    "JUMP", "JUMPI", "STOP", "RETURN", "REVERT", "SELFDESTRUCT", "INVALID",
})


def is_push(mnemonic):
    return mnemonic.startswith("PUSH") and mnemonic != "PUSH0"


def push_width(mnemonic):
    return int(mnemonic[4:]) if is_push(mnemonic) else 0
