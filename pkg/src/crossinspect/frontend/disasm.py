"""Linear EVM disassembly: complete, byte-exact, reversible."""

from __future__ import annotations

from dataclasses import dataclass

from .opcodes import TABLE


class BytecodeError(Exception):
    pass


class EmptyBytecode(BytecodeError):
    pass


class OddHexLength(BytecodeError):
    pass


@dataclass(frozen=True)
class RawBytecode:
    contract_name: str
    code: bytes


@dataclass(frozen=True)
class EvmOp:
    offset: int
    mnemonic: str
    byte: int                     # raw opcode byte, kept for re-serialization
    immediate: bytes | None = None
    truncated: bool = False      # PUSH immediate ran past the end, zero padded

    @property
    def size(self):
        return 1 + (len(self.immediate) if self.immediate is not None else 0)

    @property
    def next_offset(self):
        return self.offset + self.size

    def immediate_value(self):
        return int.from_bytes(self.immediate, "big") if self.immediate else None

    def render(self):
        if self.immediate is not None:
            return f"{self.offset:#06x}: {self.mnemonic} 0x{self.immediate.hex()}"
        return f"{self.offset:#06x}: {self.mnemonic}"


def decode_hex(contract_name, text):
    cleaned = "".join(text.split())
    if cleaned.startswith(("0x", "0X")):
        cleaned = cleaned[2:]
    if not cleaned:
        raise EmptyBytecode(f"{contract_name}: no bytecode")
    if len(cleaned) % 2:
        raise OddHexLength(f"{contract_name}: odd hex digit count {len(cleaned)}")
    try:
        code = bytes.fromhex(cleaned)
    except ValueError as exc:
        raise BytecodeError(f"{contract_name}: {exc}") from exc
    return RawBytecode(contract_name, code)


def disassemble(raw):
    """Decode every byte exactly once.  Unknown opcodes decode as INVALID of
    width one; a PUSH immediate cut off by the end of code is zero padded
    and flagged."""
    if not raw.code:
        raise EmptyBytecode(f"{raw.contract_name}: no bytecode")
    ops = []
    i = 0
    code = raw.code
    while i < len(code):
        byte = code[i]
        info = TABLE.get(byte)
        if info is None:
            ops.append(EvmOp(i, "INVALID", byte))
            i += 1
            continue
        mnemonic, width, _, _ = info
        if width == 0:
            ops.append(EvmOp(i, mnemonic, byte))
            i += 1
            continue
        imm = code[i + 1:i + 1 + width]
        truncated = len(imm) < width
        if truncated:
            imm = imm + b"\x00" * (width - len(imm))
        ops.append(EvmOp(i, mnemonic, byte, imm, truncated))
        i += 1 + width
    return ops


def serialize_ops(ops):
    """Inverse of disassemble for streams without a truncated trailing PUSH."""
    out = bytearray()
    for op in ops:
        out.append(op.byte)
        if op.immediate is not None:
            out.extend(op.immediate)
    return bytes(out)
