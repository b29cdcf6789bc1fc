"""A small two-pass EVM assembler for fixtures and experiments.

Lines: `MNEMONIC [0xIMM]`, `PUSHn @label` (label reference), `:label`
(defines the label at the current offset; emits a JUMPDEST).  Label
references always assemble as the stated PUSH width.
"""

from __future__ import annotations

from .opcodes import NAME_TO_BYTE, is_push, push_width


class AsmError(Exception):
    pass


def assemble(lines):
    program = []
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if line:
            program.append(line)

    offsets = {}
    pc = 0
    for line in program:
        if line.startswith(":"):
            offsets[line[1:]] = pc
            pc += 1        # the implicit JUMPDEST
            continue
        parts = line.split()
        name = parts[0]
        if name not in NAME_TO_BYTE:
            raise AsmError(f"unknown mnemonic {name!r}")
        pc += 1 + push_width(name)

    out = bytearray()
    for line in program:
        if line.startswith(":"):
            out.append(NAME_TO_BYTE["JUMPDEST"])
            continue
        parts = line.split()
        name = parts[0]
        out.append(NAME_TO_BYTE[name])
        width = push_width(name)
        if width == 0:
            if len(parts) > 1:
                raise AsmError(f"{name} takes no immediate")
            continue
        if len(parts) != 2:
            raise AsmError(f"{name} needs an immediate")
        arg = parts[1]
        if arg.startswith("@"):
            label = arg[1:]
            if label not in offsets:
                raise AsmError(f"undefined label {label!r}")
            value = offsets[label]
        else:
            value = int(arg, 16) if arg.startswith("0x") else int(arg)
        out.extend(value.to_bytes(width, "big"))
    return bytes(out)
