"""Selector dispatcher recognition.

The compiler-generated entry code loads the four-byte selector from
calldata and walks a chain of compare-and-jump blocks.  We follow the
fallthrough chain from the entry block, harvesting one DispatchEntry per
resolved PUSH4/EQ/JUMPI triple, and emit a fallback entry for the chain's
default landing block.  Contracts without a CALLDATALOAD in the chain are
treated as a single function starting at offset zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .opcodes import BLOCK_TERMINATORS

_CHAIN_LIMIT = 64


@dataclass(frozen=True)
class DispatchEntry:
    selector: bytes | None      # None for the fallback / single entry
    entry_block: int
    function_name: str


class NoDispatcher(Exception):
    pass


def _selector_compare(block, cfg):
    """(selector, taken target) when the block compares a PUSH4 immediate
    and conditionally jumps to a resolved target."""
    if block.end_op.mnemonic != "JUMPI":
        return None
    push4 = [op for op in block.ops
             if op.mnemonic == "PUSH4" and op.immediate is not None]
    has_eq = any(op.mnemonic == "EQ" for op in block.ops)
    if not push4 or not has_eq:
        return None
    taken = [dst for src, dst in cfg.edges
             if src == block.start and isinstance(dst, int)
             and dst != _fallthrough(block, cfg)]
    if not taken:
        return None
    return push4[-1].immediate, min(taken)


def _fallthrough(block, cfg):
    starts = sorted(cfg.blocks)
    idx = starts.index(block.start)
    return starts[idx + 1] if idx + 1 < len(starts) else None


def identify_functions(cfg):
    """Returns (entries, diagnostics); raises NoDispatcher only internally,
    degrading to a single-function view."""
    diagnostics = []
    starts = sorted(cfg.blocks)
    if not starts:
        return [], diagnostics

    entries = []
    seen_calldataload = False
    cursor = starts[0]
    hops = 0
    visited = set()
    while cursor is not None and cursor not in visited and hops < _CHAIN_LIMIT:
        visited.add(cursor)
        hops += 1
        block = cfg.blocks[cursor]
        seen_calldataload = seen_calldataload or any(
            op.mnemonic == "CALLDATALOAD" for op in block.ops)
        compare = _selector_compare(block, cfg)
        if compare is not None:
            selector, target = compare
            entries.append(DispatchEntry(
                selector, target, f"0x{selector.hex()}"))
            cursor = _chain_next(block, cfg)
            continue
        break

    if not entries or not seen_calldataload:
        diagnostics.append("no selector dispatcher; treating as single function")
        return [DispatchEntry(None, starts[0], "main")], diagnostics

    seen_selectors = set()
    unique = []
    for e in entries:
        if e.selector in seen_selectors:
            diagnostics.append(f"duplicate selector {e.function_name}")
            continue
        seen_selectors.add(e.selector)
        unique.append(e)

    fallback_block = cursor if cursor is not None else starts[0]
    unique.append(DispatchEntry(None, fallback_block, "fallback"))
    return unique, diagnostics


def _chain_next(block, cfg):
    if block.end_op.mnemonic == "JUMPI":
        return _fallthrough(block, cfg)
    if block.end_op.mnemonic in BLOCK_TERMINATORS:
        return None
    return _fallthrough(block, cfg)
