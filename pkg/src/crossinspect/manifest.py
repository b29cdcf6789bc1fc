"""Deployment manifests: which contracts to analyze, how address-typed
state variables bind to contract names, and which entries are callable.

Line-oriented format, resolved relative to the manifest file:

    manifest-version 1
    contract <Name> ir=<path>          # textual IR holding the contract
    contract <Name> bytecode=<path>    # hex runtime bytecode
    bind <Contract> slot=<N> -> <TargetContract>
    entry <Contract>.<function>        # optional allow-list
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class ManifestError(Exception):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class ContractSource:
    name: str
    kind: str               # "ir" | "bytecode"
    path: Path


@dataclass
class Manifest:
    path: Path | None = None
    contracts: dict = field(default_factory=dict)   # name -> ContractSource
    bindings: dict = field(default_factory=dict)    # (contract, slot) -> target
    entries: set | None = None                      # allow-list, None = all public


def parse_manifest(text, base_dir=None, path=None):
    base = Path(base_dir) if base_dir else (Path(path).parent if path else Path("."))
    manifest = Manifest(path=Path(path) if path else None)
    saw_header = False
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not saw_header:
            if line != "manifest-version 1":
                raise ManifestError(no, "expected 'manifest-version 1' header")
            saw_header = True
            continue
        tokens = line.split()
        if tokens[0] == "contract":
            if len(tokens) != 3 or "=" not in tokens[2]:
                raise ManifestError(no, "contract <Name> ir=<path>|bytecode=<path>")
            name = tokens[1]
            if name in manifest.contracts:
                raise ManifestError(no, f"duplicate contract {name!r}")
            kind, _, rel = tokens[2].partition("=")
            if kind not in ("ir", "bytecode"):
                raise ManifestError(no, f"unknown source kind {kind!r}")
            manifest.contracts[name] = ContractSource(name, kind, base / rel)
        elif tokens[0] == "bind":
            if len(tokens) != 5 or tokens[3] != "->" or \
                    not tokens[2].startswith("slot="):
                raise ManifestError(no, "bind <Contract> slot=<N> -> <Target>")
            slot_src = tokens[2][len("slot="):]
            if not slot_src.isdigit():
                raise ManifestError(no, f"bad slot {slot_src!r}")
            manifest.bindings[(tokens[1], int(slot_src))] = tokens[4]
        elif tokens[0] == "entry":
            if len(tokens) != 2 or "." not in tokens[1]:
                raise ManifestError(no, "entry <Contract>.<function>")
            if manifest.entries is None:
                manifest.entries = set()
            manifest.entries.add(tokens[1])
        else:
            raise ManifestError(no, f"unknown directive {tokens[0]!r}")

    for (contract, slot), target in sorted(manifest.bindings.items()):
        if target not in manifest.contracts:
            raise ManifestError(0, f"binding target {target!r} is not a declared contract")
    return manifest


def load_manifest(path):
    p = Path(path)
    return parse_manifest(p.read_text(), base_dir=p.parent, path=p)
