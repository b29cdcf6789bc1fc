"""Shared paths and fixture loaders for the analyzer test suite."""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

FIXTURES = REPO / "fixtures"

ALL_IR_FIXTURES = ["fig2.ir", "fig5.ir", "fig7.ir", "fig9.ir", "fig10.ir",
                   "fig11.ir", "lock.ir", "checked.ir"]

ALL_MANIFESTS = ["fig2.manifest", "fig9.manifest", "fig11.manifest"]


def load_fixture_text(name):
    return (FIXTURES / name).read_text()
