"""crossinspect: cross-contract vulnerability analysis for EVM contracts."""

__version__ = "0.1.0"
