"""Deterministic simulator for confidential off-chain smart-contract execution."""

from . import contracts as _contracts  # noqa: F401  registers the demo programs

__version__ = "0.1.0"
