"""Provisioning engine and deterministic simulator for a partitioned HPC cluster."""

from pathlib import Path

__version__ = "0.1.0"

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture file (manifests, inventory, bench defaults)."""
    return FIXTURES / name
