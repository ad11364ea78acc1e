"""Python access to the sdrbed native core."""

import json as _json

from . import _sdrbed
from ._sdrbed import SdrbedError, fspl_db, guard_band_hz, roundtrip_trial, sha256_hex, throughput_check

__all__ = [
    "SdrbedError",
    "attenuation_at",
    "capacity_summary",
    "default_inventory",
    "fspl_db",
    "guard_band_hz",
    "roundtrip_trial",
    "run_cli",
    "sha256_hex",
    "throughput_check",
    "validate_inventory",
]


def default_inventory():
    return _json.loads(_sdrbed.default_inventory())


def validate_inventory(document):
    """Validates an inventory given as a dict or JSON text; returns it with defaults filled."""
    text = document if isinstance(document, str) else _json.dumps(document)
    return _json.loads(_sdrbed.validate_inventory(text))


def capacity_summary(document=None):
    if document is None:
        document = default_inventory()
    text = document if isinstance(document, str) else _json.dumps(document)
    return _json.loads(_sdrbed.capacity_summary(text))


def attenuation_at(scenario, t_s, base_dir="."):
    text = scenario if isinstance(scenario, str) else _json.dumps(scenario)
    return _json.loads(_sdrbed.attenuation_at(text, t_s, base_dir))


def run_cli(*args):
    """Runs the operator CLI in-process; returns (exit_code, stdout, stderr)."""
    return _sdrbed.run_cli([str(a) for a in args])
