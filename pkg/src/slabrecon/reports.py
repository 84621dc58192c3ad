"""Deterministic JSON report emission.

Reports are UTF-8 JSON with sorted keys. Everything except the designated
``timing_s`` field is a pure function of config + inputs, so two runs with
the same seed differ at most in that one field.
"""

from __future__ import annotations

import json

from . import __version__
from .nifti import atomic_write_bytes


def dump_json(payload: dict) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_json(path, payload: dict):
    atomic_write_bytes(path, dump_json(payload))


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def run_report(config_dict: dict, registrations=None, fusion=None, qc=None,
               timing_s: dict | None = None, error: dict | None = None) -> dict:
    report = {
        "tool": "slabrecon",
        "version": __version__,
        "config": config_dict,
        "registrations": registrations,
        "fusion": fusion,
        "qc": qc,
        "timing_s": timing_s or {},
    }
    if error is not None:
        report["error"] = error
    return report


def strip_timing(report: dict) -> dict:
    """Copy of a report with the non-deterministic field cleared."""
    clone = dict(report)
    clone["timing_s"] = {}
    return clone
