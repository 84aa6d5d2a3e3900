"""Nonlinear potential theory on model manifolds.

The compiled core lives in ``nlpt._nlpt``; this package re-exports it and
adds :func:`run`, which takes a YAML task config and returns the parsed report.
"""

import json

from ._nlpt import *  # noqa: F401,F403
from ._nlpt import NlptError, __version__, run_config


def run(config_yaml, base_dir="."):
    """Run a task config. Returns ``(report_dict, curve_csv_or_None)``."""
    text, curve = run_config(config_yaml, base_dir)
    return json.loads(text), curve


def error_code(exc):
    """The error code name carried by an NlptError."""
    return exc.args[0] if exc.args else None
