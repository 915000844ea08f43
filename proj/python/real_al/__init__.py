"""Python bindings for the REAL active-learning core."""

import json

from ._core import (
    __version__,
    allocate_budgets,
    generate_synthetic,
    jensen_shannon_bits,
    pseudo_labels,
    strategy_names,
)
from . import _core

__all__ = [
    "__version__",
    "allocate_budgets",
    "config_hash",
    "default_config",
    "generate_synthetic",
    "jensen_shannon_bits",
    "pseudo_labels",
    "run_experiment",
    "strategy_names",
]


def default_config():
    """The default experiment configuration as a dict."""
    return json.loads(_core.default_config_json())


def config_hash(config):
    return _core.config_hash_json(json.dumps(config))


def run_experiment(config):
    """Runs one experiment; returns the per-round records and the summary."""
    lines = _core.run_experiment_json(json.dumps(config)).splitlines()
    records = [json.loads(line) for line in lines]
    return records[:-1], records[-1]
