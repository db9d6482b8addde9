"""Air-conditioner fleet simulation and control."""

import json
from pathlib import Path

from ._acfleet import (
    AcfleetError,
    ConfigError,
    NeverOffError,
    NeverOnError,
    ProtocolError,
    UndefinedNormalization,
    calibrate,
    cycle_durations,
    nrmse,
    pjm_score,
    synthetic_trace,
    validation_presets,
)
from . import _acfleet

__all__ = [
    "AcfleetError",
    "ConfigError",
    "NeverOffError",
    "NeverOnError",
    "ProtocolError",
    "UndefinedNormalization",
    "calibrate",
    "case_config",
    "config_hash",
    "cycle_durations",
    "default_config",
    "load_config",
    "nrmse",
    "pjm_score",
    "resolve_config",
    "run_experiment",
    "synthetic_trace",
    "validate",
    "validation_presets",
]


def _text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else json.dumps(config)


def default_config():
    return json.loads(_acfleet.default_config_json())


def load_config(path):
    """Reads a config file (JSON, // comments allowed) with defaults filled in."""
    return json.loads(_acfleet.load_config_json(str(Path(path))))


def resolve_config(config):
    """Fills in defaults and rejects unknown keys."""
    return json.loads(_acfleet.resolve_config_json(_text(config)))


def config_hash(config=None):
    return _acfleet.config_hash_json(_text(config))


def case_config(case_id, base=None):
    """Config for one of the standard cases, layered over `base`."""
    return json.loads(_acfleet.case_config_json(case_id, _text(base)))


def run_experiment(config=None, series=False):
    """Runs one experiment and returns its metrics as a dict.

    With `series`, the reference and achieved power traces are included.
    """
    return json.loads(_acfleet.run_experiment_json(_text(config), series))


def validate(preset, seed=1):
    return json.loads(_acfleet.validation_json(preset, seed))
