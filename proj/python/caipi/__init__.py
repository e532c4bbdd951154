"""Python access to the caipi core."""

import json

from ._caipi import (
    Error,
    InvalidArgument,
    SessionService,
    explain,
    ground_truth_mask,
    iou,
    quick_shift,
    synthetic_dataset,
)
from ._caipi import run_experiment as _run_experiment


def run_experiment(config):
    """Run an experiment grid from a config dict; returns the results dict."""
    return json.loads(_run_experiment(json.dumps(config)))


__all__ = [
    "Error",
    "InvalidArgument",
    "SessionService",
    "explain",
    "ground_truth_mask",
    "iou",
    "quick_shift",
    "run_experiment",
    "synthetic_dataset",
]
