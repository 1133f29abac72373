"""JSON parameter files for unified and baseline parameter sets.

Floats are written with ``repr`` precision, so a save/load round trip is
lossless.  mu5 is stored unscaled.
"""
from __future__ import annotations

import json
import os

from .baselines import GSigmoidParams, SumExpParams, baseline_from_dict
from .unified import UnifiedParams

__all__ = ["ParamFileError", "dumps_params", "save_params", "load_params", "params_from_dict"]


class ParamFileError(ValueError):
    pass


def dumps_params(p) -> str:
    return json.dumps(p.to_dict(), indent=2) + "\n"


def save_params(p, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_params(p))


def params_from_dict(d: dict):
    if not isinstance(d, dict):
        raise ParamFileError("parameter file must hold a JSON object")
    kind = d.get("model", "unified")
    try:
        if kind == "unified":
            return UnifiedParams.from_dict(d)
        return baseline_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParamFileError(f"bad {kind} parameter set: {exc}") from exc


def load_params(path) -> UnifiedParams | GSigmoidParams | SumExpParams:
    try:
        with open(os.fspath(path), encoding="utf-8") as f:
            d = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParamFileError(f"{path}: not valid JSON ({exc})") from exc
    return params_from_dict(d)
