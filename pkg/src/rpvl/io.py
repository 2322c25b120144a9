"""JSON interchange for models, policies and value functions.

Floats are written with the shortest round-tripping ``repr``, so a model read
back from disk is bit-identical to the one written.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from rpvl.core import Policy, TabularModel, ValueFunction, check_model

MODEL_KEYS = ("num_states", "horizon", "actions", "reward", "kernels")


def model_to_dict(model: TabularModel) -> dict:
    return {
        "num_states": model.num_states,
        "horizon": model.horizon,
        "actions": [list(a) for a in model.actions],
        "reward": model.nested_reward(),
        "kernels": model.nested_kernels(),
    }


def model_from_dict(data: dict, validate: bool = True) -> TabularModel:
    missing = [k for k in MODEL_KEYS if k not in data]
    if missing:
        raise ValueError(f"model JSON is missing keys: {', '.join(missing)}")
    actions = data["actions"]
    if len(actions) != data["num_states"]:
        raise ValueError("model JSON needs one action list per state")
    for h, per_h in enumerate(data["kernels"]):
        for s, per_s in enumerate(per_h):
            if len(per_s) != len(actions[s]):
                raise ValueError(f"kernels[{h}][{s}] does not match the action list of state {s}")
    model = TabularModel.from_nested(
        data["num_states"], data["horizon"], actions, data["reward"], data["kernels"]
    )
    return check_model(model) if validate else model


def _write_json(obj, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, allow_nan=False) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc


def save_model(model: TabularModel, path) -> None:
    _write_json(model_to_dict(model), path)


def load_model(path, validate: bool = True) -> TabularModel:
    return model_from_dict(_read_json(path), validate=validate)


def solution_to_dict(policy: Policy, values: ValueFunction) -> dict:
    """``policy[h][s]`` action ids and ``values[h][s]`` for ``h`` in ``0 .. H``.

    The value table keeps the terminal zero row so it has one more phase
    than the policy.
    """
    return {"policy": policy.decisions.tolist(), "values": values.values.tolist()}


def solution_from_dict(data: dict):
    for key in ("policy", "values"):
        if key not in data:
            raise ValueError(f"solution JSON is missing key {key!r}")
    return Policy(np.array(data["policy"], dtype=np.int64)), ValueFunction(data["values"])


def save_solution(policy: Policy, values: ValueFunction, path, extra: dict | None = None) -> None:
    obj = solution_to_dict(policy, values)
    if extra:
        obj.update(extra)
    _write_json(obj, path)


def load_solution(path):
    return solution_from_dict(_read_json(path))


def save_json(obj, path) -> None:
    _write_json(obj, path)
