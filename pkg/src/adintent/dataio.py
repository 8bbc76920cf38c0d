"""On-disk formats: JSON-Lines datasets, model documents, checkpoints, CSV.

Trajectory datasets are JSON-Lines with one trajectory per line:
``{"user": str, "category": str, "steps": [{"a": int, "o": [int, ...],
"r": float, "x": int, "y": int}, ...]}``. Hidden-path oracle files mirror the
dataset line for line with ``{"user", "category", "states"}``. Model and
value-function documents are single JSON objects with explicit dimensions;
floats serialize via their shortest round-trip representation, so loading
reproduces them bit-exactly. All text outputs are UTF-8 and newline
terminated; checkpoints are written atomically.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .hmm import ModelParams, Trajectory
from .spova import SpovaParams


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def trajectory_to_record(traj: Trajectory) -> dict:
    steps = []
    for t in range(len(traj)):
        steps.append({
            "a": int(traj.actions[t]),
            "o": [int(v) for v in traj.obs[t]],
            "r": float(traj.rewards[t]),
            "x": int(traj.clicks[t]),
            "y": int(traj.purchases[t]),
        })
    return {"user": traj.user_id, "category": traj.category_id, "steps": steps}


def trajectory_from_record(record: dict) -> Trajectory:
    steps = record["steps"]
    if not steps:
        raise InvalidInputError("trajectory record has no steps")
    return Trajectory(
        actions=np.array([s["a"] for s in steps]),
        obs=np.array([s["o"] for s in steps]),
        rewards=np.array([s["r"] for s in steps]),
        clicks=np.array([s["x"] for s in steps]),
        purchases=np.array([s["y"] for s in steps]),
        user_id=record.get("user", ""),
        category_id=record.get("category", ""),
    )


def save_trajectories(path, trajs: list[Trajectory]) -> None:
    lines = [json.dumps(trajectory_to_record(t), separators=(",", ":")) for t in trajs]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_trajectories(path) -> list[Trajectory]:
    trajs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                trajs.append(trajectory_from_record(json.loads(line)))
    return trajs


def save_hidden_paths(path, records: list[dict]) -> None:
    """Oracle file parallel to a dataset: one {"user","category","states"} per line."""
    lines = [json.dumps(r, separators=(",", ":")) for r in records]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_hidden_paths(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def params_to_dict(params: ModelParams) -> dict:
    return {
        "n_states": params.n_states,
        "n_actions": params.n_actions,
        "obs_dims": list(params.obs_dims),
        "b0": params.b0.tolist(),
        "T": params.T.tolist(),
        "O": [o.tolist() for o in params.O],
    }


def params_from_dict(doc: dict) -> ModelParams:
    params = ModelParams(b0=np.array(doc["b0"]), T=np.array(doc["T"]),
                         O=tuple(np.array(o) for o in doc["O"]))
    if (params.n_states != doc["n_states"] or params.n_actions != doc["n_actions"]
            or list(params.obs_dims) != list(doc["obs_dims"])):
        raise InvalidInputError("model document dims disagree with its arrays")
    return params


def save_model(path, params: ModelParams) -> None:
    _atomic_write_text(path, json.dumps(params_to_dict(params), indent=1) + "\n")


def load_model(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))


def etas_to_dict(etas: SpovaParams) -> dict:
    return {
        "n_actions": etas.n_actions,
        "n_vectors": etas.n_vectors,
        "n_states": etas.n_states,
        "z": etas.z,
        "offset": etas.offset,
        "learning_rate": etas.learning_rate,
        "discount": etas.discount,
        "exponent_mode": etas.exponent_mode,
        "vectors": etas.vectors.tolist(),
    }


def etas_from_dict(doc: dict) -> SpovaParams:
    return SpovaParams(vectors=np.array(doc["vectors"]), z=doc["z"],
                       offset=doc["offset"], learning_rate=doc["learning_rate"],
                       discount=doc["discount"], exponent_mode=doc["exponent_mode"])


def save_etas(path, etas: SpovaParams) -> None:
    _atomic_write_text(path, json.dumps(etas_to_dict(etas), indent=1) + "\n")


def load_etas(path) -> SpovaParams:
    with open(path, "r", encoding="utf-8") as fh:
        return etas_from_dict(json.load(fh))


def save_checkpoint(path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=1) + "\n")


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_manifest(path, manifest: dict) -> None:
    _atomic_write_text(path, json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def format_cell(value) -> str:
    """Deterministic CSV cell: floats use their shortest round-trip form."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(format_cell(v) for v in row) for row in rows]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def save_eval_log(path, episodes: list[dict]) -> None:
    """Per-episode step logs with beliefs, actions, rewards, oracle states."""
    lines = [json.dumps(ep, separators=(",", ":")) for ep in episodes]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_eval_log(path) -> list[dict]:
    episodes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                episodes.append(json.loads(line))
    return episodes
