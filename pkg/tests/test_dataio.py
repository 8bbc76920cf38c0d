"""Round trips for dataset, model, value-function, and CSV formats."""

import json

import numpy as np
import pytest

from adintent.dataio import (
    etas_from_dict,
    etas_to_dict,
    format_cell,
    load_etas,
    load_model,
    load_trajectories,
    params_from_dict,
    params_to_dict,
    save_etas,
    save_model,
    save_trajectories,
    write_csv,
)
from adintent.errors import InvalidInputError
from adintent.hmm import random_params, sample_trajectory
from adintent.spova import SpovaParams


def test_trajectory_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(60)
    params = random_params(3, 2, [4, 3], rng)
    trajs = [sample_trajectory(params, lambda t, rng: int(rng.integers(2)), 6,
                               rng_seed=i, user_id=f"u{i}", category_id="c0")
             for i in range(5)]
    path = tmp_path / "trajs.jsonl"
    save_trajectories(path, trajs)
    loaded = load_trajectories(path)
    assert len(loaded) == 5
    for a, b in zip(trajs, loaded):
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.obs, b.obs)
        assert np.array_equal(a.rewards, b.rewards)
        assert a.user_id == b.user_id and a.category_id == b.category_id

    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"user", "category", "steps"}
    assert set(first["steps"][0]) == {"a", "o", "r", "x", "y"}


def test_model_json_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(61)
    params = random_params(3, 3, [7, 6, 12, 4, 2], rng)
    path = tmp_path / "model.json"
    save_model(path, params)
    loaded = load_model(path)
    assert np.array_equal(loaded.b0, params.b0)
    assert np.array_equal(loaded.T, params.T)
    for a, b in zip(loaded.O, params.O):
        assert np.array_equal(a, b)


def test_model_dict_dimension_check():
    rng = np.random.default_rng(62)
    doc = params_to_dict(random_params(2, 2, [3], rng))
    doc["n_states"] = 5
    with pytest.raises(InvalidInputError):
        params_from_dict(doc)


def test_etas_round_trip(tmp_path):
    etas = SpovaParams.init(3, 3, n_vectors=4, rng=8, z=2.0, offset=1.5,
                            learning_rate=0.02, discount=0.8)
    path = tmp_path / "etas.json"
    save_etas(path, etas)
    loaded = load_etas(path)
    assert np.array_equal(loaded.vectors, etas.vectors)
    assert loaded.z == etas.z and loaded.offset == etas.offset
    assert loaded.discount == etas.discount
    assert etas_to_dict(etas_from_dict(etas_to_dict(etas))) == etas_to_dict(etas)


def test_csv_is_deterministic_and_newline_terminated(tmp_path):
    path = tmp_path / "table.csv"
    rows = [["a", 0.1 + 0.2, 3], ["b", 1e-17, -4]]
    write_csv(path, ["name", "value", "count"], rows)
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert text.splitlines()[0] == "name,value,count"
    assert float(text.splitlines()[1].split(",")[1]) == 0.1 + 0.2
    assert format_cell(np.float64(0.25)) == "0.25"
