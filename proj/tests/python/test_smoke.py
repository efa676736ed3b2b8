"""Smoke tests for the fedpt extension module."""

import json
import math

import pytest

fedpt = pytest.importorskip("fedpt")


def test_sym_eigen_diagonal():
    out = fedpt.sym_eigen([[2.0, 0.0], [0.0, 5.0]])
    assert out["values"] == pytest.approx([2.0, 5.0], abs=1e-12)


def test_sym_eigen_vectors_reconstruct():
    m = [[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]]
    out = fedpt.sym_eigen(m, want_vectors=True)
    values, vectors = out["values"], out["vectors"]
    for lam, v in zip(values, vectors):
        mv = [sum(m[i][j] * v[j] for j in range(3)) for i in range(3)]
        assert mv == pytest.approx([lam * x for x in v], abs=1e-8)


def test_cosine_and_weighted_average():
    assert fedpt.cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert fedpt.cosine([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
    avg = fedpt.weighted_average([[0.0, 10.0], [10.0, 0.0]], [1.0, 3.0])
    assert avg == pytest.approx([7.5, 2.5])


def test_kernel_and_layer_eigenvalues():
    k = fedpt.kernel_matrix([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    assert all(x == pytest.approx(1.0) for row in k for x in row)
    lam = fedpt.sample_layer_eigenvalues(k)
    assert lam[0] == pytest.approx(3.0)
    assert lam[1] == pytest.approx(0.0, abs=1e-9)


def test_retention_and_selection():
    d = fedpt.retention_ratio([0.0, 1.0, 2.0, 3.0], 0.1)
    assert d["gap_index"] == 1
    assert d["ratio"] == pytest.approx(0.75)

    sel = fedpt.select_layers([3.0, 1.0, 2.0], 0.5, [4, 4, 4])
    assert sel["selected_layers"] == [0, 2]
    assert sel["selected_param_fraction"] == pytest.approx(2.0 / 3.0)


def test_adam_trajectory_zero_gradient():
    trace = fedpt.adam_trajectory([1.0, -1.0], [[0.0, 0.0]] * 3)
    assert trace[-1] == pytest.approx([1.0, -1.0])


def test_adam_trajectory_first_step():
    trace = fedpt.adam_trajectory([0.0], [[1.0]], alpha=0.1)
    assert trace[0][0] == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-12)


def test_run_experiment_smoke():
    config = {
        "dataset": {"type": "synthetic", "examples": 240, "classes": 3, "input_dim": 5},
        "federation": {
            "rounds": 4,
            "warmup_rounds": 2,
            "devices": 6,
            "sample_size": 3,
            "local_steps": 3,
            "local_batch_size": 6,
        },
        "model": {"layers": 3, "hidden_dim": 6, "prompt_dim": 2},
        "scoring": {"batch_size": 6},
        "selection": {"lipschitz_trials": 6},
        "optimizer": {"sweep": ["fedavg"]},
        "run": {"seeds": [1]},
    }
    out = fedpt.run_experiment(json.dumps(config))
    metrics = out["metrics"]
    assert len(metrics) == 4
    assert metrics[0]["phase"] == "warmup"
    assert metrics[-1]["phase"] == "selected"
    for row in metrics:
        assert 0.0 <= row["accuracy"] <= 1.0
        assert math.isfinite(row["loss"])
    assert "fedavg-s1" in out["selection"]

    # Same config, same numbers.
    again = fedpt.run_experiment(json.dumps(config))
    assert [r["accuracy"] for r in again["metrics"]] == [r["accuracy"] for r in metrics]


def test_errors_are_exceptions():
    with pytest.raises(Exception):
        fedpt.cosine([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(Exception):
        fedpt.run_experiment("{}")
