import json

import numpy as np
import pytest

from activemean.data import Dataset, SyntheticConfig, generate_synthetic
from activemean.estimator import ConfidenceInterval
from activemean.harness import (RESULT_COLUMNS, SUMMARY_COLUMNS, ExperimentConfig, PolicySpec,
                                TrialResult, aggregate, batch_size_for, default_budget_fractions,
                                emit, interpolate, read_results_csv, results_from_rows,
                                run_experiment, run_trial, stable_trial_seed, summary_path_for,
                                write_results_csv)

SMALL = dict(T=300, trials=2, budget_fractions=[0.2, 0.4])


@pytest.fixture(scope="module")
def small_ds():
    return generate_synthetic(SyntheticConfig(T=300, seed=0))


def make_result(policy="p", T_b=10.0, trial=0, center=0.5, hw=0.1, covered=True, labels=3):
    return TrialResult(policy, T_b, trial, ConfidenceInterval(center, hw, 0.1), covered, labels,
                       np.empty(0))


def test_policy_spec_parsing():
    assert PolicySpec.parse("uniform").id == "uniform"
    assert PolicySpec.parse("mixture:0.5").lam == 0.5
    assert PolicySpec.parse("mixture:1").id == "mixture:1"
    assert PolicySpec.parse("ftrl").id == "ftrl"
    spec = PolicySpec.parse("ftrl:theoretical:0.25")
    assert (spec.gamma_mode, spec.beta_frac) == ("theoretical", 0.25)
    for bad in ("mixture:2", "ftrl:fast", "greedy", "uniform:1"):
        with pytest.raises(ValueError):
            PolicySpec.parse(bad)


def test_config_defaults_and_validation(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.trials == 50 and cfg.alpha == 0.1 and cfg.refit_count == 10
    np.testing.assert_allclose(default_budget_fractions(), [0.15, 0.2125, 0.275, 0.3375, 0.4])
    with pytest.raises(ValueError):
        ExperimentConfig(budget_fractions=[0.0])
    with pytest.raises(ValueError):
        ExperimentConfig(policies=["nope"])
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"T": 123, "policies": ["ftrl"]}))
    loaded = ExperimentConfig.from_file(path)
    assert loaded.T == 123 and loaded.policies == ["ftrl"]
    assert ExperimentConfig.from_dict(loaded.to_dict()) == loaded


def test_batch_size_rounding():
    assert batch_size_for(400, 10) == 40
    assert batch_size_for(25, 10) == 2   # 2.5 rounds to even
    assert batch_size_for(35, 10) == 4
    assert batch_size_for(4, 10) == 0


def test_zero_batch_rejected(small_ds):
    with pytest.raises(ValueError, match="batch size 0"):
        run_trial(ExperimentConfig(**SMALL), "ftrl", 4, 0, small_ds)


def test_trial_seeds_are_stable_and_distinct():
    a = stable_trial_seed(0, "ftrl", 400.0, 3)
    assert a == stable_trial_seed(0, "ftrl", 400.0, 3)
    assert a != stable_trial_seed(0, "ftrl", 400.0, 4)
    assert a != stable_trial_seed(0, "uniform", 400.0, 3)
    assert stable_trial_seed(5, "ftrl", 400.0, 3) == a ^ 5


def test_mixture_lambda_one_trace_is_uniform(small_ds):
    r = run_trial(ExperimentConfig(**SMALL), "mixture:1", 60.0, 0, small_ds)
    assert np.all(r.p_trace == 60.0 / 300)
    assert r.pool_labels == r.labels_used


def test_ftrl_trace_reaches_cap():
    cfg = ExperimentConfig(trials=1)
    r = run_trial(cfg, "ftrl", 400.0, 0)
    assert np.all(np.diff(r.p_trace) >= 0)
    assert r.p_trace[0] == 0.025 and r.p_trace[-1] == 0.2
    first = int(np.argmax(r.p_trace == 0.2))
    assert np.all(r.p_trace[first:] == 0.2)


def test_fixed_baseline_never_refits(small_ds):
    cfg = ExperimentConfig(**SMALL)
    r = run_trial(cfg, "uniform", 120.0, 0, small_ds)
    assert r.pool_labels == 0
    assert r.seed_labels == max(cfg.seed_set_min, batch_size_for(120, 10))
    assert np.all(r.p_trace == (120.0 - r.seed_labels) / 300)
    refit = run_trial(ExperimentConfig(baseline_fixed_model=False, **SMALL), "uniform", 120.0, 0,
                      small_ds)
    assert refit.pool_labels == refit.labels_used and np.all(refit.p_trace == 0.4)


def test_label_accounting(small_ds):
    for policy in ("ftrl", "mixture:0.5"):
        r = run_trial(ExperimentConfig(**SMALL), policy, 60.0, 1, small_ds)
        assert r.labels_used == r.pool_labels


def test_result_invariants(small_ds):
    r = run_trial(ExperimentConfig(**SMALL), "ftrl", 60.0, 0, small_ds)
    assert r.width == 2 * r.interval.half_width
    assert r.covered == (abs(r.interval.center - small_ds.true_mean) <= r.interval.half_width)
    assert r.runtime_ms >= 0


def test_linear_task_from_arrays():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 3))
    y = X @ np.array([1.0, -0.5, 0.2]) + rng.normal(scale=0.3, size=400)
    ds = Dataset(features=X, labels=y)
    cfg = ExperimentConfig(dataset="unused.csv", feature_cols=["a"], trials=1)
    for policy in ("uniform", "mixture:0.5", "ftrl"):
        r = run_trial(cfg, policy, 100.0, 0, ds)
        assert np.isfinite(r.interval.center) and r.interval.half_width > 0


def test_run_experiment_cardinality_and_order(small_ds):
    cfg = ExperimentConfig(T=300, trials=1)
    res = run_experiment(cfg, small_ds)
    assert len(res) == 3 * 5
    keys = [(r.policy, r.T_b, r.trial) for r in res]
    assert keys == sorted(keys)


def test_run_experiment_deterministic(small_ds, tmp_path):
    cfg = ExperimentConfig(**SMALL)
    a, b = run_experiment(cfg, small_ds), run_experiment(cfg, small_ds)
    write_results_csv(a, tmp_path / "a.csv")
    write_results_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(a) == 3 * 2 * 2


def test_parallel_matches_serial(small_ds):
    serial = run_experiment(ExperimentConfig(**SMALL), small_ds)
    par = run_experiment(ExperimentConfig(workers=2, **SMALL), small_ds)
    assert [r.row() for r in serial] == [r.row() for r in par]


def test_aggregate_examples():
    rows = aggregate([make_result(hw=0.1), make_result(trial=1, hw=0.2)])
    assert rows[0]["mean_width"] == pytest.approx(0.3)
    assert rows[0]["coverage"] == 1.0
    single = aggregate([make_result(hw=0.05, covered=False, labels=7)])[0]
    assert single == {"policy": "p", "T_b": 10.0, "mean_width": 0.1, "coverage": 0.0,
                      "mean_labels": 7.0}
    with pytest.raises(ValueError):
        aggregate([])


def test_interpolation():
    summary = [{"policy": "a", "T_b": 10.0, "mean_width": 1.0},
               {"policy": "a", "T_b": 20.0, "mean_width": 0.5}]
    assert interpolate(summary, "a", 15.0) == pytest.approx(0.75)
    with pytest.raises(KeyError):
        interpolate(summary, "b", 15.0)


def test_emit_empty_is_header_only(tmp_path):
    paths = emit([], [], "csv", tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == ",".join(RESULT_COLUMNS) + "\n"
    assert (tmp_path / "r.summary.csv").read_text() == ",".join(SUMMARY_COLUMNS) + "\n"
    assert paths[1] == summary_path_for(tmp_path / "r.csv")


def test_csv_round_trip(small_ds, tmp_path):
    res = run_experiment(ExperimentConfig(**SMALL), small_ds)
    write_results_csv(res, tmp_path / "r.csv")
    rows = read_results_csv(tmp_path / "r.csv")
    assert rows == [r.row() for r in res]
    back = results_from_rows(rows)
    assert [r.row() for r in back] == rows
    for row in rows:
        assert row["covered"] == (abs(row["center"] - small_ds.true_mean) <= row["half_width"])


def test_json_contains_seed_and_config(small_ds, tmp_path):
    cfg = ExperimentConfig(base_seed=77, **SMALL)
    res = run_experiment(cfg, small_ds)
    emit(res, aggregate(res), "json", tmp_path / "r.json", cfg)
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["base_seed"] == 77
    assert payload["config"]["T"] == 300
    assert len(payload["results"]) == len(res)
    assert payload["results"][0]["seed"] == res[0].seed


def test_emit_errors(tmp_path):
    with pytest.raises(OSError, match="nowhere"):
        emit([], [], "csv", tmp_path / "nowhere" / "r.csv")
    with pytest.raises(ValueError):
        emit([], [], "xml", tmp_path / "r.xml")


def test_read_results_rejects_other_headers(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_results_csv(tmp_path / "x.csv")
