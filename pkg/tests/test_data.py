import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activemean.data import (CsvSchema, Dataset, SyntheticConfig, generate_synthetic, load_csv,
                             make_rng, permute, sigmoid, synthetic_logits, trial_seed, write_csv)


def test_synthetic_defaults():
    cfg = SyntheticConfig(T=100)
    assert (cfg.d, cfg.weight_variance, cfg.noise_variance) == (10, 0.5, 1e-5)
    ds = generate_synthetic(cfg)
    assert ds.features.shape == (100, 10)
    assert ds.is_binary
    assert ds.true_mean == pytest.approx(ds.labels.mean(), abs=0)


def test_synthetic_labels_follow_logits():
    cfg = SyntheticConfig(T=300, seed=5)
    X, w, logits, u = synthetic_logits(cfg)
    ds = generate_synthetic(cfg)
    np.testing.assert_array_equal(ds.features, X)
    np.testing.assert_array_equal(ds.labels, (u < 1 / (1 + np.exp(-logits))).astype(float))
    # noise is tiny next to the signal
    assert np.max(np.abs(logits - X @ w)) < 0.05


def test_zero_weights_give_fair_coins():
    ds = generate_synthetic(SyntheticConfig(T=4000, weight_variance=0.0, noise_variance=0.0, seed=3))
    _, _, logits, _ = synthetic_logits(SyntheticConfig(T=4000, weight_variance=0.0,
                                                       noise_variance=0.0, seed=3))
    assert np.all(logits == 0)
    assert abs(ds.true_mean - 0.5) < 4 * np.sqrt(0.25 / 4000)


def test_synthetic_deterministic():
    a = generate_synthetic(SyntheticConfig(T=200, seed=11))
    b = generate_synthetic(SyntheticConfig(T=200, seed=11))
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    c = generate_synthetic(SyntheticConfig(T=200, seed=12))
    assert a.features.tobytes() != c.features.tobytes()


def test_synthetic_mean_in_range_over_seeds():
    for seed in range(20):
        assert 0.2 <= generate_synthetic(SyntheticConfig(T=2000, seed=seed)).true_mean <= 0.8


def test_invalid_synthetic_config():
    with pytest.raises(ValueError):
        SyntheticConfig(T=0)
    with pytest.raises(ValueError):
        SyntheticConfig(T=10, weight_variance=-1)


def test_dataset_shape_checks():
    with pytest.raises(ValueError):
        Dataset(features=np.zeros((3, 2)), labels=np.zeros(4))
    with pytest.raises(ValueError):
        Dataset(features=np.zeros((3, 2)), labels=np.zeros(3), predictions=np.zeros(2))
    ds = Dataset(features=np.zeros((3, 2)), labels=np.zeros(3), predictions=np.ones(3))
    assert ds.design_matrix().shape == (3, 3)
    with pytest.raises(ValueError):
        ds.labels[0] = 1.0


def test_streams_and_trial_seeds():
    a = make_rng(7, stream=0).random(5)
    b = make_rng(7, stream=1).random(5)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, make_rng(7).random(5))
    assert trial_seed(10, 3) == 10 ^ 3


def test_sigmoid_symmetry_and_extremes():
    z = np.array([-800.0, -3.0, 0.0, 3.0, 800.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s + sigmoid(-z), 1.0, atol=1e-15)
    assert sigmoid(0.0) == 0.5


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_basic(tmp_path):
    p = _write(tmp_path / "d.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,1\n")
    ds = load_csv(p, CsvSchema("y", ["a", "b"]))
    assert (ds.T, ds.d) == (3, 2)
    assert ds.true_mean == pytest.approx(2 / 3)


def test_load_csv_constant_label(tmp_path):
    p = _write(tmp_path / "d.csv", "a,y\n1,1.0\n2,1.0\n")
    assert load_csv(p, CsvSchema("y", ["a"])).true_mean == 1.0


def test_load_csv_prediction_column(tmp_path):
    p = _write(tmp_path / "d.csv", "a,pred,y\n1,0.2,0\n2,0.7,1\n")
    ds = load_csv(p, CsvSchema("y", ["a"], pred_col="pred"))
    np.testing.assert_array_equal(ds.predictions, [0.2, 0.7])


def test_load_csv_malformed_row(tmp_path):
    rows = "".join(f"{i},0\n" for i in range(4)) + "9,oops\n"
    p = _write(tmp_path / "d.csv", "a,y\n" + rows)
    with pytest.raises(ValueError, match="row 5"):
        load_csv(p, CsvSchema("y", ["a"]))


def test_load_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv", CsvSchema("y", ["a"]))
    p = _write(tmp_path / "e.csv", "a,y\n")
    with pytest.raises(ValueError, match="empty"):
        load_csv(p, CsvSchema("y", ["a"]))
    p = _write(tmp_path / "m.csv", "a,z\n1,2\n")
    with pytest.raises(ValueError, match="missing columns"):
        load_csv(p, CsvSchema("y", ["a"]))
    with pytest.raises(ValueError):
        CsvSchema("y", [])


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(SyntheticConfig(T=30, d=3, seed=2))
    write_csv(ds, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", CsvSchema("y", ["x0", "x1", "x2"]))
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_permute_singleton():
    ds = Dataset(features=[[1.0, 2.0]], labels=[1.0])
    out = permute(ds, 99)
    np.testing.assert_array_equal(out.features, ds.features)
    np.testing.assert_array_equal(out.labels, ds.labels)


def test_permute_same_seed_same_order():
    ds = generate_synthetic(SyntheticConfig(T=50, d=2, seed=1))
    a, b = permute(ds, 4), permute(ds, 4)
    np.testing.assert_array_equal(a.features, b.features)
    assert a.true_mean == ds.true_mean


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), n=st.integers(1, 40))
def test_permute_preserves_rows(seed, n):
    rng = np.random.default_rng(n)
    X = rng.normal(size=(n, 3))
    y = rng.integers(0, 2, size=n).astype(float)
    pred = rng.random(n)
    ds = Dataset(features=X, labels=y, predictions=pred)
    out = permute(ds, seed)
    before = sorted(map(tuple, np.column_stack([X, pred, y]).tolist()))
    after = sorted(map(tuple, np.column_stack([out.features, out.predictions, out.labels]).tolist()))
    assert before == after
    assert sorted(out.labels.tolist()) == sorted(y.tolist())
