import json

import pytest

from activemean.cli import build_parser, config_from_args, main
from activemean.harness import OUTPUT_DIR_ENV, RESULT_COLUMNS


def test_gen_synthetic_and_csv_run(tmp_path, capsys):
    data = tmp_path / "s.csv"
    assert main(["gen-synthetic", "--T", "200", "--d", "3", "--seed", "4", "--out", str(data)]) == 0
    out = tmp_path / "out"
    rc = main(["run", "--dataset", str(data), "--feature-cols", "x0,x1,x2", "--label-col", "y",
               "--trials", "2", "--budget-fractions", "0.4", "--refit-count", "2",
               "--out-dir", str(out), "--format", "both"])
    assert rc == 0
    header = (out / "results.csv").read_text().splitlines()[0]
    assert header == ",".join(RESULT_COLUMNS)
    assert (out / "results.summary.csv").exists()
    assert json.loads((out / "results.json").read_text())["base_seed"] == 0
    capsys.readouterr()
    assert main(["report", str(out / "results.csv"), "--out", str(tmp_path / "s2.csv")]) == 0
    assert capsys.readouterr().out.count("\n") == 3
    assert (tmp_path / "s2.csv").read_text() == (out / "results.summary.csv").read_text()


def test_run_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    args = ["run", "--T", "300", "--trials", "2", "--budget-fractions", "0.2"]
    assert main(args) == 0
    first = (tmp_path / "env" / "results.csv").read_bytes()
    assert main(args + ["--name", "again"]) == 0
    assert (tmp_path / "env" / "again.csv").read_bytes() == first


def test_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"T": 500, "trials": 3, "policies": ["ftrl"]}))
    args = build_parser().parse_args(["run", "--config", str(cfg_path), "--trials", "7",
                                      "--trigger", "off"])
    cfg = config_from_args(args)
    assert (cfg.T, cfg.trials, cfg.policies, cfg.trigger) == (500, 7, ["ftrl"], False)


def test_bad_input_exit_code(tmp_path, capsys):
    rc = main(["run", "--dataset", str(tmp_path / "missing.csv"), "--feature-cols", "a",
               "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "missing.csv" in capsys.readouterr().err


def test_verify_bounds_quick(tmp_path, capsys):
    rc = main(["verify-bounds", "--quick", "--out", str(tmp_path / "rep.json")])
    report = json.loads((tmp_path / "rep.json").read_text())
    assert rc == (0 if report["passed"] else 1)
    assert rc == 0
    names = {c["name"] for c in report["checks"]}
    assert {"freedman", "anytime_envelope", "regret", "variance_decomposition"} <= names


def test_subcommand_required():
    with pytest.raises(SystemExit):
        main([])
