# tests/test_cli.py - Command-line front end and the steady -> hopf -> floq pipeline

import json
from pathlib import Path

import pandas as pd
import pytest

from errors import ConfigurationError
import numpy as np

from main import EXIT_OK, EXIT_USAGE, _steady_rows, build_parser, main, resolve_config, selftest_results
from models import StationaryPoint
from problems.registry import build_model

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def output_root(monkeypatch, tmp_path):
    monkeypatch.setenv("PDECONT_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def test_usage_errors_exit_with_two():
    assert main(["steady", "--model", "nosuch"]) == EXIT_USAGE
    assert main(["steady"]) == EXIT_USAGE
    assert main(["steady", "--model", "cgl1d", "--param", "r"]) == EXIT_USAGE
    assert main(["floq", "missing.json"]) == EXIT_USAGE


def test_flags_override_the_config_file(output_root):
    args = build_parser().parse_args(["steady", "--config", str(CONFIGS / "cgl1d.cfg"),
                                      "--ds", "0.02", "--param", "r=-0.3", "--shifts", "0.5,1.5"])
    cfg = resolve_config(args)
    assert cfg.model == "cgl1d"
    assert cfg.ds == 0.02
    assert cfg.ds_max == 0.1
    assert cfg.params == {"r": -0.3}
    assert cfg.shifts == [0.5, 1.5]
    assert cfg.mu1 == 0.1
    assert cfg.output == str(output_root / "cgl1d")


def test_invalid_settings_are_configuration_errors():
    args = build_parser().parse_args(["steady", "--model", "cgl1d", "--mu1", "1e-5"])
    with pytest.raises(ConfigurationError):
        resolve_config(args)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_every_config_builds_its_run_settings(path):
    cfg = resolve_config(build_parser().parse_args(["steady", "--config", str(path)]))
    assert cfg.model == path.stem
    detector = cfg.detector()
    assert len(detector.n_eig) >= len(detector.shifts)
    assert detector.auto == cfg.detector_auto
    cfg.steady_settings()
    cfg.orbit_settings()
    problem = build_model(cfg.model, cfg.params, cfg.active, cfg.counts)
    assert problem.lam == cfg.params[cfg.active]


def test_detector_refresh_and_bisection_reach_the_detector(tmp_path):
    path = tmp_path / "auto.cfg"
    path.write_text((CONFIGS / "bruss1d.cfg").read_text() + "refresh = 5\nmax_bisect = 14\n")
    detector = resolve_config(build_parser().parse_args(["steady", "--config", str(path)])).detector()
    assert detector.refresh == 5
    assert detector.max_bisect == 14
    args = build_parser().parse_args(["steady", "--config", str(path), "--refresh", "0"])
    assert resolve_config(args).detector().refresh == 0


def test_steady_rows_sum_counts_over_shifts():
    problem = build_model("cgl1d")
    points = [StationaryPoint(u=np.zeros(problem.n_u), lam=0.3, counts=[0, 2], step=0),
              StationaryPoint(u=np.zeros(problem.n_u), lam=0.4, counts=[1, 2], step=1),
              StationaryPoint(u=np.zeros(problem.n_u), lam=0.5, step=2)]
    rows = _steady_rows(problem, points, {1: "HBP@0.45"})
    assert [r["ind"] for r in rows[:2]] == [2, 3]
    assert np.isnan(rows[2]["ind"])
    assert rows[1]["msg"] == "HBP@0.45"


def test_selftest_passes():
    table = selftest_results(["cgl1d", "bruss1d"])
    assert table["passed"].all()
    assert main(["selftest", "--models", "cgl1d", "ocpol"]) == EXIT_OK


def test_plotdata_without_branches(output_root):
    assert main(["plotdata", "--output", str(output_root / "plots")]) == EXIT_OK
    tidy = pd.read_csv(output_root / "plots" / "diagram.csv")
    assert tidy.empty


@pytest.mark.slow
def test_steady_hopf_floq_pipeline(output_root):
    config = str(CONFIGS / "cgl1d.cfg")
    assert main(["steady", "--config", config, "--steps", "12", "--lam-max", "0.35"]) == EXIT_OK
    steady = output_root / "cgl1d" / "steady"
    assert (steady / "hbp1.json").exists() and (steady / "hbp2.json").exists()
    assert json.loads((steady / "shifts.json").read_text())["shifts"] == [1.0]

    assert main(["hopf", str(steady / "hbp1.json"), "--steps", "3"]) == EXIT_OK
    orbits = output_root / "cgl1d" / "hopf_hbp1"
    assert (orbits / "hopf.json").exists()
    branch = pd.read_csv(orbits / "branch.csv", skiprows=1)
    assert len(branch) == 3
    assert (branch["lambda"] < 0.001).all()
    assert (branch["ind"] == 1).all()

    assert main(["floq", str(orbits / "pt3.json"), "--compare", "--excel"]) == EXIT_OK
    floq = output_root / "cgl1d" / "floq"
    report = json.loads((floq / "pt3_fa1.json").read_text())
    assert report["summary"]["ind"] == 1
    assert report["consistency"]["consistent"] is True
    assert (floq / "pt3_fa1.xlsx").exists()

    assert main(["plotdata", str(steady / "branch.csv"), str(orbits / "branch.csv"),
                 "--oracle-k", "0"]) == EXIT_OK
    tidy = pd.read_csv(output_root / "plots" / "diagram.csv")
    assert set(tidy["branch"]) == {"steady/branch", "hopf_hbp1/branch"}

    assert main(["timestep", str(steady / "hbp1.json"), "--n-steps", "20", "--perturb", "1e-3"]) == EXIT_OK
    history = pd.read_csv(output_root / "cgl1d" / "timestep" / "hbp1_history.csv")
    assert len(history) == 21


@pytest.mark.slow
def test_repeated_steady_runs_write_identical_branches(output_root):
    config = str(CONFIGS / "cgl1d.cfg")
    for name in ("first", "second"):
        args = ["steady", "--config", config, "--steps", "8", "--lam-max", "0.3",
                "--output", str(output_root / name)]
        assert main(args) == EXIT_OK
    for file in ("branch.csv", "shifts.json"):
        first = (output_root / "first" / "steady" / file).read_text()
        assert first == (output_root / "second" / "steady" / file).read_text()
