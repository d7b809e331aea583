# tests/test_file_handlers.py - Config parsing, point and branch files, reports

import json
import math

import numpy as np
import pandas as pd
import pytest

from errors import ConfigurationError
from models import HopfPoint, PeriodicOrbit, StationaryPoint
from solvers.floquet import build_spectrum
from utils.file_handlers import FileHandler
from utils.report_generator import PLOT_COLUMNS, ReportGenerator


@pytest.fixture
def fh():
    return FileHandler()


def _spectrum(gammas, algorithm="FA1"):
    gammas = np.asarray(gammas, dtype=complex)
    return build_spectrum(gammas, np.log(np.abs(gammas)), algorithm)


# ─── Configuration ──────────────────────────────────────────────────────────

def test_parse_key_value_config(fh):
    text = """
    # demo run
    model = cgl1d
    steps = 12   # trailing comment
    shifts = [1.0, 0.5]
    n_eig = 3, 4
    detector_auto = true
    xi = none
    param.r = -0.2
    floquet = fa2
    """
    cfg = fh.parse_config_text(text)
    assert cfg == {
        "model": "cgl1d", "steps": 12, "shifts": [1.0, 0.5], "n_eig": [3, 4],
        "detector_auto": True, "xi": None, "floquet": "fa2", "params": {"r": -0.2},
    }


def test_parse_json_config(fh):
    cfg = fh.parse_config_text('{"model": "bruss1d", "params": {"b": 2.9}, "param.a": 0.95, "m": 31}')
    assert cfg == {"model": "bruss1d", "m": 31, "params": {"b": 2.9, "a": 0.95}}


def test_invalid_config_lines(fh, tmp_path):
    with pytest.raises(ConfigurationError):
        fh.parse_config_text("model = cgl1d\nsteps 12\n")
    with pytest.raises(ConfigurationError):
        fh.parse_config_text("{not json")
    with pytest.raises(ConfigurationError):
        fh.load_config(tmp_path / "missing.cfg")


# ─── Point Files ────────────────────────────────────────────────────────────

def test_orbit_point_round_trip_is_exact(fh, tmp_path, rng):
    orbit = PeriodicOrbit(slices=rng.standard_normal((5, 4)), tmesh=np.array([0.0, 0.1, 0.35, 0.7, 1.0]),
                          T=2 * math.pi / 3, lam=-1 / 3, xi=0.07, w_T=0.25,
                          tangent=rng.standard_normal(22), udot_ref=rng.standard_normal((5, 4)),
                          step=7, residual=3.3e-11)
    spectrum = _spectrum([1 + 1e-9, 1.7 + 0.2j, 1.7 - 0.2j, 0.01])
    path = fh.save_point(tmp_path / "pt7.json", "orbit", orbit, {"model": "cgl1d"}, spectrum)
    kind, back, echo, spec = fh.load_point(path)

    assert kind == "orbit"
    assert echo == {"model": "cgl1d"}
    assert np.array_equal(back.slices, orbit.slices)
    assert np.array_equal(back.tmesh, orbit.tmesh)
    assert np.array_equal(back.tangent, orbit.tangent)
    assert np.array_equal(back.udot_ref, orbit.udot_ref)
    assert (back.T, back.lam, back.xi, back.w_T, back.step, back.residual) == \
        (orbit.T, orbit.lam, orbit.xi, orbit.w_T, orbit.step, orbit.residual)
    assert np.array_equal(spec.multipliers, spectrum.multipliers)
    assert spec.ind == spectrum.ind == 2
    assert spec.gamma_cand == spectrum.gamma_cand


def test_hopf_point_round_trip_keeps_complex_eigenvector(fh, tmp_path, rng):
    psi = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    hp = HopfPoint(u0=np.zeros(6), lam=1e-5, omega=0.9, psi=psi, mu_r_prime=1.0, c1=1 / math.pi, s=-1,
                   alpha=math.sqrt(math.pi))
    _, back, _, spec = fh.load_point(fh.save_point(tmp_path / "hbp1.json", "hopf-point", hp))
    assert np.array_equal(back.psi, psi)
    assert (back.c1, back.s, back.alpha) == (hp.c1, hp.s, hp.alpha)
    assert spec is None


def test_steady_point_round_trip(fh, tmp_path):
    point = StationaryPoint(u=np.linspace(0, 1, 7), lam=0.1 + 0.2, counts=[2, 0], crit=[-0.1 + 1j, 0.3 - 2j],
                            det_sign=-1, step=4, residual=1e-12)
    _, back, _, _ = fh.load_point(fh.save_point(tmp_path / "bp1.json", "steady", point))
    assert back.lam == 0.1 + 0.2
    assert back.crit == point.crit
    assert back.tangent is None
    assert back.counts == [2, 0] and back.det_sign == -1


def test_point_schema_mismatch(fh, tmp_path):
    path = tmp_path / "old.json"
    path.write_text(json.dumps({"schema": "pdecont.point/0", "kind": "orbit", "state": {}}))
    with pytest.raises(ConfigurationError):
        fh.load_point(path)
    with pytest.raises(ConfigurationError):
        fh.point_payload("torus", None)


# ─── Branch Files ───────────────────────────────────────────────────────────

def test_branch_csv_round_trip(fh, tmp_path):
    rows = [
        {"step": 1, "lambda": 0.1 + 0.2, "T": math.nan, "norm": 1 / 3, "ind": 0, "err_mu": math.nan, "msg": ""},
        {"step": 2, "lambda": -1e-17, "T": 6.335, "norm": 2 / 7, "ind": 1, "err_mu": 3e-12, "msg": "FOLD"},
    ]
    df = fh.load_branch(fh.save_branch(tmp_path / "branch.csv", rows))
    assert list(df.columns[:7]) == ["step", "lambda", "T", "norm", "ind", "err_mu", "msg"]
    assert df["lambda"].tolist() == [0.1 + 0.2, -1e-17]
    assert df["norm"].tolist() == [1 / 3, 2 / 7]
    assert math.isnan(df["T"][0]) and df["T"][1] == 6.335
    assert df["msg"].tolist() == ["", "FOLD"]


def test_branch_missing_columns_are_filled(fh):
    df = fh.branch_frame([{"step": 1, "lambda": 0.0, "norm": 0.0, "extra": 5}])
    assert list(df.columns) == ["step", "lambda", "T", "norm", "ind", "err_mu", "msg", "extra"]
    assert df["msg"][0] == ""


def test_branch_file_without_schema_line(fh, tmp_path):
    path = tmp_path / "branch.csv"
    path.write_text("step,lambda\n1,0.0\n")
    with pytest.raises(ConfigurationError):
        fh.load_branch(path)


# ─── Reports ────────────────────────────────────────────────────────────────

def test_json_report_with_cross_check(tmp_path):
    report = ReportGenerator()
    fa1 = _spectrum([1.0, 2.0, 0.5])
    fa2 = _spectrum([1.0, 0.9, 0.5], algorithm="FA2")
    doc = report.generate_json_report(fa1, {"lambda": -0.1, "T": 6.3}, defect={"orbit": -30}, comparison=fa2)
    assert {"metadata", "orbit", "summary", "multipliers", "log_moduli", "warnings", "defect",
            "consistency"} <= set(doc)
    assert doc["summary"]["ind"] == 1
    assert doc["consistency"]["consistent"] is False
    path = report.write_json_report(tmp_path / "floq" / "pt1.json", doc)
    assert json.loads(path.read_text())["metadata"]["algorithm"] == "FA1"
    assert report.compare_spectra(fa1, fa1)["consistent"] is True


def test_excel_report_sheets(tmp_path):
    report = ReportGenerator()
    branch = pd.DataFrame({"step": [1, 2], "lambda": [0.0, -0.1], "norm": [0.1, 0.3]})
    path = report.generate_excel_report(tmp_path / "spec.xlsx", _spectrum([1.0, 1.5, 0.2]), branch, {"T": 6.3})
    assert pd.ExcelFile(path).sheet_names == ["Branch", "Spectrum", "Summary"]
    spectrum_sheet = pd.read_excel(path, sheet_name="Spectrum")
    assert spectrum_sheet["outside_unit_circle"].tolist() == [True, False, False]


def test_plot_frame_and_files(tmp_path):
    report = ReportGenerator()
    empty = report.plot_frame({})
    assert list(empty.columns) == PLOT_COLUMNS and empty.empty

    branch = pd.DataFrame({"step": [1, 2, 3], "lambda": [-0.1, -0.2, -0.3], "norm": [0.1, 0.2, 0.3],
                           "ind": [0, 1, np.nan]})
    tidy = report.plot_frame({"hopf_hbp1/branch": branch}, oracle=lambda name, lam, norm: 0.5)
    assert tidy["stable"].tolist() == [True, False, True]
    assert tidy["oracle_norm"].tolist() == [0.5, 0.5, 0.5]
    assert len(report._segments(tidy)) == 3

    paths = report.write_plot(tidy, tmp_path / "plots")
    assert paths[0].name == "diagram.csv"
    assert all(p.exists() for p in paths)
    assert len(pd.read_csv(paths[0])) == 3


def test_branch_row_gamma_columns():
    spectrum = _spectrum([1.0, 2.0, 0.5])
    row = ReportGenerator().branch_row(3, -0.1, 6.3, 0.2, spectrum, "FOLD", n_gamma=2)
    assert row["gamma_1"] == pytest.approx(2.0)
    assert row["gamma_2"] == pytest.approx(1.0)
    assert "gamma_3" not in row
    bare = ReportGenerator().branch_row(1, 0.0, None, 0.0)
    assert math.isnan(bare["T"]) and math.isnan(bare["ind"])
