# utils/report_generator.py - Spectrum reports (JSON, Excel) and bifurcation diagram data

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from models import FloquetSpectrum
from utils.file_handlers import encode

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
PLOT_COLUMNS = ["branch", "step", "lambda", "norm", "stable", "oracle_norm"]


class ReportGenerator:
    """Generate Floquet spectrum reports and plot data in various formats"""

    def __init__(self, tool_version: str = TOOL_VERSION):
        self.tool_version = tool_version

    # ─── Spectrum Reports ───

    def generate_json_report(self, spectrum: FloquetSpectrum, orbit_info: Dict[str, Any],
                             defect: Optional[Dict[str, Any]] = None,
                             comparison: Optional[FloquetSpectrum] = None) -> Dict[str, Any]:
        """Full multipliers with err_mu, ind, warnings and optional defect and cross-check"""
        report = {
            "metadata": {
                "generated_at": datetime.now().isoformat(),
                "tool_version": self.tool_version,
                "algorithm": spectrum.algorithm,
            },
            "orbit": encode(orbit_info),
            "summary": self._summary(spectrum),
            "multipliers": encode(np.asarray(spectrum.multipliers, dtype=complex)),
            "log_moduli": encode(spectrum.log_moduli),
            "warnings": list(spectrum.warnings),
        }
        if defect is not None:
            report["defect"] = encode(defect)
        if comparison is not None:
            report["consistency"] = self.compare_spectra(spectrum, comparison)
        return report

    def _summary(self, spectrum: FloquetSpectrum) -> Dict[str, Any]:
        finite = spectrum.log_moduli[np.isfinite(spectrum.log_moduli)]
        return {
            "ind": spectrum.ind,
            "err_mu": spectrum.err_mu,
            "tol_fl": spectrum.tol_fl,
            "count": int(len(spectrum.multipliers)),
            "gamma_cand": encode(spectrum.gamma_cand),
            "max_log_modulus": float(finite.max()) if len(finite) else None,
            "min_log_modulus": float(finite.min()) if len(finite) else None,
            "overflow": spectrum.overflow,
        }

    def compare_spectra(self, a: FloquetSpectrum, b: FloquetSpectrum) -> Dict[str, Any]:
        """Flag disagreement in ind and in the trivial-multiplier check between two algorithms"""
        consistent = a.ind == b.ind and (a.err_mu <= a.tol_fl) == (b.err_mu <= b.tol_fl)
        result = {
            "algorithms": [a.algorithm, b.algorithm],
            "ind": [a.ind, b.ind],
            "err_mu": [a.err_mu, b.err_mu],
            "consistent": bool(consistent),
        }
        if not consistent:
            logger.warning(f"{a.algorithm} and {b.algorithm} disagree: ind {a.ind} vs {b.ind}, "
                           f"err_mu {a.err_mu:.2e} vs {b.err_mu:.2e}")
        return result

    def write_json_report(self, path: Path, report: Dict[str, Any]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=2))
        logger.info(f"Wrote spectrum report to {path}")
        return path

    def generate_excel_report(self, path: Path, spectrum: FloquetSpectrum,
                              branch: Optional[pd.DataFrame] = None,
                              orbit_info: Optional[Dict[str, Any]] = None) -> Path:
        """Workbook with sheets Branch, Spectrum and Summary"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with pd.ExcelWriter(path, engine="openpyxl") as writer:
                (branch if branch is not None else pd.DataFrame()).to_excel(writer, sheet_name="Branch", index=False)
                self._create_spectrum_dataframe(spectrum).to_excel(writer, sheet_name="Spectrum", index=False)
                self._create_summary_dataframe(spectrum, orbit_info or {}).to_excel(
                    writer, sheet_name="Summary", index=False)
        except Exception as e:
            logger.error(f"Error generating Excel report: {str(e)}")
            raise
        logger.info(f"Wrote Excel report to {path}")
        return path

    def _create_spectrum_dataframe(self, spectrum: FloquetSpectrum) -> pd.DataFrame:
        g = np.asarray(spectrum.multipliers, dtype=complex)
        return pd.DataFrame({
            "index": np.arange(1, len(g) + 1),
            "re": g.real,
            "im": g.imag,
            "log_modulus": spectrum.log_moduli,
            "outside_unit_circle": spectrum.log_moduli > np.log1p(spectrum.tol_fl),
        })

    def _create_summary_dataframe(self, spectrum: FloquetSpectrum, orbit_info: Dict[str, Any]) -> pd.DataFrame:
        rows = [{"item": k, "value": str(v)} for k, v in self._summary(spectrum).items()]
        rows += [{"item": k, "value": str(v)} for k, v in orbit_info.items()]
        rows += [{"item": "warning", "value": w} for w in spectrum.warnings]
        return pd.DataFrame(rows, columns=["item", "value"])

    # ─── Plot Data ───

    def plot_frame(self, branches: Dict[str, pd.DataFrame],
                   oracle: Optional[Callable[[str, float, float], Optional[float]]] = None) -> pd.DataFrame:
        """
        Tidy rows (branch, step, lambda, norm, stable, oracle_norm).

        `stable` is ind == 0 where ind is known; oracle_norm comes from `oracle(branch, lambda, norm)`.
        """
        frames = []
        for name, df in branches.items():
            if df.empty:
                continue
            ind = pd.to_numeric(df["ind"], errors="coerce")
            frame = pd.DataFrame({
                "branch": name,
                "step": df["step"].astype(int),
                "lambda": df["lambda"].astype(float),
                "norm": df["norm"].astype(float),
                "stable": ind.fillna(0).astype(int) == 0,
            })
            frame["oracle_norm"] = [oracle(name, lam, nrm) if oracle else np.nan
                                   for lam, nrm in zip(frame["lambda"], frame["norm"])]
            frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=PLOT_COLUMNS)
        return pd.concat(frames, ignore_index=True)[PLOT_COLUMNS]

    def plot_figure(self, tidy: pd.DataFrame, title: str = "Bifurcation diagram"):
        """plotly figure: solid lines for stable segments, dashed for unstable, dotted oracle"""
        import plotly.graph_objects as go

        fig = go.Figure()
        for name, df in tidy.groupby("branch", sort=False):
            for stable, seg in self._segments(df):
                fig.add_trace(go.Scatter(
                    x=seg["lambda"], y=seg["norm"], mode="lines", name=f"{name} ({'stable' if stable else 'unstable'})",
                    line=dict(width=3 if stable else 1.5, dash="solid" if stable else "dash"),
                ))
            if df["oracle_norm"].notna().any():
                fig.add_trace(go.Scatter(x=df["lambda"], y=df["oracle_norm"], mode="lines",
                                         name=f"{name} (oracle)", line=dict(dash="dot", width=1)))
        fig.update_layout(title=title, xaxis_title="lambda", yaxis_title="||u||", template="plotly_white")
        return fig

    def _segments(self, df: pd.DataFrame) -> List[tuple]:
        """Split into runs of equal stability, sharing the boundary point"""
        out = []
        if df.empty:
            return out
        flags = df["stable"].tolist()
        start = 0
        for i in range(1, len(flags) + 1):
            if i == len(flags) or flags[i] != flags[start]:
                out.append((flags[start], df.iloc[start:min(i + 1, len(flags))]))
                start = i
        return out

    def write_plot(self, tidy: pd.DataFrame, out_dir: Path, stem: str = "diagram") -> List[Path]:
        """Tidy CSV plus SVG when kaleido is available, HTML otherwise"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / f"{stem}.csv"]
        tidy.to_csv(paths[0], index=False, float_format="%.17g")
        fig = self.plot_figure(tidy)
        try:
            fig.write_image(str(out_dir / f"{stem}.svg"))
            paths.append(out_dir / f"{stem}.svg")
        except Exception as e:
            logger.warning(f"Static export unavailable ({str(e)}); writing HTML instead")
            fig.write_html(str(out_dir / f"{stem}.html"))
            paths.append(out_dir / f"{stem}.html")
        return paths

    # ─── Branch Rows ───

    def branch_row(self, step: int, lam: float, T: Optional[float], norm: float,
                   spectrum: Optional[FloquetSpectrum] = None, msg: str = "", n_gamma: int = 0) -> Dict[str, Any]:
        row = {"step": step, "lambda": lam, "T": np.nan if T is None else T, "norm": norm,
               "ind": spectrum.ind if spectrum else np.nan,
               "err_mu": spectrum.err_mu if spectrum else np.nan, "msg": msg}
        if spectrum is not None:
            for k in range(min(n_gamma, len(spectrum.multipliers))):
                row[f"gamma_{k + 1}"] = float(np.exp(spectrum.log_moduli[k]))
        return row
