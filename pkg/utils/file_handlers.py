# utils/file_handlers.py - Config files, point files (JSON) and branch files (CSV)

import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from errors import ConfigurationError
from models import (
    FloquetSpectrum, HopfPoint, PeriodicOrbit, StationaryPoint
)

logger = logging.getLogger(__name__)

POINT_SCHEMA = "pdecont.point/1"
BRANCH_SCHEMA = "pdecont.branch/1"
BRANCH_COLUMNS = ["step", "lambda", "T", "norm", "ind", "err_mu", "msg"]

PathLike = Union[str, Path]


# ─── Value Encoding ─────────────────────────────────────────────────────────

def encode(value: Any) -> Any:
    """JSON-ready form; floats keep repr precision, complex becomes {"re", "im"}"""
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"re": value.real.tolist(), "im": value.imag.tolist()}
        return value.tolist()
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [encode(v) for v in value]
    return value


def decode_array(value: Any) -> Optional[np.ndarray]:
    if value is None:
        return None
    if isinstance(value, dict) and set(value) == {"re", "im"}:
        return np.asarray(value["re"], dtype=float) + 1j * np.asarray(value["im"], dtype=float)
    return np.asarray(value, dtype=float)


def decode_complex(value: Any) -> Optional[complex]:
    if value is None:
        return None
    return complex(value["re"], value["im"])


class FileHandler:
    """Read and write the toolkit's configuration, point and branch files"""

    def __init__(self):
        self.supported_config_formats = {"cfg", "txt", "json", "ini", "conf"}

    # ─── Configuration ───

    def parse_config_text(self, text: str) -> Dict[str, Any]:
        """
        Flat `key = value` lines with `#` comments, or a JSON object.

        `param.<name>` keys are collected into the `params` dict; values are parsed as
        JSON where possible (numbers, lists, booleans) and kept as strings otherwise.
        """
        stripped = text.strip()
        if stripped.startswith("{"):
            try:
                raw = json.loads(stripped)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"Invalid JSON config: {str(e)}") from e
        else:
            raw = {}
            for lineno, line in enumerate(text.splitlines(), start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"Config line {lineno} is not 'key = value': {line!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                raw[key] = self._parse_value(value)

        config: Dict[str, Any] = {}
        params = dict(raw.pop("params", {}) or {})
        for key, value in raw.items():
            if key.startswith("param."):
                params[key[len("param."):]] = value
            else:
                config[key] = value
        if params:
            config["params"] = params
        return config

    def _parse_value(self, value: str) -> Any:
        lowered = value.lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        if lowered in ("none", "null", ""):
            return None
        try:
            return json.loads(value)
        except json.JSONDecodeError:
            if "," in value:
                return [self._parse_value(v.strip()) for v in value.split(",")]
            return value

    def load_config(self, path: PathLike) -> Dict[str, Any]:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        ext = path.suffix.lower().lstrip(".")
        if ext and ext not in self.supported_config_formats:
            logger.warning(f"Unusual config extension '.{ext}', parsing anyway")
        config = self.parse_config_text(path.read_text())
        logger.info(f"Loaded config {path} with {len(config)} keys")
        return config

    # ─── Point Files ───

    def point_payload(self, kind: str, obj: Any) -> Dict[str, Any]:
        if kind == "steady":
            fields = ["u", "lam", "tangent", "counts", "crit", "det_sign", "step", "residual"]
        elif kind == "hopf-point":
            fields = ["u0", "lam", "omega", "psi", "mu_r_prime", "c1", "s", "alpha"]
        elif kind == "orbit":
            fields = ["slices", "tmesh", "T", "lam", "xi", "w_T", "tangent", "udot_ref", "step", "residual"]
        else:
            raise ConfigurationError(f"Unknown point kind '{kind}'")
        return {f: encode(getattr(obj, f)) for f in fields}

    def save_point(self, path: PathLike, kind: str, obj: Any, config: Optional[Dict[str, Any]] = None,
                   spectrum: Optional[FloquetSpectrum] = None, extra: Optional[Dict[str, Any]] = None) -> Path:
        """Write a versioned JSON point file"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "schema": POINT_SCHEMA,
            "kind": kind,
            "config": encode(config or {}),
            "state": self.point_payload(kind, obj),
            "spectrum": self.spectrum_payload(spectrum) if spectrum is not None else None,
        }
        if extra:
            doc["extra"] = encode(extra)
        path.write_text(json.dumps(doc, indent=1))
        logger.debug(f"Wrote {kind} point to {path}")
        return path

    def spectrum_payload(self, spectrum: FloquetSpectrum) -> Dict[str, Any]:
        return {
            "multipliers": encode(np.asarray(spectrum.multipliers, dtype=complex)),
            "log_moduli": encode(spectrum.log_moduli),
            "err_mu": spectrum.err_mu,
            "ind": spectrum.ind,
            "algorithm": spectrum.algorithm,
            "tol_fl": spectrum.tol_fl,
            "gamma_cand": encode(spectrum.gamma_cand),
            "overflow": spectrum.overflow,
            "warnings": list(spectrum.warnings),
        }

    def load_point(self, path: PathLike) -> Tuple[str, Any, Dict[str, Any], Optional[FloquetSpectrum]]:
        """Return (kind, object, config echo, spectrum)"""
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Cannot read point file {path}: {str(e)}") from e
        if doc.get("schema") != POINT_SCHEMA:
            raise ConfigurationError(f"{path} has schema {doc.get('schema')!r}, expected {POINT_SCHEMA}")
        kind, st = doc["kind"], doc["state"]
        if kind == "steady":
            obj = StationaryPoint(u=decode_array(st["u"]), lam=st["lam"], tangent=decode_array(st["tangent"]),
                                  counts=st["counts"], crit=[decode_complex(c) for c in st["crit"]],
                                  det_sign=st["det_sign"], step=st["step"], residual=st["residual"])
        elif kind == "hopf-point":
            obj = HopfPoint(u0=decode_array(st["u0"]), lam=st["lam"], omega=st["omega"],
                            psi=decode_array(st["psi"]), mu_r_prime=st["mu_r_prime"], c1=st["c1"],
                            s=st["s"], alpha=st["alpha"])
        elif kind == "orbit":
            obj = PeriodicOrbit(slices=decode_array(st["slices"]), tmesh=decode_array(st["tmesh"]),
                                T=st["T"], lam=st["lam"], xi=st["xi"], w_T=st["w_T"],
                                tangent=decode_array(st["tangent"]), udot_ref=decode_array(st["udot_ref"]),
                                step=st["step"], residual=st["residual"])
        else:
            raise ConfigurationError(f"Unknown point kind '{kind}' in {path}")
        spectrum = None
        if doc.get("spectrum"):
            sp_ = doc["spectrum"]
            spectrum = FloquetSpectrum(
                multipliers=decode_array(sp_["multipliers"]), log_moduli=decode_array(sp_["log_moduli"]),
                err_mu=sp_["err_mu"], ind=sp_["ind"], algorithm=sp_["algorithm"], tol_fl=sp_["tol_fl"],
                gamma_cand=decode_complex(sp_["gamma_cand"]), overflow=sp_["overflow"], warnings=sp_["warnings"])
        return kind, obj, doc.get("config", {}), spectrum

    # ─── Branch Files ───

    def branch_frame(self, rows: List[Dict[str, Any]]) -> pd.DataFrame:
        df = pd.DataFrame(rows)
        for col in BRANCH_COLUMNS:
            if col not in df.columns:
                df[col] = "" if col == "msg" else np.nan
        extra = [c for c in df.columns if c not in BRANCH_COLUMNS]
        df = df[BRANCH_COLUMNS + extra]
        df["msg"] = df["msg"].fillna("")
        return df

    def save_branch(self, path: PathLike, rows: List[Dict[str, Any]]) -> Path:
        """CSV with a schema comment line; floats written with 17 significant digits"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        df = self.branch_frame(rows)
        buf = io.StringIO()
        df.to_csv(buf, index=False, float_format="%.17g")
        path.write_text(f"# schema={BRANCH_SCHEMA}\n" + buf.getvalue())
        logger.info(f"Wrote branch with {len(df)} rows to {path}")
        return path

    def load_branch(self, path: PathLike) -> pd.DataFrame:
        path = Path(path)
        try:
            with path.open() as fh:
                first = fh.readline().strip()
        except OSError as e:
            raise ConfigurationError(f"Cannot read branch file {path}: {str(e)}") from e
        if first != f"# schema={BRANCH_SCHEMA}":
            raise ConfigurationError(f"{path} is not a {BRANCH_SCHEMA} file")
        df = pd.read_csv(path, skiprows=1, float_precision="round_trip", keep_default_na=False,
                         na_values={c: ["", "nan", "NaN"] for c in BRANCH_COLUMNS if c != "msg"})
        df["msg"] = df["msg"].astype(str)
        return df
