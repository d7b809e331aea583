# run.py - Quick start script running a demo pipeline (steady -> hopf -> plotdata)

import os
import subprocess
import sys
import time
from pathlib import Path

DEMOS = {
    "cgl1d": "configs/cgl1d.cfg",
    "cgl2d": "configs/cgl2d.cfg",
    "bruss1d": "configs/bruss1d.cfg",
    "bruss2d": "configs/bruss2d.cfg",
    "ocpol": "configs/ocpol.cfg",
}


def check_requirements():
    """Check if required packages are installed"""
    try:
        import numpy
        import scipy
        import pandas
        import pydantic
        import plotly
        import dotenv
        print("✅ All required packages are installed")
        return True
    except ImportError as e:
        print(f"❌ Missing package: {str(e)}")
        print("Please run: pip install -r requirements.txt")
        return False


def check_environment():
    """Load .env if present and report where output goes"""
    env_file = Path(".env")
    if env_file.exists():
        from dotenv import load_dotenv
        load_dotenv()
    else:
        print("ℹ️ No .env file found, using defaults (see .env.example)")

    root = Path(os.getenv("PDECONT_OUTPUT_ROOT", "output"))
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"❌ Cannot create output root {root}: {str(e)}")
        return False
    print(f"✅ Output root: {root.resolve()}")
    return True


def run_step(args, label):
    """Run one main.py subcommand and report its exit code"""
    print(f"🚀 {label}")
    start = time.time()
    code = subprocess.call([sys.executable, "main.py"] + args)
    mark = "✅" if code == 0 else "❌"
    print(f"{mark} {label} finished with exit code {code} in {time.time() - start:.1f}s")
    return code


def main():
    """Run the steady and orbit stages of one demo and collect plot data"""
    demo = sys.argv[1] if len(sys.argv) > 1 else "cgl1d"
    print("=" * 60)
    print(f"pdecont demo: {demo}")
    print("=" * 60)

    if demo not in DEMOS:
        print(f"❌ Unknown demo '{demo}'; choose from {sorted(DEMOS)}")
        sys.exit(2)
    if not check_requirements() or not check_environment():
        sys.exit(1)

    config = DEMOS[demo]
    out = Path(os.getenv("PDECONT_OUTPUT_ROOT", "output")) / demo
    if run_step(["steady", "--config", config, "--output", str(out)], "Stationary continuation") != 0:
        sys.exit(1)

    hbps = sorted((out / "steady").glob("hbp*.json"))[:2]
    if not hbps:
        print("⚠️ No Hopf points detected; stopping after the steady stage")
        sys.exit(0)
    args = ["hopf"] + [str(p) for p in hbps] + ["--config", config, "--output", str(out), "--jobs", str(len(hbps))]
    run_step(args, f"Orbit branches from {len(hbps)} Hopf points")

    branches = [str(out / "steady" / "branch.csv")] + [str(p) for p in sorted(out.glob("hopf_*/branch.csv"))]
    plot_args = ["plotdata"] + branches + ["--output", str(out / "plots")]
    if demo.startswith("cgl1d"):
        plot_args += ["--oracle-k", "0"]
    run_step(plot_args, "Plot data")

    print("\n" + "=" * 60)
    print(f"📖 Results in {out.resolve()}")
    print("=" * 60)


if __name__ == "__main__":
    main()
