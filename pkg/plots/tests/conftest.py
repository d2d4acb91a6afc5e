"""Golden CLI artifacts for the figure tests.

The artifacts are produced by invoking the primary package's command-line
interface as a subprocess, so this package consumes roughplane strictly
through its external file formats.
"""

import subprocess
import sys

import pytest


def _cli(args, out):
    proc = subprocess.run(
        [sys.executable, "-m", "roughplane.cli", *args, "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture(scope="session")
def golden(tmp_path_factory):
    root = tmp_path_factory.mktemp("golden")
    _cli(
        ["conjugate-scan", "--flat", "--n-samples", "4", "--horizon", "2.0",
         "--extent", "6", "--n", "96", "--seed", "2"],
        root / "scan",
    )
    _cli(
        ["chi", "--n-samples", "6", "--radii", "1.0", "1.5", "2.0",
         "--extent", "5", "--n", "96", "--n-dirs", "6", "--amplitude", "0.3", "--seed", "4"],
        root / "chi",
    )
    _cli(
        ["pov-verify", "--amplitude", "0.1", "--n-samples", "12", "--n", "64",
         "--t", "0.3", "--seed", "5"],
        root / "pov",
    )
    _cli(
        ["geodesic", "--amplitude", "0.1", "--extent", "4", "--n", "96",
         "--t-forward", "0.8", "--h", "0.005", "--seed", "3"],
        root / "geo",
    )
    _cli(
        ["distance", "--amplitude", "0.2", "--extent", "5", "--n", "96",
         "--radii", "1.0", "1.5", "--n-samples", "3", "--n-dirs", "6", "--seed", "6"],
        root / "dist",
    )
    _cli(
        ["frontier", "--amplitude", "0", "--r-min", "1.0", "--r-max", "2.0",
         "--r-count", "5", "--theta", "0.8", "--h-threshold", "1.0", "--h", "0.01",
         "--seed", "1"],
        root / "front",
    )
    # a small jacobi CSV through the library's own exporter (same format the
    # CLI writes for jacobi curves)
    import csv
    import math

    jac = root / "jacobi.csv"
    with open(jac, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "j", "jp", "K"])
        for i in range(200):
            t = 0.02 * i
            writer.writerow([f"{t:.6f}", f"{math.sin(t):.6f}", f"{math.cos(t):.6f}", "1.0"])
    return {
        "survival": root / "scan" / "survival.csv",
        "chi": root / "chi" / "chi.csv",
        "pov-table": root / "pov" / "pov-verify.ndjson",
        "path": root / "geo" / "path.csv",
        "shape": root / "dist" / "shape.csv",
        "frontier": root / "front" / "frontier.csv",
        "jacobi": jac,
    }
