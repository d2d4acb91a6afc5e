import subprocess
import sys

import pytest

from geofigs import FigureJob, SchemaMismatch, render
from geofigs.render import RENDERERS

ALL_KINDS = sorted(RENDERERS)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_every_kind_renders_from_golden(kind, golden, tmp_path):
    out = tmp_path / f"{kind}.png"
    render(FigureJob(kind=kind, input_path=str(golden[kind]), output_path=str(out)))
    assert out.exists() and out.stat().st_size > 1000


def test_rendering_is_deterministic(golden, tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    for out in (a, b):
        render(FigureJob(kind="survival", input_path=str(golden["survival"]),
                         output_path=str(out)))
    assert a.read_bytes() == b.read_bytes()


def test_schema_mismatch_raises(golden, tmp_path):
    # wrong columns for the kind
    with pytest.raises(SchemaMismatch):
        render(FigureJob(kind="survival", input_path=str(golden["chi"]),
                         output_path=str(tmp_path / "x.png")))
    # truncated/corrupt file
    bad = tmp_path / "bad.csv"
    bad.write_text("t,survival\n1.0\n")
    with pytest.raises(SchemaMismatch):
        render(FigureJob(kind="survival", input_path=str(bad),
                         output_path=str(tmp_path / "y.png")))
    # ndjson without the expected records
    empty = tmp_path / "empty.ndjson"
    empty.write_text('{"record":"manifest"}\n')
    with pytest.raises(SchemaMismatch):
        render(FigureJob(kind="pov-table", input_path=str(empty),
                         output_path=str(tmp_path / "z.png")))


def test_unknown_kind_rejected(golden, tmp_path):
    with pytest.raises(SchemaMismatch):
        render(FigureJob(kind="nope", input_path=str(golden["chi"]),
                         output_path=str(tmp_path / "x.png")))


class TestCli:
    def test_render_ok(self, golden, tmp_path):
        out = tmp_path / "fig.png"
        proc = subprocess.run(
            [sys.executable, "-m", "geofigs.cli", "render", "--kind", "jacobi",
             "--in", str(golden["jacobi"]), "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_schema_mismatch_exit_code_1(self, golden, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "geofigs.cli", "render", "--kind", "chi",
             "--in", str(golden["survival"]), "--out", str(tmp_path / "fig.png")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1
        assert "schema mismatch" in proc.stderr
