"""Figure rendering from roughplane CLI artifacts.

Every kind reads one artifact file, validates its schema, and draws a
deterministic figure (fixed DPI and font, no timestamps in the output
metadata); no mathematics is recomputed here beyond least-squares lines on
already-exported curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schemas import SchemaMismatch, read_csv_columns, read_ndjson_records

DPI = 150

plt.rcParams.update({
    "font.family": "DejaVu Sans",
    "svg.hashsalt": "geofigs",
})


@dataclass
class FigureJob:
    kind: str
    input_path: str
    output_path: str
    style: dict = field(default_factory=dict)


def _fit_line(x, y):
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef  # intercept, slope


def _save(fig, path):
    fig.savefig(path, dpi=DPI, metadata={"Software": "geofigs"})
    plt.close(fig)


def render_survival(job):
    cols = read_csv_columns(job.input_path, "survival")
    t = np.array(cols["t"])
    s = np.array(cols["survival"])
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.semilogy(t, np.maximum(s, 1e-12), marker="o", ms=3, lw=1.0, color="#0F3460")
    mask = s > 0
    if mask.sum() >= 3:
        intercept, slope = _fit_line(t[mask], np.log(s[mask]))
        ax.semilogy(t[mask], np.exp(intercept + slope * t[mask]), "--", color="#E94560",
                    label=f"slope {slope:.3f} / time")
        ax.legend(frameon=False)
    ax.set_xlabel("t")
    ax.set_ylabel("P(T* > t)")
    ax.set_title("survival of the maximal minimizing time")
    _save(fig, job.output_path)


def render_jacobi(job):
    cols = read_csv_columns(job.input_path, "jacobi")
    t = np.array(cols["t"])
    j = np.array(cols["j"])
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.plot(t, j, lw=1.2, color="#0F3460")
    ax.axhline(0.0, color="0.6", lw=0.6)
    # mark sign changes (conjugate points of the solution)
    sign_flip = np.where(j[:-1] * j[1:] < 0)[0]
    for idx in sign_flip:
        tz = t[idx] - j[idx] * (t[idx + 1] - t[idx]) / (j[idx + 1] - j[idx])
        ax.axvline(tz, color="#E94560", lw=0.8, ls=":")
        ax.annotate(f"{tz:.4g}", (tz, 0), textcoords="offset points", xytext=(3, 6),
                    fontsize=8, color="#E94560")
    ax.set_xlabel("t")
    ax.set_ylabel("j(t)")
    ax.set_title("Jacobi amplitude with zeros marked")
    _save(fig, job.output_path)


def render_chi(job):
    cols = read_csv_columns(job.input_path, "chi")
    r = np.array(cols["r"])
    s = np.array(cols["std_d"])
    if np.any(s <= 0):
        raise SchemaMismatch("chi artifact has non-positive standard deviations "
                             "(flat control belongs in the report, not the log-log fit)")
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.loglog(r, s, "o", color="#0F3460")
    intercept, slope = _fit_line(np.log(r), np.log(s))
    ax.loglog(r, np.exp(intercept) * r**slope, "--", color="#E94560",
              label=f"slope {slope:.3f} (conjectured 1/3)")
    ax.legend(frameon=False)
    ax.set_xlabel("r")
    ax.set_ylabel("std of d(0, r e)")
    ax.set_title("distance fluctuation scaling")
    _save(fig, job.output_path)


def render_shape(job):
    cols = read_csv_columns(job.input_path, "shape")
    r = np.array(cols["r"])
    mu = np.array(cols["mu"])
    ci = np.array(cols["ci95"])
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.errorbar(r, mu, yerr=ci, fmt="o-", ms=3, lw=1.0, color="#0F3460", capsize=3)
    ax.set_xlabel("r")
    ax.set_ylabel("mean d(0, r e) / r")
    ax.set_title("shape constant estimates")
    _save(fig, job.output_path)


def render_path(job):
    cols = read_csv_columns(job.input_path, "path")
    x1 = np.array(cols["x1"])
    x2 = np.array(cols["x2"])
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    ax.plot(x1, x2, lw=1.0, color="#0F3460")
    ax.plot([x1[0]], [x2[0]], "o", color="#2ECC71", label="start")
    ax.plot([x1[-1]], [x2[-1]], "s", color="#E94560", label="end")
    radius = float(np.hypot(x1, x2).max())
    th = np.linspace(0, 2 * np.pi, 256)
    ax.plot(radius * np.cos(th), radius * np.sin(th), ":", color="0.7", lw=0.7)
    ax.set_aspect("equal")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("geodesic trajectory")
    _save(fig, job.output_path)


def render_frontier(job):
    cols = read_csv_columns(job.input_path, "frontier")
    r = np.array(cols["r"])
    alpha = np.array(cols["alpha"])
    z = np.array(cols["Z"])
    in_q = np.array(cols["in_Q"]) > 0.5
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.4, 4.8), sharex=True)
    ax1.plot(r, alpha, "o-", ms=3, lw=0.9, color="#0F3460")
    ax1.set_ylabel("exit angle")
    ax2.semilogy(r, np.maximum(z, 1e-12), "o-", ms=3, lw=0.9, color="#0F3460")
    ax2.set_ylabel("Z on lens")
    ax2.set_xlabel("r")
    for ax in (ax1, ax2):
        for rv, good in zip(r, in_q):
            if good:
                ax.axvspan(rv - 0.02, rv + 0.02, color="#2ECC71", alpha=0.25, lw=0)
    ax1.set_title("frontier radii (shaded: in Q)")
    _save(fig, job.output_path)


def render_pov_table(job):
    records = read_ndjson_records(job.input_path, "pov_verify")
    fig, ax = plt.subplots(figsize=(6.4, 0.6 + 0.4 * len(records)))
    ax.axis("off")
    header = ["functional", "t", "N", "A", "B", "SE", "z", "excluded", "verdict"]
    rows = [
        [
            rec["functional"], f"{rec['t']:g}", str(rec["N"]), f"{rec['A']:.5f}",
            f"{rec['B']:.5f}", f"{rec['SE']:.5f}", f"{rec['z']:+.2f}",
            str(rec["excluded"]), "PASS" if rec.get("passed") else "FAIL",
        ]
        for rec in records
    ]
    table = ax.table(cellText=rows, colLabels=header, loc="center", cellLoc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    table.scale(1.0, 1.3)
    for j, rec in enumerate(records):
        color = "#d8f3dc" if rec.get("passed") else "#ffd6d6"
        table[(j + 1, len(header) - 1)].set_facecolor(color)
    ax.set_title("point-of-view identity: z-scores at 3 SE")
    _save(fig, job.output_path)


RENDERERS = {
    "survival": render_survival,
    "jacobi": render_jacobi,
    "chi": render_chi,
    "shape": render_shape,
    "path": render_path,
    "frontier": render_frontier,
    "pov-table": render_pov_table,
}


def render(job):
    """Render one FigureJob; raises SchemaMismatch on bad inputs."""
    if job.kind not in RENDERERS:
        raise SchemaMismatch(f"unknown figure kind {job.kind!r}; have {sorted(RENDERERS)}")
    RENDERERS[job.kind](job)
    return job.output_path
