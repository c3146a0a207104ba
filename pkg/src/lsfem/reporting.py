"""Delimited output and figures for convergence studies.

results.csv is byte-deterministic for a fixed configuration (values are
written with 16 significant digits); wall times go to a separate
timings.csv so re-runs can be diffed.  A standalone plot.py is emitted next
to the CSV so the figures can be regenerated without this package, and the
same figures are rendered directly to PNG files.
"""

import csv
from pathlib import Path

import numpy as np

from .mesh import write_mesh

CSV_COLUMNS = [
    "level", "trial_dofs", "total_dofs", "E_global",
    "lambda_b_hdiv_sq", "lambda_c_h1semi_sq", "lambda_c_h1_sq",
    "field_residual_sq", "div_residual_sq",
    "true_error", "effectivity", "gamma_hat_D", "gamma_hat_N",
]


def _fmt(x):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.15e}"


def history_rows(history):
    rows = []
    for rec in history:
        rep = rec.report
        rows.append({
            "level": rec.level,
            "trial_dofs": rec.trial_dofs,
            "total_dofs": rec.total_dofs,
            "E_global": rep.estimator,
            "lambda_b_hdiv_sq": rep.lambda_b_sq,
            "lambda_c_h1semi_sq": rep.lambda_c_semi_sq,
            "lambda_c_h1_sq": rep.lambda_c_full_sq,
            "field_residual_sq": rep.field_sq,
            "div_residual_sq": rep.div_sq,
            "true_error": rep.true_error,
            "effectivity": rep.effectivity,
            "gamma_hat_D": rec.gamma_d,
            "gamma_hat_N": rec.gamma_n,
        })
    return rows


def write_results_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def write_timings_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "wall_time_ms"])
        for rec in history:
            writer.writerow([rec.level, f"{rec.wall_ms:.3f}"])


def write_rates(history, config, path, echo=None):
    from .experiments import fit_rate

    dofs = [r.trial_dofs for r in history]
    est = [r.report.estimator for r in history]
    err = [r.report.true_error for r in history]
    lines = [f"problem = {config.problem}", f"q = {config.q}",
             f"mode = {config.mode}", f"theta = {config.theta}",
             f"test_mesh = {config.test_mesh}", f"levels = {len(history)}"]
    if len(history) >= 4:
        lines.append(f"estimator_rate = {fit_rate(dofs, est):.6f}")
        if all(e is not None and e > 0 for e in err):
            lines.append(f"true_error_rate = {fit_rate(dofs, err):.6f}")
    else:
        lines.append("# too few levels for a rate fit")
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text)
    if echo is not None:
        for line in lines:
            echo(line)


def dump_final_meshes(history, outdir):
    rec = history[-1]
    write_mesh(rec.mesh, Path(outdir) / "final_mesh.txt")
    write_mesh(rec.mesh_d, Path(outdir) / "final_mesh_dirichlet.txt")
    write_mesh(rec.mesh_n, Path(outdir) / "final_mesh_neumann.txt")


# -- figures ---------------------------------------------------------------------


def _loglog_guide(ax, dofs, values, rate, label):
    anchor = values[len(values) // 2] * 1.5
    ref = anchor * (np.asarray(dofs, float) / dofs[len(values) // 2]) ** (-rate)
    ax.loglog(dofs, ref, "k--", lw=0.8, label=label)


def render_figures(rows, history, outdir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    dofs = [r["trial_dofs"] for r in rows]
    est = [r["E_global"] for r in rows]
    err = [r["true_error"] for r in rows]
    have_err = all(e is not None and np.isfinite(e) and e > 0 for e in err)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(dofs, est, "o-", label="estimator")
    if have_err:
        ax.loglog(dofs, err, "s-", label="true error")
        if len(dofs) >= 4:
            from .experiments import fit_rate
            r = fit_rate(dofs, err)
            _loglog_guide(ax, dofs, err, r, f"slope {-r:.2f}")
    ax.set_xlabel("trial degrees of freedom")
    ax.set_ylabel("error / estimator")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(outdir / "convergence.png", dpi=150)
    plt.close(fig)

    if have_err:
        fig, ax = plt.subplots(figsize=(5, 4))
        eff = [r["effectivity"] for r in rows]
        ax.semilogx(dofs, eff, "o-")
        ax.set_xlabel("trial degrees of freedom")
        ax.set_ylabel("effectivity = estimator / true error")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(outdir / "effectivity.png", dpi=150)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(5, 4))
        parts = [("lambda_b_hdiv_sq", "H(div) multiplier"),
                 ("lambda_c_h1_sq", "H1 multiplier"),
                 ("field_residual_sq", "flux-gradient gap"),
                 ("div_residual_sq", "divergence residual")]
        for col, label in parts:
            vals = np.array([r[col] for r in rows], dtype=float)
            rel = np.sqrt(np.maximum(vals, 0.0)) / np.array(
                [r["true_error"] for r in rows], dtype=float)
            ax.loglog(dofs, np.maximum(rel, 1e-300), "o-", ms=3, label=label)
        ax.set_xlabel("trial degrees of freedom")
        ax.set_ylabel("estimator part / true error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(outdir / "estimator_parts.png", dpi=150)
        plt.close(fig)

    rec = history[-1]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, mesh, title in zip(axes, (rec.mesh, rec.mesh_d, rec.mesh_n),
                               ("trial mesh", "Dirichlet test mesh",
                                "Neumann test mesh")):
        ax.triplot(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles,
                   lw=0.3, color="tab:blue")
        ax.set_aspect("equal")
        ax.set_title(f"{title} ({mesh.num_triangles})", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(outdir / "meshes.png", dpi=150)
    plt.close(fig)


PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Regenerate the study figures from results.csv (written alongside).

Standalone on purpose: only csv, math and matplotlib are needed.
"""

import csv
import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).parent
rows = list(csv.DictReader(open(here / "results.csv")))
dofs = [int(r["trial_dofs"]) for r in rows]
est = [float(r["E_global"]) for r in rows]
err = [float(r["true_error"]) if r["true_error"] else math.nan for r in rows]
eff = [float(r["effectivity"]) if r["effectivity"] else math.nan for r in rows]
have_err = all(not math.isnan(e) for e in err)

fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(dofs, est, "o-", label="estimator")
if have_err:
    ax.loglog(dofs, err, "s-", label="true error")
ax.set_xlabel("trial degrees of freedom")
ax.set_ylabel("error / estimator")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(here / "convergence.png", dpi=150)

if have_err:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(dofs, eff, "o-")
    ax.set_xlabel("trial degrees of freedom")
    ax.set_ylabel("effectivity = estimator / true error")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(here / "effectivity.png", dpi=150)

    fig, ax = plt.subplots(figsize=(5, 4))
    parts = [("lambda_b_hdiv_sq", "H(div) multiplier"),
             ("lambda_c_h1_sq", "H1 multiplier"),
             ("field_residual_sq", "flux-gradient gap"),
             ("div_residual_sq", "divergence residual")]
    for col, label in parts:
        rel = [math.sqrt(max(float(r[col]), 0.0)) / e
               for r, e in zip(rows, err)]
        ax.loglog(dofs, rel, "o-", ms=3, label=label)
    ax.set_xlabel("trial degrees of freedom")
    ax.set_ylabel("estimator part / true error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(here / "estimator_parts.png", dpi=150)

print("figures written next to results.csv")
'''


def write_plot_script(path):
    Path(path).write_text(PLOT_SCRIPT)
