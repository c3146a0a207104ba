"""Experiment driver: run a study, extract rates, emit CSV and figures."""

import sys
import traceback
from pathlib import Path

import numpy as np

from .adaptivity import adaptive_loop
from .config import ExperimentConfig
from .problems import get_problem
from . import reporting


def fit_rate(dofs, values, window=None):
    """Negated least-squares slope of log(value) against log(dofs) over the
    last `window` points (default: the last half)."""
    dofs = np.asarray(dofs, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(dofs)
    if window is None:
        window = (n + 1) // 2
    if window < 2 or window > n:
        raise ValueError(f"window {window} invalid for {n} points")
    d, v = dofs[-window:], values[-window:]
    if np.any(v <= 0) or np.any(d <= 0):
        raise ValueError("rate fit requires positive dofs and values")
    slope = np.polyfit(np.log(d), np.log(v), 1)[0]
    return float(-slope)


def rate(history):
    """Convergence rate from a history of (dofs, value) pairs; fits the last
    half of the points and needs at least 4 of them."""
    pairs = [(int(d), float(v)) for d, v in history]
    if len(pairs) < 4:
        raise ValueError(f"need at least 4 history points, got {len(pairs)}")
    dofs = [d for d, _ in pairs]
    vals = [v for _, v in pairs]
    return fit_rate(dofs, vals)


def run_study(config: ExperimentConfig):
    """Execute the configured loop; returns (problem, history)."""
    config.validate()
    problem = get_problem(config.problem)
    history = adaptive_loop(problem, config.q, config)
    return problem, history


def run(config: ExperimentConfig, echo=print) -> int:
    """Run and write results.csv, timings.csv, rates.txt, plot.py and the
    rendered figures into the output directory; returns an exit code."""
    try:
        outdir = Path(config.out or
                      f"out-{config.problem}-q{config.q}-{config.mode}")
        problem, history = run_study(config)
        for rec in history:
            line = (f"level {rec.level:3d}  trial dofs {rec.trial_dofs:8d}  "
                    f"estimator {rec.report.estimator:.6e}")
            if rec.report.true_error is not None:
                line += (f"  true error {rec.report.true_error:.6e}"
                         f"  effectivity {rec.report.effectivity:.3f}")
            echo(line)
        outdir.mkdir(parents=True, exist_ok=True)
        rows = reporting.history_rows(history)
        reporting.write_results_csv(rows, outdir / "results.csv")
        reporting.write_timings_csv(history, outdir / "timings.csv")
        reporting.write_rates(history, config, outdir / "rates.txt", echo=echo)
        reporting.write_plot_script(outdir / "plot.py")
        reporting.render_figures(rows, history, outdir)
        reporting.dump_final_meshes(history, outdir)
        echo(f"wrote {outdir}/results.csv and figures")
        return 0
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 1
