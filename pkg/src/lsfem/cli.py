"""Command-line interface.

    lsfem run [flags]           convergence study; CSV + figures to --out
    lsfem probe-infsup [flags]  inf-sup stability probe over adaptive levels
    lsfem verify                manufactured exact-reproduction suite

Flags mirror the keys of the plain-text config file (--config key=value
lines); explicit flags override file values.
"""

import argparse
import sys
from pathlib import Path

from .config import make_config, parse_config_file


def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--problem", help="registry problem name")
    p.add_argument("--q", type=int, choices=(0, 1),
                   help="trial order: RT_q flux with degree q+1 potential")
    p.add_argument("--test-mesh", dest="test_mesh",
                   choices=("matched", "full"),
                   help="boundary-matched coarse test meshes or the trial mesh")
    p.add_argument("--theta", type=float, help="bulk-chasing fraction")
    p.add_argument("--theta-squared", dest="theta_squared",
                   action="store_const", const=True,
                   help="mark against theta^2 * total instead of theta * total")
    p.add_argument("--max-dofs", dest="max_dofs", type=int,
                   help="stop once trial DOFs would exceed this")
    p.add_argument("--volume-quad-degree", dest="volume_quad_degree", type=int)
    p.add_argument("--boundary-quad-degree", dest="boundary_quad_degree",
                   type=int)
    p.add_argument("--graded-edge-levels", dest="graded_edge_levels", type=int)
    p.add_argument("--out", help="output directory")


def _config_from(args, **extra):
    file_values = parse_config_file(args.config) if args.config else {}
    keys = ("problem", "q", "mode", "theta", "theta_squared", "max_dofs",
            "test_mesh", "volume_quad_degree", "boundary_quad_degree",
            "graded_edge_levels", "probe", "probe_max_dofs", "out")
    overrides = {k: getattr(args, k, None) for k in keys}
    overrides.update(extra)
    return make_config(file_values, **overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lsfem",
        description="Least-squares finite elements with dual-norm boundary "
                    "residuals: convergence studies, stability probes, and "
                    "exactness checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="uniform or adaptive convergence study")
    _add_common(p_run)
    p_run.add_argument("--mode", choices=("uniform", "adaptive"))
    p_run.add_argument("--probe", action="store_const", const=True,
                       help="record inf-sup probes in the CSV")
    p_run.add_argument("--probe-max-dofs", dest="probe_max_dofs", type=int)

    p_probe = sub.add_parser("probe-infsup",
                             help="inf-sup probe along adaptive levels")
    _add_common(p_probe)
    p_probe.add_argument("--levels", type=int, default=5,
                         help="number of adaptive levels to probe")

    sub.add_parser("verify", help="run the manufactured-solution suite")

    args = parser.parse_args(argv)

    if args.command == "run":
        from .experiments import run
        return run(_config_from(args))

    if args.command == "probe-infsup":
        from .adaptivity import adaptive_loop
        from .problems import get_problem
        cfg = _config_from(args, probe=True, mode="adaptive",
                           max_dofs=10 ** 9, probe_max_dofs=10 ** 9)
        problem = get_problem(cfg.problem)
        history = adaptive_loop(problem, cfg.q, cfg, max_levels=args.levels)
        print("level  trial_dofs  gamma_hat_D  gamma_hat_N")
        lines = ["level,trial_dofs,gamma_hat_D,gamma_hat_N"]
        for rec in history:
            has_n = rec.gamma_n is not None and rec.gamma_n == rec.gamma_n
            gn_txt = f"{rec.gamma_n:.15e}" if has_n else ""
            gn_show = f"{rec.gamma_n:.6f}" if has_n else "   n/a"
            print(f"{rec.level:5d}  {rec.trial_dofs:10d}  {rec.gamma_d:.6f}"
                  f"     {gn_show}")
            lines.append(f"{rec.level},{rec.trial_dofs},{rec.gamma_d:.15e},{gn_txt}")
        if cfg.out:
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            (Path(cfg.out) / "probes.csv").write_text("\n".join(lines) + "\n")
            print(f"wrote {cfg.out}/probes.csv")
        return 0

    if args.command == "verify":
        from .verification import manufactured_suite
        cases = manufactured_suite()
        ok = True
        for case in cases:
            status = "pass" if case.passed else "FAIL"
            print(f"[{status}] {case.label}: error {case.error:.3e}, "
                  f"|lambda_b| {case.lambda_b_norm:.3e}, "
                  f"|lambda_c| {case.lambda_c_norm:.3e}")
            ok = ok and case.passed
        print("manufactured suite:", "all passed" if ok else "FAILURES")
        return 0 if ok else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
