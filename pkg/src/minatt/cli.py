"""Command-line entry points: run, check, density."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import csvio
from .checks import run_checks
from .config import apply_fidelity, config_digest, resolve_config, write_config
from .density import marginal_histograms, field_rows
from .dynamics import TwoLinkArm
from .errors import MinattError
from .lqr_init import initialize
from .optimizer import TERM_CONVERGED, solve
from .rollout import integrate_closed_loop, stable_substeps, trajectory_rows
from .schedules import TimeGrid, law_header, law_to_rows
from .density import PhaseBox, estimate_density, smoothed_delta


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minatt", description="minimum-attention control law solver")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="solve an experiment and write its CSV artifacts")
    run_p.add_argument("config", help="preset name (experiment1, experiment2) or config path")
    run_p.add_argument("--fidelity", choices=("desk", "paper"), default="desk")
    run_p.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    run_p.add_argument("--workers", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=".", help="output directory (default: current)")

    chk_p = sub.add_parser("check", help="run the self-verification suites")
    chk_p.add_argument("--level", choices=("fast", "full"), default="fast")

    den_p = sub.add_parser("density", help="estimate the density field under the initial law only")
    den_p.add_argument("config")
    den_p.add_argument("--fidelity", choices=("desk", "paper"), default="desk")
    den_p.add_argument("--workers", type=int, default=None)
    den_p.add_argument("--seed", type=int, default=None)
    den_p.add_argument("--out", default=".")
    return ap


def _resolved_config(args):
    cfg = resolve_config(args.config)
    cfg = apply_fidelity(cfg, args.fidelity)
    seed = args.seed
    if seed is None and os.environ.get("MINATT_SEED"):
        seed = int(os.environ["MINATT_SEED"])
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg.validate()


def _fk_path_rows(arm: TwoLinkArm, traj) -> np.ndarray:
    p = arm.params
    q1 = traj.states[:, 0]
    q2 = traj.states[:, 1]
    elbow = np.stack([p.L1 * np.cos(q1), p.L1 * np.sin(q1)], axis=-1)
    hand = arm.forward_kinematics(traj.states)
    return np.hstack(
        [traj.grid.nodes[:, None], traj.states[:, :2], elbow, hand]
    )


_FK_HEADER = ["t", "q1", "q2", "elbow_x", "elbow_y", "hand_x", "hand_y", "hand_vx", "hand_vy"]


def _cmd_run(args) -> int:
    cfg = _resolved_config(args)
    if args.dry_run:
        sys.stdout.write(write_config(cfg))
        print(f"# digest={config_digest(cfg)}")
        return 0

    arm = TwoLinkArm(cfg.arm)
    result = solve(arm, cfg)
    stamp = f"config={config_digest(cfg)} seed={cfg.seed}"
    out = args.out
    csvio.ensure_dir(out)

    hist_rows = []
    for i, c in enumerate(result.cost_history):
        eps = result.accepted_eps[i - 1] if i >= 1 else float("nan")
        hist_rows.append((i, c.terminal, c.attention_x, c.attention_t, c.total, eps))
    csvio.write_csv(
        os.path.join(out, "cost_history.csv"),
        ["n", "terminal", "attention_x", "attention_t", "total", "eps_accepted"],
        hist_rows, stamp,
    )
    header = law_header(result.final_law.m, result.final_law.n)
    csvio.write_csv(os.path.join(out, "law_initial.csv"), header, law_to_rows(result.initial_law), stamp)
    csvio.write_csv(os.path.join(out, "law_final.csv"), header, law_to_rows(result.final_law), stamp)
    traj_header = ["t", "x1", "x2", "x3", "x4", "u1", "u2"]
    csvio.write_csv(os.path.join(out, "trajectory_initial.csv"), traj_header,
                    trajectory_rows(result.initial_trajectory), stamp)
    csvio.write_csv(os.path.join(out, "trajectory_final.csv"), traj_header,
                    trajectory_rows(result.final_trajectory), stamp)
    csvio.write_csv(os.path.join(out, "fk_path_final.csv"), _FK_HEADER,
                    _fk_path_rows(arm, result.final_trajectory), stamp)
    csvio.write_csv(os.path.join(out, "density_marginals.csv"),
                    ["t_index", "dim", "bin", "fraction"],
                    marginal_histograms(result.final_field), stamp)
    diag_rows = [("termination", result.termination),
                 ("n_outer", result.n_outer),
                 ("n_inner_total", result.n_inner_total)]
    diag_rows += sorted(result.diagnostics.items())
    csvio.write_csv(os.path.join(out, "diagnostics.csv"), ["key", "value"], diag_rows, stamp)

    print(f"termination: {result.termination} after {result.n_outer} outer iterations "
          f"({result.n_inner_total} trials)")
    print(f"cost: {result.cost_history[0].total:.6e} -> {result.cost_history[-1].total:.6e}")
    print(f"terminal miss: {result.diagnostics['terminal_miss_initial']:.4f} -> "
          f"{result.diagnostics['terminal_miss_final']:.4f}")
    print(f"ellipticity: c1={result.diagnostics['c1']:.4g} c2={result.diagnostics['c2']:.4g} "
          f"step bound {result.diagnostics['step_bound']:.4g}")
    return 0 if result.termination == TERM_CONVERGED else 2


def _cmd_check(args) -> int:
    results = run_checks(level=args.level)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_density(args) -> int:
    cfg = _resolved_config(args)
    arm = TwoLinkArm(cfg.arm)
    grid = TimeGrid(cfg.T, cfg.N)
    law, ref, _ = initialize(
        arm, np.array(cfg.x_init), np.array(cfg.phi_f), grid,
        np.diag(cfg.r_diag), np.diag(cfg.pf_diag), substeps=cfg.substeps,
    )
    box = PhaseBox(tuple(cfg.box_lower), tuple(cfg.box_upper), tuple(cfg.box_intervals))
    rho0 = smoothed_delta(np.array(cfg.x_init), box, cfg.support_halfwidth_cells)
    subs = stable_substeps(arm, law, states=ref.states, base=cfg.substeps)
    field = estimate_density(arm, law, rho0, box, cfg.trackmax, cfg.seed,
                             substeps=subs, workers=cfg.workers)
    stamp = f"config={config_digest(cfg)} seed={cfg.seed}"
    out = args.out
    csvio.ensure_dir(out)
    csvio.write_csv(os.path.join(out, "density_marginals.csv"),
                    ["t_index", "dim", "bin", "fraction"], marginal_histograms(field), stamp)
    dim_cols = [f"cell{i + 1}" for i in range(box.dim)]
    csvio.write_csv(os.path.join(out, "density_field.csv"),
                    ["t_index", *dim_cols, "fraction"], field_rows(field), stamp)
    print(f"mass leak at T: {field.exited_fraction[-1]:.4f}; "
          f"{sum(len(d) for d in field.data)} occupied cells over {grid.N + 1} nodes")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "density":
            return _cmd_density(args)
    except MinattError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
