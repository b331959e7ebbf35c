"""Outer gradient loop with a halve-or-grow line search.

Per iteration: roll the center trajectory, transport the multiplier
gradient, build the update direction, then halve the trial step until the
attention functional stops increasing.  The next iteration starts from 1.5
times the accepted step.  Density re-estimation inside the line search
reuses the seed, so trial comparisons share their random numbers.

Two robustness guards sit on top of the plain loop (both recorded in the
result): a trial is rejected when it ejects most of the sample mass from
the box (a degenerate way to shrink the terminal cost), and when the joint
direction exhausts the line search the feedforward component is retried
alone before giving up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gradient_step, lqr_init
from .adjoint import DensityMismatchTarget, EndpointTarget, lambda_schedule
from .cost import CostBreakdown, evaluate_cost
from .density import PhaseBox, estimate_density, smoothed_delta
from .errors import DegenerateGainError, DivergenceError
from .gradient_step import UpdateDirection, apply, compute_direction, ellipticity_constants
from .rollout import Trajectory, integrate_closed_loop, propagate_sensitivity, stable_substeps
from .schedules import ControlLaw, TimeGrid

TERM_CONVERGED = "converged"
TERM_MAX_ITERATIONS = "max-iterations"
TERM_EXHAUSTED = "line-search-exhausted"


@dataclass
class TrialRecord:
    outer: int
    eps: float
    eta: float
    accepted: bool
    feedforward_only: bool = False


@dataclass
class LineSearchResult:
    accepted: bool
    eps: float = math.nan
    eta: float = math.inf
    payload: object = None
    trials: list = field(default_factory=list)


def line_search(
    evaluate,
    eta_incumbent: float,
    eps_start: float,
    rule: str = "outer",
    max_trials: int = 40,
    eps_floor: float = 1e-12,
) -> LineSearchResult:
    """Halve eps until a trial is acceptable.

    ``evaluate(eps)`` returns (eta, payload); invalid trials report
    eta = inf.  Under the default "outer" rule the first trial whose eta is
    no greater than ``eta_incumbent`` is accepted.  Under the "literal"
    rule each trial is compared to the previous trial instead, starting
    from the second trial (this can accept a cost increase).
    """
    if rule not in ("outer", "literal"):
        raise ValueError(f"unknown line-search rule {rule!r}")
    eps = eps_start
    trials = []
    eta_prev = None
    for m in range(max_trials):
        eta, payload = evaluate(eps)
        if rule == "outer":
            ok = eta <= eta_incumbent
        else:
            ok = eta_prev is not None and eta <= eta_prev
        trials.append((eps, eta, ok))
        if ok and math.isfinite(eta):
            return LineSearchResult(True, eps, eta, payload, trials)
        eta_prev = eta
        eps *= 0.5
        if eps < eps_floor:
            break
    return LineSearchResult(False, trials=trials)


@dataclass
class SolveResult:
    final_law: ControlLaw
    initial_law: ControlLaw
    reference: lqr_init.Reference
    cost_history: list  # CostBreakdown, index 0 = initial law
    accepted_eps: list
    trials: list  # TrialRecord
    n_outer: int
    n_inner_total: int
    termination: str
    diagnostics: dict
    initial_trajectory: Trajectory
    final_trajectory: Trajectory
    final_field: object


def solve(system, cfg) -> SolveResult:
    """Run the full pipeline described by a SolverConfig-like object."""
    grid = TimeGrid(cfg.T, cfg.N)
    box = PhaseBox(tuple(cfg.box_lower), tuple(cfg.box_upper), tuple(cfg.box_intervals))
    x_init = np.asarray(cfg.x_init, dtype=float)
    phi_f = np.asarray(cfg.phi_f, dtype=float)
    R = np.diag(np.asarray(cfg.r_diag, dtype=float))
    P_f = np.diag(np.asarray(cfg.pf_diag, dtype=float))

    rho0 = smoothed_delta(x_init, box, cfg.support_halfwidth_cells)
    if cfg.mode == "endpoint":
        target = EndpointTarget(gamma=cfg.gamma, phi_f=phi_f)
    elif cfg.mode == "density-mismatch":
        goal = system.goal_state(phi_f)
        psi = smoothed_delta(goal, box, cfg.support_halfwidth_cells)
        target = DensityMismatchTarget(field=None, psi=psi)
    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")

    def estimate(law, subs):
        return estimate_density(
            system, law, rho0, box, cfg.trackmax, cfg.seed,
            substeps=subs, workers=cfg.workers,
        )

    def cost_of(law, dens):
        if cfg.mode == "density-mismatch":
            target.field = dens
        return evaluate_cost(
            system, law, box, dens, cfg.mode,
            gamma=cfg.gamma, phi_f=phi_f,
            psi=getattr(target, "psi", None),
            volume_normalized=cfg.volume_normalized,
        )

    law, reference, _ = lqr_init.initialize(
        system, x_init, phi_f, grid, R, P_f, substeps=cfg.substeps
    )
    initial_law = law.copy()

    subs = stable_substeps(system, law, states=reference.states, base=cfg.substeps)
    traj = integrate_closed_loop(system, law, x_init, substeps=subs, magnitude_bound=cfg.divergence_bound)
    initial_traj = traj
    dens = estimate(law, subs)
    cost = cost_of(law, dens)
    eta = cost.total
    mass_initial = 1.0 - dens.exited_fraction[-1]

    history = [cost]
    accepted_eps = []
    trials: list[TrialRecord] = []
    rho_fallbacks = 0
    fallback_steps = 0
    eps = cfg.eps0
    termination = TERM_MAX_ITERATIONS
    n = 0

    for n in range(cfg.max_outer):
        sens_traj = propagate_sensitivity(system, law, traj, substeps=subs)
        if cfg.mode == "density-mismatch":
            target.field = dens
        adj = lambda_schedule(system, sens_traj, target)
        direction = compute_direction(system, law, traj, dens, adj)
        rho_fallbacks += direction.rho_fallbacks

        def evaluate(eps_try, direction=direction):
            law_t = apply(law, direction, eps_try)
            subs_t = stable_substeps(system, law_t, states=traj.states, base=cfg.substeps)
            try:
                traj_t = integrate_closed_loop(
                    system, law_t, x_init, substeps=subs_t, magnitude_bound=cfg.divergence_bound
                )
            except DivergenceError:
                return math.inf, None
            dens_t = estimate(law_t, subs_t)
            surviving = 1.0 - dens_t.exited_fraction[-1]
            if surviving < cfg.mass_floor * mass_initial:
                return math.inf, None
            cost_t = cost_of(law_t, dens_t)
            return cost_t.total, (law_t, traj_t, dens_t, cost_t, subs_t)

        result = line_search(
            evaluate, eta, eps, rule=cfg.line_search_rule,
            max_trials=cfg.max_inner, eps_floor=cfg.eps_floor,
        )
        for eps_t, eta_t, ok in result.trials:
            trials.append(TrialRecord(n, eps_t, eta_t, ok))
        if not result.accepted:
            ff_dir = gradient_step.feedforward_only(direction)
            result = line_search(
                lambda e: evaluate(e, direction=ff_dir), eta, eps,
                rule=cfg.line_search_rule, max_trials=cfg.max_inner, eps_floor=cfg.eps_floor,
            )
            for eps_t, eta_t, ok in result.trials:
                trials.append(TrialRecord(n, eps_t, eta_t, ok, feedforward_only=True))
            fallback_steps += int(result.accepted)

        if not result.accepted:
            termination = TERM_EXHAUSTED
            break

        law, traj, dens, cost, subs = result.payload
        rel = abs(cost.total - eta) / eta if eta != 0 else 0.0
        eta = cost.total
        history.append(cost)
        accepted_eps.append(result.eps)
        eps = 1.5 * result.eps
        if rel <= cfg.eps_tol:
            termination = TERM_CONVERGED
            break

    try:
        c1, c2 = ellipticity_constants(system, law, traj, box)
        step_bound = 2.0 * c2**2 / c1**2
    except DegenerateGainError:
        c1 = c2 = step_bound = math.nan

    diagnostics = {
        "c1": c1,
        "c2": c2,
        "step_bound": step_bound,
        "mass_leak": float(dens.exited_fraction[-1]),
        "rho_fallbacks": rho_fallbacks,
        "feedforward_fallback_steps": fallback_steps,
        "terminal_miss_initial": _terminal_miss(system, initial_traj, phi_f),
        "terminal_miss_final": _terminal_miss(system, traj, phi_f),
    }
    return SolveResult(
        final_law=law,
        initial_law=initial_law,
        reference=reference,
        cost_history=history,
        accepted_eps=accepted_eps,
        trials=trials,
        n_outer=len(accepted_eps),
        n_inner_total=len(trials),
        termination=termination,
        diagnostics=diagnostics,
        initial_trajectory=initial_traj,
        final_trajectory=traj,
        final_field=dens,
    )


def _terminal_miss(system, traj: Trajectory, phi_f) -> float:
    return float(np.linalg.norm(system.output(traj.states[-1]) - phi_f))
