"""The attention functional: terminal cost plus running attention cost.

For u = K(t) x + v(t) the running integrand has an exact closed form in the
box moments, evaluated here analytically so line-search comparisons carry
no sampling noise:

    int_X ||du/dx||^2 dx           = |X| ||K||_F^2
    int_X ||du/dt||^2 dx           = |X| ( ||Kdot c + vdot||^2
                                           + sum_d (w_d^2 / 12) ||Kdot[:, d]||^2 )

with c the box center and w_d the box widths.  Time integration is the
trapezoid rule on the grid.  ``volume_normalized=True`` drops the |X|
factor (box-uniform expectation instead of the raw integral).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityField, PhaseBox, SmoothedDelta, terminal_mismatch
from .schedules import ControlLaw, time_derivatives


@dataclass
class CostBreakdown:
    terminal: float
    attention_x: float
    attention_t: float

    @property
    def total(self) -> float:
        return self.terminal + self.attention_x + self.attention_t


def attention_running_cost(law: ControlLaw, box: PhaseBox, volume_normalized: bool = False):
    """(attention_x, attention_t) for the law over the box."""
    d = time_derivatives(law)
    c = box.center
    mom2 = (box.hi - box.lo) ** 2 / 12.0

    kk = np.einsum("nij,nij->n", law.K, law.K)
    Kc_v = np.einsum("nij,j->ni", d.Kdot, c) + d.vdot
    col2 = np.einsum("nij,nij->nj", d.Kdot, d.Kdot)
    tt = np.einsum("ni,ni->n", Kc_v, Kc_v) + col2 @ mom2

    ts = law.grid.nodes
    ax = np.trapezoid(kk, ts)
    at = np.trapezoid(tt, ts)
    mult = 1.0 if volume_normalized else box.volume
    return float(mult * ax), float(mult * at)


def terminal_cost_endpoint(system, terminal_states, weights, gamma: float, phi_f) -> float:
    """gamma * sum_k w_k ||phi(x_k(T)) - phi_f||^2 over Monte Carlo survivors."""
    if len(terminal_states) == 0:
        return 0.0
    d = system.output(np.asarray(terminal_states)) - np.asarray(phi_f, dtype=float)
    return float(gamma * np.sum(np.asarray(weights) * np.einsum("ki,ki->k", d, d)))


def terminal_cost_density(field: DensityField, psi: SmoothedDelta) -> float:
    """Squared L2 mismatch between the terminal field and the target density."""
    return terminal_mismatch(field, psi)


def evaluate_cost(
    system,
    law: ControlLaw,
    box: PhaseBox,
    field: DensityField,
    mode: str,
    gamma: float = 0.0,
    phi_f=None,
    psi: SmoothedDelta | None = None,
    volume_normalized: bool = False,
) -> CostBreakdown:
    """Full breakdown for one law/field pair."""
    ax, at = attention_running_cost(law, box, volume_normalized=volume_normalized)
    if mode == "endpoint":
        term = terminal_cost_endpoint(system, field.terminal_states, field.terminal_weights, gamma, phi_f)
    elif mode == "density-mismatch":
        term = terminal_cost_density(field, psi)
    else:
        raise ValueError(f"unknown cost mode {mode!r}")
    return CostBreakdown(terminal=term, attention_x=ax, attention_t=at)
