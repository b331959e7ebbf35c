import numpy as np
import pytest

from minatt.density import (
    PhaseBox,
    density_at,
    estimate_density,
    marginal_histograms,
    occupied_neighbor_average,
    smoothed_delta,
    terminal_mismatch,
)
from minatt.errors import SupportOverflowError
from minatt.schedules import ControlLaw, TimeGrid
from minatt.testsystems import ScalarLinear, ZeroField


def zero_law(grid, m=1, n=1):
    return ControlLaw(grid, np.zeros((grid.N + 1, m, n)), np.zeros((grid.N + 1, m)))


def box1d(intervals=64, half=3.0):
    return PhaseBox((-half,), (half,), (intervals,))


def test_phase_box_validation():
    with pytest.raises(ValueError):
        PhaseBox((0.0,), (0.0,), (4,))
    with pytest.raises(ValueError):
        PhaseBox((0.0,), (1.0,), (0,))
    box = PhaseBox((-1.0, 0.0), (1.0, 4.0), (4, 8))
    assert box.cell_volume == pytest.approx(0.5 * 0.5)
    assert box.volume == pytest.approx(8.0)


def test_kernel_profile_values():
    box = box1d(64)
    rho = smoothed_delta(np.array([0.5]), box, halfwidth_cells=4.0)
    w = rho.halfwidth[0]
    assert rho.pdf(np.array([0.5 + w])) == pytest.approx(0.0, abs=1e-15)
    assert rho.pdf(np.array([0.5])) == pytest.approx(1.0 / w)
    assert rho.pdf(np.array([0.5 + 2 * w])) == 0.0


def test_kernel_binned_mass_normalization():
    # experiment configuration: 4-D box, 64 cells per dimension
    box = PhaseBox((-5, -5, -300, -300), (5, 5, 300, 300), (64, 64, 64, 64))
    rho = smoothed_delta(np.zeros(4), box, halfwidth_cells=2.0)
    total = sum(rho.binned().values())
    assert abs(total - 1.0) <= 1e-12


def test_kernel_support_overflow():
    box = box1d(64)
    with pytest.raises(SupportOverflowError):
        smoothed_delta(np.array([2.9]), box, halfwidth_cells=4.0)


def test_zero_field_mass_never_moves():
    grid = TimeGrid(0.5, 8)
    box = box1d(32)
    rho0 = smoothed_delta(np.array([0.8]), box, halfwidth_cells=3.0)
    field = estimate_density(ZeroField(n=1, m=1), zero_law(grid), rho0, box, 500, seed=42)
    for i in range(1, grid.N + 1):
        assert field.data[i] == field.data[0]
    assert np.allclose(field.exited_fraction, 0.0)


def test_mass_identity_and_monotone_exit():
    grid = TimeGrid(0.5, 20)
    box = box1d(64, half=1.5)  # tight box so decay-to-origin keeps mass, start near edge
    rho0 = smoothed_delta(np.array([1.2]), box, halfwidth_cells=2.0)
    field = estimate_density(ScalarLinear(a=1.5), zero_law(grid), rho0, box, 800, seed=3)
    for i in range(grid.N + 1):
        assert field.mass(i) == pytest.approx(1.0 - field.exited_fraction[i], abs=1e-12)
    assert np.all(np.diff(field.exited_fraction) >= 0.0)
    assert field.exited_fraction[-1] > 0.1  # growth pushes samples out


def test_pushforward_mean_matches_exponential():
    grid = TimeGrid(0.5, 20)
    box = box1d(64)
    rho0 = smoothed_delta(np.array([1.0]), box, halfwidth_cells=2.0)
    field = estimate_density(ScalarLinear(a=-1.0), zero_law(grid), rho0, box, 2000, seed=11)
    samples = field.terminal_states[:, 0]
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean() - np.exp(-0.5)) <= 3 * se + 1e-6


def test_density_at_outside_box_and_peak():
    grid = TimeGrid(0.5, 4)
    box = box1d(32)
    rho0 = smoothed_delta(np.array([0.0]), box, halfwidth_cells=3.0)
    field = estimate_density(ZeroField(n=1, m=1), zero_law(grid), rho0, box, 1000, seed=5)
    assert density_at(field, np.array([10.0]), 0) == 0.0
    peak = density_at(field, np.array([0.0]), 2)
    all_vals = [frac / box.cell_volume for frac in field.data[2].values()]
    assert peak == pytest.approx(max(all_vals))


def test_density_at_integrates_back_to_mass():
    grid = TimeGrid(0.5, 4)
    box = box1d(16)
    rho0 = smoothed_delta(np.array([0.5]), box, halfwidth_cells=2.0)
    field = estimate_density(ScalarLinear(a=-1.0), zero_law(grid), rho0, box, 300, seed=9)
    node = 3
    centers = box.lo + (np.arange(16)[:, None] + 0.5) * box.cell_width
    total = sum(density_at(field, c, node) * box.cell_volume for c in centers)
    assert total == pytest.approx(field.mass(node), abs=1e-12)


def test_neighbor_average_fallback():
    grid = TimeGrid(0.5, 2)
    box = box1d(16)
    rho0 = smoothed_delta(np.array([0.0]), box, halfwidth_cells=1.0)
    field = estimate_density(ZeroField(n=1, m=1), zero_law(grid), rho0, box, 400, seed=1)
    x_empty = np.array([1.5])  # outside the kernel support, inside the box
    assert density_at(field, x_empty, 0) == 0.0
    nb = occupied_neighbor_average(field, np.array([0.0 + box.cell_width[0]]), 0)
    assert nb > 0.0


def test_determinism_same_seed_and_workers():
    grid = TimeGrid(0.5, 10)
    box = box1d(32)
    rho0 = smoothed_delta(np.array([0.8]), box, halfwidth_cells=2.0)
    sysd = ScalarLinear(a=-0.5)
    a = estimate_density(sysd, zero_law(grid), rho0, box, 640, seed=77, workers=1)
    b = estimate_density(sysd, zero_law(grid), rho0, box, 640, seed=77, workers=1)
    c = estimate_density(sysd, zero_law(grid), rho0, box, 640, seed=77, workers=4)
    assert a.data == b.data == c.data
    assert np.array_equal(a.terminal_states, c.terminal_states)
    d = estimate_density(sysd, zero_law(grid), rho0, box, 640, seed=78)
    assert d.data != a.data


def test_terminal_mismatch_self_is_zero():
    grid = TimeGrid(0.5, 4)
    box = box1d(32)
    rho0 = smoothed_delta(np.array([0.0]), box, halfwidth_cells=2.0)
    field = estimate_density(ZeroField(n=1, m=1), zero_law(grid), rho0, box, 500, seed=13)

    class FieldAsTarget:
        def binned_cache(self):
            return field.data[grid.N]

    assert terminal_mismatch(field, FieldAsTarget()) == 0.0


def test_terminal_mismatch_disjoint_supports():
    grid = TimeGrid(0.5, 4)
    box = box1d(64)
    rho0 = smoothed_delta(np.array([-1.5]), box, halfwidth_cells=2.0)
    field = estimate_density(ZeroField(n=1, m=1), zero_law(grid), rho0, box, 500, seed=21)
    psi = smoothed_delta(np.array([1.5]), box, halfwidth_cells=2.0)
    vol = box.cell_volume
    rho_sq = sum((f / vol) ** 2 for f in field.data[grid.N].values()) * vol
    psi_sq = sum((f / vol) ** 2 for f in psi.binned_cache().values()) * vol
    assert terminal_mismatch(field, psi) == pytest.approx(rho_sq + psi_sq, rel=1e-12)


def test_terminal_mismatch_stationary_density_near_zero():
    # f = 0 and psi = rho0: mismatch is pure binning noise, bounded by the
    # multinomial fluctuation scale sum(p (1-p)) / trackmax / cellvol
    grid = TimeGrid(0.5, 4)
    box = box1d(32)
    rho0 = smoothed_delta(np.array([0.0]), box, halfwidth_cells=3.0)
    trackmax = 4000
    field = estimate_density(ZeroField(n=1, m=1), zero_law(grid), rho0, box, trackmax, seed=17)
    masses = np.array(list(rho0.binned_cache().values()))
    var_bound = np.sum(masses * (1 - masses)) / trackmax
    tol = 5 * var_bound / box.cell_volume
    assert terminal_mismatch(field, rho0) <= tol


def test_mc_convergence_rate():
    from minatt.checks import check_mc_convergence

    result = check_mc_convergence(seeds=16, trackmax=300)
    assert result.passed, result.line()


def test_marginals_sum_to_mass():
    grid = TimeGrid(0.5, 4)
    box = PhaseBox((-2.0, -2.0), (2.0, 2.0), (8, 8))
    rho0 = smoothed_delta(np.array([0.3, -0.4]), box, halfwidth_cells=1.5)
    field = estimate_density(ZeroField(n=2, m=1), zero_law(grid, m=1, n=2), rho0, box, 300, seed=2)
    rows = marginal_histograms(field)
    for node in range(grid.N + 1):
        for dim in range(2):
            sel = (rows[:, 0] == node) & (rows[:, 1] == dim)
            assert rows[sel, 3].sum() == pytest.approx(field.mass(node), abs=1e-12)
