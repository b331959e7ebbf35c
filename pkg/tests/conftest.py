import time

import numpy as np
import pytest

from minatt import TwoLinkArm, solve
from minatt.config import SolverConfig, load_preset


@pytest.fixture
def arm():
    return TwoLinkArm()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_config(**overrides) -> SolverConfig:
    """Reduced-scale experiment for fast optimizer and CLI tests."""
    from dataclasses import replace

    base = load_preset("experiment1")
    small = replace(
        base,
        N=20,
        trackmax=150,
        box_intervals=(16, 16, 16, 16),
        support_halfwidth_cells=1.0,
        max_outer=3,
    )
    return replace(small, **overrides).validate()


@pytest.fixture(scope="session")
def experiment_results():
    """Both presets solved once at desk scale; shared by the acceptance tests."""
    out = {}
    for name in ("experiment1", "experiment2"):
        cfg = load_preset(name)
        system = TwoLinkArm(cfg.arm)
        t0 = time.time()
        res = solve(system, cfg)
        out[name] = (cfg, res, time.time() - t0)
    return out
