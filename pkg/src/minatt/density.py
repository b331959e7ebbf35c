"""Monte Carlo transport of the state density under the closed loop.

Sample trajectories are binned into a sparse occupancy field over a
phase-space box at each time node.  A trajectory stops contributing from
the first node at which it lies outside the box (mass leak, recorded per
node).  Sampling is chunked with per-chunk generators derived from the
seed, so the field is bit-identical for a given seed regardless of how the
rollout work is distributed.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import SupportOverflowError
from .rollout import integrate_nodes_batch
from .schedules import ControlLaw, TimeGrid

N_SAMPLE_CHUNKS = 16


@dataclass(frozen=True)
class PhaseBox:
    """Axis-aligned box with a uniform cell grid per dimension."""

    lower: tuple
    upper: tuple
    intervals: tuple

    def __post_init__(self):
        lo, hi, iv = map(np.asarray, (self.lower, self.upper, self.intervals))
        if not (lo.shape == hi.shape == iv.shape):
            raise ValueError("box bounds and intervals must share a shape")
        if np.any(hi <= lo):
            raise ValueError("need lower < upper per dimension")
        if np.any(iv < 1):
            raise ValueError("need at least one interval per dimension")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def shape(self) -> np.ndarray:
        return np.asarray(self.intervals, dtype=np.int64)

    @property
    def cell_width(self) -> np.ndarray:
        return (self.hi - self.lo) / self.shape

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_width))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.all((X >= self.lo) & (X < self.hi), axis=-1) & np.all(
                np.isfinite(X), axis=-1
            )

    def cell_index(self, X) -> np.ndarray:
        """Per-dimension cell indices, clipped into range (validity is the
        caller's concern via ``contains``)."""
        X = np.asarray(X, dtype=float)
        with np.errstate(invalid="ignore"):
            ij = np.floor((X - self.lo) / self.cell_width)
            ij = np.where(np.isfinite(ij), ij, 0.0)
        return np.clip(ij, 0, self.shape - 1).astype(np.int64)

    def flat_index(self, ij) -> np.ndarray:
        return np.ravel_multi_index(np.asarray(ij).T, tuple(self.shape))


@dataclass
class SmoothedDelta:
    """Compactly supported cosine-kernel point mass on the box grid.

    Product form over dimensions; per-dimension profile
    (1 + cos(pi r / w)) / (2 w) on |r| <= w, zero outside, where w is the
    half-width in physical units (``halfwidth_cells`` grid cells).  The
    continuous kernel integrates to one exactly.
    """

    center: np.ndarray
    box: PhaseBox
    halfwidth_cells: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.halfwidth_cells <= 0:
            raise ValueError("halfwidth must be positive")
        w = self.halfwidth
        if np.any(self.center - w < self.box.lo) or np.any(self.center + w > self.box.hi):
            raise SupportOverflowError("kernel support leaves the box")

    @property
    def halfwidth(self) -> np.ndarray:
        return self.halfwidth_cells * self.box.cell_width

    @property
    def peak(self) -> float:
        return float(np.prod(1.0 / self.halfwidth))

    def pdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        r = np.abs(X - self.center) / self.halfwidth
        per_dim = np.where(r <= 1.0, (1.0 + np.cos(np.pi * np.minimum(r, 1.0))) / (2.0 * self.halfwidth), 0.0)
        return np.prod(per_dim, axis=-1)

    def binned(self) -> dict[int, float]:
        """Cell-mass map over the support.  Values are mass fractions that
        sum to one, so the implied density (mass / cell volume) integrates
        to one over the box."""
        lo_ij = self.box.cell_index(self.center - self.halfwidth)
        hi_ij = self.box.cell_index(self.center + self.halfwidth)
        axes = [np.arange(lo_ij[d], hi_ij[d] + 1) for d in range(self.box.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        ij = np.stack([m.ravel() for m in mesh], axis=-1)
        centers = self.box.lo + (ij + 0.5) * self.box.cell_width
        mass = self.pdf(centers)
        total = mass.sum()
        if total <= 0:
            raise SupportOverflowError("kernel support narrower than one cell")
        mass = mass / total
        flat = self.box.flat_index(ij)
        return {int(k): float(v) for k, v in zip(flat, mass) if v > 0.0}

    def value_at(self, x) -> float:
        """Binned density (mass fraction / cell volume) at a point."""
        if not bool(self.box.contains(x)):
            return 0.0
        key = int(self.box.flat_index(self.box.cell_index(np.asarray(x))[None])[0])
        return self.binned_cache().get(key, 0.0) / self.box.cell_volume

    def binned_cache(self) -> dict[int, float]:
        cached = getattr(self, "_binned", None)
        if cached is None:
            cached = self.binned()
            self._binned = cached
        return cached


def smoothed_delta(center, box: PhaseBox, halfwidth_cells: float) -> SmoothedDelta:
    """Initial or target density centered strictly inside the box."""
    return SmoothedDelta(np.asarray(center, dtype=float), box, halfwidth_cells)


@dataclass
class DensityField:
    """Sparse per-node occupancy fractions plus terminal sample bundle."""

    grid: TimeGrid
    box: PhaseBox
    trackmax: int
    data: list  # list over nodes of dict[flat cell -> mass fraction]
    exited_fraction: np.ndarray  # (N+1,)
    terminal_states: np.ndarray  # (S, n) survivors at T
    terminal_weights: np.ndarray  # (S,), each 1/trackmax

    def mass(self, node: int) -> float:
        return float(sum(self.data[node].values()))


def _sample_chunk(rho0: SmoothedDelta, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampling from the kernel restricted to its support box."""
    dim = rho0.box.dim
    out = np.empty((count, dim))
    got = 0
    peak = rho0.peak
    w = rho0.halfwidth
    while got < count:
        m = max(64, 4 * (count - got))
        X = rho0.center + (rng.random((m, dim)) * 2.0 - 1.0) * w
        keep = rng.random(m) < rho0.pdf(X) / peak
        Xk = X[keep]
        take = min(count - got, Xk.shape[0])
        out[got : got + take] = Xk[:take]
        got += take
    return out


def sample_initial_states(rho0: SmoothedDelta, trackmax: int, seed: int) -> np.ndarray:
    """trackmax accepted samples; chunked so the draw is a pure function of
    the seed (16 fixed chunks with independent child generators)."""
    counts = [trackmax // N_SAMPLE_CHUNKS] * N_SAMPLE_CHUNKS
    for i in range(trackmax % N_SAMPLE_CHUNKS):
        counts[i] += 1
    parts = []
    for c, count in enumerate(counts):
        if count == 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence((seed, c)))
        parts.append(_sample_chunk(rho0, count, rng))
    return np.concatenate(parts, axis=0)


def estimate_density(
    system,
    law: ControlLaw,
    rho0: SmoothedDelta,
    box: PhaseBox,
    trackmax: int,
    seed: int,
    substeps=4,
    workers: int = 1,
) -> DensityField:
    """Algorithm-2 style field: roll every accepted sample through the
    closed loop and bin node occupancies as counts / trackmax.

    Workers only split the batched rollout; counts are integers merged in
    index order, so the field does not depend on the worker count.
    """
    if trackmax < 1:
        raise ValueError("trackmax must be >= 1")
    X0 = sample_initial_states(rho0, trackmax, seed)

    if workers <= 1 or trackmax < 2 * workers:
        paths = integrate_nodes_batch(system, law, X0, substeps)
    else:
        slices = np.array_split(np.arange(trackmax), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(integrate_nodes_batch, system, law, X0[s], substeps)
                for s in slices
            ]
            paths = np.concatenate([f.result() for f in futs], axis=1)

    n_nodes = law.grid.N + 1
    alive = np.ones(trackmax, dtype=bool)
    data = []
    exited = np.empty(n_nodes)
    for i in range(n_nodes):
        alive &= box.contains(paths[i])
        exited[i] = 1.0 - alive.sum() / trackmax
        flat = box.flat_index(box.cell_index(paths[i][alive]))
        cells, counts = np.unique(flat, return_counts=True)
        data.append({int(k): int(c) / trackmax for k, c in zip(cells, counts)})
    terminal_states = paths[-1][alive]
    terminal_weights = np.full(terminal_states.shape[0], 1.0 / trackmax)
    return DensityField(
        grid=law.grid,
        box=box,
        trackmax=trackmax,
        data=data,
        exited_fraction=exited,
        terminal_states=terminal_states,
        terminal_weights=terminal_weights,
    )


def density_at(field: DensityField, x, node: int) -> float:
    """Pointwise density (cell fraction / cell volume); zero outside the box."""
    if not bool(field.box.contains(x)):
        return 0.0
    key = int(field.box.flat_index(field.box.cell_index(np.asarray(x))[None])[0])
    return field.data[node].get(key, 0.0) / field.box.cell_volume


def occupied_neighbor_average(field: DensityField, x, node: int) -> float:
    """Average density over the axis neighbors of x's cell (sparse-field
    fallback when the cell itself is empty)."""
    if not bool(field.box.contains(x)):
        return 0.0
    ij = field.box.cell_index(np.asarray(x))
    shape = field.box.shape
    total, cnt = 0.0, 0
    for d in range(field.box.dim):
        for s in (-1, 1):
            jj = ij.copy()
            jj[d] += s
            if 0 <= jj[d] < shape[d]:
                total += field.data[node].get(int(field.box.flat_index(jj[None])[0]), 0.0)
                cnt += 1
    if cnt == 0:
        return 0.0
    return total / cnt / field.box.cell_volume


def terminal_mismatch(field: DensityField, psi: SmoothedDelta) -> float:
    """Cell-sum of (rho_T - psi)^2 * cell_volume over the union of supports."""
    vol = field.box.cell_volume
    rho_T = field.data[field.grid.N]
    psi_cells = psi.binned_cache()
    keys = set(rho_T) | set(psi_cells)
    acc = 0.0
    for k in keys:
        d = rho_T.get(k, 0.0) / vol - psi_cells.get(k, 0.0) / vol
        acc += d * d
    return acc * vol


def marginal_histograms(field: DensityField) -> np.ndarray:
    """Rows (node, dim, bin, fraction) for every occupied bin of every
    per-dimension marginal."""
    shape = tuple(field.box.shape)
    rows = []
    for node, cells in enumerate(field.data):
        if not cells:
            continue
        flat = np.fromiter(cells.keys(), dtype=np.int64, count=len(cells))
        frac = np.fromiter(cells.values(), dtype=float, count=len(cells))
        ij = np.stack(np.unravel_index(flat, shape), axis=-1)
        for d in range(field.box.dim):
            bins = np.bincount(ij[:, d], weights=frac, minlength=shape[d])
            for b in np.nonzero(bins)[0]:
                rows.append((node, d, int(b), bins[b]))
    return np.asarray(rows, dtype=float)


def field_rows(field: DensityField) -> np.ndarray:
    """Full sparse export: (node, cell indices..., fraction) rows."""
    shape = tuple(field.box.shape)
    rows = []
    for node, cells in enumerate(field.data):
        for k, frac in sorted(cells.items()):
            ij = np.unravel_index(k, shape)
            rows.append((node, *ij, frac))
    return np.asarray(rows, dtype=float)
