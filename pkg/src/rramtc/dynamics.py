"""Filament dynamics: pulse programming and vacancy redistribution.

The SET process is modeled as incremental pulses, each converting a few
oxygen sites to vacancies (biased toward the hottest part of the current
path) and shuffling existing vacancies between neighboring sites.  Reads
between pulses stop the sequence once a target conductance is crossed.
Afterwards, read/bake disturb is modeled as random vacancy hops, mostly to
nearest neighbors with an occasional longer jump.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from multiprocessing import get_context
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, SaturationError
from .lattice import VacancyGrid, bond_arrays, generate_grid
from .network import DEFAULT_V_READ, ConductanceModel, NetworkAssembly, SolveResult
from .seeding import derive_seed, make_rng
from .tcoeff import EnsembleRecord, fit_talpha, refit_cell

#: Trailing window (in reads) for the conductance fluctuation metric.
FLUCTUATION_WINDOW = 30


@dataclass(frozen=True)
class SetParams:
    """Pulse-programming knobs.

    Defaults reach a 60 uS target from a half-filled grid in order-150
    pulses.  ``power_weighting_exponent`` shapes the new-vacancy bias: 0 is
    uniform, larger values concentrate growth on the hottest sites.
    """

    target_g: float = 60e-6
    max_pulses: int = 400
    vacancies_per_pulse: int = 2
    redistribution_hops_per_pulse: int = 20
    power_weighting_exponent: float = 1.0

    def __post_init__(self):
        if self.target_g <= 0:
            raise ConfigurationError(f"target_g must be positive, got {self.target_g}")
        if self.max_pulses < 1:
            raise ConfigurationError(f"max_pulses must be >= 1, got {self.max_pulses}")
        if self.vacancies_per_pulse < 0 or self.redistribution_hops_per_pulse < 0:
            raise ConfigurationError("pulse counts must be non-negative")


@dataclass(frozen=True)
class PerturbParams:
    """Hop-event schedule for post-programming disturb."""

    steps: int
    p_far: float = 0.05
    r_far: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigurationError(f"steps must be >= 0, got {self.steps}")
        if not 0.0 <= self.p_far <= 1.0:
            raise ConfigurationError(f"p_far must be in [0, 1], got {self.p_far}")
        if self.r_far < 2:
            raise ConfigurationError(f"r_far must be >= 2, got {self.r_far}")


@dataclass
class SetTrace:
    """Read-conductance history of one programming run.

    ``pulse_conductances[0]`` is the pre-pulse read; entry k is the read
    after pulse k.  ``reached_target`` is False when max_pulses ran out
    first.
    """

    pulse_conductances: list[float]
    pulses_to_target: int
    final_t_alpha: float
    target_g: float
    fluctuation_std: float
    reached_target: bool
    final_grid: VacancyGrid

    @property
    def final_g(self) -> float:
        return self.pulse_conductances[-1]


def site_power(result: SolveResult) -> np.ndarray:
    """Per-site dissipated power: each bond's i*v drop credited to both ends."""
    grid = result.grid
    a_idx, b_idx, _ = bond_arrays(grid)
    power = np.zeros(grid.n_sites)
    bond_power = result.bond_currents**2 / result.bond_conductances
    np.add.at(power, a_idx, bond_power)
    np.add.at(power, b_idx, bond_power)
    return power


def _pick_weighted(rng: np.random.Generator, candidates: np.ndarray, weights: np.ndarray) -> int:
    total = weights.sum()
    if total <= 0:
        return int(rng.choice(candidates))
    return int(rng.choice(candidates, p=weights / total))


def set_pulse(
    grid: VacancyGrid,
    model: ConductanceModel,
    params: SetParams,
    seed: int,
    solve_result: SolveResult | None = None,
) -> VacancyGrid:
    """One SET pulse: vacancy generation followed by local redistribution.

    New vacancies appear at empty sites with probability proportional to
    (site power + eps)^exponent, using the supplied read solve (or a fresh
    read at t0).  Then ``redistribution_hops_per_pulse`` hops move single
    vacancies, each chosen uniformly over all (occupied site, empty
    nearest-neighbor) pairs.
    """
    occ = grid.occupied.copy()
    if occ.all():
        raise SaturationError("grid is fully occupied, no sites left to convert")
    rng = make_rng(seed)

    if params.vacancies_per_pulse > 0:
        if solve_result is None:
            solve_result = NetworkAssembly(grid).solve(model, model.t0, DEFAULT_V_READ)
        power = site_power(solve_result)
        flat = occ.ravel()
        empties = np.flatnonzero(~flat)
        n_new = min(params.vacancies_per_pulse, len(empties))
        p_emp = power[empties]
        scale = p_emp.max()
        if scale > 0:
            weights = (p_emp + 1e-12 * scale) ** params.power_weighting_exponent
        else:
            weights = np.ones_like(p_emp)
        for _ in range(n_new):
            k = _pick_weighted(rng, np.arange(len(empties)), weights)
            flat[empties[k]] = True
            empties = np.delete(empties, k)
            weights = np.delete(weights, k)

    for _ in range(params.redistribution_hops_per_pulse):
        pairs = _neighbor_pairs(occ)
        if len(pairs) == 0:
            break
        src, dst = pairs[rng.integers(len(pairs))]
        occ.flat[src] = False
        occ.flat[dst] = True

    return grid.with_occupancy(occ)


def _neighbor_pairs(occ: np.ndarray) -> np.ndarray:
    """All (occupied, empty) nearest-neighbor ordered pairs as flat indices."""
    rows, cols = occ.shape
    idx = np.arange(occ.size).reshape(rows, cols)
    pairs = []
    # (src slice, dst slice) per direction: down, up, right, left
    shifts = (
        (np.s_[:-1, :], np.s_[1:, :]),
        (np.s_[1:, :], np.s_[:-1, :]),
        (np.s_[:, :-1], np.s_[:, 1:]),
        (np.s_[:, 1:], np.s_[:, :-1]),
    )
    for src_sl, dst_sl in shifts:
        mask = occ[src_sl] & ~occ[dst_sl]
        pairs.append(np.column_stack([idx[src_sl][mask], idx[dst_sl][mask]]))
    return np.concatenate(pairs, axis=0)


def ispp_set(
    initial: VacancyGrid,
    model: ConductanceModel,
    params: SetParams,
    temps: Sequence[float],
    seed: int,
    v_read: float = DEFAULT_V_READ,
) -> SetTrace:
    """Pulse until the read conductance crosses ``params.target_g``.

    Reads are taken at the model reference temperature after every pulse and
    the most recent read supplies the power map for the next pulse.  The
    final grid gets a full temperature sweep + fit for its coefficient.
    Per-pulse seeds derive from (seed, pulse index).
    """
    grid = initial
    read = NetworkAssembly(grid).solve(model, model.t0, v_read)
    trace = [read.conductance]

    pulses = 0
    while trace[-1] < params.target_g and pulses < params.max_pulses:
        grid = set_pulse(grid, model, params, derive_seed(seed, pulses), solve_result=read)
        read = NetworkAssembly(grid).solve(model, model.t0, v_read)
        trace.append(read.conductance)
        pulses += 1

    assembly = NetworkAssembly(grid)
    points = [(t, assembly.solve(model, t, v_read).resistance) for t in temps]
    fit = fit_talpha(points, t0=model.t0)
    window = np.array(trace[-FLUCTUATION_WINDOW:])
    return SetTrace(
        pulse_conductances=trace,
        pulses_to_target=pulses,
        final_t_alpha=fit.t_alpha,
        target_g=params.target_g,
        fluctuation_std=float(window.std()),
        reached_target=trace[-1] >= params.target_g,
        final_grid=grid,
    )


def _set_task(args) -> tuple[int, SetTrace]:
    index, c_v, rows, cols, model, params, temps, seed, v_read = args
    start = generate_grid(rows, cols, c_v, derive_seed(seed, "grid"))
    return index, ispp_set(start, model, params, temps, derive_seed(seed, "pulses"), v_read)


def run_set_ensemble(
    n_runs: int,
    c_v: float,
    model: ConductanceModel,
    params: SetParams,
    temps: Sequence[float],
    master_seed: int,
    rows: int = 40,
    cols: int = 32,
    v_read: float = DEFAULT_V_READ,
    workers: int = 1,
) -> list[SetTrace]:
    """Independent programming runs from fresh random grids at one concentration."""
    tasks = [
        (i, c_v, rows, cols, model, params, tuple(temps), derive_seed(master_seed, i), v_read)
        for i in range(n_runs)
    ]
    if workers > 1 and len(tasks) > 1:
        with get_context("fork").Pool(workers) as pool:
            outcomes = pool.map(_set_task, tasks)
    else:
        outcomes = [_set_task(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])
    return [trace for _, trace in outcomes]


# ---------------------------------------------------------------------------
# Post-programming perturbation


def perturb(grid: VacancyGrid, params: PerturbParams) -> VacancyGrid:
    """Random vacancy hops: ``steps`` events, occupancy count conserved.

    Each event picks a uniformly random occupied site; with probability
    1 - p_far it hops to a uniform empty nearest neighbor, otherwise to a
    uniform empty site within Chebyshev radius r_far.  Events with no legal
    destination are no-ops.
    """
    occ = grid.occupied.copy()
    rows, cols = occ.shape
    if params.steps == 0 or not occ.any():
        return grid

    rng = make_rng(params.seed)
    r = params.r_far
    for _ in range(params.steps):
        sites = np.flatnonzero(occ)
        site = int(sites[rng.integers(len(sites))])
        sr, sc = divmod(site, cols)
        far = rng.random() < params.p_far
        if far:
            r0, r1 = max(0, sr - r), min(rows, sr + r + 1)
            c0, c1 = max(0, sc - r), min(cols, sc + r + 1)
            window = ~occ[r0:r1, c0:c1]
            choices = np.flatnonzero(window)
            if len(choices) == 0:
                continue
            k = int(choices[rng.integers(len(choices))])
            wr, wc = divmod(k, c1 - c0)
            dest = (r0 + wr) * cols + (c0 + wc)
        else:
            neigh = []
            if sr > 0 and not occ[sr - 1, sc]:
                neigh.append(site - cols)
            if sr < rows - 1 and not occ[sr + 1, sc]:
                neigh.append(site + cols)
            if sc > 0 and not occ[sr, sc - 1]:
                neigh.append(site - 1)
            if sc < cols - 1 and not occ[sr, sc + 1]:
                neigh.append(site + 1)
            if not neigh:
                continue
            dest = neigh[rng.integers(len(neigh))]
        occ.flat[site] = False
        occ.flat[dest] = True

    return grid.with_occupancy(occ)


@dataclass
class PerturbPair:
    """A cell before and after disturb, both re-fitted."""

    before: EnsembleRecord
    after: EnsembleRecord
    grid_after: VacancyGrid


def _perturb_task(args) -> tuple[int, PerturbPair]:
    index, record, grid, params, model, temps, v_read = args
    moved = perturb(grid, params)
    after = refit_cell(
        moved, temps, model, v_read=v_read, trial_id=record.trial_id, seed=params.seed
    )
    return index, PerturbPair(before=record, after=after, grid_after=moved)


def perturb_ensemble(
    cells: Sequence[tuple[EnsembleRecord, VacancyGrid]],
    params: PerturbParams,
    model: ConductanceModel,
    temps: Sequence[float],
    v_read: float = DEFAULT_V_READ,
    workers: int = 1,
) -> list[PerturbPair]:
    """Perturb each cell, re-solve, re-fit; emit paired before/after records.

    Per-cell hop sequences use seeds derived from (params.seed, cell index),
    so results do not depend on worker count.
    """
    tasks = [
        (i, rec, grid, replace(params, seed=derive_seed(params.seed, i)), model, tuple(temps), v_read)
        for i, (rec, grid) in enumerate(cells)
    ]
    if workers > 1 and len(tasks) > 1:
        with get_context("fork").Pool(workers) as pool:
            outcomes = pool.map(_perturb_task, tasks)
    else:
        outcomes = [_perturb_task(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])
    return [pair for _, pair in outcomes]
