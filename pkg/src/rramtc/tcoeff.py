"""Temperature-coefficient statistics over Monte Carlo cell ensembles.

Each simulated cell is one random vacancy grid: its resistance is solved over
a temperature sweep, the linear model R(T) = R0*[1 + t_alpha*(T - t0)] is
fitted, and the per-cell coefficient joins the ensemble scatter.  Binning the
scatter by cell conductance yields the per-range mean/sigma/cv statistics that
drive the crossbar drift model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from typing import Sequence

import numpy as np

from .errors import CalibrationError, ConfigurationError, FitError
from .lattice import VacancyGrid, generate_grid, order_parameter
from .network import DEFAULT_V_READ, ConductanceModel, NetworkAssembly
from .seeding import derive_seed

#: Fitting sweep (K): five points across the measurement window.
DEFAULT_TEMPS = (300.0, 325.0, 350.0, 375.0, 400.0)

#: Concentrations of the three-way scatter comparison.
SCATTER_CONCENTRATIONS = (0.50, 0.55, 0.58)

#: Wider ladder used when the ensemble must populate every conductance range.
STATS_CONCENTRATIONS = (0.50, 0.55, 0.58, 0.62, 0.66)

MIN_FIT_POINTS = 3
MIN_FIT_SPAN = 50.0  # K


@dataclass(frozen=True)
class TAlphaFit:
    """Least-squares fit of R(T) = r0 * [1 + t_alpha * (T - t0)]."""

    r0: float
    t_alpha: float
    t0: float
    rms_residual: float


def fit_talpha(points: Sequence[tuple[float, float]], t0: float = 300.0) -> TAlphaFit:
    """Ordinary least squares of resistance on (T - t0).

    The intercept is r0 and the slope is r0 * t_alpha.  Requires at least
    three points with distinct temperatures spanning at least 50 K and
    positive resistances.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} (T, R) points")
    temps, res = pts[:, 0], pts[:, 1]
    if np.any(res <= 0):
        raise FitError("all resistances must be positive")
    if len(np.unique(temps)) != len(temps):
        raise FitError("temperatures must be distinct")
    span = temps.max() - temps.min()
    if span < MIN_FIT_SPAN:
        raise FitError(f"temperature span {span} K below the {MIN_FIT_SPAN} K minimum")

    design = np.column_stack([np.ones_like(temps), temps - t0])
    coef, *_ = np.linalg.lstsq(design, res, rcond=None)
    intercept, slope = float(coef[0]), float(coef[1])
    if intercept <= 0:
        raise FitError(f"non-physical fitted r0 = {intercept}")
    residuals = res - design @ coef
    rms = float(np.sqrt(np.mean(residuals**2)))
    return TAlphaFit(r0=intercept, t_alpha=slope / intercept, t0=t0, rms_residual=rms)


@dataclass(frozen=True)
class EnsembleRecord:
    """One Monte Carlo cell: concentration, fitted resistance and coefficient."""

    trial_id: int
    c_v: float
    r0: float
    t_alpha: float
    order_param: float
    seed: int

    @property
    def g0(self) -> float:
        """Cell conductance at the reference temperature."""
        return 1.0 / self.r0


@dataclass(frozen=True)
class TrialFailure:
    trial_id: int
    c_v: float
    seed: int
    error: str


@dataclass
class EnsembleRun:
    """Completed ensemble: surviving records plus any per-trial failures."""

    records: list[EnsembleRecord]
    failures: list[TrialFailure] = field(default_factory=list)

    def by_concentration(self, c_v: float, tol: float = 1e-9) -> list[EnsembleRecord]:
        return [r for r in self.records if abs(r.c_v - c_v) <= tol]

    def concentrations(self) -> list[float]:
        return sorted({round(r.c_v, 12) for r in self.records})


def simulate_cell(
    c_v: float,
    temps: Sequence[float],
    seed: int,
    model: ConductanceModel,
    rows: int = 40,
    cols: int = 32,
    v_read: float = DEFAULT_V_READ,
    trial_id: int = 0,
) -> EnsembleRecord:
    """Generate one grid, sweep temperature, fit the coefficient.

    Fully deterministic for the given seed; the grid can be rebuilt later with
    :func:`rebuild_grid`.
    """
    record, _ = simulate_cell_with_grid(
        c_v, temps, seed, model, rows=rows, cols=cols, v_read=v_read, trial_id=trial_id
    )
    return record


def simulate_cell_with_grid(
    c_v: float,
    temps: Sequence[float],
    seed: int,
    model: ConductanceModel,
    rows: int = 40,
    cols: int = 32,
    v_read: float = DEFAULT_V_READ,
    trial_id: int = 0,
) -> tuple[EnsembleRecord, VacancyGrid]:
    grid = generate_grid(rows, cols, c_v, seed)
    record = refit_cell(
        grid, temps, model, v_read=v_read, trial_id=trial_id, seed=seed, c_v=c_v
    )
    return record, grid


def refit_cell(
    grid: VacancyGrid,
    temps: Sequence[float],
    model: ConductanceModel,
    v_read: float = DEFAULT_V_READ,
    trial_id: int = 0,
    seed: int = 0,
    c_v: float | None = None,
) -> EnsembleRecord:
    """Temperature sweep + fit + order parameter for an existing grid.

    ``c_v`` overrides the recorded concentration; ensembles store the
    requested fraction rather than the rounded occupancy so records group
    exactly by sweep parameter.
    """
    assembly = NetworkAssembly(grid)
    points = [(t, assembly.solve(model, t, v_read).resistance) for t in temps]
    fit = fit_talpha(points, t0=model.t0)
    return EnsembleRecord(
        trial_id=trial_id,
        c_v=grid.c_v if c_v is None else c_v,
        r0=fit.r0,
        t_alpha=fit.t_alpha,
        order_param=order_parameter(grid),
        seed=seed,
    )


def rebuild_grid(record: EnsembleRecord, rows: int = 40, cols: int = 32) -> VacancyGrid:
    """Regenerate the exact grid behind an ensemble record from its seed."""
    return generate_grid(rows, cols, record.c_v, record.seed)


def _cell_task(args) -> tuple[int, EnsembleRecord | None, TrialFailure | None]:
    index, c_v, temps, seed, model, rows, cols, v_read, trial_id = args
    try:
        rec = simulate_cell(
            c_v, temps, seed, model, rows=rows, cols=cols, v_read=v_read, trial_id=trial_id
        )
        return index, rec, None
    except Exception as exc:  # noqa: BLE001 - per-trial isolation is the contract
        return index, None, TrialFailure(trial_id, c_v, seed, f"{type(exc).__name__}: {exc}")


def run_ensemble(
    concentrations: Sequence[float],
    n_trials: int,
    temps: Sequence[float],
    master_seed: int,
    model: ConductanceModel,
    rows: int = 40,
    cols: int = 32,
    v_read: float = DEFAULT_V_READ,
    workers: int = 1,
) -> EnsembleRun:
    """Monte Carlo ensemble: ``n_trials`` independent cells per concentration.

    Per-trial seeds are derived from (master_seed, concentration index, trial
    index), so the output is identical for any worker count and any execution
    order.  Failed trials are excluded and reported in the run summary.
    """
    if n_trials < 1:
        raise ConfigurationError(f"n_trials must be >= 1, got {n_trials}")
    tasks = []
    for ci, c_v in enumerate(concentrations):
        for trial in range(n_trials):
            seed = derive_seed(master_seed, ci, trial)
            tasks.append((len(tasks), c_v, tuple(temps), seed, model, rows, cols, v_read, trial))

    if workers > 1 and len(tasks) > 1:
        with get_context("fork").Pool(workers) as pool:
            outcomes = pool.map(_cell_task, tasks)
    else:
        outcomes = [_cell_task(t) for t in tasks]

    outcomes.sort(key=lambda item: item[0])
    records = [rec for _, rec, _ in outcomes if rec is not None]
    failures = [fail for _, _, fail in outcomes if fail is not None]
    return EnsembleRun(records=records, failures=failures)


# ---------------------------------------------------------------------------
# Per-conductance-range statistics


@dataclass(frozen=True)
class ConductanceRange:
    """Conductance bin, upper-edge inclusive; the lowest bin also includes g_lo."""

    name: str
    g_lo: float
    g_hi: float

    def __post_init__(self):
        if not 0 < self.g_lo < self.g_hi:
            raise ConfigurationError(f"bad conductance range {self.name}: {self.g_lo}..{self.g_hi}")


#: Analysis ranges: low 12.5-25 uS, middle 25-50 uS, high 50-100 uS.
DEFAULT_RANGES = (
    ConductanceRange("low", 12.5e-6, 25e-6),
    ConductanceRange("middle", 25e-6, 50e-6),
    ConductanceRange("high", 50e-6, 100e-6),
)


@dataclass(frozen=True)
class RangeStats:
    name: str
    g_lo: float
    g_hi: float
    sample_count: int
    mean_t_alpha: float | None = None
    sigma_t_alpha: float | None = None
    cv_percent: float | None = None


@dataclass(frozen=True)
class ThermalStats:
    """Per-range coefficient statistics; the physics-to-network bridge."""

    ranges: tuple[RangeStats, ...]

    def __post_init__(self):
        ordered = all(
            a.g_hi <= b.g_lo + 1e-18 for a, b in zip(self.ranges, self.ranges[1:])
        )
        if not ordered:
            raise ConfigurationError("ranges must be disjoint and ordered")

    def range_for(self, g: float) -> RangeStats | None:
        """Bins are upper-edge inclusive; only the lowest range owns its g_lo."""
        for i, r in enumerate(self.ranges):
            lo_ok = g >= r.g_lo if i == 0 else g > r.g_lo
            if lo_ok and g <= r.g_hi:
                return r
        return None

    def __getitem__(self, name: str) -> RangeStats:
        for r in self.ranges:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            r.name: {
                "g_lo_S": r.g_lo,
                "g_hi_S": r.g_hi,
                "sample_count": r.sample_count,
                "mean_t_alpha_per_K": r.mean_t_alpha,
                "sigma_t_alpha_per_K": r.sigma_t_alpha,
                "cv_percent": r.cv_percent,
            }
            for r in self.ranges
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ThermalStats":
        ranges = [
            RangeStats(
                name=name,
                g_lo=entry["g_lo_S"],
                g_hi=entry["g_hi_S"],
                sample_count=entry["sample_count"],
                mean_t_alpha=entry.get("mean_t_alpha_per_K"),
                sigma_t_alpha=entry.get("sigma_t_alpha_per_K"),
                cv_percent=entry.get("cv_percent"),
            )
            for name, entry in data.items()
        ]
        ranges.sort(key=lambda r: r.g_lo)
        return cls(tuple(ranges))


def bin_talpha_stats(
    records: Sequence[EnsembleRecord],
    ranges: Sequence[ConductanceRange] = DEFAULT_RANGES,
) -> ThermalStats:
    """Mean, population sigma, and cv of t_alpha per conductance range.

    Cells are binned by 1/r0.  cv = sigma / |mean| * 100 and is only defined
    for ranges holding at least two samples; under-populated ranges carry
    their count and no statistics.
    """
    out = []
    g0 = np.array([r.g0 for r in records])
    ta = np.array([r.t_alpha for r in records])
    for i, rng in enumerate(ranges):
        lo_ok = g0 >= rng.g_lo if i == 0 else g0 > rng.g_lo
        mask = lo_ok & (g0 <= rng.g_hi)
        vals = ta[mask]
        n = int(mask.sum())
        if n == 0:
            out.append(RangeStats(rng.name, rng.g_lo, rng.g_hi, 0))
            continue
        mean = float(vals.mean())
        if n < 2:
            out.append(RangeStats(rng.name, rng.g_lo, rng.g_hi, n, mean_t_alpha=mean))
            continue
        sigma = float(vals.std())  # population
        cv = abs(sigma / mean) * 100.0 if mean != 0 else math.inf
        out.append(
            RangeStats(
                rng.name, rng.g_lo, rng.g_hi, n,
                mean_t_alpha=mean, sigma_t_alpha=sigma, cv_percent=cv,
            )
        )
    return ThermalStats(tuple(out))


# ---------------------------------------------------------------------------
# Calibration of the bond model against a target low-range mean


@dataclass(frozen=True)
class EnsembleConfig:
    """Reduced-ensemble settings used for calibration evaluations."""

    concentrations: tuple[float, ...] = STATS_CONCENTRATIONS
    n_trials: int = 40
    temps: tuple[float, ...] = DEFAULT_TEMPS
    master_seed: int = 2024
    rows: int = 40
    cols: int = 32
    v_read: float = DEFAULT_V_READ
    workers: int = 1


@dataclass
class CalibrationResult:
    model: ConductanceModel
    target: float
    achieved_low_mean: float
    abs_error: float
    evaluations: list[tuple[float, float]]  # (alpha_semi, low-range mean)
    ok: bool


#: Calibration succeeds when |achieved - target| < 30% of |target|.
CALIBRATION_RTOL = 0.30


def _low_range_mean(model: ConductanceModel, config: EnsembleConfig) -> float:
    run = run_ensemble(
        config.concentrations,
        config.n_trials,
        config.temps,
        config.master_seed,
        model,
        rows=config.rows,
        cols=config.cols,
        v_read=config.v_read,
        workers=config.workers,
    )
    stats = bin_talpha_stats(run.records)
    low = stats["low"]
    if low.sample_count < 2 or low.mean_t_alpha is None:
        return math.nan
    return low.mean_t_alpha


def calibrate_model(
    target_low_mean: float,
    ensemble_config: EnsembleConfig | None = None,
    search_range: tuple[float, float] = (-0.0065, -0.002),
    model: ConductanceModel | None = None,
    coarse_points: int = 5,
    refine_steps: int = 6,
) -> CalibrationResult:
    """Tune the semiconducting coefficient so the low-range ensemble mean hits a target.

    Coarse grid over alpha_semi followed by golden-section refinement; each
    evaluation runs the reduced ensemble of ``ensemble_config``.  The starting
    model is evaluated first and wins ties, so a target already achieved is a
    no-op.  Raises :class:`CalibrationError` (carrying the best candidate)
    when the best error is not below 30% of |target|.
    """
    config = ensemble_config or EnsembleConfig()
    base = model or ConductanceModel()

    evaluations: list[tuple[float, float]] = []

    def evaluate(alpha_semi: float) -> float:
        try:
            candidate = (
                base if alpha_semi == base.alpha_semi else replace(base, alpha_semi=alpha_semi)
            )
        except ConfigurationError:
            # candidate invalid somewhere in the temperature window
            evaluations.append((alpha_semi, math.nan))
            return math.inf
        mean = _low_range_mean(candidate, config)
        evaluations.append((alpha_semi, mean))
        return abs(mean - target_low_mean) if not math.isnan(mean) else math.inf

    tol = CALIBRATION_RTOL * abs(target_low_mean)

    best_alpha = base.alpha_semi
    best_err = evaluate(best_alpha)
    if best_err <= 1e-12:
        return CalibrationResult(base, target_low_mean, evaluations[0][1], best_err, evaluations, True)

    lo, hi = min(search_range), max(search_range)
    for alpha in np.linspace(lo, hi, coarse_points):
        err = evaluate(float(alpha))
        if err < best_err:
            best_err, best_alpha = err, float(alpha)

    # Golden-section refinement around the best coarse candidate, clamped so
    # every probe stays inside the requested search range.
    span = (hi - lo) / max(coarse_points - 1, 1)
    a, b = max(best_alpha - span, lo), min(best_alpha + span, hi)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    for _ in range(refine_steps):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = evaluate(d)

    for alpha, mean in evaluations:
        err = abs(mean - target_low_mean) if not math.isnan(mean) else math.inf
        if err < best_err:
            best_err, best_alpha = err, alpha

    achieved = next(mean for alpha, mean in evaluations if alpha == best_alpha)
    final = base if best_alpha == base.alpha_semi else replace(base, alpha_semi=best_alpha)
    result = CalibrationResult(
        model=final,
        target=target_low_mean,
        achieved_low_mean=achieved,
        abs_error=best_err,
        evaluations=evaluations,
        ok=best_err < tol,
    )
    if not result.ok:
        raise CalibrationError(
            f"best low-range mean {achieved} misses target {target_low_mean} "
            f"by {best_err} (tolerance {tol})",
            result=result,
        )
    return result
