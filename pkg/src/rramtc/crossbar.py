"""Differential-pair crossbar model with temperature drift and compensation.

Quantized weight levels map linearly onto the conductance difference of two
cells per weight.  Each cell carries its own temperature coefficient drawn
from the per-range statistics of the vacancy-network ensemble, so heating a
mapped network distorts the weights non-uniformly.  The compensation path
rescales measured column currents by the nominal drift factor, which exactly
restores the reference-temperature output when all cells share the assumed
coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Sequence

import numpy as np

from .errors import (
    AssignmentError,
    ConfigurationError,
    DriftRangeError,
)
from .mlp import QuantizedLayer, QuantizedMlp
from .network import SUPPORTED_TEMPERATURES
from .seeding import derive_seed, make_rng
from .tcoeff import DEFAULT_RANGES, ConductanceRange, RangeStats, ThermalStats

#: Device conductance window (siemens); every named range sits inside it.
DEVICE_G_MIN = 12.5e-6
DEVICE_G_MAX = 100e-6

NAMED_RANGES: dict[str, tuple[float, float]] = {
    "low": (12.5e-6, 25e-6),
    "middle": (25e-6, 50e-6),
    "high": (50e-6, 100e-6),
    "full": (12.5e-6, 100e-6),
}


def resolve_range(g_range: str | tuple[float, float]) -> tuple[str, tuple[float, float]]:
    """Accept a range name or a raw (g_min, g_max) pair; validate device bounds."""
    if isinstance(g_range, str):
        if g_range not in NAMED_RANGES:
            raise ConfigurationError(
                f"unknown range {g_range!r}, expected one of {sorted(NAMED_RANGES)}"
            )
        return g_range, NAMED_RANGES[g_range]
    g_min, g_max = float(g_range[0]), float(g_range[1])
    if not (DEVICE_G_MIN <= g_min < g_max <= DEVICE_G_MAX):
        raise ConfigurationError(
            f"range ({g_min}, {g_max}) outside device window "
            f"[{DEVICE_G_MIN}, {DEVICE_G_MAX}]"
        )
    name = next((n for n, b in NAMED_RANGES.items() if b == (g_min, g_max)), "custom")
    return name, (g_min, g_max)


@dataclass(frozen=True)
class CompensationConfig:
    """Uniform-coefficient current correction applied to column outputs."""

    assumed_t_alpha: float = -0.004
    enabled: bool = True

    def __post_init__(self):
        for t in SUPPORTED_TEMPERATURES:
            if 1.0 + self.assumed_t_alpha * (t - 300.0) <= 0:
                raise ConfigurationError(
                    f"assumed_t_alpha {self.assumed_t_alpha} degenerate at {t} K"
                )


@dataclass
class CrossbarArray:
    """One weight matrix as differential conductance pairs.

    ``scale`` converts a differential conductance back to weight units:
    delta_g = weight * scale.  It is 0 for a crossbar mapped from an all-zero
    layer (which contributes nothing regardless).
    """

    g_plus: np.ndarray
    g_minus: np.ndarray
    t_alpha_plus: np.ndarray
    t_alpha_minus: np.ndarray
    g_range: tuple[float, float]
    range_name: str
    t0: float
    scale: float

    def __post_init__(self):
        g_min, g_max = self.g_range
        for name, g in (("g_plus", self.g_plus), ("g_minus", self.g_minus)):
            if g.min(initial=g_min) < g_min - 1e-18 or g.max(initial=g_min) > g_max + 1e-18:
                raise ConfigurationError(f"{name} leaves the range [{g_min}, {g_max}]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_plus.shape

    def differential(self, temperature: float | None = None) -> np.ndarray:
        """G+ - G- with per-cell drift applied (no drift when temperature is None/t0)."""
        if temperature is None or temperature == self.t0:
            return self.g_plus - self.g_minus
        gp = drift_conductance(self.g_plus, self.t_alpha_plus, temperature, self.t0)
        gm = drift_conductance(self.g_minus, self.t_alpha_minus, temperature, self.t0)
        return gp - gm


def map_to_conductance(
    qlayer: QuantizedLayer, g_range: str | tuple[float, float], t0: float = 300.0
) -> CrossbarArray:
    """One-sided differential mapping of a quantized layer.

    Positive weights raise g_plus above the g_min baseline, negative weights
    raise g_minus; zero weights leave both at g_min.  The differential is
    exactly proportional to the dequantized weight.
    """
    name, (g_min, g_max) = resolve_range(g_range)
    step = (g_max - g_min) / (qlayer.levels - 1)
    idx = qlayer.level_index
    g_plus = g_min + step * np.maximum(idx, 0)
    g_minus = g_min + step * np.maximum(-idx, 0)
    scale = (g_max - g_min) / qlayer.w_max if qlayer.w_max > 0 else 0.0
    zeros = np.zeros(idx.shape)
    return CrossbarArray(
        g_plus=g_plus,
        g_minus=g_minus,
        t_alpha_plus=zeros,
        t_alpha_minus=zeros.copy(),
        g_range=(g_min, g_max),
        range_name=name,
        t0=t0,
        scale=scale,
    )


@dataclass
class MappedNetwork:
    """A quantized classifier realized as one crossbar per weight layer."""

    crossbars: list[CrossbarArray]
    biases: list[np.ndarray]
    t0: float
    range_name: str


def map_network(
    qmlp: QuantizedMlp, g_range: str | tuple[float, float], t0: float = 300.0
) -> MappedNetwork:
    name, bounds = resolve_range(g_range)
    crossbars = [
        map_to_conductance(qmlp.layer1, bounds, t0),
        map_to_conductance(qmlp.layer2, bounds, t0),
    ]
    return MappedNetwork(
        crossbars=crossbars,
        biases=[qmlp.b1.copy(), qmlp.b2.copy()],
        t0=t0,
        range_name=name,
    )


def _stat_maps(
    g: np.ndarray, stats: ThermalStats
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (mean, sigma) looked up from the range holding each conductance."""
    mean = np.full(g.shape, np.nan)
    sigma = np.zeros(g.shape)
    covered = np.zeros(g.shape, dtype=bool)
    for i, r in enumerate(stats.ranges):
        lo_ok = g >= r.g_lo if i == 0 else g > r.g_lo
        mask = lo_ok & (g <= r.g_hi)
        if not mask.any():
            continue
        if r.mean_t_alpha is None:
            raise AssignmentError(f"range {r.name!r} covers cells but has no statistics")
        mean[mask] = r.mean_t_alpha
        sigma[mask] = r.sigma_t_alpha if r.sigma_t_alpha is not None else 0.0
        covered |= mask
    if not covered.all():
        g_bad = float(g[~covered].flat[0])
        raise AssignmentError(f"conductance {g_bad} S not covered by any statistics range")
    return mean, sigma


def assign_talpha(xbar: CrossbarArray, stats: ThermalStats, seed: int) -> CrossbarArray:
    """Draw an independent coefficient for every cell of both arrays.

    Cell i gets t_alpha ~ Normal(mean, sigma) of the range containing its
    conductance.  Deterministic per seed; the plus array consumes the random
    stream first.
    """
    rng = make_rng(seed)
    out = []
    for g in (xbar.g_plus, xbar.g_minus):
        mean, sigma = _stat_maps(g, stats)
        out.append(mean + sigma * rng.standard_normal(g.shape))
    return CrossbarArray(
        g_plus=xbar.g_plus.copy(),
        g_minus=xbar.g_minus.copy(),
        t_alpha_plus=out[0],
        t_alpha_minus=out[1],
        g_range=xbar.g_range,
        range_name=xbar.range_name,
        t0=xbar.t0,
        scale=xbar.scale,
    )


def parametric_thermal_stats(
    anchor_t_alpha: float = -0.004,
    slope_per_decade: float = 0.004,
    cv_percents: Sequence[float] = (5.48, 16.3, 32.62),
    ranges: Sequence[ConductanceRange] = DEFAULT_RANGES,
) -> ThermalStats:
    """Fallback statistics when no simulated ensemble is at hand.

    Range means rise linearly in log10(conductance), anchored at the
    geometric midpoint of the lowest range; sigmas reproduce the given cv
    values.
    """
    if len(cv_percents) != len(ranges):
        raise ConfigurationError("need one cv per range")
    g_anchor = np.sqrt(ranges[0].g_lo * ranges[0].g_hi)
    out = []
    for r, cv in zip(ranges, cv_percents):
        g_mid = np.sqrt(r.g_lo * r.g_hi)
        mean = anchor_t_alpha + slope_per_decade * np.log10(g_mid / g_anchor)
        out.append(
            RangeStats(
                name=r.name,
                g_lo=r.g_lo,
                g_hi=r.g_hi,
                sample_count=0,
                mean_t_alpha=float(mean),
                sigma_t_alpha=abs(mean) * cv / 100.0,
                cv_percent=cv,
            )
        )
    return ThermalStats(tuple(out))


# ---------------------------------------------------------------------------
# Drift, read-out, compensation


def drift_conductance(g0, t_alpha, temperature: float, t0: float):
    """g(T) = g0 / (1 + t_alpha * (T - t0)); scalar or elementwise on arrays."""
    denom = 1.0 + np.asarray(t_alpha) * (temperature - t0)
    if np.any(denom <= 0):
        raise DriftRangeError(
            f"1 + t_alpha*(T - t0) <= 0 at T={temperature} K (min denom {np.min(denom)})"
        )
    return np.asarray(g0) / denom


def crossbar_matvec(
    xbar: CrossbarArray, voltages: np.ndarray, temperature: float
) -> np.ndarray:
    """Column currents I_j = sum_i (G+_ij(T) - G-_ij(T)) * V_i.

    Accepts a single input vector or a batch [n, rows].
    """
    v = np.asarray(voltages, dtype=float)
    if v.shape[-1] != xbar.shape[0]:
        raise ConfigurationError(
            f"input length {v.shape[-1]} does not match crossbar rows {xbar.shape[0]}"
        )
    return v @ xbar.differential(temperature)


def compensate(
    i_measured: np.ndarray,
    config: CompensationConfig,
    temperature: float,
    t0: float = 300.0,
) -> np.ndarray:
    """Rescale measured currents by the nominal drift factor.

    I_out = I_measured * (1 + assumed_t_alpha * (T - t0)); the added
    correction is assumed_t_alpha * dT * I_measured, which restores the
    reference-temperature current exactly when every cell drifts with the
    assumed coefficient.  Disabled configs pass currents through untouched.
    """
    i_measured = np.asarray(i_measured, dtype=float)
    if not config.enabled:
        return i_measured
    factor = 1.0 + config.assumed_t_alpha * (temperature - t0)
    if factor <= 0:
        raise DriftRangeError(
            f"compensation factor {factor} <= 0 at T={temperature} K"
        )
    return i_measured * factor


def infer(
    network: MappedNetwork,
    dataset,
    temperature: float,
    compensation: CompensationConfig,
) -> float:
    """Top-1 accuracy of the mapped network at one temperature.

    Biases and activations are digital; compensation (when enabled) is
    applied to each crossbar's output currents before they leave the analog
    domain.
    """
    x = np.asarray(dataset.images, dtype=float)
    labels = np.asarray(dataset.labels)
    activ = x
    for layer_idx, (xbar, bias) in enumerate(zip(network.crossbars, network.biases)):
        currents = crossbar_matvec(xbar, activ, temperature)
        currents = compensate(currents, compensation, temperature, network.t0)
        if xbar.scale > 0:
            pre = currents / xbar.scale + bias
        else:
            pre = np.broadcast_to(bias, currents.shape).copy()
        is_last = layer_idx == len(network.crossbars) - 1
        activ = pre if is_last else np.maximum(pre, 0.0)
    return float(np.mean(np.argmax(activ, axis=1) == labels))


# ---------------------------------------------------------------------------
# Multi-chip temperature sweep


@dataclass(frozen=True)
class SweepRecord:
    temperature: float
    chip_id: int
    range_name: str
    compensated: bool
    accuracy: float


@dataclass
class SweepResult:
    records: list[SweepRecord]

    def accuracies(self, temperature: float, compensated: bool) -> np.ndarray:
        return np.array(
            [
                r.accuracy
                for r in self.records
                if r.temperature == temperature and r.compensated == compensated
            ]
        )

    def summary(self) -> list[dict]:
        """Per (temperature, compensated) mean and low-side tail."""
        keys = sorted({(r.temperature, r.compensated) for r in self.records})
        rows = []
        for temp, comp in keys:
            acc = self.accuracies(temp, comp)
            rows.append(
                {
                    "temperature_K": temp,
                    "compensated_flag": int(comp),
                    "mean_accuracy": float(acc.mean()),
                    "min_accuracy": float(acc.min()),
                    "p5_accuracy": float(np.percentile(acc, 5)),
                    "n_chips": len(acc),
                }
            )
        return rows


def instantiate_chip(
    network: MappedNetwork, stats: ThermalStats, master_seed: int, chip_id: int
) -> MappedNetwork:
    """One chip: fresh per-cell coefficients for every layer."""
    crossbars = [
        assign_talpha(xbar, stats, derive_seed(master_seed, "chip", chip_id, layer))
        for layer, xbar in enumerate(network.crossbars)
    ]
    return MappedNetwork(
        crossbars=crossbars,
        biases=[b.copy() for b in network.biases],
        t0=network.t0,
        range_name=network.range_name,
    )


def _chip_task(args) -> tuple[int, list[SweepRecord]]:
    chip_id, network, stats, master_seed, dataset, temps, comp = args
    chip = instantiate_chip(network, stats, master_seed, chip_id)
    off = CompensationConfig(assumed_t_alpha=comp.assumed_t_alpha, enabled=False)
    records = []
    for t in temps:
        for cfg in (off, comp):
            acc = infer(chip, dataset, t, cfg)
            records.append(
                SweepRecord(
                    temperature=t,
                    chip_id=chip_id,
                    range_name=network.range_name,
                    compensated=cfg.enabled,
                    accuracy=acc,
                )
            )
    return chip_id, records


def accuracy_vs_temperature(
    network: MappedNetwork,
    dataset,
    temps: Sequence[float],
    n_chips: int,
    master_seed: int,
    stats: ThermalStats,
    compensation: CompensationConfig | None = None,
    workers: int = 1,
) -> SweepResult:
    """Accuracy distribution over independently drawn chips.

    Every chip is evaluated at every temperature both with and without
    compensation; chip seeds derive from the master seed, so the result is
    independent of worker count.
    """
    if n_chips < 1:
        raise ConfigurationError(f"n_chips must be >= 1, got {n_chips}")
    comp = compensation or CompensationConfig()
    if not comp.enabled:
        comp = CompensationConfig(assumed_t_alpha=comp.assumed_t_alpha, enabled=True)
    tasks = [
        (chip, network, stats, master_seed, dataset, tuple(temps), comp)
        for chip in range(n_chips)
    ]
    if workers > 1 and len(tasks) > 1:
        with get_context("fork").Pool(workers) as pool:
            outcomes = pool.map(_chip_task, tasks)
    else:
        outcomes = [_chip_task(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])
    return SweepResult(records=[r for _, recs in outcomes for r in recs])
