"""Kirchhoff solver for the weighted vacancy resistor network.

Every bond of a :class:`~rramtc.lattice.VacancyGrid` becomes a resistor whose
conductance depends on its type and on temperature.  The full top row is one
equipotential electrode held at the read voltage and the full bottom row is
grounded; interior node potentials come from the weighted graph-Laplacian
system, and the cell resistance is read voltage over the total current
collected at the bottom electrode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DegenerateMapError, ModelRangeError, SolverError
from .lattice import KIND_ORDER, BondType, VacancyGrid, bond_arrays

#: Temperature window (K) over which every model must stay physical.
SUPPORTED_TEMPERATURES = (250.0, 450.0)

#: Default read voltage (V); low enough for the linear-conduction regime.
DEFAULT_V_READ = 0.1

#: Relative KCL residual tolerance (fraction of total current).
KCL_RTOL = 1e-10


@dataclass(frozen=True)
class ConductanceModel:
    """Per-bond-type base conductance at ``t0`` and temperature coefficient.

    A bond conducts ``g0 / (1 + alpha * (T - t0))``: metallic bonds lose
    conductance as temperature rises (alpha > 0), semiconducting bonds gain
    (alpha < 0), insulating bonds are temperature-independent.  The insulating
    conductance is small but nonzero so the network Laplacian stays
    nonsingular.
    """

    g_metal: float = 1.5e-3
    g_semi: float = 15e-6
    g_ins: float = 15e-9
    alpha_metal: float = 0.003
    alpha_semi: float = -0.006
    alpha_ins: float = 0.0
    t0: float = 300.0

    def __post_init__(self):
        if not (self.g_metal > self.g_semi > self.g_ins > 0):
            raise ConfigurationError(
                "conductances must satisfy g_metal > g_semi > g_ins > 0"
            )
        if self.alpha_metal <= 0:
            raise ConfigurationError("alpha_metal must be positive")
        if self.alpha_semi >= 0:
            raise ConfigurationError("alpha_semi must be negative")
        if self.alpha_ins != 0.0:
            raise ConfigurationError("alpha_ins must be zero")
        for alpha in (self.alpha_metal, self.alpha_semi, self.alpha_ins):
            for t in SUPPORTED_TEMPERATURES:
                if 1.0 + alpha * (t - self.t0) <= 0:
                    raise ConfigurationError(
                        f"1 + alpha*(T - t0) <= 0 at T={t} K for alpha={alpha}"
                    )

    def base_conductances(self) -> np.ndarray:
        """Base conductances ordered like :data:`rramtc.lattice.KIND_ORDER`."""
        return np.array([self.g_metal, self.g_semi, self.g_ins])

    def alphas(self) -> np.ndarray:
        return np.array([self.alpha_metal, self.alpha_semi, self.alpha_ins])

    def conductances_at(self, temperature: float) -> np.ndarray:
        """Per-kind conductances at a temperature, validity checked."""
        denom = 1.0 + self.alphas() * (temperature - self.t0)
        if np.any(denom <= 0):
            raise ModelRangeError(
                f"model invalid at T={temperature} K: 1 + alpha*dT <= 0"
            )
        return self.base_conductances() / denom

    def to_dict(self) -> dict:
        return {
            "g_metal": self.g_metal,
            "g_semi": self.g_semi,
            "g_ins": self.g_ins,
            "alpha_metal": self.alpha_metal,
            "alpha_semi": self.alpha_semi,
            "alpha_ins": self.alpha_ins,
            "t0": self.t0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConductanceModel":
        return cls(**data)


def bond_conductance(kind: BondType, temperature: float, model: ConductanceModel) -> float:
    """Conductance of one bond type at a temperature: g0 / (1 + alpha*(T - t0))."""
    code = KIND_ORDER.index(kind)
    g0 = model.base_conductances()[code]
    alpha = model.alphas()[code]
    denom = 1.0 + alpha * (temperature - model.t0)
    if denom <= 0:
        raise ModelRangeError(
            f"1 + alpha*(T - t0) = {denom} <= 0 for {kind.value} bond at T={temperature} K"
        )
    return float(g0 / denom)


@dataclass
class SolveResult:
    """Potentials, per-bond currents, and the overall cell resistance.

    Bond arrays follow the enumeration order of
    :func:`rramtc.lattice.bond_arrays`.  Currents are signed from the
    row-major-first endpoint toward the second.
    """

    grid: VacancyGrid = field(repr=False)
    potentials: np.ndarray = field(repr=False)
    bond_currents: np.ndarray = field(repr=False)
    bond_conductances: np.ndarray = field(repr=False)
    bond_kinds: np.ndarray = field(repr=False)
    total_current: float
    resistance: float
    temperature: float
    v_read: float

    @property
    def conductance(self) -> float:
        return 1.0 / self.resistance


class NetworkAssembly:
    """Reusable sparse assembly of one grid, solvable at many temperatures.

    The Laplacian splits into one structure matrix per bond kind, so a
    temperature change only rescales three matrices before factorization.
    """

    def __init__(self, grid: VacancyGrid):
        self.grid = grid
        rows, cols = grid.rows, grid.cols
        self.a_idx, self.b_idx, self.kinds = bond_arrays(grid)
        self.n_interior = (rows - 2) * cols

        # Interior unknown index for flat node id; -1 marks electrode nodes.
        node_to_unknown = np.full(rows * cols, -1, dtype=np.int64)
        if rows > 2:
            interior = np.arange(cols, (rows - 1) * cols)
            node_to_unknown[interior] = np.arange(self.n_interior)
        self._node_to_unknown = node_to_unknown

        top = self.a_idx < cols  # bond endpoint a in the top row
        bottom = self.b_idx >= (rows - 1) * cols  # endpoint b in the bottom row
        ua = node_to_unknown[self.a_idx]
        ub = node_to_unknown[self.b_idx]

        self._laplacians = []
        self._top_links = []  # per-kind count of bonds into the top electrode
        self._bottom_links = []  # per-kind count of bonds into the bottom electrode
        self._direct = np.zeros(3)  # top-to-bottom bonds (rows == 2 only)

        for code in range(3):
            k = self.kinds == code
            both = k & (ua >= 0) & (ub >= 0)
            rows_l = np.concatenate([ua[both], ub[both], ua[both], ub[both]])
            cols_l = np.concatenate([ua[both], ub[both], ub[both], ua[both]])
            vals_l = np.concatenate(
                [
                    np.ones(both.sum()),
                    np.ones(both.sum()),
                    -np.ones(both.sum()),
                    -np.ones(both.sum()),
                ]
            )

            top_k = k & top & (ub >= 0)
            bottom_k = k & bottom & (ua >= 0)
            # Electrode couplings appear only on the diagonal.
            rows_l = np.concatenate([rows_l, ub[top_k], ua[bottom_k]])
            cols_l = np.concatenate([cols_l, ub[top_k], ua[bottom_k]])
            vals_l = np.concatenate([vals_l, np.ones(top_k.sum()), np.ones(bottom_k.sum())])

            lap = sp.coo_matrix(
                (vals_l, (rows_l, cols_l)), shape=(self.n_interior, self.n_interior)
            ).tocsc()
            self._laplacians.append(lap)

            top_vec = np.zeros(self.n_interior)
            np.add.at(top_vec, ub[top_k], 1.0)
            self._top_links.append(top_vec)

            bottom_vec = np.zeros(self.n_interior)
            np.add.at(bottom_vec, ua[bottom_k], 1.0)
            self._bottom_links.append(bottom_vec)

            self._direct[code] = np.count_nonzero(k & top & bottom)

    def solve(
        self,
        model: ConductanceModel,
        temperature: float,
        v_read: float = DEFAULT_V_READ,
    ) -> SolveResult:
        if v_read <= 0:
            raise ConfigurationError(f"read voltage must be positive, got {v_read}")
        g_kind = model.conductances_at(temperature)
        rows, cols = self.grid.rows, self.grid.cols

        if self.n_interior:
            lap = (
                g_kind[0] * self._laplacians[0]
                + g_kind[1] * self._laplacians[1]
                + g_kind[2] * self._laplacians[2]
            )
            rhs = v_read * (
                g_kind[0] * self._top_links[0]
                + g_kind[1] * self._top_links[1]
                + g_kind[2] * self._top_links[2]
            )
            try:
                factor = spla.splu(lap.tocsc())
            except RuntimeError as exc:  # singular factorization
                raise SolverError(f"sparse factorization failed: {exc}") from exc
            x = factor.solve(rhs)
            total = self._total_current(g_kind, x, v_read)

            # One step of iterative refinement if the KCL residual misses tolerance.
            residual = np.abs(lap @ x - rhs).max()
            tol = KCL_RTOL * abs(total)
            if residual > tol:
                x = x + factor.solve(rhs - lap @ x)
                total = self._total_current(g_kind, x, v_read)
                residual = np.abs(lap @ x - rhs).max()
                if residual > KCL_RTOL * abs(total):
                    raise SolverError(
                        f"KCL residual {residual:.3e} exceeds {KCL_RTOL:.0e} of "
                        f"total current {total:.3e}",
                        residual=float(residual),
                    )
        else:
            x = np.zeros(0)
            total = self._total_current(g_kind, x, v_read)

        if not np.isfinite(total) or total <= 0:
            raise SolverError(f"non-physical total current {total}")

        potentials = np.empty((rows, cols))
        potentials[0, :] = v_read
        potentials[-1, :] = 0.0
        if self.n_interior:
            potentials[1:-1, :] = x.reshape(rows - 2, cols)

        flat = potentials.ravel()
        g_bond = g_kind[self.kinds]
        currents = g_bond * (flat[self.a_idx] - flat[self.b_idx])

        return SolveResult(
            grid=self.grid,
            potentials=potentials,
            bond_currents=currents,
            bond_conductances=g_bond,
            bond_kinds=self.kinds,
            total_current=float(total),
            resistance=float(v_read / total),
            temperature=temperature,
            v_read=v_read,
        )

    def _total_current(self, g_kind: np.ndarray, x: np.ndarray, v_read: float) -> float:
        total = float(np.dot(g_kind, self._direct) * v_read)
        for code in range(3):
            if self.n_interior:
                total += g_kind[code] * float(self._bottom_links[code] @ x)
        return total


def solve_network(
    grid: VacancyGrid,
    model: ConductanceModel,
    temperature: float,
    v_read: float = DEFAULT_V_READ,
) -> SolveResult:
    """Solve Kirchhoff's equations for one grid at one temperature."""
    return NetworkAssembly(grid).solve(model, temperature, v_read)


def resistance_sweep(
    grid: VacancyGrid,
    model: ConductanceModel,
    temperatures,
    v_read: float = DEFAULT_V_READ,
) -> np.ndarray:
    """Cell resistance at each temperature, sharing one assembly."""
    assembly = NetworkAssembly(grid)
    return np.array([assembly.solve(model, t, v_read).resistance for t in temperatures])


def current_density_map(result: SolveResult) -> np.ndarray:
    """Per-bond |current| normalized by the maximum bond |current|."""
    if result.total_current <= 0:
        raise DegenerateMapError("no net current; map undefined")
    mags = np.abs(result.bond_currents)
    peak = mags.max()
    if peak == 0:
        raise DegenerateMapError("all bond currents vanish; map undefined")
    return mags / peak


def export_solve_csv(result: SolveResult, path) -> None:
    """Bond-level dump for current-density visualization.

    Columns: bond_row_a, col_a, row_b, col_b, kind, conductance_S, current_A,
    normalized_current.
    """
    normalized = current_density_map(result)
    cols = result.grid.cols
    a, b, kinds = bond_arrays(result.grid)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "bond_row_a",
                "col_a",
                "row_b",
                "col_b",
                "kind",
                "conductance_S",
                "current_A",
                "normalized_current",
            ]
        )
        for i in range(len(a)):
            writer.writerow(
                [
                    a[i] // cols,
                    a[i] % cols,
                    b[i] // cols,
                    b[i] % cols,
                    KIND_ORDER[kinds[i]].value,
                    repr(float(result.bond_conductances[i])),
                    repr(float(result.bond_currents[i])),
                    repr(float(normalized[i])),
                ]
            )
