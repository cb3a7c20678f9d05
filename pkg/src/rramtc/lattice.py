"""Oxygen-vacancy occupancy lattice and nearest-neighbor bond classification.

The filament region is a 2D square lattice (4-neighbor adjacency).  Each site
is either a vacancy (``V``) or a regular oxygen site (``O``); each
nearest-neighbor pair of sites forms one bond whose conduction type follows
from the occupancy of its endpoints: V-V is metallic, V-O semiconducting and
O-O insulating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, OrderParameterError
from .seeding import make_rng

#: Square-lattice coordination number used by the vacancy order parameter.
COORDINATION = 4


class BondType(Enum):
    METALLIC = "metallic"
    SEMICONDUCTING = "semiconducting"
    INSULATING = "insulating"


#: Bond kinds indexed by the integer codes used in the vectorized paths.
KIND_ORDER = (BondType.METALLIC, BondType.SEMICONDUCTING, BondType.INSULATING)


class Bond(NamedTuple):
    """Undirected nearest-neighbor bond; ``a`` precedes ``b`` in row-major order."""

    a: tuple[int, int]
    b: tuple[int, int]
    kind: BondType


@dataclass(frozen=True, eq=False)
class VacancyGrid:
    """Boolean occupancy of vacancy sites in the filament region.

    ``occupied[r, c]`` is True for a vacancy site.  The array is frozen after
    construction; all lattice operations return new grids.
    """

    rows: int
    cols: int
    occupied: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        if self.rows < 2 or self.cols < 1:
            raise ConfigurationError(
                f"grid must be at least 2x1, got {self.rows}x{self.cols}"
            )
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.shape != (self.rows, self.cols):
            raise ConfigurationError(
                f"occupancy shape {occ.shape} does not match {self.rows}x{self.cols}"
            )
        occ = occ.copy()
        occ.setflags(write=False)
        object.__setattr__(self, "occupied", occ)

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    @property
    def c_v(self) -> float:
        """Vacancy concentration, exact occupancy fraction."""
        return self.n_occupied / self.n_sites

    def __eq__(self, other) -> bool:
        if not isinstance(other, VacancyGrid):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and bool(np.array_equal(self.occupied, other.occupied))
        )

    def with_occupancy(self, occupied: np.ndarray, seed: int | None = None) -> "VacancyGrid":
        return VacancyGrid(self.rows, self.cols, occupied, seed=seed)


def generate_grid(rows: int, cols: int, c_v: float, seed: int) -> VacancyGrid:
    """Place ``round(c_v * rows * cols)`` vacancies uniformly without replacement.

    Rounding is to nearest with ties to even, so the occupancy count is exact
    and reproducible.  The same seed always yields the same grid.
    """
    if rows < 2 or cols < 1:
        raise ConfigurationError(f"grid must be at least 2x1, got {rows}x{cols}")
    if not 0.0 <= c_v <= 1.0:
        raise ConfigurationError(f"vacancy concentration must be in [0, 1], got {c_v}")
    n_sites = rows * cols
    n_occ = round(c_v * n_sites)
    rng = make_rng(seed)
    occupied = np.zeros(n_sites, dtype=bool)
    if n_occ:
        chosen = rng.choice(n_sites, size=n_occ, replace=False)
        occupied[chosen] = True
    return VacancyGrid(rows, cols, occupied.reshape(rows, cols), seed=seed)


def bond_arrays(grid: VacancyGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat endpoint indices and kind codes for every bond.

    Bonds are enumerated horizontally (row-major) then vertically (row-major);
    this order is the contract for solver outputs and CSV exports.  Kind codes
    index :data:`KIND_ORDER`: 0 metallic, 1 semiconducting, 2 insulating.
    """
    rows, cols = grid.rows, grid.cols
    occ = grid.occupied.astype(np.int8)
    idx = np.arange(rows * cols).reshape(rows, cols)

    ah = idx[:, :-1].ravel()
    bh = idx[:, 1:].ravel()
    kh = 2 - occ[:, :-1].ravel() - occ[:, 1:].ravel()

    av = idx[:-1, :].ravel()
    bv = idx[1:, :].ravel()
    kv = 2 - occ[:-1, :].ravel() - occ[1:, :].ravel()

    a = np.concatenate([ah, av])
    b = np.concatenate([bh, bv])
    kind = np.concatenate([kh, kv]).astype(np.uint8)
    return a, b, kind


def classify_bonds(grid: VacancyGrid) -> list[Bond]:
    """All nearest-neighbor bonds with their conduction type.

    Pure function of the grid; bond count is rows*(cols-1) + (rows-1)*cols.
    """
    a, b, kind = bond_arrays(grid)
    cols = grid.cols
    return [
        Bond((ai // cols, ai % cols), (bi // cols, bi % cols), KIND_ORDER[ki])
        for ai, bi, ki in zip(a.tolist(), b.tolist(), kind.tolist())
    ]


def count_metallic_bonds(grid: VacancyGrid) -> int:
    """Number of V-V nearest-neighbor pairs."""
    occ = grid.occupied
    horizontal = np.count_nonzero(occ[:, :-1] & occ[:, 1:])
    vertical = np.count_nonzero(occ[:-1, :] & occ[1:, :])
    return int(horizontal + vertical)


def order_parameter(grid: VacancyGrid) -> float:
    """Vacancy clustering measure 2*N_vv / (z * c_v * N) on the square lattice.

    Uses the raw metallic-bond count with no edge correction; boundary sites
    make the normalization approximate, so values may slightly exceed 1 only
    through that edge effect.  Undefined (raises) for an empty lattice.
    """
    if grid.n_occupied == 0:
        raise OrderParameterError("order parameter undefined at zero vacancy concentration")
    n_vv = count_metallic_bonds(grid)
    return 2.0 * n_vv / (COORDINATION * grid.c_v * grid.n_sites)


# Plain-text cell format: header "rows cols c_v seed", then one line per row
# of 'V' (vacancy) / 'O' (oxygen) characters.

def grid_to_text(grid: VacancyGrid) -> str:
    seed_repr = "-" if grid.seed is None else str(grid.seed)
    lines = [f"{grid.rows} {grid.cols} {grid.c_v!r} {seed_repr}"]
    for r in range(grid.rows):
        lines.append("".join("V" if v else "O" for v in grid.occupied[r]))
    return "\n".join(lines) + "\n"


def grid_from_text(text: str) -> VacancyGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError("empty grid file")
    header = lines[0].split()
    if len(header) != 4:
        raise ConfigurationError(f"bad grid header {lines[0]!r}")
    rows, cols = int(header[0]), int(header[1])
    c_v = float(header[2])
    seed = None if header[3] == "-" else int(header[3])
    body = lines[1:]
    if len(body) != rows:
        raise ConfigurationError(f"expected {rows} grid rows, found {len(body)}")
    occupied = np.zeros((rows, cols), dtype=bool)
    for r, line in enumerate(body):
        if len(line) != cols or set(line) - {"V", "O"}:
            raise ConfigurationError(f"bad grid row {r}: {line!r}")
        occupied[r] = [ch == "V" for ch in line]
    n_occ = int(occupied.sum())
    if round(c_v * rows * cols) != n_occ:
        raise ConfigurationError(
            f"header concentration {c_v} inconsistent with {n_occ} occupied sites"
        )
    return VacancyGrid(rows, cols, occupied, seed=seed)


def save_grid(grid: VacancyGrid, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(grid_to_text(grid))


def load_grid(path) -> VacancyGrid:
    with open(path, "r", encoding="ascii") as fh:
        return grid_from_text(fh.read())
