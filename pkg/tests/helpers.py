"""Independent reference implementations used as test oracles.

Kept deliberately dumb: dense matrices, python loops, no reuse of the
library's assembly code beyond the model's public constants.
"""

from __future__ import annotations

import numpy as np

from rramtc.network import ConductanceModel
from rramtc.lattice import VacancyGrid


def oracle_bond_g(occ_a: bool, occ_b: bool, model: ConductanceModel, temperature: float) -> float:
    if occ_a and occ_b:
        g0, alpha = model.g_metal, model.alpha_metal
    elif occ_a or occ_b:
        g0, alpha = model.g_semi, model.alpha_semi
    else:
        g0, alpha = model.g_ins, model.alpha_ins
    return g0 / (1.0 + alpha * (temperature - model.t0))


def dense_solve(
    grid: VacancyGrid,
    model: ConductanceModel,
    temperature: float,
    v_read: float = 0.1,
) -> tuple[np.ndarray, float, float]:
    """Full dense nodal solve with Dirichlet rows; returns (V, I_total, R)."""
    rows, cols, occ = grid.rows, grid.cols, grid.occupied
    n = rows * cols
    lap = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if r2 >= rows or c2 >= cols:
                    continue
                j = r2 * cols + c2
                g = oracle_bond_g(bool(occ[r, c]), bool(occ[r2, c2]), model, temperature)
                lap[i, i] += g
                lap[j, j] += g
                lap[i, j] -= g
                lap[j, i] -= g

    a = lap.copy()
    b = np.zeros(n)
    for c in range(cols):
        top, bot = c, (rows - 1) * cols + c
        a[top, :] = 0.0
        a[top, top] = 1.0
        b[top] = v_read
        a[bot, :] = 0.0
        a[bot, bot] = 1.0
        b[bot] = 0.0
    v = np.linalg.solve(a, b)

    total = 0.0
    for c in range(cols):
        i = (rows - 1) * cols + c
        r2 = rows - 2
        j = r2 * cols + c
        g = oracle_bond_g(bool(occ[rows - 1, c]), bool(occ[r2, c]), model, temperature)
        total += g * (v[j] - v[i])
    return v.reshape(rows, cols), total, v_read / total


def kcl_residuals(result) -> np.ndarray:
    """Net out-current per interior node, recomputed from the solve output."""
    from rramtc.lattice import bond_arrays

    grid = result.grid
    a_idx, b_idx, _ = bond_arrays(grid)
    net = np.zeros(grid.n_sites)
    np.add.at(net, a_idx, result.bond_currents)
    np.add.at(net, b_idx, -result.bond_currents)
    interior = np.ones(grid.n_sites, dtype=bool)
    interior[: grid.cols] = False
    interior[-grid.cols :] = False
    return net[interior]
