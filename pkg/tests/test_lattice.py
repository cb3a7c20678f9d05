import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rramtc.errors import ConfigurationError, OrderParameterError
from rramtc.lattice import (
    BondType,
    VacancyGrid,
    classify_bonds,
    count_metallic_bonds,
    generate_grid,
    grid_from_text,
    grid_to_text,
    load_grid,
    order_parameter,
    save_grid,
)


def checkerboard(rows: int, cols: int) -> VacancyGrid:
    occ = (np.add.outer(np.arange(rows), np.arange(cols)) % 2).astype(bool)
    return VacancyGrid(rows, cols, occ, None)


class TestGenerateGrid:
    def test_half_concentration_counts(self):
        grid = generate_grid(40, 32, 0.50, 1)
        assert grid.n_occupied == 640
        assert grid.c_v == 0.5

    def test_empty_and_full(self):
        assert generate_grid(40, 32, 0.0, 1).n_occupied == 0
        assert generate_grid(40, 32, 1.0, 1).n_occupied == 1280

    def test_deterministic_per_seed(self):
        a, b = generate_grid(12, 9, 0.4, 77), generate_grid(12, 9, 0.4, 77)
        assert a == b
        assert a != generate_grid(12, 9, 0.4, 78)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigurationError):
            generate_grid(1, 5, 0.5, 0)  # needs two electrode rows
        with pytest.raises(ConfigurationError):
            generate_grid(4, 4, 1.5, 0)

    @given(
        st.integers(2, 12), st.integers(1, 12),
        st.floats(0.0, 1.0, allow_nan=False), st.integers(0, 2**32)
    )
    @settings(max_examples=60)
    def test_count_matches_banker_rounding(self, rows, cols, c_v, seed):
        grid = generate_grid(rows, cols, c_v, seed)
        # float(round(., 0)) applies ties-to-even, the documented convention
        assert grid.n_occupied == int(round(c_v * rows * cols))


class TestBonds:
    def test_full_2x2_all_metallic(self):
        grid = VacancyGrid(2, 2, np.ones((2, 2), dtype=bool), None)
        bonds = classify_bonds(grid)
        assert len(bonds) == 4
        assert all(b.kind is BondType.METALLIC for b in bonds)

    def test_checkerboard_all_semiconducting(self):
        bonds = classify_bonds(checkerboard(6, 5))
        assert all(b.kind is BondType.SEMICONDUCTING for b in bonds)

    def test_bond_count_formula(self):
        grid = generate_grid(40, 32, 0.3, 5)
        assert len(classify_bonds(grid)) == 40 * 31 + 39 * 32  # 2488

    @given(st.integers(2, 7), st.integers(1, 7), st.integers(0, 10**6))
    @settings(max_examples=40)
    def test_enumeration_matches_brute_force(self, rows, cols, seed):
        grid = generate_grid(rows, cols, 0.5, seed)
        bonds = classify_bonds(grid)
        assert len(bonds) == rows * (cols - 1) + (rows - 1) * cols
        # undirected uniqueness and 4-adjacency
        seen = set()
        for b in bonds:
            dr, dc = b.b[0] - b.a[0], b.b[1] - b.a[1]
            assert (abs(dr), abs(dc)) in ((0, 1), (1, 0))
            key = frozenset((b.a, b.b))
            assert key not in seen
            seen.add(key)

    def test_empty_grid_all_insulating(self):
        grid = VacancyGrid(3, 3, np.zeros((3, 3), dtype=bool), None)
        assert all(b.kind is BondType.INSULATING for b in classify_bonds(grid))


class TestOrderParameter:
    def test_full_grid_value(self):
        grid = VacancyGrid(40, 32, np.ones((40, 32), dtype=bool), None)
        assert order_parameter(grid) == pytest.approx(2 * 2488 / (4 * 1.0 * 1280))

    def test_checkerboard_zero(self):
        assert order_parameter(checkerboard(8, 8)) == 0.0

    def test_single_site_zero(self):
        occ = np.zeros((4, 4), dtype=bool)
        occ[1, 1] = True
        assert order_parameter(VacancyGrid(4, 4, occ, None)) == 0.0

    def test_rejects_empty(self):
        grid = VacancyGrid(3, 3, np.zeros((3, 3), dtype=bool), None)
        with pytest.raises(OrderParameterError):
            order_parameter(grid)

    def test_clustering_increases_order(self):
        # isolated pair far apart vs adjacent pair
        apart = np.zeros((5, 5), dtype=bool)
        apart[0, 0] = apart[4, 4] = True
        together = np.zeros((5, 5), dtype=bool)
        together[2, 2] = together[2, 3] = True
        o_apart = order_parameter(VacancyGrid(5, 5, apart, None))
        o_together = order_parameter(VacancyGrid(5, 5, together, None))
        assert o_together > o_apart
        assert count_metallic_bonds(VacancyGrid(5, 5, together, None)) == 1


class TestSerialization:
    def test_round_trip(self, tmp_path):
        grid = generate_grid(7, 5, 0.43, 99)
        text = grid_to_text(grid)
        back = grid_from_text(text)
        assert back == grid
        assert back.seed == 99
        path = tmp_path / "cell.grid"
        save_grid(grid, path)
        assert load_grid(path) == grid

    def test_text_shape(self):
        grid = generate_grid(3, 4, 0.25, 1)
        lines = grid_to_text(grid).splitlines()
        assert len(lines) == 4
        header = lines[0].split()
        assert header[0] == "3" and header[1] == "4"
        assert set("".join(lines[1:])) <= {"V", "O"}

    @given(st.integers(2, 9), st.integers(1, 9), st.integers(0, 10**6))
    @settings(max_examples=40)
    def test_round_trip_random(self, rows, cols, seed):
        grid = generate_grid(rows, cols, 0.37, seed)
        assert grid_from_text(grid_to_text(grid)) == grid

    def test_rejects_garbage(self):
        with pytest.raises(ConfigurationError):
            grid_from_text("not a grid")
