import math

import numpy as np
import pytest

from core.exceptions import ConfigurationError, DataError
from core.grid import BoundaryPolicy, GridBuilder, InitialDatum, RampGeometry, RateSchedule


class TestGridBuilder:

    @pytest.mark.parametrize("x_left, x_right, dx, expected", [
        (-1.0, 9.0, 0.001, 10000),
        (-1.0, 9.0, 0.01, 1000),
        (-1.0, 5.0, 0.001, 6000),
        (0.0, 1.0, 0.01, 100),
    ])
    def test_build_grid(self, x_left, x_right, dx, expected):
        grid = GridBuilder.build_grid(x_left, x_right, dx)
        assert grid.n_cells == expected
        assert grid.cell_centers[0] == pytest.approx(x_left + 0.5 * dx)
        assert len(grid.interfaces) == expected + 1

    @pytest.mark.parametrize("x_left, x_right, dx", [
        (1.0, 1.0, 0.1),
        (0.0, 1.0, 0.0),
        (0.0, 1.0, 0.3),
    ])
    def test_invalid_grid(self, x_left, x_right, dx):
        with pytest.raises(ConfigurationError):
            GridBuilder.build_grid(x_left, x_right, dx)

    @pytest.mark.parametrize("start, end, expected", [
        (0.0, 9.0, range(1000, 10000)),
        (1.0, 1.1, range(2000, 2100)),
        (-1.0, 9.0, range(0, 10000)),
    ])
    def test_cell_range(self, start, end, expected):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.001)
        assert grid.cell_range(start, end) == expected

    @pytest.mark.parametrize("start, end", [
        (0.0005, 9.0),
        (5.0, 1.0),
        (2.0, 2.0),
        (-2.0, 1.0),
        (0.0, 9.5),
    ])
    def test_invalid_cell_range(self, start, end):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.001)
        with pytest.raises(ConfigurationError):
            grid.cell_range(start, end, "convergence.window")

    def test_build_ramps(self):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.001)
        ramps = GridBuilder.build_ramps(grid, [1.0, 1.1], [3.0, 3.1], 0.1)
        assert ramps.on_cells == range(2000, 2100)
        assert ramps.off_cells == range(4000, 4100)
        assert ramps.indicator_on[2000] == pytest.approx(10.0)
        assert ramps.indicator_on[1999] == 0.0
        assert ramps.indicator_on.sum() * grid.dx == pytest.approx(1.0)
        assert ramps.indicator_off.sum() * grid.dx == pytest.approx(1.0)
        assert np.all(ramps.indicator_on * ramps.indicator_off == 0.0)

    @pytest.mark.parametrize("on, off, length", [
        ([1.0, 1.1], [1.05, 1.15], 0.1),
        ([1.0, 1.1], [3.0, 3.1], 0.2),
        ([1.0005, 1.1005], [3.0, 3.1], 0.1),
        ([8.95, 9.05], [3.0, 3.1], 0.1),
    ])
    def test_invalid_ramps(self, on, off, length):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.001)
        with pytest.raises(ConfigurationError):
            GridBuilder.build_ramps(grid, on, off, length)

    def test_no_ramps(self):
        grid = GridBuilder.build_grid(0.0, 1.0, 0.01)
        ramps = GridBuilder.build_ramps(grid, None, None, 0.0)
        assert not ramps.has_ramps
        assert math.isinf(ramps.ramp_length)
        assert isinstance(ramps, RampGeometry)


class TestInitialDatum:

    def test_constant(self):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.001)
        field = GridBuilder.project_initial_datum(InitialDatum.constant(0.3), grid)
        assert field.time == 0.0
        assert np.all(field.values == 0.3)

    def test_step_at_interface(self):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.01)
        values = GridBuilder.project_initial_datum(InitialDatum.step(0.1, 0.9, 1.1), grid).values
        np.testing.assert_allclose(values[:210], 0.1, atol=1e-12)
        np.testing.assert_allclose(values[210:], 0.9, atol=1e-12)

    def test_step_inside_cell(self):
        grid = GridBuilder.build_grid(0.0, 1.0, 0.1)
        values = GridBuilder.project_initial_datum(InitialDatum.step(0.0, 1.0, 0.55), grid).values
        assert values[5] == pytest.approx(0.5)

    def test_bump_mass(self):
        grid = GridBuilder.build_grid(0.0, 1.0, 0.01)
        values = GridBuilder.project_initial_datum(InitialDatum.bump(0.5, 0.4, 0.6), grid).values
        assert grid.dx * values.sum() == pytest.approx(0.5 * 0.4 * 0.6, rel=1e-12)
        assert values.max() <= 0.6
        assert values[0] == 0.0

    def test_function(self):
        grid = GridBuilder.build_grid(0.0, 1.0, 0.1)
        values = GridBuilder.project_initial_datum(InitialDatum.function(lambda x: 0.5 * x), grid).values
        np.testing.assert_allclose(values, 0.5 * grid.cell_centers)

    @pytest.mark.parametrize("datum", [
        InitialDatum.constant(1.2),
        InitialDatum.constant(-0.1),
        InitialDatum.step(0.1, 1.5, 0.5),
        InitialDatum.bump(0.5, 0.2, 2.0),
        InitialDatum.function(lambda x: x + 0.5),
    ])
    def test_out_of_range(self, datum):
        grid = GridBuilder.build_grid(0.0, 1.0, 0.1)
        with pytest.raises(DataError):
            GridBuilder.project_initial_datum(datum, grid)


class TestRateSchedule:

    @pytest.mark.parametrize("schedule, t0, t1, expected", [
        (RateSchedule.constant(1.2), 0.0, 2.0, 2.4),
        (RateSchedule.sinusoidal(1.0), 0.0, 2.0, 1.0),
        (RateSchedule.sinusoidal(2.0), 0.0, 1.0, 1.0 + 2.0 / math.pi),
        (RateSchedule.tabulated([0.0, 1.0], [0.0, 1.0]), 0.0, 1.0, 0.5),
        (RateSchedule.tabulated([0.0, 1.0], [0.0, 1.0]), 0.0, 2.0, 1.5),
    ])
    def test_integral(self, schedule, t0, t1, expected):
        assert schedule.integral(t0, t1) == pytest.approx(expected, rel=1e-12)

    def test_average_of_constant(self):
        assert RateSchedule.constant(0.8).average(0.3, 0.4) == pytest.approx(0.8)

    @pytest.mark.parametrize("schedule, final_time, expected", [
        (RateSchedule.constant(1.2), 7.0, 1.2),
        (RateSchedule.sinusoidal(1.0), 7.0, 1.0),
        (RateSchedule.sinusoidal(1.0), 0.25, 0.5 * (math.sin(math.pi / 4) + 1.0)),
        (RateSchedule.tabulated([0.0, 1.0, 2.0], [0.2, 1.0, 0.1]), 0.5, 0.6),
    ])
    def test_sup_norm(self, schedule, final_time, expected):
        assert schedule.sup_norm(final_time) == pytest.approx(expected)

    def test_scaled(self):
        assert RateSchedule.constant(1.0).scaled(1.05).value(3.0) == pytest.approx(1.05)
        assert RateSchedule.tabulated([0.0, 1.0], [0.0, 2.0]).scaled(0.5).value(1.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("builder", [
        lambda: RateSchedule.constant(-1.0),
        lambda: RateSchedule.tabulated([0.0, 0.0], [1.0, 1.0]),
        lambda: RateSchedule.tabulated([0.0, 1.0], [1.0]),
        lambda: RateSchedule(kind="exponential"),
    ])
    def test_invalid(self, builder):
        with pytest.raises(ConfigurationError):
            builder()


class TestBoundaryPolicy:

    def test_outflow(self):
        padded = BoundaryPolicy().pad(np.array([0.2, 0.3, 0.4]), 2, 1)
        np.testing.assert_array_equal(padded, [0.2, 0.2, 0.2, 0.3, 0.4, 0.4])

    def test_dirichlet(self):
        policy = BoundaryPolicy(left="dirichlet", left_value=0.4, right="dirichlet", right_value=0.0)
        padded = policy.pad(np.array([0.0, 0.1]), 1, 2)
        np.testing.assert_array_equal(padded, [0.4, 0.0, 0.1, 0.0, 0.0])
        assert policy.boundary_jumps(np.array([0.0, 0.1])) == pytest.approx(0.5)

    def test_periodic(self):
        policy = BoundaryPolicy(left="periodic", right="periodic")
        padded = policy.pad(np.array([0.1, 0.2, 0.3]), 2, 2)
        np.testing.assert_array_equal(padded, [0.2, 0.3, 0.1, 0.2, 0.3, 0.1, 0.2])
        assert policy.boundary_jumps(np.array([0.1, 0.2, 0.3])) == 0.0

    @pytest.mark.parametrize("kwargs", [
        {"left": "periodic", "right": "outflow"},
        {"left": "reflecting"},
        {"left": "dirichlet", "left_value": 1.5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            BoundaryPolicy(**kwargs)


if __name__ == '__main__':
    pytest.main()
