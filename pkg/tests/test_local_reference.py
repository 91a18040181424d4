import numpy as np
import pytest

from core.config_loader import load_config
from core.diagnostics import total_variation
from core.grid import BoundaryPolicy, GridBuilder, InitialDatum, RampGeometry, RampRates
from core.local_reference import LocalConfig, LocalGodunovScheme, compute_local_cfl_dt, godunov_flux, simulate_local
from core.scheme import SchemeState
from core.velocity import VelocityLaw


def _local_config(initial: InitialDatum, boundary: BoundaryPolicy, final_time: float = 0.5) -> LocalConfig:
    grid = GridBuilder.build_grid(0.0, 2.0, 0.01)
    return LocalConfig(
        grid=grid, velocity=VelocityLaw.affine(), ramps=RampGeometry.empty(grid), rates=RampRates.zero(),
        boundary=boundary, initial=initial, final_time=final_time,
    )


class TestGodunovFlux:

    @pytest.mark.parametrize("rho_left, rho_right, expected", [
        (0.3, 0.3, 0.21),
        (0.9, 0.1, 0.25),
        (0.1, 0.9, 0.09),
        (0.2, 0.4, 0.16),
        (0.8, 0.6, 0.24),
        (0.4, 0.2, 0.24),
        (0.0, 1.0, 0.0),
    ])
    def test_scalar(self, rho_left, rho_right, expected):
        assert godunov_flux(rho_left, rho_right, VelocityLaw.affine()) == pytest.approx(expected)

    def test_consistency_sweep(self):
        velocity = VelocityLaw.affine()
        for c in np.linspace(0.0, 1.0, 100):
            assert godunov_flux(c, c, velocity) == velocity.flux(c)

    def test_vectorized(self):
        left = np.array([0.3, 0.9, 0.1])
        right = np.array([0.3, 0.1, 0.9])
        np.testing.assert_allclose(godunov_flux(left, right, VelocityLaw.affine()), [0.21, 0.25, 0.09])

    def test_tabulated_velocity(self):
        velocity = VelocityLaw.tabulated([0.0, 0.5, 1.0], [1.0, 0.5, 0.0])
        assert godunov_flux(0.9, 0.1, velocity) == pytest.approx(0.25, rel=1e-6)


class TestLocalGodunovScheme:

    def test_cfl(self):
        config = load_config("example2").unwrap().local_config()
        assert compute_local_cfl_dt(config) == pytest.approx(config.cfl_safety * 1e-3)

    def test_from_run_config(self):
        run = load_config("example2", {"domain": {"dx": 0.01}, "convergence": {"eta_list": [0.1, 0.05]}}).unwrap()
        config = run.local_config((1.0, 5.0))
        assert config.output_times == (1.0, 5.0)
        assert config.with_outputs((2.0,)).output_times == (2.0,)
        assert LocalConfig.from_model_config(run.model_config(2)).output_times == run.output_times

    def test_mass_conservation_periodic(self):
        config = _local_config(InitialDatum.bump(1.0, 0.8, 0.9), BoundaryPolicy(left="periodic", right="periodic"), 1.0)
        trajectory = simulate_local(config)
        initial = GridBuilder.project_initial_datum(config.initial, config.grid)
        assert trajectory.final.values.sum() == pytest.approx(initial.values.sum(), rel=1e-12)
        assert trajectory.label == "local"
        assert trajectory.report is None

    def test_shock_speed(self):
        # ρ_L = 0.2, ρ_R = 0.6 の衝撃波は速度 1 - ρ_L - ρ_R = 0.2 で進む
        config = _local_config(InitialDatum.step(0.2, 0.6, 0.5), BoundaryPolicy(), final_time=1.0)
        values = simulate_local(config).final.values
        x = config.grid.cell_centers
        front = x[np.argmax(values > 0.4)]
        assert front == pytest.approx(0.7, abs=0.03)

    def test_rarefaction_stays_in_range(self):
        config = _local_config(InitialDatum.step(0.9, 0.1, 1.0), BoundaryPolicy(), final_time=0.5)
        values = simulate_local(config).final.values
        assert values.min() >= 0.1 - 1e-12
        assert values.max() <= 0.9 + 1e-12
        assert np.all(np.diff(values) <= 1e-12)

    def test_ramps_add_mass(self):
        run = load_config("example1", {"domain": {"dx": 0.01}, "time": {"final": 0.5, "outputs": [0.5]}}).unwrap()
        scheme = LocalGodunovScheme(run.local_config())
        snapshots, steps = scheme.run(GridBuilder.project_initial_datum(run.initial, run.grid), (0.5,))
        values = snapshots[0].values
        assert steps > 0
        assert values[list(run.ramps.on_cells)].max() > 0.3
        assert values[list(run.ramps.off_cells)].min() < 0.3
        assert values.min() >= 0.0 and values.max() <= 1.0

    @pytest.mark.parametrize("initial", [
        InitialDatum.bump(1.0, 0.8, 0.9),
        InitialDatum.step(0.2, 0.6, 0.5),
        InitialDatum.step(0.9, 0.1, 1.0),
    ])
    @pytest.mark.parametrize("boundary", [
        BoundaryPolicy(left="periodic", right="periodic"),
        BoundaryPolicy(),
    ])
    def test_tv_nonincreasing_without_ramps(self, initial, boundary):
        scheme = LocalGodunovScheme(_local_config(initial, boundary))
        state = SchemeState(field=GridBuilder.project_initial_datum(initial, scheme.grid))
        tv = total_variation(state.field)
        for _ in range(100):
            state, _ = scheme.advance(state)
            next_tv = total_variation(state.field)
            assert next_tv <= tv + 1e-12
            tv = next_tv

    @pytest.mark.parametrize("value", [0.0, 0.3, 0.5, 1.0])
    def test_constant_is_fixed_point(self, value):
        config = _local_config(InitialDatum.constant(value), BoundaryPolicy(left="periodic", right="periodic"))
        scheme = LocalGodunovScheme(config)
        state = SchemeState(field=GridBuilder.project_initial_datum(config.initial, config.grid))
        for _ in range(50):
            state, _ = scheme.advance(state)
        np.testing.assert_array_equal(state.field.values, value)

    def test_local_source_step(self):
        run = load_config("example1", {"domain": {"dx": 0.01}, "time": {"final": 0.5, "outputs": [0.5]}}).unwrap()
        scheme = LocalGodunovScheme(run.local_config())
        state, record = scheme.advance(SchemeState(field=GridBuilder.project_initial_datum(run.initial, run.grid)))
        expected = record.halfstep \
            + record.dt * run.ramps.indicator_on * 1.2 * (1.0 - record.halfstep) \
            - record.dt * run.ramps.indicator_off * 0.8 * record.halfstep
        np.testing.assert_allclose(state.field.values, expected, rtol=0, atol=1e-15)
        assert record.r_on is None


if __name__ == '__main__':
    pytest.main()
