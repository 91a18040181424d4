from dataclasses import replace

import numpy as np
import pytest

from core.config_loader import load_config
from core.exceptions import ConfigurationError, SchemeInvariantError
from core.grid import BoundaryPolicy, GridBuilder, InitialDatum, RampGeometry, RampRates, RateSchedule
from core.kernels import KernelParams, NonlocalKernels
from core.scheme import (
    ModelConfig,
    ModelVariant,
    PaddedField,
    SchemeState,
    SplittingScheme,
    UpwindScheme,
    advance,
    compute_cfl_dt,
    convective_step,
    convolution_flux,
    convolution_reactive,
    simulate,
    source_off,
    source_on,
    source_step,
)
from core.velocity import VelocityLaw


def _example(name: str, **overrides):
    return load_config(name, overrides).unwrap()


def _periodic_bump_config(variant=ModelVariant.MODEL1) -> ModelConfig:
    grid = GridBuilder.build_grid(0.0, 1.0, 0.01)
    return ModelConfig(
        grid=grid,
        kernel=KernelParams(eta=0.05, delta=0.0),
        velocity=VelocityLaw.affine(),
        variant=variant,
        ramps=RampGeometry.empty(grid),
        rates=RampRates.zero(),
        boundary=BoundaryPolicy(left="periodic", right="periodic"),
        initial=InitialDatum.bump(0.5, 0.4, 0.6),
        final_time=1.0,
    )


class TestModelVariant:

    @pytest.mark.parametrize("value, expected", [
        (0, ModelVariant.MODEL0),
        ("1", ModelVariant.MODEL1),
        ("model2", ModelVariant.MODEL2),
        (" Model1 ", ModelVariant.MODEL1),
        (ModelVariant.MODEL2, ModelVariant.MODEL2),
    ])
    def test_parse(self, value, expected):
        assert ModelVariant.parse(value) is expected

    @pytest.mark.parametrize("value", ["3", "modelx", ""])
    def test_parse_invalid(self, value):
        with pytest.raises(ConfigurationError):
            ModelVariant.parse(value)

    def test_max_principle_flag(self):
        assert not ModelVariant.MODEL0.has_max_principle
        assert ModelVariant.MODEL1.has_max_principle
        assert ModelVariant.MODEL2.label == "model2"


class TestModelConfig:

    def test_default_output_times(self):
        config = _periodic_bump_config()
        assert config.output_times == (1.0,)

    def test_outputs_sorted(self):
        config = replace(_periodic_bump_config(), output_times=(0.5, 0.25, 1.0))
        assert config.output_times == (0.25, 0.5, 1.0)

    @pytest.mark.parametrize("changes", [
        {"output_times": (2.0,)},
        {"final_time": -1.0},
        {"cfl_safety": 1.5},
        {"cfl_safety": 0.0},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigurationError):
            replace(_periodic_bump_config(), **changes)


class TestTimeStep:

    def test_cfl_example(self):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.001)
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.05, delta=-0.01), grid.dx)
        ramps = GridBuilder.build_ramps(grid, [1.0, 1.1], [3.0, 3.1], 0.1)
        rates = RampRates(q_on=RateSchedule.constant(1.2), q_off=RateSchedule.constant(0.8))
        dt = compute_cfl_dt(VelocityLaw.affine(), weights, ramps, rates, grid.dx, 7.0, safety=1.0)
        assert dt == pytest.approx(1e-3 / 1.0396, rel=1e-12)
        assert dt == pytest.approx(9.619e-4, rel=1e-4)

    def test_source_restriction(self):
        grid = GridBuilder.build_grid(-1.0, 9.0, 0.01)
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.05), grid.dx)
        ramps = GridBuilder.build_ramps(grid, [1.0, 1.1], [3.0, 3.1], 0.1)
        rates = RampRates(q_on=RateSchedule.constant(20.0), q_off=RateSchedule.constant(30.0))
        dt = compute_cfl_dt(VelocityLaw.affine(), weights, ramps, rates, grid.dx, 1.0, safety=0.9)
        assert dt == pytest.approx(0.9 * 0.1 / 50.0)

    def test_no_ramps(self):
        grid = GridBuilder.build_grid(0.0, 1.0, 0.01)
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.01), grid.dx)
        dt = compute_cfl_dt(VelocityLaw.affine(), weights, RampGeometry.empty(grid), RampRates.zero(), grid.dx, 1.0, safety=1.0)
        assert dt == pytest.approx(0.01 / 2.0)


class TestConvolutions:

    def _padded(self, values, weights):
        left = max(1, -weights.first_reactive_offset)
        right = max(weights.convective_reach, weights.last_reactive_offset, 0)
        return PaddedField(BoundaryPolicy().pad(np.asarray(values, dtype=float), left, right), left, len(values))

    def test_constant_field(self):
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.05, delta=-0.01), 0.01)
        padded = self._padded(np.full(20, 0.3), weights)
        r_flux = convolution_flux(padded, weights)
        r_on = convolution_reactive(padded, weights)
        assert r_flux.shape == (21,)
        assert r_on.shape == (20,)
        np.testing.assert_allclose(r_flux, 0.3, rtol=1e-14)
        np.testing.assert_allclose(r_on, 0.3, rtol=1e-14)

    def test_flux_looks_downstream(self):
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.02), 0.01)
        values = np.zeros(10)
        values[5] = 1.0
        r_flux = convolution_flux(self._padded(values, weights), weights)
        # R_{j+1/2} は ρ_{j+1}, ρ_{j+2} を見る
        assert r_flux[5] == pytest.approx(weights.convective[0])
        assert r_flux[4] == pytest.approx(weights.convective[1])
        assert r_flux[6] == 0.0
        assert r_flux[3] == 0.0

    def test_reactive_offsets(self):
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.02, delta=-0.01), 0.01)
        values = np.zeros(12)
        values[6] = 1.0
        r_on = convolution_reactive(self._padded(values, weights), weights)
        nonzero = np.flatnonzero(r_on)
        # R_on,j = Σ_h γ̂_h ρ_{j+h}, h = -3..0
        assert list(nonzero) == [6, 7, 8, 9]
        assert r_on.sum() == pytest.approx(1.0)

    def test_insufficient_ghosts(self):
        weights = NonlocalKernels.build_weights(KernelParams(eta=0.05, delta=-0.01), 0.01)
        padded = PaddedField(BoundaryPolicy().pad(np.full(20, 0.3), 1, 1), 1, 20)
        with pytest.raises(SchemeInvariantError):
            convolution_flux(padded, weights)
        with pytest.raises(SchemeInvariantError):
            convolution_reactive(padded, weights)


class TestSourceTerms:

    @pytest.mark.parametrize("variant, expected", [
        (ModelVariant.MODEL0, 6.0),
        (ModelVariant.MODEL1, 4.2),
        (ModelVariant.MODEL2, 6.0),
    ])
    def test_source_on(self, variant, expected):
        assert float(source_on(variant, 0.3, 0.5, 10.0, 1.2)) == pytest.approx(expected)

    def test_model2_uses_larger_density(self):
        assert float(source_on(ModelVariant.MODEL2, 0.8, 0.5, 10.0, 1.2)) == pytest.approx(12.0 * 0.2)

    def test_source_off(self):
        assert float(source_off(0.3, 10.0, 0.8)) == pytest.approx(2.4)

    def test_zero_outside_ramps(self):
        s_on = source_on(ModelVariant.MODEL1, np.full(3, 0.3), np.full(3, 0.3), np.array([0.0, 10.0, 0.0]), 1.0)
        assert s_on[0] == 0.0 and s_on[2] == 0.0

    @pytest.mark.parametrize("variant", [ModelVariant.MODEL1, ModelVariant.MODEL2])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_dominated_by_model0(self, variant, seed):
        rng = np.random.default_rng(seed)
        rho = rng.uniform(0.0, 1.0, 500)
        r_on = rng.uniform(0.0, 1.0, 500)
        indicator = np.full(500, 10.0)
        capped = source_on(variant, rho, r_on, indicator, 1.2)
        uncapped = source_on(ModelVariant.MODEL0, rho, r_on, indicator, 1.2)
        assert np.all(capped <= uncapped + 1e-15)
        assert np.all(capped >= 0.0)

    @pytest.mark.parametrize("variant", list(ModelVariant))
    @pytest.mark.parametrize("ramped, q_on, q_off", [
        (False, 1.2, 0.8),
        (True, 0.0, 0.0),
    ])
    def test_source_step_identity(self, variant, ramped, q_on, q_off):
        config = _example("example1", domain={"dx": 0.01}).model_config(1)
        ramps = config.ramps if ramped else RampGeometry.empty(config.grid)
        rng = np.random.default_rng(7)
        halfstep = rng.uniform(0.0, 1.0, config.grid.n_cells)
        r_on = rng.uniform(0.0, 1.0, config.grid.n_cells)
        rho_next, s_on, s_off = source_step(halfstep, r_on, ramps, q_on, q_off, 0.01, variant)
        np.testing.assert_array_equal(rho_next, halfstep)
        assert not s_on.any() and not s_off.any()

    def test_source_step_update(self):
        config = _example("example1", domain={"dx": 0.01}).model_config(1)
        halfstep = np.full(config.grid.n_cells, 0.3)
        r_on = np.full(config.grid.n_cells, 0.5)
        rho_next, s_on, s_off = source_step(halfstep, r_on, config.ramps, 1.2, 0.8, 0.01, ModelVariant.MODEL1)
        on = config.ramps.indicator_on > 0
        off = config.ramps.indicator_off > 0
        np.testing.assert_allclose(s_on[on], 10.0 * 1.2 * 0.7 * 0.5)
        np.testing.assert_allclose(s_off[off], 10.0 * 0.8 * 0.3)
        np.testing.assert_allclose(rho_next, halfstep + 0.01 * s_on - 0.01 * s_off, rtol=0, atol=0)
        np.testing.assert_array_equal(rho_next[~(on | off)], 0.3)


class TestUpwindScheme:

    def test_ghost_width(self):
        config = _example("example1", domain={"dx": 0.01}, time={"final": 0.5, "outputs": [0.5]}).model_config(1)
        scheme = UpwindScheme(config)
        assert scheme.pad_left == 6
        assert scheme.pad_right == 5

    def test_mass_conservation_periodic(self):
        config = _periodic_bump_config()
        scheme = UpwindScheme(config)
        state = scheme.initial_state()
        mass = state.field.values.sum()
        for _ in range(10000):
            state, _ = scheme.advance(state)
        assert state.step == 10000
        assert abs(state.field.values.sum() - mass) <= 1e-12 * mass

    def test_constant_state_without_ramps(self):
        config = _periodic_bump_config()
        state = SchemeState(field=GridBuilder.project_initial_datum(InitialDatum.constant(0.4), config.grid))
        for _ in range(20):
            state = advance(state, config)
        np.testing.assert_allclose(state.field.values, 0.4, rtol=1e-13)

    def test_advance_record(self):
        config = _periodic_bump_config()
        scheme = UpwindScheme(config)
        state, record = scheme.advance(scheme.initial_state(), dt=1e-3)
        assert state.time == pytest.approx(1e-3)
        assert record.lam == pytest.approx(0.1)
        assert record.fluxes.shape == (config.grid.n_cells + 1,)
        np.testing.assert_array_equal(state.halfstep, record.halfstep)

    @pytest.mark.parametrize("variant", list(ModelVariant))
    def test_advance_is_convective_then_source(self, variant):
        config = _example("example1", domain={"dx": 0.01}, time={"final": 0.5, "outputs": [0.5]}).model_config(variant)
        scheme = UpwindScheme(config)
        state = scheme.initial_state()
        for _ in range(3):
            state, _ = scheme.advance(state)
        dt = scheme.time_step
        padded = scheme.pad(state.field.values)
        halfstep, _ = convective_step(padded, convolution_flux(padded, scheme.weights), dt / config.grid.dx,
                                      config.velocity)
        r_on = convolution_reactive(scheme.pad(halfstep), scheme.weights)
        q_on, q_off = config.rates.averages(state.time, state.time + dt)
        expected, s_on, s_off = source_step(halfstep, r_on, config.ramps, q_on, q_off, dt, variant)

        new_state, record = scheme.advance(state)
        np.testing.assert_array_equal(record.halfstep, halfstep)
        np.testing.assert_array_equal(new_state.field.values, expected)
        np.testing.assert_array_equal(record.s_on, s_on)
        np.testing.assert_array_equal(record.s_off, s_off)

    def test_max_principle_violation_raises(self):
        config = _example("example3").model_config(1)
        scheme = UpwindScheme(config)
        with pytest.raises(SchemeInvariantError) as excinfo:
            scheme.advance(scheme.initial_state(), dt=1.0)
        assert excinfo.value.step == 1

    def test_assert_bounds(self):
        with pytest.raises(SchemeInvariantError) as excinfo:
            SplittingScheme._assert_bounds(np.array([0.5, 1.1, 0.2]), 3)
        assert excinfo.value.cell == 1
        SplittingScheme._assert_bounds(np.array([0.0, 1.0 + 1e-13]), 3)


class TestSimulate:

    def test_output_times_exact(self):
        config = _example("example1", domain={"dx": 0.01}, time={"final": 0.5, "outputs": [0.1, 0.25, 0.5]})
        trajectory = simulate(config.model_config(2), diagnostics=False)
        assert trajectory.times == [0.1, 0.25, 0.5]
        assert trajectory.label == "model2"
        assert trajectory.report is None
        assert trajectory.snapshot_at(0.25).time == 0.25
        with pytest.raises(KeyError):
            trajectory.snapshot_at(0.3)

    def test_output_at_zero(self):
        config = _example("example3", time={"final": 0.1, "outputs": [0.0, 0.1]})
        trajectory = simulate(config.model_config(1), diagnostics=False)
        initial = GridBuilder.project_initial_datum(config.initial, config.grid)
        np.testing.assert_array_equal(trajectory.snapshots[0].values, initial.values)

    def test_model0_overshoots(self):
        config = _example("example3")
        trajectory = simulate(config.model_config(0))
        assert max(s.values.max() for s in trajectory.snapshots) > 1.0 + 1e-6
        assert trajectory.report.max_principle.max_overshoot > 1e-6
        assert trajectory.report.passed

    @pytest.mark.parametrize("variant", [1, 2])
    def test_models_keep_bounds(self, variant):
        config = _example("example3")
        trajectory = simulate(config.model_config(variant))
        report = trajectory.report
        assert report.max_principle.min_density >= -1e-12
        assert report.max_principle.max_density <= 1.0 + 1e-12
        assert report.passed

    def test_ramp_inflow_raises_density(self):
        config = _example("example1", domain={"dx": 0.01}, time={"final": 0.5, "outputs": [0.5]})
        trajectory = simulate(config.model_config(1), diagnostics=False)
        values = trajectory.final.values
        on_ramp = list(config.ramps.on_cells)
        assert values[on_ramp].max() > 0.3
        assert values[0] == pytest.approx(0.3)


if __name__ == '__main__':
    pytest.main()
