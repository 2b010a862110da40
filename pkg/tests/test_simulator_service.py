"""
Tests for the implicit single-phase simulator
"""

import math

import numpy as np
import pytest

from app.domain import ReservoirGrid
from app.schemas import FluidProps, ScheduleConfig, SimulationConfig, Well, WellNetwork
from app.services.simulator_service import (
    DARCY_FACTOR,
    DiffusivitySimulator,
    cumulative_balance,
    peaceman_well_index,
    pore_volume,
    run_schedule,
    schedule_rates,
    simulate_diffusivity,
)
from app.utils.error_handling import ValidationError

FIVE_SPOT_SCHEDULE = ScheduleConfig(horizon=100.0, step=10.0, injection=[[(0.0, 500.0)]], producer_bhp=[1000.0])


def _square_grid(n: int, c_t: float = 1e-5) -> ReservoirGrid:
    return ReservoirGrid(nx=n, ny=n, dx=10.0, dy=10.0, perm=np.full((n, n), 50.0), phi=np.full((n, n), 0.2),
                         fluid=FluidProps(c_t=c_t, mu=1.0))


class TestPeacemanWellIndex:
    def test_closed_form(self):
        grid = ReservoirGrid(nx=4, ny=4, dx=50.0, dy=50.0, perm=np.full((4, 4), 100.0),
                             phi=np.full((4, 4), 0.2), fluid=FluidProps(mu=1.0))
        config = SimulationConfig(thickness=20.0, well_radius=0.25)
        expected = DARCY_FACTOR * 2.0 * math.pi * 100.0 * 20.0 / math.log(10.0 / 0.25)
        assert peaceman_well_index(grid, (1, 1), config) == pytest.approx(expected, rel=1e-12)
        assert peaceman_well_index(grid, (1, 1), config) == pytest.approx(3.8392, abs=1e-3)

    def test_equivalent_radius_must_exceed_well_radius(self):
        grid = ReservoirGrid(nx=4, ny=4, dx=1.0, dy=1.0, perm=np.ones((4, 4)), phi=np.full((4, 4), 0.2))
        with pytest.raises(ValidationError):
            peaceman_well_index(grid, (0, 0), SimulationConfig(well_radius=0.25))


class TestScheduleRates:
    def test_rate_held_over_preceding_interval(self):
        schedule = ScheduleConfig(horizon=30.0, step=10.0, injection=[[(0.0, 100.0), (10.0, 200.0)]])
        assert schedule_rates(schedule, np.array([10.0, 20.0, 30.0]))[:, 0].tolist() == [100.0, 200.0, 200.0]

    def test_idle_before_first_step(self):
        schedule = ScheduleConfig(horizon=30.0, step=10.0, injection=[[(5.0, 300.0)]])
        assert schedule_rates(schedule, np.array([10.0, 20.0]))[:, 0].tolist() == [0.0, 300.0]


class TestDiffusivitySimulator:
    def test_no_wells_stays_at_equilibrium(self, uniform_grid):
        result = DiffusivitySimulator(uniform_grid).run([], np.zeros((5, 0)), [], [], dt=10.0, n_steps=5,
                                                        store_pressures=True)
        np.testing.assert_allclose(result.pressures, 3000.0, rtol=1e-12)
        np.testing.assert_allclose(result.mean_pressure, 3000.0, rtol=1e-12)

    def test_material_balance(self, uniform_grid, five_spot_wells):
        """Net withdrawal equals the compressibility-weighted pressure drop at every step."""
        config = SimulationConfig()
        result = run_schedule(uniform_grid, five_spot_wells, FIVE_SPOT_SCHEDULE, config)
        pv_total = float(pore_volume(uniform_grid, config.thickness).sum())
        balance = cumulative_balance(result, pv_total, uniform_grid.fluid.c_t)
        scale = max(np.max(np.abs(balance["withdrawn"])), 1.0)
        np.testing.assert_allclose(balance["withdrawn"], balance["expansion"], atol=1e-6 * scale)

    def test_single_producer_declines_exponentially(self):
        """A lone producer in a closed box settles into a geometric decline."""
        grid = _square_grid(20, c_t=1e-3)
        wells = WellNetwork(injectors=[Well(id="INJ1", x=5.0, y=5.0)], producers=[Well(id="PRD1", x=105.0, y=105.0)])
        schedule = ScheduleConfig(horizon=400.0, step=2.0, injection=[[(0.0, 0.0)]], producer_bhp=[1000.0])
        result = run_schedule(grid, wells, schedule)
        q = result.q[:, 0]
        assert np.all(np.diff(q) < 0)
        ratios = q[101:] / q[100:-1]
        assert 0.0 < ratios.mean() < 1.0
        np.testing.assert_allclose(ratios, ratios.mean(), rtol=0.01)

    def test_producer_above_reservoir_pressure_shut_in(self, uniform_grid):
        wells = WellNetwork(injectors=[Well(id="INJ1", x=5.0, y=5.0)], producers=[Well(id="PRD1", x=105.0, y=105.0)])
        schedule = ScheduleConfig(horizon=20.0, step=10.0, injection=[[(0.0, 0.0)]], producer_bhp=[4000.0])
        result = run_schedule(uniform_grid, wells, schedule)
        assert np.all(result.q == 0.0)
        assert result.shut_in_steps == 2

    def test_symmetric_five_spot_splits_evenly(self, five_spot_wells):
        """Odd grid with the injector in the centre cell: all four corners see the same rate."""
        panel = simulate_diffusivity(_square_grid(21), five_spot_wells, FIVE_SPOT_SCHEDULE)
        assert panel.producer_ids == ("PRD1", "PRD2", "PRD3", "PRD4")
        np.testing.assert_allclose(panel.q, np.repeat(panel.q[:, :1], 4, axis=1), rtol=1e-8)

    def test_high_permeability_quadrant_takes_more(self, uniform_grid, five_spot_wells):
        perm = np.array(uniform_grid.perm)
        perm[10:, 10:] = 500.0
        grid = ReservoirGrid(nx=20, ny=20, dx=10.0, dy=10.0, perm=perm, phi=uniform_grid.phi, fluid=uniform_grid.fluid)
        panel = simulate_diffusivity(grid, five_spot_wells, FIVE_SPOT_SCHEDULE)
        assert np.argmax(panel.q[-1]) == 3

    def test_rows_are_step_ends(self, uniform_grid, five_spot_wells):
        panel = simulate_diffusivity(uniform_grid, five_spot_wells, FIVE_SPOT_SCHEDULE)
        assert panel.times.tolist() == [10.0 * k for k in range(1, 11)]
        assert np.all(panel.I == 500.0)

    def test_injector_count_must_match_schedule(self, uniform_grid, five_spot_wells):
        schedule = ScheduleConfig(horizon=20.0, step=10.0)
        with pytest.raises(ValidationError):
            run_schedule(uniform_grid, five_spot_wells, schedule)

    def test_rejects_nonpositive_step(self, uniform_grid):
        with pytest.raises(ValidationError):
            DiffusivitySimulator(uniform_grid).run([], np.zeros((1, 0)), [], [], dt=0.0, n_steps=1)
