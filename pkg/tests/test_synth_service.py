"""
Tests for channelized permeability fields, CRM worlds and case generation
"""

import json

import numpy as np
import pytest

from app.schemas import ChannelFieldConfig, ScheduleConfig
from app.services.crm_service import integrate_crm_ode, make_params
from app.services.synth_service import (
    crm_world_adjacency,
    gen_channel_field,
    generate_crm_world,
    make_cases,
    random_crm_world,
    write_case,
    write_cases,
)
from app.utils.error_handling import AppError, ErrorCode, ValidationError

SMALL_FIELD = ChannelFieldConfig(nx=30, ny=30, dx=50.0, dy=50.0, channel_count=2, channel_width=200.0,
                                 amplitude=100.0, wavelength=800.0, seed=1)
SHORT_SCHEDULE = ScheduleConfig(horizon=50.0, step=10.0, injection=[[(0.0, 300.0)], [(0.0, 200.0)]])


class TestChannelField:
    def test_two_facies_and_constant_porosity(self):
        grid = gen_channel_field(ChannelFieldConfig())
        assert set(np.unique(grid.perm)) == {1.0, 100.0}
        assert np.all(grid.phi == 0.15)
        assert grid.fluid.c_t == 1e-5

    def test_deterministic_for_seed(self):
        a = gen_channel_field(ChannelFieldConfig(seed=4))
        b = gen_channel_field(ChannelFieldConfig(seed=4))
        c = gen_channel_field(ChannelFieldConfig(seed=5))
        assert np.array_equal(a.perm, b.perm)
        assert not np.array_equal(a.perm, c.perm)

    def test_channel_fraction_matches_band_coverage(self):
        """Net fraction is close to count * width / height."""
        config = ChannelFieldConfig()
        grid = gen_channel_field(config)
        expected = config.channel_count * config.channel_width / (config.ny * config.dy)
        fraction = float(np.mean(grid.perm == config.k_net))
        assert fraction == pytest.approx(expected, rel=0.20)

    def test_channels_run_the_full_length(self):
        grid = gen_channel_field(ChannelFieldConfig())
        assert np.all((grid.perm == 100.0).any(axis=0))

    def test_channel_wider_than_domain_rejected(self):
        with pytest.raises(ValidationError):
            gen_channel_field(ChannelFieldConfig(ny=10, dy=10.0, channel_width=100.0))


class TestCrmWorld:
    def test_zero_injection_and_start_stays_zero(self):
        params = make_params(tau=[30.0, 60.0], J=[1.0, 2.0], F=[[0.5, 0.4]])
        schedule = ScheduleConfig(horizon=100.0, step=10.0, injection=[[(0.0, 0.0)]])
        panel = generate_crm_world(params, schedule, [0.0, 0.0])
        assert np.all(panel.q == 0.0)
        assert panel.n_rows == 11

    def test_agrees_with_rk4_integration(self, crm_world):
        params, panel = crm_world
        stepped = integrate_crm_ode(params, panel.times, panel.I, panel.p_wf, panel.q[0], substep=0.05)
        assert np.max(np.abs(panel.q - stepped)) < 1e-6 * np.max(stepped)

    def test_noise_scale(self):
        _, clean = random_crm_world(1, 1, 2000, seed=3)
        _, noisy = random_crm_world(1, 1, 2000, seed=3, noise=0.05)
        residual = noisy.q - clean.q
        assert np.std(residual) == pytest.approx(0.05 * np.mean(clean.q), rel=0.10)
        assert np.all(noisy.q >= 0.0)

    def test_negative_noise_rejected(self):
        params = make_params(tau=[30.0], J=[1.0], F=[[0.5]])
        with pytest.raises(ValidationError):
            generate_crm_world(params, ScheduleConfig(injection=[[(0.0, 100.0)]]), [0.0], noise=-0.1)

    def test_adjacency_keeps_strongest_pair(self):
        params = make_params(tau=[30.0, 30.0], J=[1.0, 1.0], F=[[0.03, 0.04], [0.6, 0.01]])
        assert crm_world_adjacency(params).values.tolist() == [[0, 1], [1, 0]]


class TestMakeCases:
    def test_four_cases_share_the_field(self):
        cases = make_cases(SMALL_FIELD, case_count=4, seed=0, schedule=SHORT_SCHEDULE)
        assert [c.name for c in cases] == ["case1", "case2", "case3", "case4"]
        for case in cases:
            assert case.wells.n_injectors == 2 and case.wells.n_producers == 4
            assert case.grid is cases[0].grid

    def test_wells_on_distinct_cells_with_spacing(self):
        for case in make_cases(SMALL_FIELD, case_count=4, seed=2, min_spacing=5.0):
            cells = [case.grid.cell_of(w.x, w.y) for w in case.wells.injectors + case.wells.producers]
            assert len(set(cells)) == 6
            rows, cols = np.array(cells).T
            gaps = np.hypot(rows[:, None] - rows[None, :], cols[:, None] - cols[None, :])
            assert gaps[~np.eye(6, dtype=bool)].min() >= 5.0

    def test_placements_depend_on_seed(self):
        a = make_cases(SMALL_FIELD, case_count=1, seed=0)[0].wells
        b = make_cases(SMALL_FIELD, case_count=1, seed=0)[0].wells
        c = make_cases(SMALL_FIELD, case_count=1, seed=1)[0].wells
        assert a == b
        assert a != c

    def test_impossible_spacing_raises_placement_error(self):
        with pytest.raises(AppError) as exc:
            make_cases(SMALL_FIELD, case_count=1, seed=0, min_spacing=100.0)
        assert exc.value.code == ErrorCode.PLACEMENT_ERROR

    def test_case_count_must_be_positive(self):
        with pytest.raises(ValidationError):
            make_cases(SMALL_FIELD, case_count=0, seed=0)


class TestWriteCase:
    def test_layout(self, tmp_path):
        case = make_cases(SMALL_FIELD, case_count=1, seed=0, schedule=SHORT_SCHEDULE)[0]
        d = write_case(case, tmp_path)
        assert d == tmp_path / "case1"
        assert {p.name for p in (d / "grid").iterdir()} == {"grid.json", "perm.csv", "phi.csv"}
        assert (d / "wells.csv").exists()
        assert json.loads((d / "schedule.json").read_text())["step"] == 10.0
        assert not (d / "panel.csv").exists()

    def test_write_cases_simulates_each(self, tmp_path):
        cases = make_cases(SMALL_FIELD, case_count=2, seed=0, schedule=SHORT_SCHEDULE)
        written = write_cases(cases, tmp_path)
        assert [p.name for p in written] == ["case1", "case2"]
        header = (written[0] / "panel.csv").read_text().splitlines()[0].split(",")
        assert header[:3] == ["time_days", "I_INJ1", "I_INJ2"]
        assert len((written[0] / "panel.csv").read_text().splitlines()) == 6
