"""
Tests for grid, well, panel and connectivity CSV readers and writers
"""

import numpy as np
import pytest
from pydantic import ValidationError as SchemaValidationError

from app.domain import AdjacencyMatrix, ConnectivityMatrix
from app.importers.connectivity_importer import (
    read_adjacency_csv,
    read_connectivity_csv,
    write_matrix_csv,
)
from app.importers.grid_importer import read_grid_dir, write_grid_dir
from app.importers.panel_importer import read_panel_csv, write_panel_csv
from app.importers.well_importer import read_wells_csv, write_wells_csv
from app.utils.error_handling import ValidationError


class TestGridDir:
    def test_written_grid_reads_back(self, uniform_grid, tmp_path):
        grid = read_grid_dir(write_grid_dir(uniform_grid, tmp_path / "grid"))
        assert (grid.nx, grid.ny, grid.dx) == (20, 20, 10.0)
        assert np.array_equal(grid.perm, uniform_grid.perm)
        assert grid.fluid == uniform_grid.fluid

    def test_missing_metadata(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_grid_dir(tmp_path)

    def test_ragged_raster_rejected(self, uniform_grid, tmp_path):
        d = write_grid_dir(uniform_grid, tmp_path / "grid")
        (d / "perm.csv").write_text("1,2\n3\n")
        with pytest.raises(ValidationError):
            read_grid_dir(d)


class TestWellsCsv:
    def test_kinds_split_into_lists(self, tmp_path):
        path = tmp_path / "wells.csv"
        path.write_text("well_id,kind,x,y\nI1,INJ,1.5,2.5\nP1,prd,3.0,4.0\nP2,PRD,5.0,6.0\n")
        wells = read_wells_csv(path)
        assert wells.injector_ids == ["I1"]
        assert wells.producer_ids == ["P1", "P2"]

    def test_round_trip(self, five_spot_wells, tmp_path):
        assert read_wells_csv(write_wells_csv(five_spot_wells, tmp_path / "w.csv")) == five_spot_wells

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "wells.csv"
        path.write_text("well_id,kind,x,y\nI1,OBS,1,2\n")
        with pytest.raises(ValidationError):
            read_wells_csv(path)

    def test_duplicate_ids(self, tmp_path):
        path = tmp_path / "wells.csv"
        path.write_text("well_id,kind,x,y\nW,INJ,1,2\nW,PRD,3,4\n")
        with pytest.raises(SchemaValidationError):
            read_wells_csv(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "wells.csv"
        path.write_text("well_id,x,y\nI1,1,2\n")
        with pytest.raises(ValidationError):
            read_wells_csv(path)


class TestPanelCsv:
    def test_exact_round_trip(self, crm_world, tmp_path):
        _, panel = crm_world
        restored = read_panel_csv(write_panel_csv(panel, tmp_path / "panel.csv"))
        assert restored.injector_ids == panel.injector_ids
        assert np.array_equal(restored.q, panel.q)
        assert np.array_equal(restored.times, panel.times)

    def test_columns_follow_the_well_network(self, tmp_path, five_spot_wells):
        path = tmp_path / "panel.csv"
        header = "time_days,I_INJ1,pI_INJ1," + ",".join(f"q_PRD{j}" for j in (4, 3, 2, 1)) + "," + \
            ",".join(f"pwf_PRD{j}" for j in (4, 3, 2, 1))
        path.write_text(header + "\n0,100,3000,4,3,2,1,900,900,900,900\n10,100,3000,4,3,2,1,900,900,900,900\n")
        panel = read_panel_csv(path, five_spot_wells)
        assert panel.producer_ids == ("PRD1", "PRD2", "PRD3", "PRD4")
        assert panel.q[0].tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_missing_column(self, tmp_path, five_spot_wells):
        path = tmp_path / "panel.csv"
        path.write_text("time_days,I_INJ1,pI_INJ1\n0,1,1\n")
        with pytest.raises(ValidationError):
            read_panel_csv(path, five_spot_wells)

    def test_time_column_first(self, tmp_path):
        path = tmp_path / "panel.csv"
        path.write_text("I_A,time_days\n1,0\n")
        with pytest.raises(ValidationError):
            read_panel_csv(path)

    def test_non_numeric_value(self, tmp_path):
        path = tmp_path / "panel.csv"
        path.write_text("time_days,I_A,pI_A,q_B,pwf_B\n0,1,1,abc,1\n")
        with pytest.raises(ValidationError):
            read_panel_csv(path)


class TestMatrixCsv:
    def test_connectivity_round_trip_is_exact(self, crm_world, tmp_path):
        params, _ = crm_world
        restored = read_connectivity_csv(write_matrix_csv(params.F, tmp_path / "F.csv"))
        assert isinstance(restored, ConnectivityMatrix)
        assert np.array_equal(restored.values, params.F.values)
        assert restored.producer_ids == params.F.producer_ids

    def test_adjacency_written_as_integers(self, tmp_path):
        A = AdjacencyMatrix(values=[[1, 0], [0, 1]], injector_ids=["I1", "I2"], producer_ids=["P1", "P2"])
        path = write_matrix_csv(A, tmp_path / "A.csv")
        assert path.read_text().splitlines()[1] == "I1,1,0"
        assert read_adjacency_csv(path).values.tolist() == [[1, 0], [0, 1]]

    def test_short_row_rejected(self, tmp_path):
        path = tmp_path / "A.csv"
        path.write_text("injector,P1,P2\nI1,1\n")
        with pytest.raises(ValidationError):
            read_connectivity_csv(path)

    def test_injector_without_connection_rejected(self, tmp_path):
        path = tmp_path / "A.csv"
        path.write_text("injector,P1,P2\nI1,0,0\n")
        with pytest.raises(ValidationError):
            read_adjacency_csv(path)
