import os
import sys
import pathlib
import pytest
import numpy as np
from fastapi.testclient import TestClient
from typing import Generator
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, Session
from sqlalchemy.pool import StaticPool

# Ensure both import styles work:
#   from fastapi_project.app.X import ...   (BACKEND_ROOT in sys.path)
#   from app.X import ...                   (FASTAPI_DIR in sys.path)
BACKEND_ROOT = pathlib.Path(__file__).resolve().parents[1]
FASTAPI_DIR = BACKEND_ROOT / "fastapi_project"
if str(BACKEND_ROOT) not in sys.path:
    sys.path.insert(0, str(BACKEND_ROOT))
if str(FASTAPI_DIR) not in sys.path:
    sys.path.insert(0, str(FASTAPI_DIR))

os.environ.setdefault("DATABASE_URL", f"sqlite:///{FASTAPI_DIR}/test_runner.db")
# CLI tests opt in to run recording explicitly
os.environ.setdefault("WELLGRAPH_RECORD_RUNS", "0")

from app.main import app  # type: ignore  # noqa: E402
from app.database import Base, get_db  # noqa: E402
from app import models  # noqa: F401,E402
from app.domain import ReservoirGrid  # noqa: E402
from app.schemas import FluidProps, TrainConfig, Well, WellNetwork  # noqa: E402
from app.services.synth_service import random_crm_world  # noqa: E402


# --------------------------------------------------------------------------- #
# Slow tests run only with RUN_SLOW=1                                         #
# --------------------------------------------------------------------------- #
def pytest_collection_modifyitems(config, items):
    if os.getenv("RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# --------------------------------------------------------------------------- #
# Shared session client                                                       #
# --------------------------------------------------------------------------- #
client = TestClient(app)


@pytest.fixture(scope="session")
def test_client():
    return client


# --------------------------------------------------------------------------- #
# In-memory SQLite engine (per-test isolation)                                #
# --------------------------------------------------------------------------- #
_TEST_DB_URL = "sqlite:///:memory:"

_test_engine = create_engine(
    _TEST_DB_URL,
    connect_args={"check_same_thread": False},
    poolclass=StaticPool,
)
_TestingSession = sessionmaker(autocommit=False, autoflush=False, bind=_test_engine)


@pytest.fixture(scope="session", autouse=True)
def _create_tables():
    """Create all tables once for the in-memory engine."""
    Base.metadata.create_all(bind=_test_engine)
    yield
    Base.metadata.drop_all(bind=_test_engine)


@pytest.fixture
def db_session() -> Generator[Session, None, None]:
    """
    Isolated DB session: each test gets a clean slate via savepoint rollback.
    """
    conn = _test_engine.connect()
    tx = conn.begin()
    session = _TestingSession(bind=conn)
    nested = conn.begin_nested()  # savepoint

    yield session

    session.close()
    if nested.is_active:
        nested.rollback()
    tx.rollback()
    conn.close()


@pytest.fixture
def api_client(db_session: Session) -> Generator[TestClient, None, None]:
    """TestClient whose get_db dependency yields the isolated session."""
    def _override_db():
        yield db_session

    app.dependency_overrides[get_db] = _override_db

    with TestClient(app, raise_server_exceptions=True) as c:
        yield c

    app.dependency_overrides.pop(get_db, None)


# --------------------------------------------------------------------------- #
# Domain fixtures                                                             #
# --------------------------------------------------------------------------- #
@pytest.fixture
def uniform_grid() -> ReservoirGrid:
    """20 x 20 homogeneous grid, 10 ft cells."""
    return ReservoirGrid(
        nx=20, ny=20, dx=10.0, dy=10.0,
        perm=np.full((20, 20), 50.0),
        phi=np.full((20, 20), 0.2),
        fluid=FluidProps(c_t=1e-5, mu=1.0),
    )


@pytest.fixture
def five_spot_wells() -> WellNetwork:
    """One central injector and four corner producers on the 200 x 200 ft uniform grid."""
    return WellNetwork(
        injectors=[Well(id="INJ1", x=105.0, y=105.0)],
        producers=[
            Well(id="PRD1", x=25.0, y=25.0),
            Well(id="PRD2", x=185.0, y=25.0),
            Well(id="PRD3", x=25.0, y=185.0),
            Well(id="PRD4", x=185.0, y=185.0),
        ],
    )


@pytest.fixture
def crm_world():
    """(params, panel) of a noise-free 2 x 3 CRM world with 60 rows."""
    return random_crm_world(2, 3, 60, seed=7)


@pytest.fixture
def quick_train() -> TrainConfig:
    return TrainConfig(learning_rate=5e-3, max_epochs=30, patience=10, warmup_epochs=5, seeds=[0, 1])


@pytest.fixture
def crm_case_files(tmp_path, crm_world):
    """On-disk wells, panel and expert adjacency of the CRM world."""
    from app.importers.connectivity_importer import write_matrix_csv
    from app.importers.panel_importer import write_panel_csv
    from app.importers.well_importer import write_wells_csv
    from app.services.synth_service import crm_world_adjacency

    params, panel = crm_world
    wells = WellNetwork(
        injectors=[Well(id=i, x=10.0 * k, y=0.0) for k, i in enumerate(panel.injector_ids)],
        producers=[Well(id=p, x=10.0 * k, y=50.0) for k, p in enumerate(panel.producer_ids)],
    )
    d = tmp_path / "crm_world"
    return {
        "wells_path": str(write_wells_csv(wells, d / "wells.csv")),
        "panel_path": str(write_panel_csv(panel, d / "panel.csv")),
        "adjacency_path": str(write_matrix_csv(crm_world_adjacency(params), d / "adjacency.csv")),
    }
