"""
Benchmarks Router

Beginner guide:
- Lists benchmark runs recorded by `wellgraph bench` and returns one run's report.
- Runs are recorded only when WELLGRAPH_RECORD_RUNS is enabled.
"""

from typing import List

from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from .. import crud, schemas
from ..database import get_db
from ..utils.error_handling import ResourceNotFoundError

router = APIRouter(prefix="/benchmarks", tags=["Benchmarks"])


@router.get("/", response_model=List[schemas.BenchmarkRunRead])
def list_runs(skip: int = 0, limit: int = 100, db: Session = Depends(get_db)):
    """Newest first; the full report is omitted from the listing."""
    runs = crud.get_runs(db, skip=skip, limit=limit)
    return [schemas.BenchmarkRunRead.model_validate(r).model_copy(update={"report": None}) for r in runs]


@router.get("/{run_id}", response_model=schemas.BenchmarkRunRead)
def get_run(run_id: int, db: Session = Depends(get_db)):
    run = crud.get_run(db, run_id)
    if not run:
        raise ResourceNotFoundError("Benchmark run", run_id)
    return run
