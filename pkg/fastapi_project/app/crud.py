from sqlalchemy.orm import Session
import logging

from . import models
from .schemas import BenchmarkReport

logger = logging.getLogger(__name__)


def run_status(report: BenchmarkReport) -> str:
    statuses = [m.status for case in report.cases for m in case.methods]
    if all(s == "ok" for s in statuses):
        return "ok"
    if any(s == "ok" for s in statuses):
        return "partial"
    return "failed"


def create_run(db: Session, report: BenchmarkReport, duration_s: float, output_dir: str = None) -> models.BenchmarkRun:
    """
    Persist a finished benchmark run and one row per case/method pair.
    """
    run = models.BenchmarkRun(
        config_hash=report.metadata.config_hash,
        seeds=",".join(str(s) for s in report.metadata.seeds),
        status=run_status(report),
        duration_s=duration_s,
        output_dir=output_dir,
        report=report.model_dump(mode="json"),
    )
    for case in report.cases:
        for method in case.methods:
            run.methods.append(
                models.MethodRow(case=case.case, method=method.method, status=method.status, total_rmse=method.total)
            )
    db.add(run)
    db.commit()
    db.refresh(run)
    logger.info("Recorded benchmark run %d (%s)", run.id, run.status)
    return run


def get_runs(db: Session, skip: int = 0, limit: int = 100):
    """
    Retrieve benchmark runs, newest first, with pagination.
    """
    return (
        db.query(models.BenchmarkRun)
        .order_by(models.BenchmarkRun.id.desc())
        .offset(skip)
        .limit(limit)
        .all()
    )


def get_run(db: Session, run_id: int):
    """
    Retrieve a run by its primary key ID.
    """
    return db.query(models.BenchmarkRun).filter(models.BenchmarkRun.id == run_id).first()


def get_method_rows(db: Session, run_id: int):
    return db.query(models.MethodRow).filter(models.MethodRow.run_id == run_id).all()
