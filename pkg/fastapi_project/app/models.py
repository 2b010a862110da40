# Run registry: one BenchmarkRun per `bench` invocation, one MethodRow per case/method pair
from datetime import UTC, datetime

from sqlalchemy import JSON, Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import relationship

from .database import Base


class BenchmarkRun(Base):
    __tablename__ = "benchmark_runs"
    id = Column(Integer, primary_key=True, index=True)
    created_at = Column(DateTime, default=lambda: datetime.now(UTC))
    config_hash = Column(String, index=True)
    seeds = Column(String, default="")  # comma-separated
    status = Column(String, default="ok")  # ok | partial | failed
    duration_s = Column(Float, default=0.0)
    output_dir = Column(String, nullable=True)
    report = Column(JSON, nullable=True)

    methods = relationship("MethodRow", back_populates="run", cascade="all, delete-orphan")


class MethodRow(Base):
    __tablename__ = "method_results"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("benchmark_runs.id"), index=True)
    case = Column(String, index=True)
    method = Column(String)
    status = Column(String, default="ok")
    total_rmse = Column(Float, nullable=True)

    run = relationship("BenchmarkRun", back_populates="methods")
