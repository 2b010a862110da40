"""
Wellgraph FastAPI App

Beginner guide:
- Serves graph construction, CRM forecasting/fitting and RMSE endpoints.
- Lists benchmark runs recorded by the `wellgraph bench` command.
- Long-running work (training, benchmarks) runs from the command line, see app/cli.py.
"""

from fastapi import FastAPI
import logging
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.requests import Request
from datetime import datetime, UTC

from .config import LOG_FORMAT, get_settings
from .database import SessionLocal, init_db
from .utils.error_handling import AppError, get_user_friendly_message, log_error

settings = get_settings()

# --- FastAPI App Configuration ---
app = FastAPI(
    title="Wellgraph API",
    description="Well-network graph construction, CRM forecasting and benchmark registry.",
    version="0.1.0",
)

logger = logging.getLogger(__name__)

# Configure root logging once (INFO default)
logging.basicConfig(level=settings.log_level, format=LOG_FORMAT)

# --- CORS configuration ---
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.frontend_origins,
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["Content-Type", "Accept"],
)


@app.get("/healthz", tags=["Meta"])
def healthz():
    return {"status": "ok"}


@app.get("/health", tags=["Meta"])
def health():
    """Lightweight health endpoint.

    Returns status, app version, UTC time, and a best-effort database connectivity flag.
    Fails open on DB errors (no exception propagation) so health remains responsive.
    """
    from sqlalchemy import text
    db_ok = False
    try:
        db = SessionLocal()
        try:
            db.execute(text("SELECT 1"))
            db_ok = True
        finally:
            db.close()
    except Exception:
        db_ok = False

    return {
        "status": "ok",
        "version": app.version,
        "db_connected": db_ok,
        "time_utc": datetime.now(UTC).isoformat(),
    }


# --- Database Schema Management ---
# The run registry is small and append-only; create_all is sufficient.
init_db()

# --- Routers ---
from .routers import benchmarks, crm, graph, metrics  # noqa: E402

app.include_router(graph.router)
app.include_router(crm.router)
app.include_router(metrics.router)
app.include_router(benchmarks.router)


# --- Application Error Handler ---
# Converts AppError (and its subclasses) into structured JSON responses.
@app.exception_handler(AppError)
async def app_error_handler(request: Request, exc: AppError):
    """Translate AppError into a consistent JSON error envelope."""
    log_error(exc)
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "detail": get_user_friendly_message(exc),
            "code": exc.code.value if hasattr(exc.code, "value") else str(exc.code),
            "timestamp": exc.timestamp,
        },
    )
