"""
Metrics Router

Beginner guide:
- POST observed and predicted series; receive their RMSE.
"""

from fastapi import APIRouter

from .. import schemas
from ..services.metrics_service import rmse

router = APIRouter(prefix="/metrics", tags=["Metrics"])


@router.post("/rmse", response_model=schemas.RmseResponse)
def compute_rmse(request: schemas.RmseRequest):
    return schemas.RmseResponse(rmse=rmse(request.observed, request.predicted))
