"""
Graph Router

Beginner guide:
- POST a grid, a well network and search settings; receive the expert
  adjacency matrix and the injector-to-producer arrival times behind it.
"""

from fastapi import APIRouter

from .. import schemas
from ..importers.grid_importer import grid_from_payload
from ..services.eikonal_service import build_graph_with_arrivals

router = APIRouter(prefix="/graph", tags=["Graph"])


@router.post("/build", response_model=schemas.AdjacencyResponse)
def build_graph(request: schemas.GraphBuildRequest):
    """Fast-marching arrivals plus quadrant/octant selection."""
    grid = grid_from_payload(request.grid)
    graph = build_graph_with_arrivals(grid, request.wells, request.config)
    return schemas.AdjacencyResponse(
        injector_ids=list(graph.adjacency.injector_ids),
        producer_ids=list(graph.adjacency.producer_ids),
        values=graph.adjacency.values.tolist(),
        arrivals=graph.arrivals.tolist(),
    )
