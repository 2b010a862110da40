"""
CRM Router

Beginner guide:
- /crm/forecast evaluates the analytical CRM for given tau, J, F.
- /crm/fit fits tau, J, F to a panel's training window.
"""

from fastapi import APIRouter

from .. import schemas
from ..importers.panel_importer import panel_from_payload
from ..services.crm_service import crm_fit_with_diagnostics, crm_forecast, make_params
from ..services.preprocessing_service import split_panel

router = APIRouter(prefix="/crm", tags=["CRM"])


def _params_payload(params) -> schemas.CrmParamsPayload:
    return schemas.CrmParamsPayload(tau=params.tau.tolist(), J=params.J.tolist(), F=params.F.values.tolist())


@router.post("/forecast", response_model=schemas.CrmForecastResponse)
def forecast(request: schemas.CrmForecastRequest):
    """Row 0 of the result is q0; row k uses the injection held over (t_{k-1}, t_k]."""
    params = make_params(request.params.tau, request.params.J, request.params.F)
    q_hat = crm_forecast(params, request.times, request.I, request.p_wf, request.q0)
    return schemas.CrmForecastResponse(q_hat=q_hat.tolist())


@router.post("/fit", response_model=schemas.CrmFitResponse)
def fit(request: schemas.CrmFitRequest):
    panel = panel_from_payload(request.panel)
    split = split_panel(panel, request.fractions)
    result = crm_fit_with_diagnostics(panel, split, request.c_t, multistarts=request.multistarts, seed=request.seed)
    return schemas.CrmFitResponse(params=_params_payload(result.params), diagnostics=result.diagnostics)
