from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic import ConfigDict
from typing import Optional, Literal, Dict, Any, List, Tuple
from datetime import datetime
from pathlib import Path

# --- WELL SCHEMAS ---
# These classes define wells and the fluid constants shared by every module.
# Units are fixed repo-wide: days, psi, bbl/day, bbl, 1/psi, mD, cP, ft.


class FluidProps(BaseModel):
    """Fluid constants: total compressibility (1/psi) and viscosity (cP)."""
    model_config = ConfigDict(frozen=True)

    c_t: float = Field(1e-5, gt=0, description="Total compressibility (1/psi)")
    mu: float = Field(1.0, gt=0, description="Viscosity (cP)")


class Well(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, description="Well identifier")
    x: float = Field(..., description="Easting in grid length units")
    y: float = Field(..., description="Northing in grid length units")


class WellNetwork(BaseModel):
    """Injectors and producers of one field. Ids are unique across both lists."""
    model_config = ConfigDict(frozen=True)

    injectors: List[Well] = Field(..., min_length=1)
    producers: List[Well] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [w.id for w in self.injectors] + [w.id for w in self.producers]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"well ids must be unique across injectors and producers: {dupes}")
        return self

    @property
    def n_injectors(self) -> int:
        return len(self.injectors)

    @property
    def n_producers(self) -> int:
        return len(self.producers)

    @property
    def injector_ids(self) -> List[str]:
        return [w.id for w in self.injectors]

    @property
    def producer_ids(self) -> List[str]:
        return [w.id for w in self.producers]


# --- GRAPH CONSTRUCTION ---

class GraphBuildConfig(BaseModel):
    """Quadrant/octant search settings for the expert adjacency matrix."""
    model_config = ConfigDict(frozen=True)

    k: int = Field(1, ge=1, description="Producers kept per sector")
    sectors: Literal[4, 8] = Field(4, description="Quadrant (4) or octant (8) search")
    max_arrival: Optional[float] = Field(None, gt=0, description="Optional travel-time threshold")
    init_radius: float = Field(8.0, ge=0, description="Straight-ray seeding radius around sources (cells)")


# --- PI-GNN CONFIGURATION ---

class LossConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: float = Field(2.0, ge=1, description="Order of the L^m mismatch (2 = mean squared error)")
    lambda_q: float = Field(1.0, ge=0)
    lambda_p: float = Field(1.0, ge=0)
    lambda_f: float = Field(1.0, ge=0)
    residual_scale: Optional[float] = Field(
        None, gt=0, description="Physics residual normalization (bbl/day); None uses the training-mean rate"
    )


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    clip_norm: float = Field(1.0, gt=0)
    max_epochs: int = Field(5000, ge=0)
    patience: int = Field(200, ge=1)
    warmup_epochs: int = Field(1000, ge=0, description="Epochs before snapshot selection and the patience count start")
    connectivity_lr_scale: float = Field(10.0, gt=0, description="Learning-rate multiplier for the raw connectivity block")
    batch: Literal["full"] = "full"
    seeds: List[int] = Field(default_factory=lambda: list(range(10)), min_length=1)


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    graph_mode: Literal["expert", "self_learned"] = "expert"
    gcn_width: int = Field(16, ge=1)
    head_width: int = Field(32, ge=1)
    head_depth: int = Field(2, ge=1)
    use_injector_bhp: bool = True
    storage: Literal["per_producer", "time_varying"] = Field(
        "per_producer", description="J and V_p heads read a learned per-producer embedding or the time-dependent GCN features"
    )
    c_t: float = Field(1e-5, gt=0, description="Total compressibility used by the physics residual (1/psi)")
    j_scale: Optional[float] = Field(None, gt=0, description="Scale of the productivity head (bbl/day/psi)")
    tau_scale: Optional[float] = Field(None, gt=0, description="Reference time constant setting the V_p head scale (days)")


# --- SYNTHETIC CASES ---

class ChannelFieldConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int = Field(100, ge=2)
    ny: int = Field(100, ge=2)
    dx: float = Field(50.0, gt=0)
    dy: float = Field(50.0, gt=0)
    k_net: float = Field(100.0, gt=0, description="Channel permeability (mD)")
    k_bank: float = Field(1.0, gt=0, description="Overbank permeability (mD)")
    phi_const: float = Field(0.15, gt=0, lt=1)
    channel_count: int = Field(3, ge=1)
    channel_width: float = Field(400.0, gt=0, description="Channel band width (ft)")
    amplitude: float = Field(400.0, ge=0, description="Sinusoid amplitude (ft)")
    wavelength: float = Field(2500.0, gt=0, description="Sinusoid wavelength (ft)")
    mu_cp: float = Field(1.0, gt=0)
    ct_per_psi: float = Field(1e-5, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _contrast(self):
        if not self.k_net > self.k_bank:
            raise ValueError("k_net must exceed k_bank")
        return self


class ScheduleConfig(BaseModel):
    """Piecewise-constant injection per injector (list of (start_day, rate)) and constant producer BHP."""
    model_config = ConfigDict(frozen=True)

    horizon: float = Field(2000.0, gt=0)
    step: float = Field(10.0, gt=0)
    injection: List[List[Tuple[float, float]]] = Field(
        default_factory=lambda: [
            [(0.0, 400.0), (500.0, 800.0), (1100.0, 300.0), (1600.0, 650.0)],
            [(0.0, 600.0), (700.0, 200.0), (1300.0, 750.0)],
        ]
    )
    producer_bhp: List[float] = Field(default_factory=lambda: [1000.0])

    @field_validator("injection")
    @classmethod
    def _rates_nonnegative(cls, v):
        for steps in v:
            if not steps:
                raise ValueError("each injector needs at least one rate step")
            for start, rate in steps:
                if rate < 0:
                    raise ValueError(f"injection rate must be >= 0, got {rate}")
                if start < 0:
                    raise ValueError(f"step start must be >= 0, got {start}")
        return v

    @model_validator(mode="after")
    def _integral_horizon(self):
        n = self.horizon / self.step
        if abs(n - round(n)) > 1e-9:
            raise ValueError("horizon must be an integral multiple of step")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))


class SimulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    initial_pressure: float = Field(3000.0, gt=0, description="psi")
    thickness: float = Field(20.0, gt=0, description="Layer thickness (ft)")
    well_radius: float = Field(0.25, gt=0, description="Wellbore radius (ft)")
    max_active_set_iterations: int = Field(10, ge=1)


class CrmWorldConfig(BaseModel):
    """Generating CRM parameters for an exactly identifiable synthetic panel."""

    tau: List[float] = Field(..., min_length=1)
    J: List[float] = Field(..., min_length=1)
    F: List[List[float]] = Field(..., min_length=1)
    q0: List[float] = Field(..., min_length=1)
    noise: float = Field(0.0, ge=0, description="Noise std as a fraction of the mean rate")
    seed: int = 0
    initial_pressure: float = Field(3000.0, gt=0)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)


class SynthConfig(BaseModel):
    grid: ChannelFieldConfig = Field(default_factory=ChannelFieldConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    case_count: int = Field(4, ge=1)
    seed: int = 0
    n_injectors: int = Field(2, ge=1)
    n_producers: int = Field(4, ge=1)
    min_spacing: float = Field(5.0, ge=0, description="Minimum well spacing (cells)")
    crm_world: Optional[CrmWorldConfig] = None


class TrainRunConfig(BaseModel):
    """Settings of a single `train` run; command-line flags override graph_mode, physics and seeds."""

    fractions: Tuple[float, float, float] = (0.70, 0.05, 0.25)
    graph_mode: Literal["expert", "self_learned"] = "expert"
    physics: bool = True
    seeds: List[int] = Field(default_factory=lambda: list(range(10)), min_length=1)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


class GradcheckConfig(BaseModel):
    n_injectors: int = Field(2, ge=1)
    n_producers: int = Field(4, ge=1)
    n_rows: int = Field(50, ge=10)
    seed: int = 0
    h: float = Field(1e-5, gt=0)
    tolerance: float = Field(1e-4, gt=0)
    mixed_tolerance: float = Field(1e-3, gt=0)
    model: ModelConfig = Field(default_factory=lambda: ModelConfig(graph_mode="self_learned", gcn_width=4, head_width=8))
    loss: LossConfig = Field(default_factory=LossConfig)


# --- BENCHMARK ---

class CaseConfig(BaseModel):
    name: str
    grid_dir: Optional[str] = None
    wells_path: str
    panel_path: str
    adjacency_path: Optional[str] = None
    fractions: Tuple[float, float, float] = (0.70, 0.05, 0.25)
    graph_mode: Literal["expert", "self_learned"] = "expert"
    physics: bool = True
    seeds: List[int] = Field(default_factory=lambda: list(range(10)), min_length=1)
    output_dir: Optional[str] = None
    graph: GraphBuildConfig = Field(default_factory=GraphBuildConfig)
    c_t: float = Field(1e-5, gt=0)

    @field_validator("fractions")
    @classmethod
    def _fractions_valid(cls, v):
        if any(f <= 0 for f in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"fractions must be positive and sum to 1, got {v}")
        return v

    @model_validator(mode="after")
    def _files_exist(self):
        for label, path in (("wells_path", self.wells_path), ("panel_path", self.panel_path),
                            ("grid_dir", self.grid_dir), ("adjacency_path", self.adjacency_path)):
            if path is not None and not Path(path).exists():
                raise ValueError(f"{label} does not exist: {path}")
        if self.grid_dir is None and self.adjacency_path is None and self.graph_mode == "expert":
            raise ValueError("expert graph mode needs grid_dir or adjacency_path")
        return self


class BenchmarkConfig(BaseModel):
    cases: List[CaseConfig] = Field(..., min_length=1)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    crm_multistarts: int = Field(8, ge=1)
    crm_seed: int = 0


class ConnectivityPayload(BaseModel):
    injector_ids: List[str]
    producer_ids: List[str]
    values: List[List[float]]


class MethodResult(BaseModel):
    method: str
    status: Literal["ok", "failed"] = "ok"
    per_producer: Dict[str, float] = Field(default_factory=dict)
    total: Optional[float] = None
    error: Optional[Dict[str, Any]] = None
    duration_s: float = 0.0


class CaseResult(BaseModel):
    case: str
    producer_ids: List[str]
    methods: List[MethodResult]
    best_method: Optional[str] = None
    connectivity: Dict[str, ConnectivityPayload] = Field(default_factory=dict)


class RunMetadata(BaseModel):
    seeds: List[int]
    config_hash: str
    created_at: str
    durations: Dict[str, float] = Field(default_factory=dict)


class BenchmarkReport(BaseModel):
    cases: List[CaseResult]
    metadata: RunMetadata

    def body(self) -> Dict[str, Any]:
        """Report content without timing metadata (deterministic across reruns)."""
        cases = []
        for case in self.cases:
            payload = case.model_dump()
            for method in payload["methods"]:
                method.pop("duration_s", None)
                if method.get("error"):
                    method["error"].pop("timestamp", None)
            cases.append(payload)
        return {"cases": cases, "seeds": self.metadata.seeds, "config_hash": self.metadata.config_hash}


# --- API REQUEST / RESPONSE SCHEMAS ---

class GridPayload(BaseModel):
    nx: int = Field(..., ge=2)
    ny: int = Field(..., ge=2)
    dx: float = Field(..., gt=0)
    dy: float = Field(..., gt=0)
    mu_cp: float = Field(1.0, gt=0)
    ct_per_psi: float = Field(1e-5, gt=0)
    perm: List[List[float]]
    phi: List[List[float]]


class GraphBuildRequest(BaseModel):
    grid: GridPayload
    wells: WellNetwork
    config: GraphBuildConfig = Field(default_factory=GraphBuildConfig)


class AdjacencyResponse(BaseModel):
    injector_ids: List[str]
    producer_ids: List[str]
    values: List[List[int]]
    arrivals: List[List[float]]


class CrmParamsPayload(BaseModel):
    tau: List[float]
    J: List[float]
    F: List[List[float]]


class CrmForecastRequest(BaseModel):
    params: CrmParamsPayload
    times: List[float]
    I: List[List[float]]
    p_wf: List[List[float]]
    q0: List[float]


class CrmForecastResponse(BaseModel):
    q_hat: List[List[float]]


class PanelPayload(BaseModel):
    injector_ids: List[str]
    producer_ids: List[str]
    times: List[float]
    I: List[List[float]]
    p_I: List[List[float]]
    q: List[List[float]]
    p_wf: List[List[float]]


class CrmFitConfig(BaseModel):
    c_t: float = Field(1e-5, gt=0)
    fractions: Tuple[float, float, float] = (0.70, 0.05, 0.25)
    multistarts: int = Field(8, ge=1)
    seed: int = 0


class CrmFitRequest(CrmFitConfig):
    panel: PanelPayload


class CrmFitResponse(BaseModel):
    params: CrmParamsPayload
    diagnostics: Dict[str, Any]


class RmseRequest(BaseModel):
    observed: List[float]
    predicted: List[float]


class RmseResponse(BaseModel):
    rmse: float


class BenchmarkRunRead(BaseModel):
    id: int
    created_at: datetime
    config_hash: str
    status: str
    duration_s: float
    seeds: str
    report: Optional[Dict[str, Any]] = None

    model_config = ConfigDict(from_attributes=True)
