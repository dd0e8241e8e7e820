# app/schemas.py
import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, PrivateAttr, model_validator

from app.errors import WidthLookupError

Metric = Literal["width", "params"]
FilterStyle = Literal["dense", "depthwise"]

# |T * L - FLOPs| / FLOPs must stay below this for every profile row
ROW_REL_TOL = 1e-9


class BlockPerFilter(BaseModel):
    """One thread block per convolution filter."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["block_per_filter"] = "block_per_filter"


class FixedThreadsPerBlock(BaseModel):
    """Blocks hold a fixed number of threads; filters are packed across blocks."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["fixed_threads_per_block"] = "fixed_threads_per_block"
    threads_per_block: PositiveInt


MappingPolicy = Annotated[Union[BlockPerFilter, FixedThreadsPerBlock], Field(discriminator="kind")]


class GpuSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    sm_count: PositiveInt
    peak_flops: float = Field(gt=0)  # FLOP/s, whole device
    efficiency: float = Field(default=1.0, gt=0, le=1)
    launch_overhead_s: float = Field(default=0.0, ge=0)
    mapping_policy: MappingPolicy = Field(default_factory=BlockPerFilter)

    @property
    def peak_flops_per_sm(self) -> float:
        return self.peak_flops / self.sm_count


class LayerSpec(BaseModel):
    """Workload of one convolutional layer (same padding, stride 1)."""
    model_config = ConfigDict(frozen=True)

    layer_id: str
    filters: PositiveInt
    kernel_h: PositiveInt = 3
    kernel_w: PositiveInt = 3
    in_depth: PositiveInt
    in_h: PositiveInt
    in_w: PositiveInt
    batch: PositiveInt = 1
    filter_style: FilterStyle = "dense"

    @property
    def effective_depth(self) -> int:
        return 1 if self.filter_style == "depthwise" else self.in_depth

    def with_filters(self, filters: int) -> "LayerSpec":
        return self.model_copy(update={"filters": filters})


class ThreadMapping(BaseModel):
    model_config = ConfigDict(frozen=True)

    threads_per_filter: PositiveInt
    threads_per_block: PositiveInt
    blocks: PositiveInt
    waves: PositiveInt
    cycle_time: float  # seconds per wave


class ProfileRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: PositiveInt
    latency: float = Field(gt=0)
    flops: float = Field(gt=0)
    utilization: float = Field(gt=0, le=1)
    throughput: float = Field(gt=0)

    @model_validator(mode="after")
    def _throughput_matches_workload(self):
        if not math.isclose(self.throughput * self.latency, self.flops, rel_tol=ROW_REL_TOL):
            raise ValueError(
                f"throughput x latency ({self.throughput * self.latency!r}) "
                f"does not reproduce flops ({self.flops!r}) at width {self.width}"
            )
        return self


class ProfileTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer_id: str
    base_layer: Optional[LayerSpec] = None
    rows: List[ProfileRow] = Field(min_length=1)
    source: Literal["analytical", "empirical"]
    utilization_estimated: bool = False

    _index: Dict[int, ProfileRow] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def _widths_strictly_increasing(self):
        widths = [r.width for r in self.rows]
        for prev, cur in zip(widths, widths[1:]):
            if cur <= prev:
                raise ValueError(f"widths must be strictly increasing, got {prev} then {cur}")
        return self

    def model_post_init(self, __context: Any) -> None:
        self._index = {r.width: r for r in self.rows}

    @property
    def widths(self) -> List[int]:
        return [r.width for r in self.rows]

    def has_width(self, width: int) -> bool:
        return width in self._index

    def row(self, width: int) -> ProfileRow:
        try:
            return self._index[width]
        except KeyError:
            raise WidthLookupError(self.layer_id, width) from None

    def latency(self, width: int) -> float:
        return self.row(width).latency

    def up_to(self, width: int) -> "ProfileTable":
        """Rows no wider than `width`."""
        if self.rows[-1].width <= width:
            return self
        return ProfileTable(
            layer_id=self.layer_id,
            base_layer=self.base_layer,
            rows=[r for r in self.rows if r.width <= width],
            source=self.source,
            utilization_estimated=self.utilization_estimated,
        )


class CandidateSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer_id: str
    candidates: List[int]
    scores: List[float]  # U x T, aligned with candidates
    m: PositiveInt


class ModelLayer(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer: LayerSpec
    width: PositiveInt  # current R_i

    @model_validator(mode="after")
    def _width_within_filters(self):
        if self.width > self.layer.filters:
            raise ValueError(
                f"layer {self.layer.layer_id}: width {self.width} exceeds filters {self.layer.filters}"
            )
        return self


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "model"
    layers: List[ModelLayer] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_layer_ids(self):
        seen = set()
        for entry in self.layers:
            if entry.layer.layer_id in seen:
                raise ValueError(f"duplicate layer_id {entry.layer.layer_id}")
            seen.add(entry.layer.layer_id)
        return self

    @property
    def layer_ids(self) -> List[str]:
        return [entry.layer.layer_id for entry in self.layers]


class LayerGain(BaseModel):
    """Per-layer move estimates taken once, before the greedy rounds."""
    layer_id: str
    r_old: int
    scale_down: Optional[int] = None
    scale_up: Optional[int] = None
    latency_gain: float = 0.0  # LG of the scale-down move, 0 when there is none
    pg_down: int = 0
    pg_up: int = 0


class GainLedger(BaseModel):
    metric: Metric
    entries: List[LayerGain]


class LayerDecision(BaseModel):
    layer_id: str
    r_old: int
    r_new: int
    lg_seconds: float
    pg: int
    params_per_filter: int
    action: Literal["down", "up", "keep"]


class OptimizationPlan(BaseModel):
    model_name: str
    mode: Literal["latency", "accuracy"]
    metric: Metric
    layers: List[LayerDecision]
    total_lg: float
    total_pg: int
    latency_old: float
    latency_new: float
    tau_final: Optional[float] = None
    delta_target: Optional[float] = None
    feasible: bool
    notes: List[str] = []
    pending_steps: List[str] = []

    @property
    def latency_ratio(self) -> float:
        return self.latency_new / self.latency_old

    def widths(self) -> Dict[str, int]:
        return {d.layer_id: d.r_new for d in self.layers}


class RunManifest(BaseModel):
    command: str
    input_paths: List[str] = []
    parameter_echo: Dict[str, Any] = {}
    tool_version: str
    output_paths: List[str] = []
    notes: List[str] = []


class VerifyCheck(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class VerifyReport(BaseModel):
    checks: List[VerifyCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        return "".join(
            f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f": {c.detail}" if c.detail else "") + "\n"
            for c in self.checks
        )


# --- HTTP request bodies -----------------------------------------------------

class StaircaseRequest(BaseModel):
    layer: LayerSpec
    gpu: Union[GpuSpec, str]  # spec or catalog name
    widths: Optional[str] = None  # "64:512", "10%:100%:10%", ...


class CandidatesRequest(StaircaseRequest):
    m: PositiveInt = 5


class OptimizeRequest(BaseModel):
    model: ModelConfig
    gpu: Union[GpuSpec, str]
    mode: Literal["latency", "accuracy"] = "latency"
    m: Optional[PositiveInt] = None
    tau: Optional[float] = Field(default=None, gt=0)
    delta: Optional[float] = Field(default=None, gt=0, le=1)
    metric: Optional[Metric] = None
    max_retries: Optional[int] = Field(default=None, ge=0)


class VerifyRequest(BaseModel):
    plan: OptimizationPlan
    model: ModelConfig
    gpu: Union[GpuSpec, str]
    delta: Optional[float] = Field(default=None, gt=0, le=1)
