from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from typing import Optional
import math
import re

from ..models.models import DistanceKind, EstimateMode, FieldEngine, RadiusVariant

Point = tuple[float, float]

_DYADIC_RANGE = re.compile(r"^\s*2\^(-?\d+)\s*\.\.\s*2\^(-?\d+)\s*$")
_DYADIC_SINGLE = re.compile(r"^\s*2\^(-?\d+)\s*$")


def parse_scale_list(value):
    """Accept '2^-3..2^-7', '0.1,0.05', '2^-3,2^-4' or an actual list."""
    if not isinstance(value, str):
        return value
    match = _DYADIC_RANGE.match(value)
    if match:
        a, b = int(match.group(1)), int(match.group(2))
        step = 1 if b >= a else -1
        return [2.0**k for k in range(a, b + step, step)]
    out = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        single = _DYADIC_SINGLE.match(part)
        out.append(2.0 ** int(single.group(1)) if single else float(part))
    return out


def parse_point(value):
    if isinstance(value, str):
        parts = [p for p in re.split(r"[,\s;]+", value.strip("()[] ")) if p]
        return tuple(float(p) for p in parts)
    return value


# --- Run configs (one per CLI command) ---

class RunConfigBase(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    seed: int = Field(default=0, ge=0)
    gamma: float = Field(default=1.0, ge=0.0, lt=2.0)
    engine: FieldEngine = FieldEngine.HAT_H
    N: int = Field(default=256, ge=16, le=2048)
    J: Optional[int] = None
    slices: int = Field(default=4, ge=1, le=64)
    threads: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[str] = None

    @field_validator("N")
    @classmethod
    def check_power_of_two(cls, v: int) -> int:
        if v & (v - 1):
            raise ValueError("must be a power of two")
        return v

    @model_validator(mode="after")
    def resolve_octaves(self):
        max_j = int(math.log2(self.N)) - 2
        if self.J is None:
            self.J = max_j
        if not 1 <= self.J <= max_j:
            raise ValueError(f"J must lie in 1..{max_j} for N={self.N}")
        return self


class FieldSampleConfig(RunConfigBase):
    dump: bool = True
    moment_p: list[float] = Field(default_factory=list)
    moment_replicas: int = Field(default=100, ge=100)
    continuity_replicas: int = Field(default=0, ge=0)

    coerce_moments = field_validator("moment_p", mode="before")(parse_scale_list)


class PartitionConfig(RunConfigBase):
    delta: float = Field(gt=0.0, le=1.0)
    depth_cap: Optional[int] = None
    u: Optional[Point] = None
    v: Optional[Point] = None

    coerce_points = field_validator("u", "v", mode="before")(parse_point)

    @model_validator(mode="after")
    def resolve_depth_cap(self):
        if self.depth_cap is None:
            self.depth_cap = self.J - 2
        if not 0 <= self.depth_cap <= self.J - 2:
            raise ValueError(f"depth_cap must lie in 0..{self.J - 2}")
        return self


class DistanceConfig(RunConfigBase):
    delta: float = Field(gt=0.0, le=1.0)
    variant: RadiusVariant = RadiusVariant.STANDARD
    u: Point = (0.25, 0.5)
    v: Point = (0.75, 0.5)
    margin: float = Field(default=0.0, ge=0.0, lt=0.5)
    compare_variants: bool = False

    coerce_points = field_validator("u", "v", mode="before")(parse_point)


class ChiConfig(RunConfigBase):
    deltas: list[float] = Field(default_factory=lambda: [2.0**-k for k in range(3, 8)])
    replicas: int = Field(default=20, ge=1)
    kind: DistanceKind = DistanceKind.D
    u: Point = (0.25, 0.5)
    v: Point = (0.75, 0.5)
    max_drop_fraction: float = Field(default=0.1, ge=0.0, le=1.0)
    checks: list[str] = Field(default_factory=list)
    boundary_lambda: float = Field(default=0.1, gt=0.0)

    coerce_points = field_validator("u", "v", mode="before")(parse_point)
    coerce_scales = field_validator("deltas", mode="before")(parse_scale_list)

    @field_validator("checks", mode="before")
    @classmethod
    def split_checks(cls, v):
        if isinstance(v, str):
            return [c.strip() for c in v.split(",") if c.strip()]
        return v

    @field_validator("checks")
    @classmethod
    def check_known(cls, v: list[str]) -> list[str]:
        known = {"subadditivity", "concentration", "point_to_boundary", "variants", "cell_sizes", "prime_equivalence"}
        unknown = set(v) - known
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}; choose from {sorted(known)}")
        return v

    @field_validator("deltas")
    @classmethod
    def check_dyadic_scales(cls, v: list[float]) -> list[float]:
        if len(v) < 4:
            raise ValueError("need at least 4 scales")
        for d in v:
            k = -math.log2(d)
            if not (0 < d < 1 and abs(k - round(k)) < 1e-12):
                raise ValueError(f"scale {d} is not a dyadic 2^-k")
        return sorted(v, reverse=True)

    @model_validator(mode="after")
    def check_endpoints(self):
        for p in (self.u, self.v):
            if not all(0.0 < c < 1.0 for c in p):
                raise ValueError(f"endpoint {p} must be interior")
        if math.dist(self.u, self.v) < 0.25:
            raise ValueError("endpoints must be at least 1/4 apart")
        return self


class HeatParams(BaseModel):
    t_grid: list[float] = Field(default_factory=lambda: [0.005, 0.01, 0.02, 0.05])
    r: float = Field(default=2.0**-6, gt=0.0)
    heat_replicas: int = Field(default=1000, ge=1000)
    dt: float = Field(default=1e-5, gt=0.0, le=1e-4)
    mode: EstimateMode = EstimateMode.ANNEALED
    paths_per_field: int = Field(default=1, ge=1)
    horizon_factor: float = Field(default=64.0, ge=1.0)
    dt_check: bool = False
    heat_u: Point = (0.4, 0.5)
    heat_v: Point = (0.6, 0.5)
    on_diagonal_correction: bool = True

    coerce_heat_points = field_validator("heat_u", "heat_v", mode="before")(parse_point)
    coerce_times = field_validator("t_grid", mode="before")(parse_scale_list)

    @model_validator(mode="after")
    def check_target_radius(self):
        N = getattr(self, "N", None)
        if N and self.r < 2.0 / N:
            raise ValueError("target radius must be at least two mesh steps")
        return self


class HeatConfig(RunConfigBase, HeatParams):
    pass


class ConsistencyConfig(ChiConfig, HeatParams):
    pass


class ReportConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run_dir: str
    output_dir: Optional[str] = None


# --- Result records ---

class MomentEstimate(BaseModel):
    gamma: float
    p: float
    replicas: int
    mean: float
    se: float
    finite_regime_flag: bool
    regime_boundary: float


class HeatKernelEstimate(BaseModel):
    t: float
    r: float
    q_hat: float = Field(ge=0.0, le=1.0)
    q_se: float
    p_hat: float
    replicas: int
    mode: EstimateMode = EstimateMode.ANNEALED
    below_resolution: bool = False
    q_upper: Optional[float] = None
    unreached: int = 0


class FitResult(BaseModel):
    slope: float
    intercept: float
    slope_se: float
    points: int


class ChiEstimate(BaseModel):
    gamma: float
    deltas: list[float]
    mean_log: list[float]
    se_log: list[float]
    counts: list[int]
    slope: float
    slope_se: float
    intercept: float
    kind: DistanceKind
    engine: FieldEngine
    N: int
    replicas: int
    dropped: int = 0
    capped: int = 0
    kpz_bound: float

    @computed_field
    @property
    def bound_ok(self) -> bool:
        return self.slope <= self.kpz_bound + 0.05

    @computed_field
    @property
    def floor_ok(self) -> bool:
        return self.gamma == 0 or self.slope >= 0.1


class SubadditivityRow(BaseModel):
    delta: float
    delta_tilde: float
    chi_delta: float
    chi_delta_tilde: float
    chi_product: float
    defect: float
    se: float


class ConcentrationRow(BaseModel):
    delta: float
    std_log: float
    ratio: float
    n: int


class BoundaryRow(BaseModel):
    delta: float
    mean_log_min: float
    se: float
    n: int


class VariantRow(BaseModel):
    replica: int
    delta: float
    d_standard: Optional[int]
    d_doubled: Optional[int]
    d_circle: Optional[int]


class ContinuityRow(BaseModel):
    octaves: int
    lag: int
    distance: float
    increment_var: float
    constant: float


class PrimeEquivalenceRow(BaseModel):
    replica: int
    delta: float
    d: Optional[int]
    d_prime: int
    log_gap: Optional[float]
    within: bool
    capped: bool = False


class PrimeEquivalenceSummary(BaseModel):
    n: int
    agreeing: int
    fraction: float
    required: float

    @computed_field
    @property
    def passed(self) -> bool:
        return self.n > 0 and self.fraction >= self.required


class ConsistencyResult(BaseModel):
    gamma: float
    chi: float
    heat_slope: float
    target: float
    residual: float


class PartitionStats(BaseModel):
    leaf_count: int
    min_side: float
    max_side: float
    degree_histogram: dict[int, int]
    side_square_sum: float
    depth_cap_hit: bool


class CellSizeRow(BaseModel):
    delta: float
    replicas: int
    min_side: float
    max_side: float
    c_min: float
    c_max: float
    capped: int


# --- CSV rows ---

class DistanceRow(BaseModel):
    gamma: float
    delta: float
    variant: RadiusVariant
    N: int
    seed: int
    u: str
    v: str
    distance: Optional[int]
    expanded_nodes: int
    wall_ms: float


class SampleRow(BaseModel):
    replica: int
    delta: float
    distance: Optional[float]


class OctaveRow(BaseModel):
    octave: int
    sample_var: float
    model_var: float


class HeatRow(BaseModel):
    gamma: float
    t: float
    r: float
    replicas: int
    q_hat: float
    q_se: float
    p_hat: float
    mode: EstimateMode
    seed_base: int
    unreached: int = 0


class ChiRow(BaseModel):
    delta: float
    mean_logD: float
    se: float
    n: int


class HeatFigureRow(BaseModel):
    t: float
    log_inv_t: float
    log_level: float
    se: float


class MomentRow(BaseModel):
    gamma: float
    p: float
    replicas: int
    mean: float
    se: float
    finite_regime_flag: bool


class RunManifest(BaseModel):
    command: str
    config: dict
    seeds: dict[str, int]
    version: str
    numpy_version: str
    scipy_version: str
    wall_time_s: float
    outputs: list[str] = []
    status: str = "ok"