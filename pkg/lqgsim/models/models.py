"""Core domain types: enums and immutable array-backed containers."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from ..services.errors import DomainError


class FieldEngine(str, enum.Enum):
    TILDE_H = "tilde_h"
    ETA = "eta"
    HAT_H = "hat_h"


class KernelDomain(str, enum.Enum):
    WHOLE_PLANE = "whole_plane"
    UNIT_SQUARE_KILLED = "unit_square_killed"
    BALL_TRUNCATED = "ball_truncated"


class RegionShape(str, enum.Enum):
    BOX = "box"
    BALL = "ball"


class RadiusVariant(str, enum.Enum):
    STANDARD = "standard"
    DOUBLED = "doubled"
    CIRCLE_AVG = "circle_avg"


class DistanceKind(str, enum.Enum):
    D = "D"
    D_PRIME = "D_prime"
    D_DOUBLED = "D2"
    D_CIRCLE = "D_circle"


class EstimateMode(str, enum.Enum):
    ANNEALED = "annealed"
    QUENCHED = "quenched"


ENGINE_TAGS: dict[FieldEngine, int] = {
    FieldEngine.TILDE_H: 0,
    FieldEngine.ETA: 1,
    FieldEngine.HAT_H: 2,
}

VARIANT_FOR_KIND: dict[DistanceKind, RadiusVariant] = {
    DistanceKind.D: RadiusVariant.STANDARD,
    DistanceKind.D_DOUBLED: RadiusVariant.DOUBLED,
    DistanceKind.D_CIRCLE: RadiusVariant.CIRCLE_AVG,
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class KernelSpec:
    domain: KernelDomain
    time: float
    radius: Optional[float] = None

    def __post_init__(self):
        if not self.time > 0:
            raise DomainError(f"kernel time must be positive, got {self.time}")
        if self.domain == KernelDomain.BALL_TRUNCATED and not (self.radius and self.radius > 0):
            raise DomainError("ball_truncated kernel needs a positive radius")


@dataclass(frozen=True)
class FieldStack:
    """Per-octave Gaussian layers of a log-correlated field on the N×N lattice.

    ``layers[j]`` is the octave between scales 2^-(j+1) and 2^-j and
    ``var_profile[j]`` is its exact model variance at every grid point.
    """

    engine: FieldEngine
    N: int
    J: int
    seed: int
    time_slices_per_octave: int
    layers: np.ndarray
    var_profile: np.ndarray

    def __post_init__(self):
        shape = (self.J, self.N, self.N)
        if self.layers.shape != shape or self.var_profile.shape != shape:
            raise DomainError(f"layer arrays must have shape {shape}")
        object.__setattr__(self, "layers", _frozen(self.layers))
        object.__setattr__(self, "var_profile", _frozen(self.var_profile))

    @property
    def mesh(self) -> float:
        return 1.0 / self.N

    def partial_field(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Sum of octaves 0..m-1 and its variance, as full grids."""
        if not 0 <= m <= self.J:
            raise DomainError(f"octave count {m} outside 0..{self.J}")
        if m == 0:
            zeros = np.zeros((self.N, self.N))
            return zeros, zeros.copy()
        return self.layers[:m].sum(axis=0), self.var_profile[:m].sum(axis=0)

    @cached_property
    def full_field(self) -> tuple[np.ndarray, np.ndarray]:
        return self.partial_field(self.J)


@dataclass(frozen=True)
class MassGrid:
    """GMC mass of every mesh cell; rows are indexed by y, columns by x."""

    N: int
    gamma: float
    cell_mass: np.ndarray
    row_prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cell_mass", _frozen(self.cell_mass))
        prefix = np.zeros((self.N, self.N + 1))
        np.cumsum(self.cell_mass, axis=1, out=prefix[:, 1:])
        object.__setattr__(self, "row_prefix", _frozen(prefix))

    @property
    def mesh(self) -> float:
        return 1.0 / self.N

    @property
    def total(self) -> float:
        return float(self.cell_mass.sum())


@dataclass(frozen=True)
class RegionQuery:
    shape: RegionShape
    anchor: tuple[float, float]
    size: float

    @classmethod
    def box(cls, corner: tuple[float, float], side: float) -> "RegionQuery":
        return cls(RegionShape.BOX, (float(corner[0]), float(corner[1])), float(side))

    @classmethod
    def ball(cls, center: tuple[float, float], radius: float) -> "RegionQuery":
        return cls(RegionShape.BALL, (float(center[0]), float(center[1])), float(radius))

    def __post_init__(self):
        if self.size < 0:
            raise DomainError("region size must be non-negative")
        x, y = self.anchor
        if self.shape == RegionShape.BOX:
            hits = x <= 1 and y <= 1 and x + self.size >= 0 and y + self.size >= 0
        else:
            dx = max(0.0 - x, 0.0, x - 1.0)
            dy = max(0.0 - y, 0.0, y - 1.0)
            hits = dx * dx + dy * dy <= self.size * self.size
        if not hits:
            raise DomainError(f"region {self.shape.value} at {self.anchor} misses the unit square")


@dataclass(frozen=True)
class Cell:
    id: int
    depth: int
    ix: int
    iy: int
    approx_mass: float

    @property
    def side(self) -> float:
        return 2.0 ** (-self.depth)

    @property
    def center(self) -> tuple[float, float]:
        s = self.side
        return ((self.ix + 0.5) * s, (self.iy + 0.5) * s)


@dataclass(frozen=True)
class CellPartition:
    """Leaves of the random dyadic partition plus their adjacency graph.

    ``labels`` is the leaf id of every finest-resolution square
    (2^depth_cap per side) and doubles as the point locator.
    """

    delta: float
    gamma: float
    depth_cap: int
    leaves: list[Cell]
    edges: np.ndarray
    labels: np.ndarray
    parent_masses: dict[tuple[int, int, int], float]
    depth_cap_hit: bool

    def __post_init__(self):
        object.__setattr__(self, "edges", _frozen(self.edges))
        object.__setattr__(self, "labels", _frozen(self.labels))


@dataclass(frozen=True)
class RadiusField:
    """Maximal admissible ball radius at every grid point.

    Radii are stored as integer squared radii in lattice units (``r2``);
    ``r2 == 0`` means no admissible ball is centered there.
    """

    variant: RadiusVariant
    delta: float
    gamma: float
    N: int
    r2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r2", _frozen(self.r2.astype(np.int64, copy=False)))

    @property
    def mesh(self) -> float:
        return 1.0 / self.N

    @property
    def r(self) -> np.ndarray:
        return np.sqrt(self.r2) * self.mesh


@dataclass(frozen=True)
class BallHopResult:
    """Outcome of one ball-hop search.

    When connected, ``witness_path`` holds ``distance`` ball centers with
    squared lattice radii ``witness_r2`` taken from the radius field. The
    first ball contains the grid point nearest u, the last contains the grid
    point nearest v, and consecutive balls share at least one grid point.
    Centers need not lie inside the previous ball.
    """

    distance: Optional[int]
    witness_path: list[tuple[float, float]]
    expanded_nodes: int
    disconnected: bool = False
    witness_r2: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class Trajectory:
    dt: float
    positions: np.ndarray
    killed_at: Optional[int] = None
    pcaf: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(self.positions))
        if self.pcaf is not None:
            if len(self.pcaf) != len(self.positions):
                raise DomainError("pcaf must have one value per position")
            object.__setattr__(self, "pcaf", _frozen(self.pcaf))
