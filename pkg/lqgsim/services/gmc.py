"""Gaussian multiplicative chaos on the mesh: cell masses, region sums, moments."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Optional

import numpy as np

from ..config import get_settings
from ..models.models import FieldEngine, FieldStack, MassGrid, RegionQuery, RegionShape
from ..schemas.schemas import MomentEstimate
from .errors import DomainError
from .field import field_at_scale, sample_stack
from .rng import StreamRole, replica_seed

logger = logging.getLogger(__name__)

MIN_MOMENT_REPLICAS = 100
_EDGE_TOL = 1e-9  # lattice units


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 2.0:
        raise DomainError(f"gamma must lie in [0, 2), got {gamma}")


def _masses(field: np.ndarray, variance: np.ndarray, gamma: float, N: int) -> np.ndarray:
    h2 = 1.0 / (N * N)
    if gamma == 0.0:
        return np.full((N, N), h2)
    return h2 * np.exp(gamma * field - 0.5 * gamma * gamma * variance)


def density_grid(stack: FieldStack, gamma: float) -> MassGrid:
    """h^2 * exp(gamma * field_J - gamma^2/2 * Var_J) for every mesh cell."""
    _check_gamma(gamma)
    field, variance = stack.full_field
    return MassGrid(stack.N, float(gamma), _masses(field, variance, gamma, stack.N))


def truncated_density_grid(stack: FieldStack, gamma: float, m: int) -> MassGrid:
    """Chaos built from octaves 0..m-1 only (the measure cut off below scale 2^-m)."""
    _check_gamma(gamma)
    field, variance = stack.partial_field(m)
    return MassGrid(stack.N, float(gamma), _masses(field, variance, gamma, stack.N))


def lebesgue_grid(N: int) -> MassGrid:
    return MassGrid(N, 0.0, np.full((N, N), 1.0 / (N * N)))


def _index_range(lo: float, hi: float, N: int) -> tuple[int, int]:
    a = max(int(math.ceil(lo * N - _EDGE_TOL)), 0)
    b = min(int(math.floor(hi * N + _EDGE_TOL)), N - 1)
    return a, b


def measure_region(mass: MassGrid, q: RegionQuery) -> float:
    """Sum of cell masses whose centers lie in the closed region."""
    N = mass.N
    x, y = q.anchor
    if q.shape == RegionShape.BOX:
        x0, x1 = _index_range(x, x + q.size, N)
        y0, y1 = _index_range(y, y + q.size, N)
        if x0 > x1 or y0 > y1:
            return 0.0
        return float(mass.cell_mass[y0 : y1 + 1, x0 : x1 + 1].sum())

    r_lat = q.size * N
    y0, y1 = _index_range(y - q.size, y + q.size, N)
    total = 0.0
    for iy in range(y0, y1 + 1):
        dy = iy - y * N
        half = math.sqrt(max(r_lat * r_lat - dy * dy, 0.0)) / N
        x0, x1 = _index_range(x - half, x + half, N)
        if x0 <= x1:
            total += mass.row_prefix[iy, x1 + 1] - mass.row_prefix[iy, x0]
    return float(total)


def isqrt_array(values: np.ndarray) -> np.ndarray:
    """Elementwise floor(sqrt(v)) for non-negative integer arrays."""
    values = np.asarray(values, dtype=np.int64)
    root = np.floor(np.sqrt(values.astype(float))).astype(np.int64)
    root = np.where((root + 1) * (root + 1) <= values, root + 1, root)
    return np.where(root * root > values, root - 1, root)


def lattice_disk_mass(mass: MassGrid, ix: np.ndarray, iy: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Mass of the closed lattice disks {|p - z|^2 <= r2} (lattice units), vectorized over centers."""
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    r2 = np.asarray(r2, dtype=np.int64)
    out = np.zeros(ix.shape)
    if ix.size == 0:
        return out
    N = mass.N
    reach = int(isqrt_array(r2.max()))
    for dy in range(-reach, reach + 1):
        rows = iy + dy
        live = (dy * dy <= r2) & (rows >= 0) & (rows < N)
        if not live.any():
            continue
        half = isqrt_array(np.where(live, r2 - dy * dy, 0))
        x0 = np.clip(ix - half, 0, N)
        x1 = np.clip(ix + half + 1, 0, N)
        safe_rows = np.clip(rows, 0, N - 1)
        seg = mass.row_prefix[safe_rows, x1] - mass.row_prefix[safe_rows, x0]
        out += np.where(live, seg, 0.0)
    return out


@lru_cache(maxsize=8)
def ring_levels(max_r2: int) -> np.ndarray:
    """Sorted distinct squared lattice distances a^2 + b^2 in 1..max_r2."""
    reach = math.isqrt(max_r2)
    a = np.arange(reach + 1)
    sums = np.unique((a[:, None] ** 2 + a[None, :] ** 2).ravel())
    levels = sums[(sums >= 1) & (sums <= max_r2)]
    levels.flags.writeable = False
    return levels


def approx_lqg_box(stack: FieldStack, gamma: float, depth: int, ix: int, iy: int) -> float:
    """Approximate LQG mass of the dyadic box (ix, iy) of side 2^-depth.

    Only the field at the box center, summed over octaves 0..depth-1, enters.
    """
    _check_gamma(gamma)
    side = 2.0 ** (-depth)
    if depth > stack.J:
        raise DomainError(f"box depth {depth} exceeds field depth {stack.J}")
    center = ((ix + 0.5) * side, (iy + 0.5) * side)
    value, variance = field_at_scale(stack, depth, center)
    return side * side * math.exp(gamma * value - 0.5 * gamma * gamma * variance)


def finite_moment_boundary(gamma: float) -> float:
    return math.inf if gamma == 0 else 4.0 / (gamma * gamma)


def jackknife_mean(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(values.mean())
    if n < 2:
        return mean, 0.0
    loo = (values.sum() - values) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.square(loo - loo.mean()).sum()))
    return mean, se


def moment_estimate(
    gamma: float,
    p: float,
    replicas: int,
    region: RegionQuery,
    N: Optional[int] = None,
    J: Optional[int] = None,
    engine: FieldEngine = FieldEngine.HAT_H,
    seed: int = 0,
    threads: Optional[int] = None,
) -> MomentEstimate:
    """Monte Carlo E[M(region)^p] with a jackknife standard error."""
    _check_gamma(gamma)
    if replicas < MIN_MOMENT_REPLICAS:
        raise DomainError(f"moment estimates need at least {MIN_MOMENT_REPLICAS} replicas")
    settings = get_settings()
    N = N or settings.default_grid_size
    J = J or int(math.log2(N)) - 2
    boundary = finite_moment_boundary(gamma)
    finite = p < boundary
    if not finite:
        logger.warning("Moment p=%.3g is outside the finite regime p < %.3g for gamma=%.3g", p, boundary, gamma)

    if gamma == 0.0:
        value = measure_region(lebesgue_grid(N), region)
        samples = np.full(replicas, value**p)
    else:
        def one(i: int) -> float:
            stack = sample_stack(engine, N, J, replica_seed(seed, i, StreamRole.FIELD), threads=1)
            return measure_region(density_grid(stack, gamma), region) ** p

        with ThreadPoolExecutor(max_workers=threads or settings.threads) as pool:
            samples = np.array(list(pool.map(one, range(replicas))))

    mean, se = jackknife_mean(samples)
    return MomentEstimate(
        gamma=gamma, p=p, replicas=replicas, mean=mean, se=se,
        finite_regime_flag=finite, regime_boundary=boundary,
    )
