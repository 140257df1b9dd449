"""Ball-covering graph distance on the lattice: radius fields and ball-hop search.

Ball centers are grid points and radii are stored as squared lattice radii.
A ball is the set of grid points in the closed disk; it is admissible when
that set has measure at most delta^2 (or the variant's weight). Two balls are
adjacent when they share a grid point.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from numba import njit
from scipy import ndimage

from ..models.models import BallHopResult, MassGrid, RadiusField, RadiusVariant
from .errors import DomainError, InvariantViolation
from .gmc import ring_levels

logger = logging.getLogger(__name__)

CIRCLE_POINTS = 64
_CIRCLE_ANGLES = 2.0 * np.pi * np.arange(CIRCLE_POINTS) / CIRCLE_POINTS
_CIRCLE_COS = np.cos(_CIRCLE_ANGLES)
_CIRCLE_SIN = np.sin(_CIRCLE_ANGLES)

Bounds = tuple[float, float, float, float]  # x0, x1, y0, y1 in unit coordinates


@njit(cache=True, nogil=True)
def _isqrt(v):
    if v <= 0:
        return 0
    r = int(math.sqrt(v))
    while r * r > v:
        r -= 1
    while (r + 1) * (r + 1) <= v:
        r += 1
    return r


@njit(cache=True, nogil=True)
def _disk_mass(prefix, N, ix, iy, r2):
    reach = _isqrt(r2)
    total = 0.0
    for dy in range(-reach, reach + 1):
        row = iy + dy
        if row < 0 or row >= N:
            continue
        half = _isqrt(r2 - dy * dy)
        x0 = max(ix - half, 0)
        x1 = min(ix + half + 1, N)
        total += prefix[row, x1] - prefix[row, x0]
    return total


@njit(cache=True, nogil=True)
def _admissible(prefix, N, ix, iy, level, scale, cap, limit):
    return level <= cap and _disk_mass(prefix, N, ix, iy, level * scale) <= limit


@njit(cache=True, nogil=True)
def _mass_radii(prefix, levels, scale, cap_r2, limit, row0, row1, out):
    # Galloping then bisection over the sorted ring levels; admissibility is
    # monotone in the level so the search is exact.
    N = prefix.shape[0]
    n_levels = levels.shape[0]
    for iy in range(row0, row1):
        for ix in range(N):
            cap = cap_r2[iy, ix]
            if not _admissible(prefix, N, ix, iy, levels[0], scale, cap, limit):
                continue
            good = 0
            step = 1
            bad = n_levels
            while good + step < n_levels:
                k = good + step
                if _admissible(prefix, N, ix, iy, levels[k], scale, cap, limit):
                    good = k
                    step *= 2
                else:
                    bad = k
                    break
            while bad - good > 1:
                mid = (good + bad) // 2
                if _admissible(prefix, N, ix, iy, levels[mid], scale, cap, limit):
                    good = mid
                else:
                    bad = mid
            out[iy, ix] = levels[good]


@njit(cache=True, nogil=True)
def _circle_radii(field, cos_t, sin_t, exponent, gamma, log_limit, cap_r2, max_k, row0, row1, out):
    # The circle-average weight is not monotone in k: scan every radius up
    # to the cap and keep the largest admissible one.
    N = field.shape[0]
    n_points = cos_t.shape[0]
    for iy in range(row0, row1):
        for ix in range(N):
            cap = cap_r2[iy, ix]
            best = 0
            for k in range(1, max_k + 1):
                if k * k > cap:
                    break
                total = 0.0
                for a in range(n_points):
                    px = min(max(int(math.floor(ix + k * cos_t[a] + 0.5)), 0), N - 1)
                    py = min(max(int(math.floor(iy + k * sin_t[a] + 0.5)), 0), N - 1)
                    total += field[py, px]
                weight = exponent * math.log(k / N) + gamma * total / n_points
                if weight <= log_limit:
                    best = k
            out[iy, ix] = best * best


def _by_row_blocks(kernel, N: int, threads: int, *args) -> np.ndarray:
    """Run a row-range kernel over the grid, splitting rows across threads."""
    out = np.zeros((N, N), dtype=np.int64)
    threads = max(1, min(threads, N))
    if threads == 1:
        kernel(*args, 0, N, out)
        return out
    edges = [int(e) for e in np.linspace(0, N, threads + 1)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda b: kernel(*args, edges[b], edges[b + 1], out), range(threads)))
    return out


@njit(cache=True, nogil=True)
def _paint(cover, owner, xs, ys, r2s, ids, layer):
    N = cover.shape[0]
    for n in range(xs.shape[0]):
        cx = xs[n]
        cy = ys[n]
        rr = r2s[n]
        reach = _isqrt(rr)
        for dy in range(-reach, reach + 1):
            row = cy + dy
            if row < 0 or row >= N:
                continue
            half = _isqrt(rr - dy * dy)
            for x in range(max(cx - half, 0), min(cx + half, N - 1) + 1):
                if cover[row, x] < 0:
                    cover[row, x] = layer
                    owner[row, x] = ids[n]


def _cap_grid(N: int, bounds: Optional[Bounds], max_r2: int) -> np.ndarray:
    if bounds is None:
        return np.full((N, N), max_r2, dtype=np.int64)
    x0, x1, y0, y1 = (b * N for b in bounds)
    k = np.arange(N, dtype=float)
    bx = np.minimum(k - x0, x1 - k)
    by = np.minimum(k - y0, y1 - k)
    b = np.minimum(by[:, None], bx[None, :])
    cap = np.floor(np.square(np.maximum(b, 0.0)) + 1e-9).astype(np.int64)
    return np.minimum(cap, max_r2)


def _margin_bounds(margin: float, bounds: Optional[Bounds]) -> Optional[Bounds]:
    if margin < 0 or margin >= 0.5:
        raise DomainError(f"margin must lie in [0, 1/2), got {margin}")
    if margin == 0:
        return bounds
    inner = (margin, 1 - margin, margin, 1 - margin)
    if bounds is None:
        return inner
    return (max(inner[0], bounds[0]), min(inner[1], bounds[1]), max(inner[2], bounds[2]), min(inner[3], bounds[3]))


def radius_field(
    mass: MassGrid,
    delta: float,
    variant: RadiusVariant = RadiusVariant.STANDARD,
    field: Optional[np.ndarray] = None,
    margin: float = 0.0,
    bounds: Optional[Bounds] = None,
    threads: int = 1,
) -> RadiusField:
    """Largest admissible squared lattice radius at every grid point.

    ``field`` is the full-depth field grid and is needed by the
    circle-average variant when gamma > 0. ``margin`` confines balls to
    [margin, 1 - margin]^2 and ``bounds`` to an explicit box. Rows are
    split across ``threads`` workers.
    """
    if not 0 < delta <= 1:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    variant = RadiusVariant(variant)
    N = mass.N
    max_r2 = 2 * N * N
    cap = _cap_grid(N, _margin_bounds(margin, bounds), max_r2)

    if variant == RadiusVariant.CIRCLE_AVG:
        gamma = mass.gamma
        if field is None:
            if gamma != 0:
                raise DomainError("circle_avg radii need the full-depth field")
            field = np.zeros((N, N))
        if field.shape != (N, N):
            raise DomainError(f"field grid must have shape {(N, N)}")
        exponent = 2.0 + gamma * gamma / 2.0
        # k / N is the radius; the 1e-12 slack keeps exact squares like delta = k/N admissible
        r2 = _by_row_blocks(
            _circle_radii, N, threads,
            np.ascontiguousarray(field, dtype=np.float64), _CIRCLE_COS, _CIRCLE_SIN,
            exponent, gamma, 2.0 * math.log(delta) + 1e-12, cap, math.isqrt(max_r2),
        )
    else:
        scale = 4 if variant == RadiusVariant.DOUBLED else 1
        levels = ring_levels(max_r2)
        r2 = _by_row_blocks(_mass_radii, N, threads, mass.row_prefix, levels, scale, cap, delta * delta)

    logger.debug("Radius field %s at delta=%.4g: %d admissible centers", variant.value, delta, int((r2 > 0).sum()))
    return RadiusField(variant=variant, delta=float(delta), gamma=mass.gamma, N=N, r2=r2)


def snap(N: int, point: tuple[float, float]) -> tuple[int, int]:
    """Nearest grid point, clipped to the lattice."""
    x, y = point
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"point {point} outside the unit square")
    return min(int(round(x * N)), N - 1), min(int(round(y * N)), N - 1)


def _squared_distance_to(mask: np.ndarray) -> np.ndarray:
    """Exact squared lattice distance from every grid point to the nearest True cell."""
    _, (iy, ix) = ndimage.distance_transform_edt(~mask, return_indices=True)
    gy, gx = np.indices(mask.shape)
    return (gy - iy) ** 2 + (gx - ix) ** 2


def ball_hop_to_targets(rf: RadiusField, u: tuple[float, float], targets: np.ndarray) -> BallHopResult:
    """Fewest adjacent admissible balls linking u to any grid point flagged in ``targets``."""
    N = rf.N
    if targets.shape != (N, N) or not targets.any():
        raise DomainError("targets must be a non-empty N x N mask")
    r2 = rf.r2
    nodes = r2 > 0
    sx, sy = snap(N, u)
    gy, gx = np.indices((N, N))

    touches = nodes & (_squared_distance_to(targets) <= r2)
    current = nodes & ((gx - sx) ** 2 + (gy - sy) ** 2 <= r2)
    if not current.any():
        return BallHopResult(distance=None, witness_path=[], expanded_nodes=0, disconnected=True)

    visited = current.copy()
    parent = np.full(N * N, -1, dtype=np.int64)
    cover = np.full((N, N), -1, dtype=np.int32)
    owner = np.full((N, N), -1, dtype=np.int64)
    reach = _isqrt(int(r2.max())) + 1
    layer = 1
    while True:
        hit = np.flatnonzero(current & touches)
        if hit.size:
            return _result(rf, layer, int(hit[0]), parent, int(visited.sum()))

        ys, xs = np.nonzero(current)
        ids = ys.astype(np.int64) * N + xs
        _paint(cover, owner, xs.astype(np.int64), ys.astype(np.int64), r2[ys, xs], ids, layer)
        painted = cover == layer
        joined = np.zeros((N, N), dtype=bool)
        if painted.any():
            rows = np.flatnonzero(painted.any(axis=1))
            cols = np.flatnonzero(painted.any(axis=0))
            y0, y1 = max(rows[0] - reach, 0), min(rows[-1] + reach + 1, N)
            x0, x1 = max(cols[0] - reach, 0), min(cols[-1] + reach + 1, N)
            window = painted[y0:y1, x0:x1]
            _, (iy, ix) = ndimage.distance_transform_edt(~window, return_indices=True)
            wy, wx = np.indices(window.shape)
            d2 = (wy - iy) ** 2 + (wx - ix) ** 2
            fresh = nodes[y0:y1, x0:x1] & ~visited[y0:y1, x0:x1] & (d2 <= r2[y0:y1, x0:x1])
            if fresh.any():
                fy, fx = np.nonzero(fresh)
                parent[(fy + y0) * N + (fx + x0)] = owner[iy[fy, fx] + y0, ix[fy, fx] + x0]
                joined[y0:y1, x0:x1] = fresh
        if not joined.any():
            logger.debug("Ball-hop search exhausted after %d layers", layer)
            return BallHopResult(distance=None, witness_path=[], expanded_nodes=int(visited.sum()), disconnected=True)
        visited |= joined
        current = joined
        layer += 1


def _result(rf: RadiusField, layers: int, last: int, parent: np.ndarray, expanded: int) -> BallHopResult:
    N = rf.N
    chain = [last]
    while parent[chain[-1]] >= 0:
        chain.append(int(parent[chain[-1]]))
    chain.reverse()
    if len(chain) != layers:
        raise InvariantViolation(f"witness has {len(chain)} balls for distance {layers}")
    path = [((c % N) / N, (c // N) / N) for c in chain]
    radii = [int(rf.r2[c // N, c % N]) for c in chain]
    return BallHopResult(distance=layers, witness_path=path, expanded_nodes=expanded, witness_r2=radii)


def point_mask(N: int, v: tuple[float, float]) -> np.ndarray:
    mask = np.zeros((N, N), dtype=bool)
    tx, ty = snap(N, v)
    mask[ty, tx] = True
    return mask


def ball_hop_distance(rf: RadiusField, u: tuple[float, float], v: tuple[float, float]) -> BallHopResult:
    start = time.perf_counter()
    result = ball_hop_to_targets(rf, u, point_mask(rf.N, v))
    logger.debug(
        "Ball-hop %s -> %s at delta=%.4g: distance=%s expanded=%d in %.1f ms",
        u, v, rf.delta, result.distance, result.expanded_nodes, 1e3 * (time.perf_counter() - start),
    )
    return result


def box_boundary_mask(N: int, center: tuple[float, float], side: float) -> np.ndarray:
    """Grid points on the perimeter of the square of the given side centered at ``center``."""
    cx, cy = snap(N, center)
    half = int(round(side * N / 2))
    if half < 1:
        raise DomainError(f"box side {side} is below the mesh")
    gy, gx = np.indices((N, N))
    return np.maximum(np.abs(gx - cx), np.abs(gy - cy)) == half


def validate_witness(rf: RadiusField, result: BallHopResult, u: tuple[float, float], v: tuple[float, float]) -> None:
    """Raise InvariantViolation unless the witness is a chain of adjacent balls from u to v."""
    if result.disconnected:
        return
    path = result.witness_path
    if len(path) != result.distance:
        raise InvariantViolation("witness length differs from the distance")
    centers = [snap(rf.N, p) for p in path]
    radii = [int(rf.r2[y, x]) for x, y in centers]
    if any(r <= 0 for r in radii):
        raise InvariantViolation("witness uses a center without an admissible ball")
    if radii != list(result.witness_r2):
        raise InvariantViolation("witness radii differ from the radius field")

    def contains(c, r2, p):
        return (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2 <= r2

    if not contains(centers[0], radii[0], snap(rf.N, u)):
        raise InvariantViolation("first witness ball does not contain the start point")
    if not contains(centers[-1], radii[-1], snap(rf.N, v)):
        raise InvariantViolation("last witness ball does not contain the end point")
    for (a, ra), (b, rb) in zip(zip(centers, radii), zip(centers[1:], radii[1:])):
        if not _share_grid_point(rf.N, a, ra, b, rb):
            raise InvariantViolation(f"witness balls at {a} and {b} share no grid point")


def _share_grid_point(N: int, a, ra, b, rb) -> bool:
    if ra > rb:
        a, ra, b, rb = b, rb, a, ra
    reach = math.isqrt(ra)
    dx = np.arange(-reach, reach + 1)
    px, py = np.meshgrid(a[0] + dx, a[1] + dx)
    inside_a = (px - a[0]) ** 2 + (py - a[1]) ** 2 <= ra
    inside_b = (px - b[0]) ** 2 + (py - b[1]) ** 2 <= rb
    on_grid = (px >= 0) & (px < N) & (py >= 0) & (py < N)
    return bool((inside_a & inside_b & on_grid).any())


def variant_compare(
    mass: MassGrid,
    delta: float,
    u: tuple[float, float],
    v: tuple[float, float],
    field: Optional[np.ndarray] = None,
) -> tuple[BallHopResult, BallHopResult, BallHopResult]:
    """Standard, doubled and circle-average distances on one sample."""
    out = []
    for variant in (RadiusVariant.STANDARD, RadiusVariant.DOUBLED, RadiusVariant.CIRCLE_AVG):
        rf = radius_field(mass, delta, variant, field=field)
        out.append(ball_hop_distance(rf, u, v))
    return out[0], out[1], out[2]
