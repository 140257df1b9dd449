"""Brownian paths on the unit square, the Liouville clock and heat-kernel estimates."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..config import get_settings
from ..models.models import EstimateMode, FieldEngine, FieldStack, RegionQuery, Trajectory
from ..schemas.schemas import FitResult, HeatKernelEstimate
from .errors import DomainError, InsufficientDataError
from .field import sample_stack
from .gmc import density_grid, lebesgue_grid, measure_region
from .regression import weighted_fit
from .rng import StreamRole, replica_seed, stream

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-5
MIN_HEAT_REPLICAS = 1000
MIN_FIT_POINTS = 4
PATH_BATCH = 4096
STEP_CHUNK = 256
DEFAULT_HORIZON_FACTOR = 64.0
MAX_UNREACHED_FRACTION = 0.01


def _nearest_index(N: int, coords: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(coords * N).astype(np.int64), 0, N - 1)


def weight_grid(stack: FieldStack, gamma: float) -> np.ndarray:
    """exp(gamma * field_J - gamma^2/2 * Var_J) on the lattice."""
    field, variance = stack.full_field
    return np.exp(gamma * field - 0.5 * gamma * gamma * variance)


def _lookup(weights: np.ndarray, points: np.ndarray) -> np.ndarray:
    N = weights.shape[0]
    return weights[_nearest_index(N, points[..., 1]), _nearest_index(N, points[..., 0])]


def _outside(points: np.ndarray) -> np.ndarray:
    return ((points < 0.0) | (points > 1.0)).any(axis=-1)


def sample_sbm(u: tuple[float, float], dt: float, T: float, seed: int, replica_index: int = 0) -> Trajectory:
    """Euler path of standard Brownian motion from u, truncated at the first exit."""
    if not (0.0 < u[0] < 1.0 and 0.0 < u[1] < 1.0):
        raise DomainError(f"start point {u} must be interior")
    if dt <= 0 or T < 0:
        raise DomainError("dt must be positive and T non-negative")
    steps = int(math.ceil(T / dt - 1e-9))
    rng = stream(seed, replica_index, StreamRole.PATH)
    increments = rng.standard_normal((steps, 1, 2))[:, 0, :] * math.sqrt(dt)
    positions = np.concatenate([np.asarray([u], dtype=float), u + np.cumsum(increments, axis=0)])
    exits = np.flatnonzero(_outside(positions))
    if exits.size:
        return Trajectory(dt=dt, positions=positions[: exits[0]], killed_at=int(exits[0]))
    return Trajectory(dt=dt, positions=positions)


def pcaf_accumulate(traj: Trajectory, weights: Optional[np.ndarray], gamma: float) -> Trajectory:
    """Attach F(k) = sum_{j<k} w(X_j) dt; ``weights`` is the exponential weight grid."""
    n = len(traj.positions)
    if gamma == 0.0 or weights is None:
        pcaf = np.arange(n) * traj.dt
    else:
        w = _lookup(weights, traj.positions)
        pcaf = np.concatenate([[0.0], np.cumsum(w[:-1] * traj.dt)])
    return Trajectory(dt=traj.dt, positions=traj.positions, killed_at=traj.killed_at, pcaf=pcaf)


def inverse_pcaf_index(traj: Trajectory, t: float) -> Optional[int]:
    """Step k with pcaf[k] <= t < pcaf[k+1], or None when t is not reached."""
    if traj.pcaf is None:
        raise DomainError("trajectory has no pcaf")
    if t < 0 or t >= traj.pcaf[-1]:
        return None
    return int(np.searchsorted(traj.pcaf, t, side="right") - 1)


def lbm_at(traj: Trajectory, t: float) -> Optional[tuple[float, float]]:
    """Liouville Brownian motion at Liouville time t by inverting the clock linearly."""
    k = inverse_pcaf_index(traj, t)
    if k is None:
        return None
    f0, f1 = traj.pcaf[k], traj.pcaf[k + 1]
    frac = (t - f0) / (f1 - f0)
    x0, x1 = traj.positions[k], traj.positions[k + 1]
    point = x0 + frac * (x1 - x0)
    return float(point[0]), float(point[1])


def time_changed_positions(
    starts: np.ndarray,
    dt: float,
    steps: int,
    rng: np.random.Generator,
    weights: Optional[np.ndarray],
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Y_t for a batch of paths, plus the mask of paths still running at the cap.

    Rows are NaN where the clock never reaches t: the path was killed, or
    ``steps`` ran out first (the second return value flags the latter).
    Stepping stops as soon as every surviving path has crossed t.
    """
    count = len(starts)
    pos = np.array(starts, dtype=float)
    clock = np.zeros(count)
    alive = np.ones(count, dtype=bool)
    result = np.full((count, 2), np.nan)
    done = np.zeros(count, dtype=bool)
    scale = math.sqrt(dt)
    taken = 0
    while taken < steps and (alive & ~done).any():
        c = min(STEP_CHUNK, steps - taken)
        path = pos[None] + np.cumsum(rng.standard_normal((c, count, 2)) * scale, axis=0)
        prev = np.concatenate([pos[None], path[:-1]])
        if weights is None:
            clock_next = (taken + np.arange(1, c + 1))[:, None] * dt * np.ones((1, count))
        else:
            clock_next = clock[None] + np.cumsum(_lookup(weights, prev) * dt, axis=0)
        clock_prev = np.concatenate([clock[None], clock_next[:-1]])

        dead = np.logical_or.accumulate(_outside(path), axis=0)
        cross = (clock_prev <= t) & (t < clock_next) & alive[None] & ~dead
        found = cross.any(axis=0) & ~done
        if found.any():
            idx = np.argmax(cross, axis=0)[found]
            cols = np.flatnonzero(found)
            f0, f1 = clock_prev[idx, cols], clock_next[idx, cols]
            frac = ((t - f0) / (f1 - f0))[:, None]
            result[cols] = prev[idx, cols] + frac * (path[idx, cols] - prev[idx, cols])
            done |= found

        pos = path[-1]
        clock = clock_next[-1]
        alive &= ~dead[-1]
        taken += c
    return result, alive & ~done


def gaussian_hitting_oracle(u: tuple[float, float], v: tuple[float, float], t: float, r: float) -> float:
    """Small-ball approximation (r^2 / 2t) exp(-|u-v|^2 / 2t) of P(|X_t - v| <= r)."""
    d2 = (u[0] - v[0]) ** 2 + (u[1] - v[1]) ** 2
    return r * r / (2.0 * t) * math.exp(-d2 / (2.0 * t))


def _hits(result: np.ndarray, v: tuple[float, float], r: float) -> np.ndarray:
    reached = ~np.isnan(result[:, 0])
    d2 = np.where(reached, (result[:, 0] - v[0]) ** 2 + (result[:, 1] - v[1]) ** 2, np.inf)
    return d2 <= r * r


def hitting_probability(
    u: tuple[float, float],
    v: tuple[float, float],
    t: float,
    r: float,
    replicas: int,
    gamma: float,
    stack: Optional[FieldStack] = None,
    *,
    dt: float = DEFAULT_DT,
    mode: EstimateMode = EstimateMode.ANNEALED,
    seed: int = 0,
    engine: FieldEngine = FieldEngine.HAT_H,
    N: Optional[int] = None,
    J: Optional[int] = None,
    slices: Optional[int] = None,
    paths_per_field: int = 1,
    horizon_factor: float = DEFAULT_HORIZON_FACTOR,
    threads: Optional[int] = None,
) -> HeatKernelEstimate:
    """Estimate P_u(|Y_t - v| <= r) and the density q / M(B_r(v)).

    Annealed mode draws a fresh field for every ``paths_per_field`` paths;
    quenched mode keeps ``stack`` (or the field of replica 0) fixed.

    Each path runs until its clock passes t or it leaves the square, for at
    most ``horizon_factor * t`` of Brownian time. Paths still short of t at
    that cap are counted in ``unreached``; more than 1% of them raises
    InsufficientDataError.
    """
    settings = get_settings()
    if stack is not None:
        engine, N, J, slices = stack.engine, stack.N, stack.J, stack.time_slices_per_octave
    N = N or settings.default_grid_size
    J = J or int(math.log2(N)) - 2
    slices = slices or settings.default_slices
    if r < 2.0 / N:
        raise DomainError(f"target radius {r} is below two mesh steps")
    if replicas < MIN_HEAT_REPLICAS:
        raise DomainError(f"heat-kernel estimates need at least {MIN_HEAT_REPLICAS} replicas")
    if t < 0:
        raise DomainError("Liouville time must be non-negative")
    mode = EstimateMode(mode)
    ball = RegionQuery.ball(v, r)
    if horizon_factor < 1.0:
        raise DomainError(f"horizon factor must be at least 1, got {horizon_factor}")
    # Without a field the clock is the identity, so the horizon is t itself.
    horizon = t if gamma == 0.0 else horizon_factor * t
    steps = max(int(math.ceil(horizon / dt - 1e-9)) + 1, 1)
    workers = threads or settings.threads

    if gamma == 0.0 or mode == EstimateMode.QUENCHED:
        if gamma == 0.0:
            weights, area = None, measure_region(lebesgue_grid(N), ball)
        else:
            if stack is None:
                stack = sample_stack(engine, N, J, replica_seed(seed, 0, StreamRole.FIELD), slices, threads=workers)
            weights, area = weight_grid(stack, gamma), measure_region(density_grid(stack, gamma), ball)
        sizes = [min(PATH_BATCH, replicas - b) for b in range(0, replicas, PATH_BATCH)]

        def batch(b: int) -> tuple[int, int]:
            starts = np.tile(np.asarray(u, dtype=float), (sizes[b], 1))
            result, stuck = time_changed_positions(starts, dt, steps, stream(seed, b, StreamRole.PATH), weights, t)
            return int(_hits(result, v, r).sum()), int(stuck.sum())

        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(batch, range(len(sizes))))
        hits = sum(h for h, _ in counts)
        unreached = sum(s for _, s in counts)
        q_hat = hits / replicas
        p_hat = q_hat / area if area > 0 else math.inf
    else:
        fields = int(math.ceil(replicas / paths_per_field))
        sizes = [min(paths_per_field, replicas - i * paths_per_field) for i in range(fields)]

        def replica(i: int) -> tuple[int, float, int]:
            field_stack = sample_stack(engine, N, J, replica_seed(seed, i, StreamRole.FIELD), slices, threads=1)
            area_i = measure_region(density_grid(field_stack, gamma), ball)
            starts = np.tile(np.asarray(u, dtype=float), (sizes[i], 1))
            result, stuck = time_changed_positions(starts, dt, steps, stream(seed, i, StreamRole.PATH), weight_grid(field_stack, gamma), t)
            h = int(_hits(result, v, r).sum())
            return h, (h / area_i if area_i > 0 else 0.0), int(stuck.sum())

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(replica, range(fields)))
        hits = sum(h for h, _, _ in outcomes)
        unreached = sum(s for _, _, s in outcomes)
        q_hat = hits / replicas
        p_hat = math.fsum(w for _, w, _ in outcomes) / replicas

    if unreached:
        logger.warning(
            "%d of %d paths did not reach Liouville time %.4g within %.4g of Brownian time",
            unreached, replicas, t, horizon,
        )
        if unreached > MAX_UNREACHED_FRACTION * replicas:
            raise InsufficientDataError(
                f"{unreached} of {replicas} paths never reached t={t}; raise horizon_factor above {horizon_factor}"
            )
    q_se = math.sqrt(q_hat * (1.0 - q_hat) / replicas)
    below = hits == 0
    if below:
        logger.warning("No hits at t=%.4g, r=%.4g over %d replicas; estimate below resolution", t, r, replicas)
    return HeatKernelEstimate(
        t=t, r=r, q_hat=q_hat, q_se=q_se, p_hat=p_hat, replicas=replicas, mode=mode,
        below_resolution=below, q_upper=3.0 / replicas if below else None, unreached=unreached,
    )


def heat_fit_points(
    estimates: Sequence[HeatKernelEstimate], on_diagonal_correction: bool = False
) -> tuple[list[float], list[float], list[float]]:
    """(log 1/t, log level, SE) for every resolved estimate with a positive level.

    With ``on_diagonal_correction`` the level is -log(p_hat * 2 pi t), which
    removes the polynomial 1/(2 pi t) prefactor of the planar heat kernel;
    otherwise it is -log p_hat.
    """
    xs, ys, ses = [], [], []
    for est in estimates:
        if est.below_resolution or est.q_hat <= 0 or est.t <= 0:
            continue
        p = est.p_hat * (2.0 * math.pi * est.t if on_diagonal_correction else 1.0)
        level = -math.log(p)
        if level <= 0:
            continue
        xs.append(math.log(1.0 / est.t))
        ys.append(math.log(level))
        ses.append((est.q_se / est.q_hat) / level)
    return xs, ys, ses


def heat_exponent_fit(estimates: Sequence[HeatKernelEstimate], on_diagonal_correction: bool = False) -> FitResult:
    """Weighted slope of log(-log p_hat) against log(1/t)."""
    xs, ys, ses = heat_fit_points(estimates, on_diagonal_correction)
    if len(xs) < MIN_FIT_POINTS:
        raise InsufficientDataError(f"need {MIN_FIT_POINTS} resolved times for the heat exponent, got {len(xs)}")
    return weighted_fit(xs, ys, ses, min_points=MIN_FIT_POINTS)


def dt_halving_check(
    u: tuple[float, float],
    v: tuple[float, float],
    t: float,
    r: float,
    replicas: int,
    gamma: float,
    dt: float = DEFAULT_DT,
    **kwargs,
) -> tuple[HeatKernelEstimate, HeatKernelEstimate, bool]:
    """Re-run at dt/2; the step is accepted when q_hat moves by less than one SE."""
    coarse = hitting_probability(u, v, t, r, replicas, gamma, dt=dt, **kwargs)
    fine = hitting_probability(u, v, t, r, replicas, gamma, dt=dt / 2, **kwargs)
    passed = abs(coarse.q_hat - fine.q_hat) < max(coarse.q_se, fine.q_se, 1.0 / replicas)
    if not passed:
        logger.warning("dt=%.3g not converged at t=%.4g: q %.4g vs %.4g", dt, t, coarse.q_hat, fine.q_hat)
    return coarse, fine, passed
