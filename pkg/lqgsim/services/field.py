"""Heat kernels and white-noise synthesis of the per-octave field layers.

Octave j integrates the white noise over diffusion times s in
(4^-(j+1), 4^-j), split into geometrically spaced slices. Slice k is
represented by its geometric midpoint s_k and carries the weight
s_k * log(b_{k+1} / b_k), which makes the continuum variance of every octave
exactly log 2 for the stationary engine.
"""
from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, ndimage, signal, special

from ..config import get_settings
from ..models.models import ENGINE_TAGS, FieldEngine, FieldStack, KernelDomain, KernelSpec
from ..schemas.schemas import ContinuityRow
from .errors import DomainError, NumericError, ResourceError
from .rng import StreamRole, replica_seed, stream

logger = logging.getLogger(__name__)

IMAGE_SERIES_MAX_TIME = 0.05
KERNEL_SIGMAS = 4.0
TRUNCATION_CAP = 0.1
DIRECT_KERNEL_MAX = 33  # taps; longer kernels go through the FFT
SERIES_CUTOFF = 40.0  # exp(-40) ~ 4e-18
ORACLE_RTOL = 1e-8
CONTINUITY_LAGS = (1, 2, 4)
CONTINUITY_SPREAD = 3.0

DUMP_MAGIC = b"LQGF1"
DUMP_HEADER = struct.Struct("<5sBIIIQ")


def _gaussian_1d(t: float, z: np.ndarray) -> np.ndarray:
    return np.exp(-np.square(z) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def dirichlet_kernel_1d(t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Transition density of BM on [0, 1] killed at the endpoints.

    Uses the sine series for t >= IMAGE_SERIES_MAX_TIME and the method of
    images below it. Broadcasts over x and y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    if t >= IMAGE_SERIES_MAX_TIME:
        n_max = int(math.ceil(math.sqrt(2.0 * SERIES_CUTOFF / (math.pi**2 * t)))) + 1
        for n in range(1, n_max + 1):
            decay = math.exp(-0.5 * (n * math.pi) ** 2 * t)
            out += 2.0 * decay * np.sin(n * math.pi * x) * np.sin(n * math.pi * y)
    else:
        k_max = int(math.ceil((math.sqrt(2.0 * SERIES_CUTOFF * t) + 2.0) / 2.0)) + 1
        for k in range(-k_max, k_max + 1):
            out += _gaussian_1d(t, x - y + 2 * k) - _gaussian_1d(t, x + y + 2 * k)
    return np.maximum(out, 0.0)


def _ball_truncated_density(t: float, radius: float, rho: np.ndarray) -> np.ndarray:
    """Whole-plane density at distance rho, killed on leaving the ball of the start point."""
    rho = np.asarray(rho, dtype=float)
    base = np.exp(-np.square(rho) / (2.0 * t)) / (2.0 * math.pi * t)
    survival = -np.expm1(-2.0 * radius * np.clip(radius - rho, 0.0, None) / t)
    return np.where(rho < radius, base * survival, 0.0)


def kernel_eval(spec: KernelSpec, u: tuple[float, float], v: tuple[float, float]) -> float:
    """Evaluate p(t; u, v) for the given kernel domain."""
    ux, uy = map(float, u)
    vx, vy = map(float, v)
    if not all(math.isfinite(c) for c in (ux, uy, vx, vy)):
        raise DomainError("kernel points must be finite")
    t = spec.time
    if spec.domain == KernelDomain.WHOLE_PLANE:
        d2 = (ux - vx) ** 2 + (uy - vy) ** 2
        return math.exp(-d2 / (2.0 * t)) / (2.0 * math.pi * t)
    if spec.domain == KernelDomain.UNIT_SQUARE_KILLED:
        if not all(0.0 <= c <= 1.0 for c in (ux, uy, vx, vy)):
            raise DomainError(f"points {u}, {v} outside the unit square")
        return float(dirichlet_kernel_1d(t, ux, vx) * dirichlet_kernel_1d(t, uy, vy))
    rho = math.hypot(ux - vx, uy - vy)
    return float(_ball_truncated_density(t, spec.radius, rho))


def truncation_radius(s: float) -> float:
    """Radius of the ball the eta kernel is truncated to at diffusion time s."""
    return min(0.25 * math.sqrt(s) * abs(math.log(1.0 / s)), TRUNCATION_CAP)


def slice_schedule(octave: int, slices: int) -> list[tuple[float, float]]:
    """(midpoint time, weight) for each time slice of one octave."""
    lo = 4.0 ** (-(octave + 1))
    ratio = 4.0 ** (1.0 / slices)
    out = []
    for k in range(slices):
        a = lo * ratio**k
        b = a * ratio
        mid = math.sqrt(a * b)
        out.append((mid, mid * math.log(b / a)))
    return out


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _validate_stack_args(N: int, J: int, slices: int) -> None:
    if not _is_power_of_two(N):
        raise DomainError(f"grid size must be a power of two, got {N}")
    max_j = int(math.log2(N)) - 2
    if not 1 <= J <= max_j:
        raise DomainError(f"octave count must lie in 1..{max_j} for N={N}, got {J}")
    if slices < 1:
        raise DomainError("need at least one time slice per octave")


def _hat_pad(N: int, s: float) -> int:
    return int(math.ceil(KERNEL_SIGMAS * math.sqrt(s / 2.0) * N))


def estimate_memory(engine: FieldEngine, N: int, J: int, slices: int = 4) -> int:
    """Peak bytes needed by sample_stack (working arrays plus the result)."""
    result = 2 * J * N * N * 8
    if engine == FieldEngine.HAT_H:
        s_max = slice_schedule(0, slices)[-1][0]
        side = N + 2 * _hat_pad(N, s_max)
        working = 4 * side * side * 8
    elif engine == FieldEngine.TILDE_H:
        working = 4 * N * N * 8
    else:
        working = 6 * N * N * 8
    return result + working


def _axis_convolve(data: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Valid-mode convolution with a symmetric kernel along one axis."""
    pad = len(taps) // 2
    if len(taps) <= DIRECT_KERNEL_MAX:
        full = ndimage.correlate1d(data, taps, axis=axis, mode="constant")
        index = [slice(None)] * data.ndim
        index[axis] = slice(pad, data.shape[axis] - pad)
        return full[tuple(index)]
    shape = [1] * data.ndim
    shape[axis] = len(taps)
    return signal.fftconvolve(data, taps.reshape(shape), mode="valid", axes=axis)


def _window_sums(table: np.ndarray, N: int, pad: int) -> np.ndarray:
    """Sum of a (2pad+1)^2 kernel table over the offsets that stay on the grid."""
    sat = np.zeros((table.shape[0] + 1, table.shape[1] + 1))
    sat[1:, 1:] = table.cumsum(axis=0).cumsum(axis=1)
    idx = np.arange(N)
    lo = np.clip(pad - idx, 0, None)
    hi = np.clip(pad + (N - 1 - idx), None, 2 * pad) + 1
    return (
        sat[hi[:, None], hi[None, :]]
        - sat[lo[:, None], hi[None, :]]
        - sat[hi[:, None], lo[None, :]]
        + sat[lo[:, None], lo[None, :]]
    )


def _hat_taps(N: int, s: float) -> np.ndarray:
    pad = _hat_pad(N, s)
    return _gaussian_1d(s / 2.0, np.arange(-pad, pad + 1) / N)


def _killed_matrix(N: int, s: float) -> np.ndarray:
    x = np.arange(N) / N
    return dirichlet_kernel_1d(s / 2.0, x[:, None], x[None, :])


def _eta_kernel(N: int, s: float) -> np.ndarray:
    radius = truncation_radius(s)
    pad = max(0, min(int(math.floor(radius * N)), N - 1))
    offsets = np.arange(-pad, pad + 1) / N
    return _ball_truncated_density(s / 2.0, radius, np.hypot(offsets[:, None], offsets[None, :]))


def _slice_variance(engine: FieldEngine, N: int, s: float, weight: float, kernel: np.ndarray) -> np.ndarray:
    """Exact variance of one synthesized slice, from the discrete kernel itself."""
    c = math.pi * weight / (N * N)
    if engine == FieldEngine.HAT_H:
        return np.full((N, N), c * float(np.dot(kernel, kernel)) ** 2)
    if engine == FieldEngine.TILDE_H:
        a2 = np.square(kernel).sum(axis=1)
        return c * np.outer(a2, a2)
    return c * _window_sums(np.square(kernel), N, kernel.shape[0] // 2)


def _slice_kernel(engine: FieldEngine, N: int, s: float) -> np.ndarray:
    if engine == FieldEngine.HAT_H:
        return _hat_taps(N, s)
    if engine == FieldEngine.TILDE_H:
        return _killed_matrix(N, s)
    return _eta_kernel(N, s)


def _slice_values(engine: FieldEngine, N: int, kernel: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Kernel applied to unit white noise; the caller scales by sqrt(pi * weight) * h."""
    if engine == FieldEngine.HAT_H:
        side = N + len(kernel) - 1
        noise = rng.standard_normal((side, side))
        return _axis_convolve(_axis_convolve(noise, kernel, axis=0), kernel, axis=1)
    noise = rng.standard_normal((N, N))
    if engine == FieldEngine.TILDE_H:
        return kernel @ noise @ kernel.T
    if kernel.shape[0] <= DIRECT_KERNEL_MAX:
        return ndimage.correlate(noise, kernel, mode="constant", cval=0.0)
    return signal.fftconvolve(noise, kernel, mode="same")


def _octave(engine: FieldEngine, N: int, octave: int, seed: int, slices: int) -> tuple[np.ndarray, np.ndarray]:
    rng = stream(seed, 0, StreamRole.FIELD, substream=octave)
    layer = np.zeros((N, N))
    variance = np.zeros((N, N))
    for s, weight in slice_schedule(octave, slices):
        kernel = _slice_kernel(engine, N, s)
        layer += math.sqrt(math.pi * weight) / N * _slice_values(engine, N, kernel, rng)
        variance += _slice_variance(engine, N, s, weight, kernel)
    return layer, variance


def sample_stack(
    engine: FieldEngine,
    N: int,
    J: int,
    seed: int,
    time_slices_per_octave: Optional[int] = None,
    threads: Optional[int] = None,
) -> FieldStack:
    """Draw independent octave layers 0..J-1 of the requested field engine."""
    settings = get_settings()
    engine = FieldEngine(engine)
    slices = time_slices_per_octave or settings.default_slices
    _validate_stack_args(N, J, slices)
    required = estimate_memory(engine, N, J, slices)
    if required > settings.memory_limit_bytes:
        raise ResourceError(f"{engine.value} stack N={N} J={J}", required, settings.memory_limit_bytes)

    workers = max(1, min(threads or settings.threads, J))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda j: _octave(engine, N, j, seed, slices), range(J)))

    layers = np.stack([p[0] for p in parts])
    var_profile = np.stack([p[1] for p in parts])
    logger.debug("Sampled %s stack N=%d J=%d seed=%d", engine.value, N, J, seed)
    return FieldStack(engine, N, J, int(seed), slices, layers, var_profile)


def variance_profile(engine: FieldEngine, N: int, J: int, slices: int) -> np.ndarray:
    """Model variance of every octave; independent of the seed."""
    engine = FieldEngine(engine)
    _validate_stack_args(N, J, slices)
    out = np.zeros((J, N, N))
    for j in range(J):
        for s, weight in slice_schedule(j, slices):
            out[j] += _slice_variance(engine, N, s, weight, _slice_kernel(engine, N, s))
    return out


def continuity_scaling(
    engine: FieldEngine,
    N: int,
    J: int,
    replicas: int,
    seed: int = 0,
    slices: Optional[int] = None,
    lags: Sequence[int] = CONTINUITY_LAGS,
    threads: Optional[int] = None,
) -> list[ContinuityRow]:
    """Mean squared increment of the partial field over lattice lags, for m = 1..J octaves.

    Increments are taken along both axes between every pair of grid points
    ``lag`` steps apart and averaged over ``replicas`` independent stacks.
    ``constant`` is the increment variance divided by |u - v| * 2^m, which
    stays bounded uniformly in m and |u - v|.
    """
    if replicas < 1:
        raise DomainError("continuity scaling needs at least one replica")
    if not lags or min(lags) < 1 or max(lags) >= N:
        raise DomainError(f"lags must lie in 1..{N - 1}, got {list(lags)}")
    settings = get_settings()
    slices = slices or settings.default_slices

    def replica(i: int) -> np.ndarray:
        stack = sample_stack(engine, N, J, replica_seed(seed, i, StreamRole.FIELD), slices, threads=1)
        partial = np.cumsum(stack.layers, axis=0)
        out = np.empty((J, len(lags)))
        for k, lag in enumerate(lags):
            dx = partial[:, :, lag:] - partial[:, :, :-lag]
            dy = partial[:, lag:, :] - partial[:, :-lag, :]
            out[:, k] = 0.5 * (np.square(dx).mean(axis=(1, 2)) + np.square(dy).mean(axis=(1, 2)))
        return out

    with ThreadPoolExecutor(max_workers=threads or settings.threads) as pool:
        mean_sq = np.mean(list(pool.map(replica, range(replicas))), axis=0)

    rows = []
    for m in range(1, J + 1):
        for k, lag in enumerate(lags):
            distance = lag / N
            value = float(mean_sq[m - 1, k])
            rows.append(ContinuityRow(
                octaves=m, lag=lag, distance=distance, increment_var=value, constant=value / (distance * 2.0**m),
            ))
    return rows


def continuity_constant(rows: Sequence[ContinuityRow]) -> tuple[float, float]:
    """Fitted constant (largest ratio) and the spread of the per-m constants."""
    per_m: dict[int, float] = {}
    for row in rows:
        per_m[row.octaves] = max(per_m.get(row.octaves, 0.0), row.constant)
    values = [c for c in per_m.values() if c > 0]
    if not values:
        raise NumericError("no positive increment variance")
    spread = max(values) / min(values)
    if spread > CONTINUITY_SPREAD:
        logger.warning("continuity constants vary by a factor %.2f across octave counts", spread)
    return max(values), spread


def grid_index(N: int, point: tuple[float, float]) -> tuple[int, int]:
    """(ix, iy) of a lattice point; raises if the point is off the grid."""
    idx = []
    for c in point:
        scaled = float(c) * N
        k = int(round(scaled))
        if abs(scaled - k) > 1e-9 or not 0 <= k < N:
            raise DomainError(f"point {tuple(point)} is not on the {N}x{N} grid")
        idx.append(k)
    return idx[0], idx[1]


def field_at_scale(stack: FieldStack, m: int, v: tuple[float, float]) -> tuple[float, float]:
    """Value and exact variance of the field summed over octaves 0..m-1 at a grid point."""
    if not 0 <= m <= stack.J:
        raise DomainError(f"octave count {m} outside 0..{stack.J}")
    ix, iy = grid_index(stack.N, v)
    if m == 0:
        return 0.0, 0.0
    value = float(stack.layers[:m, iy, ix].sum())
    variance = float(stack.var_profile[:m, iy, ix].sum())
    return value, variance


def layer_covariance(u: tuple[float, float], v: tuple[float, float], delta: float, delta_tilde: float) -> float:
    """Closed-form covariance of the stationary field between scales delta and delta_tilde."""
    d2 = (u[0] - v[0]) ** 2 + (u[1] - v[1]) ** 2
    if d2 == 0.0:
        return math.log(delta_tilde / delta)
    a = d2 / 2.0
    return 0.5 * (float(special.exp1(a / delta_tilde**2)) - float(special.exp1(a / delta**2)))


def covariance_oracle(
    engine: FieldEngine,
    u: tuple[float, float],
    v: tuple[float, float],
    delta: float,
    delta_tilde: float,
) -> float:
    """pi * integral of p(t; u, v) over t in (delta^2, delta_tilde^2), by adaptive quadrature."""
    engine = FieldEngine(engine)
    if not 0 < delta < delta_tilde <= 1:
        raise DomainError(f"need 0 < delta < delta_tilde <= 1, got {delta}, {delta_tilde}")
    if engine == FieldEngine.ETA:
        raise DomainError("the truncated engine has no Chapman-Kolmogorov covariance formula")
    domain = KernelDomain.WHOLE_PLANE if engine == FieldEngine.HAT_H else KernelDomain.UNIT_SQUARE_KILLED

    def integrand(tau: float) -> float:
        t = math.exp(tau)
        return kernel_eval(KernelSpec(domain, t), u, v) * t

    value, abserr = integrate.quad(
        integrand, 2.0 * math.log(delta), 2.0 * math.log(delta_tilde), epsabs=0.0, epsrel=1e-11, limit=400
    )
    result = math.pi * value
    achieved = math.pi * abserr / abs(result) if result else math.pi * abserr
    if achieved > ORACLE_RTOL and math.pi * abserr > 1e-14:
        raise NumericError("covariance quadrature did not converge", achieved)
    return result


def dump_stack(stack: FieldStack, path: Path | str) -> Path:
    """Write the LQGF1 binary dump: header then little-endian float64 layers."""
    path = Path(path)
    header = DUMP_HEADER.pack(
        DUMP_MAGIC, ENGINE_TAGS[stack.engine], stack.N, stack.J, stack.time_slices_per_octave, stack.seed
    )
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stack.layers, dtype="<f8").tobytes())
    return path


def load_stack(path: Path | str) -> FieldStack:
    raw = Path(path).read_bytes()
    magic, tag, N, J, slices, seed = DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise DomainError(f"{path} is not an LQGF1 field dump")
    engine = next(e for e, t in ENGINE_TAGS.items() if t == tag)
    layers = np.frombuffer(raw, dtype="<f8", offset=DUMP_HEADER.size).reshape(J, N, N).astype(float)
    return FieldStack(engine, N, J, seed, slices, layers, variance_profile(engine, N, J, slices))
