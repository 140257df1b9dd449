"""Replica sweeps behind the exponent estimates and the statistical checks."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..config import get_settings
from ..models.models import (
    VARIANT_FOR_KIND,
    DistanceKind,
    EstimateMode,
    FieldEngine,
    FieldStack,
    RadiusVariant,
)
from ..schemas.schemas import (
    BoundaryRow,
    CellSizeRow,
    ChiEstimate,
    ConcentrationRow,
    ConsistencyResult,
    FitResult,
    HeatKernelEstimate,
    PrimeEquivalenceRow,
    PrimeEquivalenceSummary,
    SubadditivityRow,
    VariantRow,
)
from .distance import ball_hop_distance, ball_hop_to_targets, box_boundary_mask, radius_field, variant_compare
from .errors import DomainError, ExperimentFailure
from .field import sample_stack
from .gmc import density_grid, lebesgue_grid
from .lbm import DEFAULT_HORIZON_FACTOR, heat_exponent_fit, hitting_probability
from .partition import approx_graph_distance, build_partition, partition_stats
from .regression import weighted_fit
from .rng import StreamRole, replica_seed

logger = logging.getLogger(__name__)

BOUND_SLACK = 0.05
CHI_FLOOR = 0.1
PRIME_AGREEMENT = 0.9


@dataclass(frozen=True)
class Sampling:
    """Field-synthesis settings shared by every replica of an experiment."""

    engine: FieldEngine = FieldEngine.HAT_H
    N: int = 256
    J: Optional[int] = None
    slices: int = 4
    seed: int = 0
    threads: Optional[int] = None

    @classmethod
    def from_config(cls, config, threads: Optional[int] = None) -> "Sampling":
        return cls(config.engine, config.N, config.J, config.slices, config.seed, threads or config.threads)

    @property
    def depth(self) -> int:
        return self.J if self.J is not None else int(math.log2(self.N)) - 2

    @property
    def workers(self) -> int:
        return self.threads or get_settings().threads

    def stack(self, replica: int) -> FieldStack:
        seed = replica_seed(self.seed, replica, StreamRole.FIELD)
        return sample_stack(self.engine, self.N, self.depth, seed, self.slices, threads=1)

    def replica_map(self, fn, replicas: int) -> list:
        """fn over replica indices; results come back in index order."""
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, range(replicas)))


def kpz_bound(gamma: float) -> float:
    """Upper bound 4[(1 + g^2/4) - sqrt(1 + g^4/16)] / g^2 on the distance exponent."""
    if gamma == 0:
        return 1.0
    g2 = gamma * gamma
    return 4.0 * ((1.0 + g2 / 4.0) - math.sqrt(1.0 + g2 * g2 / 16.0)) / g2


def _mass_and_field(sampling: Sampling, gamma: float, replica: int):
    if gamma == 0.0:
        return lebesgue_grid(sampling.N), None
    stack = sampling.stack(replica)
    return density_grid(stack, gamma), stack.full_field[0]


def distance_samples(
    gamma: float,
    deltas: Sequence[float],
    replicas: int,
    kind: DistanceKind,
    u: tuple[float, float],
    v: tuple[float, float],
    sampling: Sampling,
) -> tuple[np.ndarray, np.ndarray]:
    """Distances per (replica, delta) on one field per replica, plus depth-cap flags.

    D' is reported as a cell count (edge count plus one) so its logarithm is
    always defined. Disconnected queries are NaN.
    """
    kind = DistanceKind(kind)

    def replica(i: int) -> tuple[list[float], list[bool]]:
        values, capped = [], []
        if kind == DistanceKind.D_PRIME:
            stack = sampling.stack(i)
            for delta in deltas:
                part = build_partition(stack, gamma, delta, sampling.depth - 2)
                values.append(float(approx_graph_distance(part, u, v) + 1))
                capped.append(part.depth_cap_hit)
        else:
            mass, field = _mass_and_field(sampling, gamma, i)
            for delta in deltas:
                rf = radius_field(mass, delta, VARIANT_FOR_KIND[kind], field=field)
                result = ball_hop_distance(rf, u, v)
                values.append(math.nan if result.disconnected else float(result.distance))
                capped.append(False)
        logger.debug("Replica %d distances: %s", i, values)
        return values, capped

    outcomes = sampling.replica_map(replica, replicas)
    return np.array([o[0] for o in outcomes]), np.array([o[1] for o in outcomes], dtype=bool)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _connected(samples: np.ndarray, max_drop_fraction: float) -> tuple[np.ndarray, int]:
    bad = np.isnan(samples).any(axis=1)
    dropped = int(bad.sum())
    if dropped:
        logger.warning("Dropped %d of %d replicas with a disconnected distance", dropped, len(samples))
    if dropped > max_drop_fraction * len(samples) or dropped == len(samples):
        raise ExperimentFailure(f"{dropped} of {len(samples)} replicas disconnected (limit {max_drop_fraction:.0%})")
    return samples[~bad], dropped


def chi_from_samples(
    gamma: float,
    deltas: Sequence[float],
    samples: np.ndarray,
    capped: np.ndarray,
    kind: DistanceKind,
    sampling: Sampling,
    max_drop_fraction: float = 0.1,
) -> ChiEstimate:
    kept, dropped = _connected(samples, max_drop_fraction)
    logs = np.log(kept)
    stats = [_mean_se(logs[:, k]) for k in range(len(deltas))]
    means = [m for m, _ in stats]
    ses = [s for _, s in stats]
    fit = weighted_fit([math.log(1.0 / d) for d in deltas], means, ses)
    n_capped = int(capped.any(axis=1).sum())
    if n_capped:
        logger.warning("%d replicas hit the partition depth cap", n_capped)
    bound = kpz_bound(gamma)
    estimate = ChiEstimate(
        gamma=gamma, deltas=list(deltas), mean_log=means, se_log=ses, counts=[len(logs)] * len(deltas),
        slope=fit.slope, slope_se=fit.slope_se, intercept=fit.intercept, kind=kind, engine=sampling.engine,
        N=sampling.N, replicas=len(samples), dropped=dropped, capped=n_capped, kpz_bound=bound,
    )
    if not estimate.bound_ok:
        logger.warning("chi=%.4f exceeds the bound %.4f by more than %.2f", fit.slope, bound, BOUND_SLACK)
    if not estimate.floor_ok:
        logger.warning("chi=%.4f is below the floor %.2f at gamma=%.3g", fit.slope, CHI_FLOOR, gamma)
    return estimate


def chi_estimate(
    gamma: float,
    deltas: Sequence[float],
    replicas: int,
    kind: DistanceKind = DistanceKind.D,
    u: tuple[float, float] = (0.25, 0.5),
    v: tuple[float, float] = (0.75, 0.5),
    sampling: Sampling = Sampling(),
    max_drop_fraction: float = 0.1,
) -> ChiEstimate:
    """Slope of mean log distance against log(1/delta), with the bound ledger."""
    if len(deltas) < 4:
        raise DomainError("chi needs at least 4 scales")
    for d in deltas:
        if not (0 < d < 1 and abs(math.log2(d) - round(math.log2(d))) < 1e-12):
            raise DomainError(f"scale {d} is not a dyadic 2^-k")
    for p in (u, v):
        if not all(0.0 < c < 1.0 for c in p):
            raise DomainError(f"endpoint {p} must be interior")
    if math.dist(u, v) < 0.25:
        raise DomainError("endpoints must be at least 1/4 apart")
    start = time.perf_counter()
    samples, capped = distance_samples(gamma, deltas, replicas, kind, u, v, sampling)
    estimate = chi_from_samples(gamma, deltas, samples, capped, kind, sampling, max_drop_fraction)
    logger.info(
        "chi(%s, gamma=%.3g) = %.4f +- %.4f over %d replicas in %.1f s",
        DistanceKind(kind).value, gamma, estimate.slope, estimate.slope_se, replicas, time.perf_counter() - start,
    )
    return estimate


def _feasible(delta: float, N: int) -> None:
    if delta * N < 2:
        raise DomainError(f"scale {delta} is below two mesh steps at N={N}")


def subadditivity_check(
    gamma: float,
    pairs: Sequence[tuple[float, float]],
    replicas: int,
    kind: DistanceKind = DistanceKind.D,
    u: tuple[float, float] = (0.25, 0.5),
    v: tuple[float, float] = (0.75, 0.5),
    sampling: Sampling = Sampling(),
    max_drop_fraction: float = 0.1,
) -> list[SubadditivityRow]:
    """chi at delta*delta_tilde minus the log-weighted average of chi at each factor."""
    scales = sorted({s for a, b in pairs for s in (a, b, a * b)}, reverse=True)
    for s in scales:
        _feasible(s, sampling.N)
    samples, _ = distance_samples(gamma, scales, replicas, kind, u, v, sampling)
    kept, _ = _connected(samples, max_drop_fraction)
    logs = np.log(kept)
    column = {s: k for k, s in enumerate(scales)}

    def chi_at(s: float) -> tuple[float, float]:
        mean, se = _mean_se(logs[:, column[s]])
        return mean / math.log(1.0 / s), se / math.log(1.0 / s)

    rows = []
    for a, b in pairs:
        la, lb = math.log(1.0 / a), math.log(1.0 / b)
        chi_a, _ = chi_at(a)
        chi_b, _ = chi_at(b)
        chi_ab, _ = chi_at(a * b)
        # Linear in the per-replica logs, so the SE follows from one combined column.
        weights = {a * b: 1.0 / (la + lb)}
        weights[a] = weights.get(a, 0.0) - 1.0 / (la + lb)
        weights[b] = weights.get(b, 0.0) - 1.0 / (la + lb)
        combined = sum(w * logs[:, column[s]] for s, w in weights.items())
        _, se = _mean_se(np.asarray(combined))
        avg = (la * chi_a + lb * chi_b) / (la + lb)
        rows.append(SubadditivityRow(
            delta=a, delta_tilde=b, chi_delta=chi_a, chi_delta_tilde=chi_b,
            chi_product=chi_ab, defect=chi_ab - avg, se=se,
        ))
    return rows


def concentration_check(
    gamma: float,
    deltas: Sequence[float],
    replicas: int,
    kind: DistanceKind = DistanceKind.D,
    u: tuple[float, float] = (0.25, 0.5),
    v: tuple[float, float] = (0.75, 0.5),
    sampling: Sampling = Sampling(),
    max_drop_fraction: float = 0.1,
) -> list[ConcentrationRow]:
    """Sample std of log distance divided by log(1/delta), per delta."""
    samples, _ = distance_samples(gamma, deltas, replicas, kind, u, v, sampling)
    return concentration_rows(deltas, samples, max_drop_fraction)


def concentration_rows(deltas: Sequence[float], samples: np.ndarray, max_drop_fraction: float = 0.1) -> list[ConcentrationRow]:
    kept, _ = _connected(samples, max_drop_fraction)
    logs = np.log(kept)
    rows = []
    for k, delta in enumerate(deltas):
        std = float(logs[:, k].std(ddof=1)) if len(logs) > 1 else 0.0
        rows.append(ConcentrationRow(delta=delta, std_log=std, ratio=std / math.log(1.0 / delta), n=len(logs)))
    return rows


def boundary_samples(
    gamma: float,
    deltas: Sequence[float],
    u: tuple[float, float],
    lam: float,
    replicas: int,
    sampling: Sampling = Sampling(),
    variant: RadiusVariant = RadiusVariant.STANDARD,
) -> np.ndarray:
    """Distances from u to the boundary of the side-lam box around u, balls kept inside the side-2lam box."""
    if not (lam < u[0] < 1 - lam and lam < u[1] < 1 - lam):
        raise DomainError(f"box of side {2 * lam} around {u} leaves the open unit square")
    bounds = (u[0] - lam, u[0] + lam, u[1] - lam, u[1] + lam)
    targets = box_boundary_mask(sampling.N, u, lam)

    def replica(i: int) -> list[float]:
        mass, field = _mass_and_field(sampling, gamma, i)
        out = []
        for delta in deltas:
            rf = radius_field(mass, delta, variant, field=field, bounds=bounds)
            result = ball_hop_to_targets(rf, u, targets)
            out.append(math.nan if result.disconnected else float(result.distance))
        return out

    return np.array(sampling.replica_map(replica, replicas))


def point_to_boundary(
    gamma: float,
    delta: float,
    u: tuple[float, float],
    lam: float,
    replicas: int,
    sampling: Sampling = Sampling(),
) -> BoundaryRow:
    """Mean log of the point-to-boundary distance at one scale."""
    return boundary_rows(gamma, [delta], u, lam, replicas, sampling)[0]


def boundary_rows(
    gamma: float,
    deltas: Sequence[float],
    u: tuple[float, float],
    lam: float,
    replicas: int,
    sampling: Sampling = Sampling(),
    max_drop_fraction: float = 0.1,
) -> list[BoundaryRow]:
    samples = boundary_samples(gamma, deltas, u, lam, replicas, sampling)
    kept, _ = _connected(samples, max_drop_fraction)
    logs = np.log(kept)
    rows = []
    for k, delta in enumerate(deltas):
        mean, se = _mean_se(logs[:, k])
        rows.append(BoundaryRow(delta=delta, mean_log_min=mean, se=se, n=len(logs)))
    return rows


def boundary_exponent(rows: Sequence[BoundaryRow]) -> FitResult:
    return weighted_fit(
        [math.log(1.0 / r.delta) for r in rows], [r.mean_log_min for r in rows], [r.se for r in rows],
    )


def variant_equivalence(
    gamma: float,
    delta: float,
    replicas: int,
    u: tuple[float, float] = (0.25, 0.5),
    v: tuple[float, float] = (0.75, 0.5),
    sampling: Sampling = Sampling(),
) -> list[VariantRow]:
    """Standard, doubled and circle-average distances on the same samples."""

    def replica(i: int) -> VariantRow:
        mass, field = _mass_and_field(sampling, gamma, i)
        standard, doubled, circle = variant_compare(mass, delta, u, v, field=field)
        return VariantRow(
            replica=i, delta=delta, d_standard=standard.distance,
            d_doubled=doubled.distance, d_circle=circle.distance,
        )

    return sampling.replica_map(replica, replicas)


def prime_equivalence(
    gamma: float,
    deltas: Sequence[float],
    replicas: int,
    u: tuple[float, float] = (0.25, 0.5),
    v: tuple[float, float] = (0.75, 0.5),
    sampling: Sampling = Sampling(),
) -> list[PrimeEquivalenceRow]:
    """D and the partition distance D' on one field per replica.

    A pair agrees when |log D - log D'| <= log(1/delta) / 2. D' counts cells,
    as in the chi sweep; a disconnected D never agrees.
    """

    def replica(i: int) -> list[PrimeEquivalenceRow]:
        stack = sampling.stack(i)
        mass = lebesgue_grid(sampling.N) if gamma == 0.0 else density_grid(stack, gamma)
        rows = []
        for delta in deltas:
            d = ball_hop_distance(radius_field(mass, delta), u, v)
            part = build_partition(stack, gamma, delta, sampling.depth - 2)
            d_prime = approx_graph_distance(part, u, v) + 1
            gap = None if d.disconnected else abs(math.log(d.distance) - math.log(d_prime))
            rows.append(PrimeEquivalenceRow(
                replica=i, delta=delta, d=d.distance, d_prime=d_prime, log_gap=gap,
                within=gap is not None and gap <= 0.5 * math.log(1.0 / delta), capped=part.depth_cap_hit,
            ))
        return rows

    return [row for rows in sampling.replica_map(replica, replicas) for row in rows]


def prime_agreement(rows: Sequence[PrimeEquivalenceRow], required: float = PRIME_AGREEMENT) -> PrimeEquivalenceSummary:
    agreeing = sum(r.within for r in rows)
    summary = PrimeEquivalenceSummary(
        n=len(rows), agreeing=agreeing, fraction=agreeing / len(rows) if rows else 0.0, required=required,
    )
    if not summary.passed:
        logger.warning("D and D' agree on %d of %d samples; %.0f%% required", agreeing, len(rows), 100 * required)
    return summary


def cell_size_exponents(
    gamma: float,
    deltas: Sequence[float],
    replicas: int,
    sampling: Sampling = Sampling(),
) -> list[CellSizeRow]:
    """Extreme leaf sides per delta as exponents: delta^c_max <= side <= delta^c_min."""

    def replica(i: int) -> list[tuple[float, float, bool]]:
        stack = sampling.stack(i)
        out = []
        for delta in deltas:
            stats = partition_stats(build_partition(stack, gamma, delta, sampling.depth - 2))
            out.append((stats.min_side, stats.max_side, stats.depth_cap_hit))
        return out

    outcomes = sampling.replica_map(replica, replicas)
    rows = []
    for k, delta in enumerate(deltas):
        mins = [o[k][0] for o in outcomes]
        maxs = [o[k][1] for o in outcomes]
        log_delta = math.log(delta)
        rows.append(CellSizeRow(
            delta=delta, replicas=replicas, min_side=min(mins), max_side=max(maxs),
            c_min=math.log(max(maxs)) / log_delta, c_max=math.log(min(mins)) / log_delta,
            capped=sum(1 for o in outcomes if o[k][2]),
        ))
    return rows


def heat_curve(
    gamma: float,
    u: tuple[float, float],
    v: tuple[float, float],
    t_grid: Sequence[float],
    r: float,
    replicas: int,
    sampling: Sampling = Sampling(),
    dt: float = 1e-5,
    mode: EstimateMode = EstimateMode.ANNEALED,
    paths_per_field: int = 1,
    horizon_factor: float = DEFAULT_HORIZON_FACTOR,
) -> list[HeatKernelEstimate]:
    """Hitting-probability estimates over a grid of Liouville times; one seed base for all."""
    out = []
    for t in t_grid:
        est = hitting_probability(
            u, v, t, r, replicas, gamma, dt=dt, mode=mode, seed=sampling.seed, engine=sampling.engine,
            N=sampling.N, J=sampling.depth, slices=sampling.slices, paths_per_field=paths_per_field,
            horizon_factor=horizon_factor, threads=sampling.workers,
        )
        logger.info("t=%.4g: q=%.4g +- %.2g, p=%.4g", t, est.q_hat, est.q_se, est.p_hat)
        out.append(est)
    return out


def heat_distance_consistency(
    gamma: float,
    chi: ChiEstimate | float,
    heat: FitResult | Sequence[HeatKernelEstimate] | float,
    on_diagonal_correction: bool = True,
) -> ConsistencyResult:
    """Residual of the heat-kernel slope against chi / (2 - chi)."""
    chi_hat = chi.slope if isinstance(chi, ChiEstimate) else float(chi)
    if isinstance(heat, FitResult):
        slope = heat.slope
    elif isinstance(heat, (int, float)):
        slope = float(heat)
    else:
        slope = heat_exponent_fit(heat, on_diagonal_correction).slope
    target = chi_hat / (2.0 - chi_hat)
    return ConsistencyResult(gamma=gamma, chi=chi_hat, heat_slope=slope, target=target, residual=slope - target)
