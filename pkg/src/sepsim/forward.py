"""Monte Carlo simulation of the forward chain.

Two engines share the model definition from core:

* a scalar embedded-jump-chain engine for stationary sampling. It keeps the
  set of enabled bonds incrementally (each firing can only change the status
  of the fired bond and its two neighbours), draws the holding time from
  Exp(rate * #enabled) and picks an enabled bond uniformly, so no events are
  wasted on no-op firings;
* a vectorized fixed-time engine for transient moments. It uses the full bond
  clock: events arrive at the constant total rate rate * (S+1), each event
  fires a uniformly random bond and firings of balanced bonds do nothing.
  That makes the per-replica event count Poisson with a known mean, so all
  replicas advance in lock step on numpy arrays. Both engines realize the
  same law.

Stationary estimates pool replica means and report the between-replica
standard error, which stays honest when consecutive samples are correlated.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    Configuration,
    ModelParams,
    PointSet,
    RngStream,
    as_generator,
    default_initial_configuration,
    enabled_bonds,
    validate_point_set,
)
from .errors import ValidationError

DEFAULT_BURN_IN_FACTOR = 10.0  # multiples of size^2 / rate, the diffusive relaxation scale
DEFAULT_INTERVAL_DIVISOR = 25.0  # sample every size^2 / 25 time units

_CHUNK = 1 << 14


@dataclass(frozen=True)
class SimSchedule:
    """Sampling plan for one stationary estimate."""

    burn_in: float
    n_samples: int
    sample_interval: float
    n_replicas: int

    def __post_init__(self) -> None:
        if self.burn_in < 0:
            raise ValidationError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be >= 1, got {self.n_samples}")
        if not self.sample_interval > 0:
            raise ValidationError(
                f"sample_interval must be positive, got {self.sample_interval}"
            )
        if self.n_replicas < 1:
            raise ValidationError(f"n_replicas must be >= 1, got {self.n_replicas}")


def default_burn_in(params: ModelParams) -> float:
    return DEFAULT_BURN_IN_FACTOR * params.size**2 / params.rate


def default_schedule(
    params: ModelParams,
    n_replicas: int = 32,
    n_samples: int = 1000,
    burn_in: float | None = None,
    sample_interval: float | None = None,
) -> SimSchedule:
    if burn_in is None:
        burn_in = default_burn_in(params)
    if sample_interval is None:
        sample_interval = max(1.0, params.size**2 / DEFAULT_INTERVAL_DIVISOR) / params.rate
    return SimSchedule(
        burn_in=burn_in,
        n_samples=n_samples,
        sample_interval=sample_interval,
        n_replicas=n_replicas,
    )


@dataclass
class EstimatorAccumulator:
    """Streaming mean and squared deviation (Welford), mergeable across blocks."""

    count: int = 0
    mean: float = 0.0
    sum_sq_dev: float = 0.0

    def update(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.sum_sq_dev += delta * (value - self.mean)

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        """Combined accumulator; exact for any split of the same value stream."""
        if self.count == 0:
            return EstimatorAccumulator(other.count, other.mean, other.sum_sq_dev)
        if other.count == 0:
            return EstimatorAccumulator(self.count, self.mean, self.sum_sq_dev)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        ssd = self.sum_sq_dev + other.sum_sq_dev + delta * delta * self.count * other.count / n
        return EstimatorAccumulator(n, mean, ssd)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return math.nan
        return self.sum_sq_dev / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return math.nan
        return math.sqrt(max(self.variance, 0.0) / self.count)


def step_ctmc(
    config: Configuration, params: ModelParams, rng: RngStream | np.random.Generator
) -> tuple[Configuration, float]:
    """One embedded-chain step: holding time, then a uniform enabled bond.

    With the reservoir sites pinned, at least one bond is always enabled, so
    an empty move set means corrupted state and fails hard.
    """
    if config.size != params.size:
        raise ValidationError("configuration size does not match params")
    gen = as_generator(rng)
    moves = sorted(enabled_bonds(config))
    assert moves, "no enabled bond; pinned reservoirs make this unreachable"
    holding = gen.standard_exponential() / (params.rate * len(moves))
    bond = moves[gen.integers(0, len(moves))]
    occ = list(config.occupancy)
    s = config.size
    if bond == 0:
        occ[1] = 0
    elif bond == s:
        occ[s] = 1
    else:
        occ[bond], occ[bond + 1] = occ[bond + 1], occ[bond]
    return Configuration(tuple(occ)), float(holding)


def _run_replica(
    params: ModelParams,
    point_lists: tuple[PointSet, ...],
    schedule: SimSchedule,
    stream: RngStream,
) -> tuple[list[float], int]:
    """Sample one replica; returns per-set sample means and the event count."""
    gen = stream.generator()
    s = params.size
    rate = params.rate
    occ = list(default_initial_configuration(params).occupancy)
    bonds = [b for b in range(s + 1) if occ[b] != occ[b + 1]]
    pos = [-1] * (s + 1)
    for i, b in enumerate(bonds):
        pos[b] = i

    sums = [0.0] * len(point_lists)
    t = 0.0
    next_sample = schedule.burn_in
    interval = schedule.sample_interval
    n_samples = schedule.n_samples
    taken = 0
    events = 0
    uniforms = gen.random(_CHUNK).tolist()
    exps = gen.standard_exponential(_CHUNK).tolist()
    cursor = 0
    while True:
        if cursor == _CHUNK:
            uniforms = gen.random(_CHUNK).tolist()
            exps = gen.standard_exponential(_CHUNK).tolist()
            cursor = 0
        n = len(bonds)
        t_next = t + exps[cursor] / (rate * n)
        while taken < n_samples and next_sample <= t_next:
            for si, pts in enumerate(point_lists):
                value = 1
                for p in pts:
                    if not occ[p]:
                        value = 0
                        break
                sums[si] += value
            taken += 1
            next_sample += interval
        if taken >= n_samples:
            break
        t = t_next
        bond = bonds[int(uniforms[cursor] * n)]
        cursor += 1
        events += 1
        if bond == 0:
            occ[1] = 0
        elif bond == s:
            occ[s] = 1
        else:
            occ[bond], occ[bond + 1] = occ[bond + 1], occ[bond]
        for bb in range(max(bond - 1, 0), min(bond + 1, s) + 1):
            now_enabled = occ[bb] != occ[bb + 1]
            idx = pos[bb]
            if now_enabled and idx < 0:
                pos[bb] = len(bonds)
                bonds.append(bb)
            elif not now_enabled and idx >= 0:
                last = bonds[-1]
                bonds[idx] = last
                pos[last] = idx
                bonds.pop()
                pos[bb] = -1
    return [v / n_samples for v in sums], events


def _run_replica_block(
    args: tuple[ModelParams, tuple[PointSet, ...], SimSchedule, RngStream, int, int],
) -> tuple[list[list[float]], int]:
    params, point_lists, schedule, base, lo, hi = args
    means = []
    events = 0
    for r in range(lo, hi):
        m, e = _run_replica(params, point_lists, schedule, base.offset(r))
        means.append(m)
        events += e
    return means, events


@dataclass(frozen=True)
class StationaryEstimate:
    point_sets: tuple[PointSet, ...]
    estimates: np.ndarray
    stderrs: np.ndarray
    total_events: int
    n_replicas: int


def estimate_stationary_moments(
    params: ModelParams,
    point_sets: list[PointSet] | tuple[PointSet, ...],
    schedule: SimSchedule,
    rng: RngStream,
    n_workers: int = 1,
) -> StationaryEstimate:
    """Estimate several occupation moments from the same trajectories.

    Replica r draws from rng.offset(r), so the result is independent of the
    worker split and reproducible bit for bit.
    """
    sets = tuple(
        validate_point_set(pts, params.size, interior_only=True) for pts in point_sets
    )
    if not sets:
        raise ValidationError("need at least one point set")
    reps = schedule.n_replicas
    if n_workers <= 1 or reps == 1:
        blocks = [(0, reps)]
    else:
        n_workers = min(n_workers, reps)
        step = (reps + n_workers - 1) // n_workers
        blocks = [(lo, min(lo + step, reps)) for lo in range(0, reps, step)]
    jobs = [(params, sets, schedule, rng, lo, hi) for lo, hi in blocks]
    if len(jobs) == 1:
        results = [_run_replica_block(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(_run_replica_block, jobs))
    accs = [EstimatorAccumulator() for _ in sets]
    total_events = 0
    for means, events in results:
        total_events += events
        for row in means:
            for acc, value in zip(accs, row):
                acc.update(value)
    return StationaryEstimate(
        point_sets=sets,
        estimates=np.array([a.mean for a in accs]),
        stderrs=np.array([a.stderr for a in accs]),
        total_events=total_events,
        n_replicas=reps,
    )


def estimate_stationary_moment(
    params: ModelParams,
    points: PointSet,
    schedule: SimSchedule,
    rng: RngStream,
    n_workers: int = 1,
) -> tuple[float, float]:
    """Stationary moment of one point set, with between-replica stderr."""
    est = estimate_stationary_moments(params, [tuple(points)], schedule, rng, n_workers)
    return float(est.estimates[0]), float(est.stderrs[0])


def estimate_stationary_profile(
    params: ModelParams,
    schedule: SimSchedule,
    rng: RngStream,
    n_workers: int = 1,
) -> StationaryEstimate:
    """All single-site moments estimated from shared trajectories."""
    sets = [(x,) for x in range(1, params.size + 1)]
    return estimate_stationary_moments(params, sets, schedule, rng, n_workers)


def transient_moment(
    params: ModelParams,
    initial: Configuration,
    t: float,
    points: PointSet,
    n_replicas: int,
    rng: RngStream | np.random.Generator,
) -> tuple[float, float]:
    """Moment of the occupation product at a fixed time from a fixed start.

    Points may include the reservoir sites; their pinned values enter the
    product as the constants 0 and 1.
    """
    if initial.size != params.size:
        raise ValidationError("initial configuration size does not match params")
    if not (t >= 0 and math.isfinite(t)):
        raise ValidationError(f"time must be finite and >= 0, got {t}")
    if n_replicas < 1:
        raise ValidationError(f"n_replicas must be >= 1, got {n_replicas}")
    s = params.size
    pts = validate_point_set(points, s)
    if t == 0.0:
        value = 1.0
        for p in pts:
            value *= initial.occupancy[p]
        return value, 0.0
    gen = as_generator(rng)
    lam_total = params.rate * (s + 1)
    counts = np.sort(gen.poisson(lam_total * t, size=n_replicas))
    occ = np.tile(initial.as_array(), (n_replicas, 1))
    max_events = int(counts[-1]) if n_replicas else 0
    for j in range(max_events):
        active = n_replicas - int(np.searchsorted(counts, j, side="right"))
        if active == 0:
            break
        sub = occ[n_replicas - active :]
        b = gen.integers(0, s + 1, size=active)
        left = np.nonzero(b == 0)[0]
        right = np.nonzero(b == s)[0]
        mid = np.nonzero((b != 0) & (b != s))[0]
        if left.size:
            sub[left, 1] = 0
        if right.size:
            sub[right, s] = 1
        if mid.size:
            bm = b[mid]
            lo_vals = sub[mid, bm]
            sub[mid, bm] = sub[mid, bm + 1]
            sub[mid, bm + 1] = lo_vals
    vals = occ[:, pts].min(axis=1).astype(np.float64)
    est = float(vals.mean())
    if n_replicas < 2:
        return est, math.nan
    se = float(vals.std(ddof=1) / math.sqrt(n_replicas))
    return est, se
