"""Injection-rate sweeps and saturation estimates."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from bjmesh.endpoint import EndpointConfig
from bjmesh.errors import ConfigError
from bjmesh.sim.analysis import bisection_bound, count_bisection_crossings
from bjmesh.sim.traffic import Arrivals, Pattern, TrafficSpec, default_credits, run_experiment, traffic_fabric

CSV_COLUMNS = (
    "pattern",
    "cols",
    "rows",
    "offered",
    "normalized_offered",
    "seed",
    "accepted_throughput",
    "mean_latency",
    "median_latency",
    "p99_latency",
    "saturated",
    "bisection_crossings",
    "measured",
    "delivered",
    "cycles",
)


@dataclass
class ExperimentPlan:
    cols: int = 8
    rows: int = 8
    pattern: Pattern = Pattern.UNIFORM_RANDOM
    rates: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    seeds: list[int] = field(default_factory=lambda: [1])
    router_fifo_depth: int = 2
    endpoint_fifo_depth: int = 4
    credits: int | None = None
    warmup: int = 500
    measure: int = 5000
    min_measure_cycles: int = 1000
    arrivals: Arrivals = Arrivals.FIXED
    max_cycles: int = 20_000
    output: str | None = None
    # stop a seed's sweep after this many consecutive saturated points (0 = never)
    stop_after: int = 0

    def __post_init__(self):
        if isinstance(self.pattern, str):
            self.pattern = Pattern(self.pattern)
        if isinstance(self.arrivals, str):
            self.arrivals = Arrivals(self.arrivals)
        if not self.rates:
            raise ConfigError("rate list is empty")
        if not self.seeds:
            raise ConfigError("need at least one seed per point")
        for r in self.rates:
            if not 0 < r <= 1:
                raise ConfigError(f"rate {r} outside (0, 1]")
        self.rates = sorted(float(r) for r in self.rates)
        if self.cols < 1 or self.rows < 1:
            raise ConfigError("mesh needs at least one row and one column")


@dataclass
class SweepPoint:
    pattern: str
    cols: int
    rows: int
    offered: float
    normalized_offered: float
    seed: int
    accepted_throughput: float
    mean_latency: float
    median_latency: float
    p99_latency: float
    saturated: bool
    bisection_crossings: int
    measured: int
    delivered: int
    cycles: int

    def row(self) -> dict:
        return asdict(self)


def _normalizer(cols: int, rows: int) -> float:
    k = max(cols, rows)
    return min(bisection_bound(k), 1.0) if k >= 2 else 1.0


def run_point(plan: ExperimentPlan, rate: float, seed: int) -> SweepPoint:
    credits = plan.credits if plan.credits is not None else default_credits(plan.cols, plan.rows)
    fab = traffic_fabric(
        plan.cols,
        plan.rows,
        router_fifo_depth=plan.router_fifo_depth,
        endpoint=EndpointConfig(fifo_els=plan.endpoint_fifo_depth, max_out_credits=credits),
        seed=seed,
    )
    spec = TrafficSpec(
        plan.pattern,
        rate,
        arrivals=plan.arrivals,
        warmup_cycles=plan.warmup,
        measure_packets=plan.measure,
        min_measure_cycles=plan.min_measure_cycles,
        max_cycles=plan.max_cycles,
    )
    rep = run_experiment(fab, spec)
    crossings = count_bisection_crossings(rep, plan.cols) if plan.cols == plan.rows else 0
    return SweepPoint(
        pattern=plan.pattern.value,
        cols=plan.cols,
        rows=plan.rows,
        offered=rate,
        normalized_offered=rate / _normalizer(plan.cols, plan.rows),
        seed=seed,
        accepted_throughput=rep.accepted_throughput,
        mean_latency=rep.mean_latency,
        median_latency=rep.median_latency,
        p99_latency=rep.p99_latency,
        saturated=rep.saturated,
        bisection_crossings=crossings,
        measured=rep.measured,
        delivered=rep.measured_delivered,
        cycles=rep.cycles,
    )


def _run_seed(plan: ExperimentPlan, seed: int) -> list[SweepPoint]:
    points = []
    streak = 0
    for rate in plan.rates:
        p = run_point(plan, rate, seed)
        points.append(p)
        streak = streak + 1 if p.saturated else 0
        if plan.stop_after and streak >= plan.stop_after:
            break
    return points


def run_sweep(plan: ExperimentPlan, jobs: int = 1) -> list[SweepPoint]:
    """All (rate, seed) points, ordered by rate then seed."""
    if jobs > 1 and len(plan.seeds) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            per_seed = list(pool.map(_run_seed, [plan] * len(plan.seeds), plan.seeds))
    else:
        per_seed = [_run_seed(plan, s) for s in plan.seeds]
    order = {s: i for i, s in enumerate(plan.seeds)}
    points = [p for pts in per_seed for p in pts]
    points.sort(key=lambda p: (p.offered, order[p.seed]))
    return points


def saturation_throughput(points: list[SweepPoint]) -> float:
    """Peak accepted throughput across a sweep (averaged over seeds per rate)."""
    by_rate: dict[float, list[float]] = {}
    for p in points:
        by_rate.setdefault(p.offered, []).append(p.accepted_throughput)
    return max(sum(v) / len(v) for v in by_rate.values())


def last_stable_rate(points: list[SweepPoint]) -> float | None:
    """Highest offered rate below the first saturated point (all seeds stable)."""
    by_rate: dict[float, bool] = {}
    for p in points:
        by_rate[p.offered] = by_rate.get(p.offered, False) or p.saturated
    best = None
    for rate in sorted(by_rate):
        if by_rate[rate]:
            break
        best = rate
    return best


@dataclass
class SaturationSearch:
    stable_rate: float
    saturated_rate: float
    points: list[SweepPoint]

    @property
    def estimate(self) -> float:
        """Midpoint of the bracketing interval, in packets/node/cycle."""
        return 0.5 * (self.stable_rate + self.saturated_rate)


def find_saturation(plan: ExperimentPlan, lo: float, hi: float, tol: float = 0.005) -> SaturationSearch:
    """Bisect for the rate where the source queues stop being stable.

    ``lo`` must be stable and ``hi`` saturated for every seed of the plan;
    a rate counts as saturated when any seed saturates there.
    """
    points: list[SweepPoint] = []

    def saturated(rate: float) -> bool:
        pts = [run_point(plan, rate, s) for s in plan.seeds]
        points.extend(pts)
        return any(p.saturated for p in pts)

    if saturated(lo):
        raise ConfigError(f"lower rate {lo} already saturates")
    if not saturated(hi):
        raise ConfigError(f"upper rate {hi} does not saturate")
    while hi - lo > tol:
        mid = round(0.5 * (lo + hi), 6)
        if saturated(mid):
            hi = mid
        else:
            lo = mid
    points.sort(key=lambda p: (p.offered, p.seed))
    return SaturationSearch(lo, hi, points)
