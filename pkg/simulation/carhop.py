"""
Two-server drive-in (Able and Baker) driven by clustered or pooled arrivals.

Able is the senior carhop: an arriving customer goes to Able when Able is
idle, otherwise to Baker when Baker is idle, otherwise joins one FCFS queue.
Case I draws interarrival times from alternating blocks (means 1, 6, 1, 6 by
default); case II draws every interarrival from one exponential with the
pooled mean. Each replication starts empty and ends at the last departure.
"""

import heapq
import logging
from collections import deque
from dataclasses import asdict, dataclass
from functools import partial
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import stats

from detection.errors import InvalidInputError, InvariantViolation
from detection.gof import GofReport, ad_exponential
from detection.parallel import child_seed, replicate_map, spawn_seeds
from detection.series import ObservationSeries

logger = logging.getLogger(__name__)

ABLE, BAKER = 0, 1
SERVER_NAMES = ("able", "baker")

ARRIVAL = "arrival"
START = "start"
DEPARTURE = "departure"

DEFAULT_POOLED_MEAN = 3.329

SeedInput = Union[int, np.random.SeedSequence]


class TriangularParams(BaseModel):
    """Triangular distribution on [low, high] with peak at mode."""

    low: float
    mode: float
    high: float

    @model_validator(mode="after")
    def _ordered(self) -> "TriangularParams":
        if not (self.low <= self.mode <= self.high and self.low < self.high):
            raise ValueError(f"need low <= mode <= high and low < high, got {self}")
        return self

    @property
    def mean(self) -> float:
        return (self.low + self.mode + self.high) / 3.0


class CarhopConfig(BaseModel):
    """One case-study configuration."""

    mode: Literal["I", "II"] = Field(..., description="I = clustered arrivals, II = pooled arrivals")
    customers_per_rep: int = Field(200, ge=1)
    replications: int = Field(100, ge=1)
    able_service: TriangularParams = TriangularParams(low=5.0, mode=6.0, high=10.0)
    baker_service: TriangularParams = TriangularParams(low=6.0, mode=7.0, high=11.0)
    block_means: Tuple[float, ...] = Field(
        (1.0, 6.0, 1.0, 6.0), description="Case I interarrival means, one per block"
    )
    block_size: int = Field(50, ge=1, description="Customers per case I block")
    pooled_mean: float = Field(DEFAULT_POOLED_MEAN, gt=0.0, description="Case II interarrival mean")
    seed: int = 0

    @field_validator("mode", mode="before")
    @classmethod
    def _normalize_mode(cls, value):
        aliases = {"1": "I", "clustered_I": "I", "clustered": "I",
                   "2": "II", "pooled_II": "II", "pooled": "II"}
        return aliases.get(str(value), value)

    @field_validator("block_means")
    @classmethod
    def _positive_means(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(mu <= 0 for mu in value):
            raise ValueError("block means must be positive")
        return value


@dataclass(frozen=True)
class RepMetrics:
    """Outputs of one replication; fractions use the run's end time."""

    able_busy_fraction: float
    baker_busy_fraction: float
    joint_busy_fraction: float
    time_avg_in_system: float
    max_in_system: int
    able_served: int
    baker_served: int
    end_time: float

    @property
    def mean_busy_fraction(self) -> float:
        return 0.5 * (self.able_busy_fraction + self.baker_busy_fraction)


@dataclass(frozen=True)
class AuditEvent:
    """One row of the per-event trail (customers numbered from 1)."""

    time: float
    event: str
    customer: int
    server: str
    queue_length: int
    in_system: int


class MetricExtreme(BaseModel):
    """Smallest and largest per-replication value with 1-based replication numbers."""

    minimum: float
    minimum_rep: int
    maximum: float
    maximum_rep: int


class CarhopSummary(BaseModel):
    """Grand means and extremes over the replications of a study."""

    mode: Literal["I", "II"]
    pooled_mean: Optional[float] = None
    replications: int
    customers_per_rep: int
    seed: int
    grand_means: Dict[str, float]
    extremes: Dict[str, MetricExtreme]
    able_ge_baker_fraction: float = Field(..., description="Share of replications with able_served >= baker_served")
    pooled_fit: Optional[GofReport] = None
    per_rep: List[Dict[str, float]] = Field(default_factory=list)


def sample_triangular(
    low: float,
    mode: float,
    high: float,
    u: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    """Inverse CDF of the triangular distribution at u in [0, 1]."""
    if not (low <= mode <= high and low < high):
        raise InvalidInputError(f"invalid triangular parameters ({low}, {mode}, {high})")
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise InvalidInputError("uniform variates must lie in [0, 1]")
    out = stats.triang.ppf(arr, (mode - low) / (high - low), loc=low, scale=high - low)
    return float(out) if np.ndim(out) == 0 else out


def interarrival_means(config: CarhopConfig) -> np.ndarray:
    """Mean interarrival time of each customer under the configured mode."""
    n = config.customers_per_rep
    if config.mode == "II":
        return np.full(n, config.pooled_mean)
    blocks = (np.arange(n) // config.block_size) % len(config.block_means)
    return np.asarray(config.block_means, dtype=float)[blocks]


def interarrival_times(config: CarhopConfig, u: np.ndarray) -> np.ndarray:
    return -interarrival_means(config) * np.log1p(-u)


class EventScheduler:
    """
    Future-event list on a binary heap.

    Equal times pop departures before arrivals, then the lower server index,
    then insertion order.
    """

    def __init__(self):
        self.queue: List[tuple] = []
        self.time = 0.0
        self._seq = 0

    def schedule(self, time: float, kind: str, customer: int, server: Optional[int] = None):
        priority = 0 if kind == DEPARTURE else 1
        rank = len(SERVER_NAMES) if server is None else server
        heapq.heappush(self.queue, (time, priority, rank, self._seq, kind, customer, server))
        self._seq += 1

    def pop(self) -> Tuple[float, str, int, Optional[int]]:
        time, _, _, _, kind, customer, server = heapq.heappop(self.queue)
        self.time = time
        return time, kind, customer, server

    def __len__(self) -> int:
        return len(self.queue)


def simulate(
    config: CarhopConfig,
    seed: SeedInput,
    audit: bool = False,
) -> Tuple[RepMetrics, List[AuditEvent]]:
    """
    Run one replication.

    Returns:
        Tuple of (metrics, audit trail); the trail is empty unless audit is set
    """
    n = config.customers_per_rep
    rng = np.random.Generator(np.random.PCG64(seed))
    arrivals = np.cumsum(interarrival_times(config, rng.random(n)))
    u_service = rng.random(n)
    service = (
        np.atleast_1d(sample_triangular(*_params(config.able_service), u_service)),
        np.atleast_1d(sample_triangular(*_params(config.baker_service), u_service)),
    )

    sched = EventScheduler()
    sched.schedule(arrivals[0], ARRIVAL, 0)
    busy = [False, False]
    busy_time = [0.0, 0.0]
    served = [0, 0]
    joint_time = 0.0
    area = 0.0
    in_system = 0
    max_in_system = 0
    last = 0.0
    waiting: deque = deque()
    trail: List[AuditEvent] = []

    def record(time: float, kind: str, customer: int, server: Optional[int]):
        if audit:
            name = SERVER_NAMES[server] if server is not None else ""
            trail.append(AuditEvent(time, kind, customer + 1, name, len(waiting), in_system))

    def start(server: int, customer: int, time: float):
        busy[server] = True
        sched.schedule(time + service[server][customer], DEPARTURE, customer, server)
        record(time, START, customer, server)

    while len(sched):
        t, kind, customer, server = sched.pop()
        dt = t - last
        area += in_system * dt
        for s in (ABLE, BAKER):
            if busy[s]:
                busy_time[s] += dt
        if busy[ABLE] and busy[BAKER]:
            joint_time += dt
        last = t

        if kind == ARRIVAL:
            in_system += 1
            max_in_system = max(max_in_system, in_system)
            if customer + 1 < n:
                sched.schedule(arrivals[customer + 1], ARRIVAL, customer + 1)
            idle = next((s for s in (ABLE, BAKER) if not busy[s]), None)
            if idle is None:
                waiting.append(customer)
            record(t, ARRIVAL, customer, None)
            if idle is not None:
                start(idle, customer, t)
        else:
            busy[server] = False
            served[server] += 1
            in_system -= 1
            record(t, DEPARTURE, customer, server)
            if waiting:
                start(server, waiting.popleft(), t)

    if served[ABLE] + served[BAKER] != n or in_system != 0:
        raise InvariantViolation(f"served {served} of {n} customers, {in_system} left in system")

    end = last
    metrics = RepMetrics(
        able_busy_fraction=busy_time[ABLE] / end,
        baker_busy_fraction=busy_time[BAKER] / end,
        joint_busy_fraction=joint_time / end,
        time_avg_in_system=area / end,
        max_in_system=max_in_system,
        able_served=served[ABLE],
        baker_served=served[BAKER],
        end_time=end,
    )
    return metrics, trail


def _params(params: TriangularParams) -> Tuple[float, float, float]:
    return params.low, params.mode, params.high


def run_replication(config: CarhopConfig, rep_index: int) -> RepMetrics:
    """Replication rep_index (0-based) of a study, seeded by the rep_index-th child of config.seed."""
    if not 0 <= rep_index < config.replications:
        raise InvalidInputError(f"replication {rep_index} outside [0, {config.replications})")
    metrics, _ = simulate(config, child_seed(config.seed, rep_index))
    return metrics


def check_audit(events: List[AuditEvent], customers: int) -> None:
    """Raise InvariantViolation unless the trail shows a conserving, FCFS, one-at-a-time system."""
    arrivals = [e.customer for e in events if e.event == ARRIVAL]
    starts = [e.customer for e in events if e.event == START]
    departures = [e.customer for e in events if e.event == DEPARTURE]
    if not (len(arrivals) == len(starts) == len(departures) == customers):
        raise InvariantViolation("arrivals, service starts and departures must each cover every customer")
    if starts != sorted(starts):
        raise InvariantViolation("service did not start in arrival order")

    current: Dict[str, Optional[int]] = {name: None for name in SERVER_NAMES}
    for e in events:
        if e.event == START:
            if current[e.server] is not None:
                raise InvariantViolation(f"{e.server} started customer {e.customer} while busy")
            current[e.server] = e.customer
        elif e.event == DEPARTURE:
            if current[e.server] != e.customer:
                raise InvariantViolation(f"customer {e.customer} left {e.server} without being served")
            current[e.server] = None


def pool_from_seed(config: CarhopConfig, seed: int) -> Tuple[float, GofReport]:
    """
    Pool one case I realization and fit an exponential to it.

    Returns:
        Tuple of (pooled sample mean, Anderson-Darling report of the pooled data)
    """
    clustered = config.model_copy(update={"mode": "I"})
    rng = np.random.Generator(np.random.PCG64(seed))
    pooled = interarrival_times(clustered, rng.random(clustered.customers_per_rep))
    report = ad_exponential(ObservationSeries(pooled))
    logger.info(f"pooled mean {report.estimated_mean:.3f}, AD* {report.modified_statistic:.3f}")
    return report.estimated_mean, report


def _study_rep(seed: np.random.SeedSequence, config: CarhopConfig) -> RepMetrics:
    return simulate(config, seed)[0]


def summarize(config: CarhopConfig, reps: List[RepMetrics], pooled_fit: Optional[GofReport] = None) -> CarhopSummary:
    """Deterministic reduction of per-replication metrics."""
    if not reps:
        raise InvalidInputError("cannot summarize zero replications")
    rows = [dict(asdict(r), mean_busy_fraction=r.mean_busy_fraction) for r in reps]
    grand_means: Dict[str, float] = {}
    extremes: Dict[str, MetricExtreme] = {}
    for key in rows[0]:
        column = np.array([row[key] for row in rows], dtype=float)
        grand_means[key] = float(column.mean())
        lo, hi = int(np.argmin(column)), int(np.argmax(column))
        extremes[key] = MetricExtreme(minimum=float(column[lo]), minimum_rep=lo + 1,
                                      maximum=float(column[hi]), maximum_rep=hi + 1)
    able_ge = float(np.mean([r.able_served >= r.baker_served for r in reps]))
    return CarhopSummary(
        mode=config.mode,
        pooled_mean=config.pooled_mean if config.mode == "II" else None,
        replications=len(reps),
        customers_per_rep=config.customers_per_rep,
        seed=config.seed,
        grand_means=grand_means,
        extremes=extremes,
        able_ge_baker_fraction=able_ge,
        pooled_fit=pooled_fit,
        per_rep=rows,
    )


def run_study(
    config: CarhopConfig,
    threads: int = 1,
    progress: bool = True,
    pooled_fit: Optional[GofReport] = None,
) -> CarhopSummary:
    """All replications of a configuration, seeded by children of config.seed."""
    fn = partial(_study_rep, config=config)
    reps = replicate_map(fn, spawn_seeds(config.seed, config.replications), threads,
                         desc=f"carhop case {config.mode}", progress=progress)
    summary = summarize(config, reps, pooled_fit)
    logger.info(
        f"case {config.mode}: able {summary.grand_means['able_served']:.2f}, "
        f"baker {summary.grand_means['baker_served']:.2f}, "
        f"L {summary.grand_means['time_avg_in_system']:.2f}"
    )
    return summary
