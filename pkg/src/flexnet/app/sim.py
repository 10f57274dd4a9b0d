"""
Event-driven simulation of the load balancing process.

Clocks: one arrival clock per dispatcher (rate lambda(d)) and one potential
departure clock per partition block (rate mu of the block). Clock rates do not
depend on the state, so the total event rate is constant: inter-event times
and clock picks are drawn in chunks from one numpy Generator. JSQ ties are
broken from a second, dedicated stream.

Occupancy is integrated lazily: a tracked quantity only accrues area when it
changes or at a batch boundary. After burn-in the window is cut into equal
time batches, and the batch means give t-based confidence intervals.
"""
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .config import get_config
from .models import NetworkModel, OccupancyCurve, OccupancySource

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    seed: int = 0
    i_max: int = 10
    burn_in: Optional[float] = None
    batches: Optional[int] = None
    confidence: Optional[float] = None
    divergence_guard: Optional[int] = None
    chunk: Optional[int] = None

    def __post_init__(self):
        defaults = get_config().simulation
        for name in ("burn_in", "batches", "confidence", "divergence_guard", "chunk"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, getattr(defaults, name))
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.burn_in < 1:
            raise ValueError(f"burn_in must lie in [0, 1), got {self.burn_in}")
        if self.batches < 2:
            raise ValueError(f"need at least 2 batches, got {self.batches}")
        if self.i_max < 1:
            raise ValueError(f"i_max must be at least 1, got {self.i_max}")
        if not 0 < self.confidence < 1:
            raise ValueError(f"confidence must lie in (0, 1), got {self.confidence}")


@dataclass
class SimResult:
    occupancy: Optional[OccupancyCurve]
    mean_total_tasks: float
    events: int
    aborted_unstable: bool
    tail_mass: float = 0.0
    batch_variances: Tuple[float, ...] = ()
    batches: int = 0
    mean_total_half_width: float = 0.0
    mean_total_variance: float = 0.0
    mean_sojourn: float = float("nan")
    completed: int = 0
    max_total_tasks: int = 0
    server_means: Dict[str, float] = field(default_factory=dict)
    replications: int = 1
    abort_time: Optional[float] = None
    confidence: float = 0.99

    def to_dict(self) -> Dict[str, Any]:
        return {
            "events": self.events,
            "aborted_unstable": self.aborted_unstable,
            "abort_time": self.abort_time,
            "mean_total_tasks": self.mean_total_tasks,
            "mean_total_half_width": self.mean_total_half_width,
            "tail_mass": self.tail_mass,
            "batches": self.batches,
            "replications": self.replications,
            "mean_sojourn": self.mean_sojourn,
            "completed": self.completed,
            "max_total_tasks": self.max_total_tasks,
            "confidence": self.confidence,
        }


def replication_seed(seed: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(replication,))


class _Streams:
    """Chunked event times, clock picks and tie-break uniforms"""

    def __init__(self, seq: np.random.SeedSequence, rates: np.ndarray, chunk: int):
        event_seq, tie_seq = seq.spawn(2)
        self.events = np.random.default_rng(event_seq)
        self.ties = np.random.default_rng(tie_seq)
        self.total = float(rates.sum())
        self.probs = rates / self.total
        self.chunk = chunk
        self._dt: List[float] = []
        self._pick: List[int] = []
        self._u: List[float] = []
        self._k = self._j = 0

    def next_event(self) -> Tuple[float, int]:
        if self._k == len(self._dt):
            self._dt = self.events.exponential(1.0 / self.total, size=self.chunk).tolist()
            self._pick = self.events.choice(len(self.probs), size=self.chunk, p=self.probs).tolist()
            self._k = 0
        k = self._k
        self._k += 1
        return self._dt[k], self._pick[k]

    def tie(self, n: int) -> int:
        if self._j == len(self._u):
            self._u = self.ties.random(self.chunk).tolist()
            self._j = 0
        u = self._u[self._j]
        self._j += 1
        return min(int(u * n), n - 1)


class _LazyArea:
    """Piecewise-constant quantities integrated over time"""

    def __init__(self, values: Sequence[float]):
        self.value = list(values)
        self.area = [0.0] * len(self.value)
        self.last = [0.0] * len(self.value)

    def bump(self, idx: int, delta: int, t: float):
        self.area[idx] += self.value[idx] * (t - self.last[idx])
        self.last[idx] = t
        self.value[idx] += delta

    def close(self, t: float) -> np.ndarray:
        value, last = np.array(self.value), np.array(self.last)
        out = np.array(self.area) + value * (t - last)
        self.area = [0.0] * len(self.value)
        self.last = [t] * len(self.value)
        return out


def simulate(model: NetworkModel, config: SimConfig, replication: int = 0) -> SimResult:
    """
    Run one replication. Replication r draws from the seed sequence
    (config.seed, r); replication 0 is the default run.
    """
    servers = model.servers
    n = len(servers)
    s_index = model.graph.server_index
    i_max = config.i_max

    neighbors = [[s_index[u] for u in model.graph.dispatcher_neighbors[d]] for d in model.dispatchers]
    blocks = [[s_index[u] for u in block] for block in model.partition.blocks]
    rates = np.array(
        [model.rates.lam[d] for d in model.dispatchers] + [model.block_rate(b) for b in model.partition.blocks]
    )
    n_arrival = len(model.dispatchers)
    streams = _Streams(replication_seed(config.seed, replication), rates, config.chunk)

    # tracked: levels 1..i_max at 1..i_max, excess beyond i_max, total tasks, then one slot per server
    EXCESS, TOTAL, FIRST_SERVER = i_max + 1, i_max + 2, i_max + 3
    tracked = _LazyArea([float(n)] + [0.0] * (i_max + 2 + n))
    lengths = [0] * n
    arrivals: List[deque] = [deque() for _ in range(n)]

    burn_end = config.burn_in * config.horizon
    width = (config.horizon - burn_end) / config.batches
    boundaries = [burn_end + b * width for b in range(config.batches)] + [config.horizon]
    batch_rows: List[np.ndarray] = []

    t, events, total, max_total = 0.0, 0, 0, 0
    sojourn_sum, completed = 0.0, 0
    bi = 0
    aborted, abort_time = False, None

    while True:
        dt, clock = streams.next_event()
        t_next = t + dt
        while bi < len(boundaries) and boundaries[bi] <= t_next:
            area = tracked.close(boundaries[bi])
            if bi > 0:
                batch_rows.append(area / width)
            bi += 1
        if bi == len(boundaries):
            break
        t = t_next
        events += 1

        if clock < n_arrival:
            nb = neighbors[clock]
            best = lengths[nb[0]]
            ties = [nb[0]]
            for k in nb[1:]:
                x = lengths[k]
                if x < best:
                    best, ties = x, [k]
                elif x == best:
                    ties.append(k)
            k = ties[streams.tie(len(ties))] if len(ties) > 1 else ties[0]
            x = lengths[k] + 1
            lengths[k] = x
            tracked.bump(x if x <= i_max else EXCESS, 1, t)
            tracked.bump(TOTAL, 1, t)
            tracked.bump(FIRST_SERVER + k, 1, t)
            arrivals[k].append(t)
            total += 1
            if total > max_total:
                max_total = total
                if total > config.divergence_guard:
                    aborted, abort_time = True, t
                    break
        else:
            for k in blocks[clock - n_arrival]:
                x = lengths[k]
                if x == 0:
                    continue
                lengths[k] = x - 1
                tracked.bump(x if x <= i_max else EXCESS, -1, t)
                tracked.bump(TOTAL, -1, t)
                tracked.bump(FIRST_SERVER + k, -1, t)
                arrived = arrivals[k].popleft()
                total -= 1
                if t >= burn_end:
                    sojourn_sum += t - arrived
                    completed += 1

    mean_sojourn = sojourn_sum / completed if completed else float("nan")
    if aborted:
        logger.warning(f"simulation aborted at t={abort_time:.6g}: {total} tasks exceed guard {config.divergence_guard}")
        return SimResult(
            occupancy=None,
            mean_total_tasks=float("nan"),
            events=events,
            aborted_unstable=True,
            mean_sojourn=mean_sojourn,
            completed=completed,
            max_total_tasks=max_total,
            abort_time=abort_time,
            confidence=config.confidence,
        )

    result = _summarize(np.vstack(batch_rows), n, i_max, config.confidence)
    result.events = events
    result.mean_sojourn = mean_sojourn
    result.completed = completed
    result.max_total_tasks = max_total
    result.server_means = {u: float(result.server_means[k]) for k, u in enumerate(servers)}
    logger.debug(f"replication {replication}: {events} events, mean total {result.mean_total_tasks:.6g}")
    return result


def _half_width(variance: np.ndarray, count: int, df: int, confidence: float) -> np.ndarray:
    quantile = stats.t.ppf(1 - (1 - confidence) / 2, df)
    return quantile * np.sqrt(variance / count)


def _summarize(rows: np.ndarray, n: int, i_max: int, confidence: float) -> SimResult:
    """Batch means -> point estimates and CI half-widths"""
    b = rows.shape[0]
    means = rows.mean(axis=0)
    variances = rows.var(axis=0, ddof=1)
    half = _half_width(variances, b, b - 1, confidence)

    levels = np.concatenate([[1.0], means[1:i_max + 1] / n])
    level_half = np.concatenate([[0.0], half[1:i_max + 1] / n])
    level_var = np.concatenate([[0.0], variances[1:i_max + 1] / n**2])
    occupancy = OccupancyCurve(values=tuple(levels), half_widths=tuple(level_half), source=OccupancySource.simulated)
    return SimResult(
        occupancy=occupancy,
        mean_total_tasks=float(means[i_max + 2]),
        events=0,
        aborted_unstable=False,
        tail_mass=float(means[i_max + 1] / n),
        batch_variances=tuple(level_var),
        batches=b,
        mean_total_half_width=float(half[i_max + 2]),
        mean_total_variance=float(variances[i_max + 2]),
        server_means=dict(enumerate(means[i_max + 3:].tolist())),
        confidence=confidence,
    )


def merge_results(results: Sequence[SimResult]) -> SimResult:
    """
    Pool k replications of b batches each: the estimate is the mean of the
    replication means, the variance the mean of the batch variances, and the
    half-width uses a t quantile with k(b - 1) degrees of freedom.
    """
    if not results:
        raise ValueError("nothing to merge")
    if len(results) == 1:
        return results[0]
    events = sum(r.events for r in results)
    completed = sum(r.completed for r in results)
    max_total = max(r.max_total_tasks for r in results)
    sojourn = sum(r.mean_sojourn * r.completed for r in results if r.completed)
    mean_sojourn = sojourn / completed if completed else float("nan")

    aborted = [r for r in results if r.aborted_unstable]
    if aborted:
        first = aborted[0]
        return replace(first, events=events, completed=completed, max_total_tasks=max_total,
                       mean_sojourn=mean_sojourn, replications=len(results))

    k, b = len(results), results[0].batches
    confidence = results[0].confidence
    values = np.mean([r.occupancy.values for r in results], axis=0)
    variances = np.mean([r.batch_variances for r in results], axis=0)
    half = _half_width(variances, k * b, k * (b - 1), confidence)
    half[0] = 0.0
    values[0] = 1.0
    total_var = float(np.mean([r.mean_total_variance for r in results]))
    server_means = {u: float(np.mean([r.server_means[u] for r in results])) for u in results[0].server_means}

    return SimResult(
        occupancy=OccupancyCurve(values=tuple(values), half_widths=tuple(half), source=OccupancySource.simulated),
        mean_total_tasks=float(np.mean([r.mean_total_tasks for r in results])),
        events=events,
        aborted_unstable=False,
        tail_mass=float(np.mean([r.tail_mass for r in results])),
        batch_variances=tuple(variances),
        batches=b,
        mean_total_half_width=float(_half_width(np.array(total_var), k * b, k * (b - 1), confidence)),
        mean_total_variance=total_var,
        mean_sojourn=mean_sojourn,
        completed=completed,
        max_total_tasks=max_total,
        server_means=server_means,
        replications=k,
        confidence=confidence,
    )


def _run_replication(args: Tuple[NetworkModel, SimConfig, int]) -> SimResult:
    model, config, replication = args
    return simulate(model, config, replication)


def estimate_occupancy(
    model: NetworkModel,
    config: SimConfig,
    replications: int = 1,
    workers: Optional[int] = None,
) -> SimResult:
    """Independent replications (seed sequence (seed, r) for r = 0..k-1), merged by index"""
    if replications < 1:
        raise ValueError(f"replications must be at least 1, got {replications}")
    workers = get_config().experiment.workers if workers is None else workers
    jobs = [(model, config, r) for r in range(replications)]
    if workers > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replication, jobs))
    else:
        results = [_run_replication(job) for job in jobs]
    for r, result in enumerate(results):
        logger.info(f"replication {r + 1}/{replications} done: {result.events} events")
    return merge_results(results)


@dataclass
class CouplingReport:
    servers: int
    rho: float
    events: int
    violations: int
    equality_violations: int
    max_gap: int

    @property
    def dominated(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "servers": self.servers,
            "rho": self.rho,
            "events": self.events,
            "violations": self.violations,
            "equality_violations": self.equality_violations,
            "max_gap": self.max_gap,
        }


def coupled_prop1_run(
    s: int,
    rho: float,
    horizon: Optional[float] = None,
    seed: int = 0,
    max_events: Optional[int] = None,
    mu: float = 1.0,
    chunk: Optional[int] = None,
) -> CouplingReport:
    """
    Simple s-server JSQ system X against one M/M/1 queue Y with service rate
    mu * s on a shared event stream. Arrivals (rate rho * mu) join both. A
    potential departure clock of rate mu * s always serves Y and is handed to a
    uniformly chosen server of X. Checks sum(X) >= Y after every event
    (equality when s = 1).
    """
    if int(s) != s or s < 1:
        raise ValueError(f"s must be a positive integer, got {s}")
    if not 0 < rho < s:
        raise ValueError(f"need 0 < rho < s, got rho={rho}, s={s}")
    if horizon is None and max_events is None:
        raise ValueError("give a horizon or an event budget")
    chunk = get_config().simulation.chunk if chunk is None else chunk

    # clock 0 is the arrival, clock k >= 1 the potential departure handed to server k - 1
    rates = np.array([rho * mu] + [mu] * s)
    streams = _Streams(replication_seed(seed, 0), rates, chunk)
    lengths = [0] * s
    x_total = y = 0
    t, events = 0.0, 0
    violations = equality_violations = max_gap = 0
    while True:
        if max_events is not None and events >= max_events:
            break
        dt, clock = streams.next_event()
        if horizon is not None and t + dt > horizon:
            break
        t += dt
        events += 1
        if clock == 0:
            best = min(lengths)
            ties = [k for k in range(s) if lengths[k] == best]
            k = ties[streams.tie(len(ties))] if len(ties) > 1 else ties[0]
            lengths[k] += 1
            x_total += 1
            y += 1
        else:
            if y > 0:
                y -= 1
            k = clock - 1
            if lengths[k] > 0:
                lengths[k] -= 1
                x_total -= 1
        gap = x_total - y
        if gap < 0:
            violations += 1
        if s == 1 and gap != 0:
            equality_violations += 1
        if gap > max_gap:
            max_gap = gap

    report = CouplingReport(s, float(rho), events, violations, equality_violations, max_gap)
    logger.info(f"coupling s={s} rho={rho}: {events} events, {violations} violations")
    return report


@dataclass
class LittleReport:
    identity_gap: float
    identity_ok: bool
    mean_total_tasks: float
    mean_sojourn: float
    arrival_rate: float
    little_gap: float
    tolerance: float
    little_ok: bool

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def little_check(result: SimResult, model: NetworkModel, rel_tol: float = 0.05) -> LittleReport:
    """
    Two consistency checks on a finished run:
    mean total tasks against |S| times the summed occupancy (levels beyond
    i_max enter through tail_mass), and L against lambda_total * W.
    """
    if result.aborted_unstable or result.occupancy is None:
        raise ValueError("little_check needs a run that was not aborted")
    n = len(model.servers)
    from_levels = n * (sum(result.occupancy.values[1:]) + result.tail_mass)
    identity_gap = abs(result.mean_total_tasks - from_levels)
    identity_ok = identity_gap <= 1e-9 * max(1.0, result.mean_total_tasks)

    lam = model.total_arrival_rate
    little = lam * result.mean_sojourn
    gap = abs(result.mean_total_tasks - little)
    tolerance = result.mean_total_half_width + rel_tol * result.mean_total_tasks
    ok = math.isfinite(gap) and gap <= tolerance
    return LittleReport(identity_gap, identity_ok, result.mean_total_tasks, result.mean_sojourn, lam, gap, tolerance, ok)
