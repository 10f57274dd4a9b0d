"""
Exact stationary analysis of small models.

The chain is truncated at B tasks per server: states are {0..B}^|S| indexed
in mixed radix (server k has stride (B+1)^k). Arrivals routed by JSQ to a
server already holding B tasks are dropped. The resulting boundary effect is
reported as boundary_mass (stationary probability of states with some queue
at B) and is folded symmetrically into every comparison slack.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .config import get_config
from .exceptions import ConvergenceError, StabilityRejected, StateCapExceeded, TransformError
from .models import NetworkModel, OccupancyCurve, OccupancySource
from .stability import assess_stability

logger = logging.getLogger(__name__)

# uniformization constant = max exit rate * (1 + APERIODIC_PAD); keeps a self-loop everywhere
APERIODIC_PAD = 1e-5


@dataclass
class TruncatedChain:
    model: NetworkModel
    cap: int
    states: np.ndarray  # (n_states, |S|) queue lengths
    strides: np.ndarray
    generator: sp.csr_matrix

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def index_of(self, lengths: Mapping[str, int]) -> int:
        return int(sum(self.strides[k] * lengths[u] for k, u in enumerate(self.model.servers)))

    @property
    def max_exit_rate(self) -> float:
        return float(-self.generator.diagonal().min()) if self.n_states else 0.0


@dataclass
class StationarySolution:
    chain: TruncatedChain
    pi: np.ndarray
    residual: float
    boundary_mass: float
    iterations: int = 0
    method: str = "power"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "states": self.chain.n_states,
            "cap": self.chain.cap,
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "boundary_mass": self.boundary_mass,
        }


def state_count(model: NetworkModel, cap: int) -> int:
    return (cap + 1) ** len(model.servers)


def build_generator(model: NetworkModel, cap: Optional[int] = None, state_cap: Optional[int] = None) -> TruncatedChain:
    """Sparse generator of the truncated JSQ chain"""
    config = get_config().solver
    cap = config.default_cap if cap is None else int(cap)
    state_cap = config.state_cap if state_cap is None else state_cap
    if cap < 1:
        raise ValueError(f"queue cap must be positive, got {cap}")
    n_servers = len(model.servers)
    n_states = state_count(model, cap)
    if n_states > state_cap:
        raise StateCapExceeded(n_states, state_cap)

    radix = cap + 1
    strides = radix ** np.arange(n_servers, dtype=np.int64)
    index = np.arange(n_states, dtype=np.int64)
    states = (index[:, None] // strides[None, :]) % radix

    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    rates: List[np.ndarray] = []

    s_index = model.graph.server_index
    for d in model.dispatchers:
        compatible = np.array([s_index[u] for u in model.graph.dispatcher_neighbors[d]], dtype=np.int64)
        lengths = states[:, compatible]
        shortest = lengths.min(axis=1)
        is_min = lengths == shortest[:, None]
        ties = is_min.sum(axis=1)
        open_rows = shortest < cap  # all minimizers at the cap: arrival dropped
        share = model.rates.lam[d] / ties
        for j, k in enumerate(compatible):
            hit = is_min[:, j] & open_rows
            src = index[hit]
            rows.append(src)
            cols.append(src + strides[k])
            rates.append(share[hit])

    for block in model.partition.blocks:
        members = np.array([s_index[u] for u in block], dtype=np.int64)
        busy = states[:, members] > 0
        fires = busy.any(axis=1)
        src = index[fires]
        rows.append(src)
        cols.append(src - (busy[fires] * strides[members]).sum(axis=1))
        rates.append(np.full(src.shape[0], model.block_rate(block)))

    rows_a, cols_a, rates_a = np.concatenate(rows), np.concatenate(cols), np.concatenate(rates)
    off = sp.coo_matrix((rates_a, (rows_a, cols_a)), shape=(n_states, n_states)).tocsr()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    generator = (off - sp.diags(exit_rates, format="csr")).tocsr()

    logger.debug(f"build_generator: {n_states} states, {generator.nnz} nonzeros, cap {cap}")
    return TruncatedChain(model=model, cap=cap, states=states, strides=strides, generator=generator)


def _boundary_mass(chain: TruncatedChain, pi: np.ndarray) -> float:
    at_cap = (chain.states == chain.cap).any(axis=1)
    return float(pi[at_cap].sum())


def _power(chain: TruncatedChain, tol: float, max_iter: int, check_every: int) -> Tuple[np.ndarray, int]:
    uniform_rate = chain.max_exit_rate * (1 + APERIODIC_PAD)
    kernel_t = (sp.identity(chain.n_states, format="csr") + chain.generator / uniform_rate).T.tocsr()
    pi = np.zeros(chain.n_states)
    pi[0] = 1.0  # all queues empty
    it = 0
    while it < max_iter:
        for _ in range(check_every):
            prev = pi
            pi = kernel_t @ prev
            it += 1
        if not np.all(np.isfinite(pi)):
            raise ConvergenceError(f"power iteration diverged after {it} iterations")
        pi /= pi.sum()
        if np.abs(pi - prev).max() < tol:
            return pi, it
    raise ConvergenceError(f"power iteration did not reach tol={tol} within {max_iter} iterations")


def _direct(chain: TruncatedChain) -> np.ndarray:
    n = chain.n_states
    if n == 1:
        return np.ones(1)
    # replace the first balance equation by the normalisation
    system = sp.vstack([sp.csr_matrix(np.ones((1, n))), chain.generator.T.tocsr()[1:, :]]).tocsr()
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi = spsolve(system, rhs)
    if not np.all(np.isfinite(pi)):
        raise ConvergenceError("direct solve produced non-finite values")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary(
    chain: TruncatedChain,
    tol: Optional[float] = None,
    method: Optional[str] = None,
    max_iter: Optional[int] = None,
    check_every: Optional[int] = None,
) -> StationarySolution:
    """
    Solve pi Q = 0, sum(pi) = 1.

    Refuses models that are not ergodic. "power" iterates the uniformized
    kernel until successive iterates differ by less than tol in max-norm;
    "direct" uses a sparse LU solve.
    """
    config = get_config().solver
    tol = config.tol if tol is None else tol
    method = config.method if method is None else method
    max_iter = config.max_iter if max_iter is None else int(max_iter)
    check_every = config.check_every if check_every is None else int(check_every)

    verdict = assess_stability(chain.model)
    if not verdict.is_ergodic:
        raise StabilityRejected(verdict)

    if method == "power":
        pi, iterations = _power(chain, tol, max_iter, check_every)
    elif method == "direct":
        pi, iterations = _direct(chain), 0
    else:
        raise ValueError(f"unknown solver method {method!r}")

    residual = float(np.abs(chain.generator.T @ pi).max())
    boundary = _boundary_mass(chain, pi)
    if boundary > config.boundary_mass_max:
        logger.warning(f"boundary mass {boundary:.3g} above {config.boundary_mass_max:.3g}; raise the queue cap")
    logger.info(f"stationary ({method}): {chain.n_states} states, {iterations} iterations, residual {residual:.3g}, boundary mass {boundary:.3g}")
    return StationarySolution(chain=chain, pi=pi, residual=residual, boundary_mass=boundary, iterations=iterations, method=method)


def server_tails(solution: StationarySolution) -> Dict[str, np.ndarray]:
    """P(X(u) >= i) for i = 0..B, per server"""
    chain = solution.chain
    tails = {}
    for k, u in enumerate(chain.model.servers):
        marginal = np.bincount(chain.states[:, k], weights=solution.pi, minlength=chain.cap + 1)
        tails[u] = np.cumsum(marginal[::-1])[::-1]
    return tails


def occupancy_exact(solution: StationarySolution, i_max: Optional[int] = None) -> OccupancyCurve:
    """E[q(i)] = mean over servers of P(X(u) >= i), for i = 0..i_max (default B)"""
    cap = solution.chain.cap
    i_max = cap if i_max is None else int(i_max)
    tails = server_tails(solution)
    width = i_max + 1

    def _pad(t: np.ndarray) -> np.ndarray:
        out = np.zeros(width)
        n = min(width, t.shape[0])
        out[:n] = t[:n]
        return out

    padded = {u: _pad(t) for u, t in tails.items()}
    values = np.mean(np.vstack(list(padded.values())), axis=0)
    values[0] = 1.0
    return OccupancyCurve(
        values=tuple(values),
        half_widths=(0.0,) * width,
        source=OccupancySource.exact,
        truncation_slack=solution.boundary_mass,
        server_tails={u: tuple(t) for u, t in padded.items()},
    )


def mean_total_tasks(solution: StationarySolution) -> float:
    return float(solution.pi @ solution.chain.states.sum(axis=1))


@dataclass
class TailComparison:
    """P(X_a(mapping[w]) >= i) against P(X_b(w) >= i)"""
    slack: float
    worst_margin: float
    worst_at: Optional[Tuple[str, int]]
    violations: List[Tuple[str, int, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "slack": self.slack,
            "worst_margin": self.worst_margin,
            "worst_at": list(self.worst_at) if self.worst_at else None,
            "violations": [list(v) for v in self.violations],
        }


def tail_compare(
    sol_a: StationarySolution,
    sol_b: StationarySolution,
    mapping: Mapping[str, str],
    i_max: Optional[int] = None,
    tol: Optional[float] = None,
) -> TailComparison:
    """
    Check that model A dominates model B server by server: mapping sends
    every server of B to a server of A. A violation is a margin
    tail_a - tail_b below -slack, slack = both boundary masses + 2 tol.
    """
    tol = get_config().solver.tol if tol is None else tol
    missing = [w for w in sol_b.chain.model.servers if w not in mapping]
    if missing:
        raise TransformError(f"mapping does not cover servers {missing}")
    unknown = [mapping[w] for w in sol_b.chain.model.servers if mapping[w] not in sol_a.chain.model.graph.server_index]
    if unknown:
        raise TransformError(f"mapping targets unknown servers {unknown}")

    i_max = min(sol_a.chain.cap, sol_b.chain.cap) if i_max is None else int(i_max)
    slack = sol_a.boundary_mass + sol_b.boundary_mass + 2 * tol
    tails_a, tails_b = server_tails(sol_a), server_tails(sol_b)

    worst, worst_at, violations = np.inf, None, []
    for w in sol_b.chain.model.servers:
        ta, tb = tails_a[mapping[w]], tails_b[w]
        for i in range(i_max + 1):
            a = ta[i] if i < ta.shape[0] else 0.0
            b = tb[i] if i < tb.shape[0] else 0.0
            margin = float(a - b)
            if margin < worst:
                worst, worst_at = margin, (w, i)
            if margin < -slack:
                violations.append((w, i, margin))
    if violations:
        logger.warning(f"tail_compare: {len(violations)} violations, worst {worst:.3g} at {worst_at}")
    return TailComparison(slack=slack, worst_margin=float(worst), worst_at=worst_at, violations=violations)


def solve_model(
    model: NetworkModel,
    cap: Optional[int] = None,
    tol: Optional[float] = None,
    method: Optional[str] = None,
    i_max: Optional[int] = None,
) -> Tuple[StationarySolution, OccupancyCurve]:
    chain = build_generator(model, cap)
    solution = stationary(chain, tol=tol, method=method)
    return solution, occupancy_exact(solution, i_max)


def solve_within_boundary(
    model: NetworkModel,
    cap: Optional[int] = None,
    boundary_mass_max: Optional[float] = None,
    tol: Optional[float] = None,
    method: Optional[str] = None,
    state_budget: Optional[int] = None,
) -> StationarySolution:
    """
    Solve, doubling the queue cap while the boundary mass exceeds its
    threshold and the state count stays within budget. The last solution is
    returned even if the threshold was not met.
    """
    config = get_config().solver
    cap = config.default_cap if cap is None else int(cap)
    boundary_mass_max = config.boundary_mass_max if boundary_mass_max is None else boundary_mass_max
    state_budget = config.state_cap if state_budget is None else state_budget

    while True:
        solution = stationary(build_generator(model, cap, state_cap=state_budget), tol=tol, method=method)
        if solution.boundary_mass <= boundary_mass_max or state_count(model, 2 * cap) > state_budget:
            return solution
        logger.info(f"boundary mass {solution.boundary_mass:.3g} at cap {cap}; retrying with cap {2 * cap}")
        cap *= 2


def largest_cap(model: NetworkModel, state_budget: int, ceiling: Optional[int] = None) -> int:
    """Largest per-server cap B with (B + 1)^|S| within the budget"""
    ceiling = get_config().solver.default_cap if ceiling is None else ceiling
    n = len(model.servers)
    cap = int(round(state_budget ** (1.0 / n))) - 1
    while cap > 1 and (cap + 1) ** n > state_budget:
        cap -= 1
    return max(1, min(cap, ceiling))
