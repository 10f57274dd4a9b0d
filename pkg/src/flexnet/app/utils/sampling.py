"""
Random small models for test batteries.

Distribution: |S| and |D| uniform on 1..max; every dispatcher-server pair is
an edge with probability edge_p, conditioned on no isolated node; rates are
log-uniform on [rate_low, rate_high]. Draws are repeated until the model is
Ergodic with margin at least `margin`.
"""
import logging
import math
from typing import List, Optional

import numpy as np

from ..config import get_config
from ..exceptions import FlexnetError
from ..models import BipartiteGraph, NetworkModel, RateSpec
from ..stability import check_ergodic

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 10_000


def _log_uniform(rng: np.random.Generator, low: float, high: float, size: int) -> List[float]:
    return np.exp(rng.uniform(math.log(low), math.log(high), size=size)).tolist()


def sample_graph(rng: np.random.Generator, n_dispatchers: int, n_servers: int, edge_p: float) -> BipartiteGraph:
    dispatchers = tuple(f"d{k + 1}" for k in range(n_dispatchers))
    servers = tuple(f"u{k + 1}" for k in range(n_servers))
    while True:
        mask = rng.random((n_dispatchers, n_servers)) < edge_p
        if mask.any(axis=1).all() and mask.any(axis=0).all():
            break
    edges = tuple((dispatchers[a], servers[b]) for a, b in zip(*np.nonzero(mask)))
    return BipartiteGraph(dispatchers=dispatchers, servers=servers, edges=edges)


def sample_model(
    rng: np.random.Generator,
    max_dispatchers: int = 3,
    max_servers: int = 3,
    edge_p: Optional[float] = None,
    rate_low: Optional[float] = None,
    rate_high: Optional[float] = None,
    margin: Optional[float] = None,
) -> NetworkModel:
    config = get_config().experiment
    edge_p = config.sampler_edge_p if edge_p is None else edge_p
    rate_low = config.sampler_rate_low if rate_low is None else rate_low
    rate_high = config.sampler_rate_high if rate_high is None else rate_high
    margin = config.sampler_margin if margin is None else margin

    for attempt in range(1, MAX_ATTEMPTS + 1):
        n_d = int(rng.integers(1, max_dispatchers + 1))
        n_s = int(rng.integers(1, max_servers + 1))
        graph = sample_graph(rng, n_d, n_s, edge_p)
        lam = _log_uniform(rng, rate_low, rate_high, n_d)
        mu = _log_uniform(rng, rate_low, rate_high, n_s)
        model = NetworkModel(
            graph=graph,
            rates=RateSpec(lam=dict(zip(graph.dispatchers, lam)), mu=dict(zip(graph.servers, mu))),
        )
        verdict = check_ergodic(model)
        if verdict.is_ergodic and verdict.margin >= margin:
            logger.debug(f"sampled model after {attempt} attempts: |D|={n_d} |S|={n_s} margin={verdict.margin:.3g}")
            return model
    raise FlexnetError(f"no ergodic model with margin {margin} in {MAX_ATTEMPTS} attempts")


def sample_models(count: int, seed: int, **kwargs) -> List[NetworkModel]:
    rng = np.random.default_rng(seed)
    return [sample_model(rng, **kwargs) for _ in range(count)]
