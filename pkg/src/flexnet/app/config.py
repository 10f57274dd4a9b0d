"""
Flexnet Configuration

Centralized defaults for the stability checker, exact solver, simulator and
experiment harness. Every value can be overridden from the environment (or a
.env file); operations still accept explicit arguments, config only supplies
their defaults.
"""
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"


@dataclass
class StabilityConfig:
    """Subset enumeration limits"""
    subset_cap: int = 25
    eps: float = 1e-12
    exact: bool = True

    @classmethod
    def from_env(cls) -> "StabilityConfig":
        """Load from environment variables"""
        return cls(
            subset_cap=int(os.getenv("FLEXNET_SUBSET_CAP", "25")),
            eps=float(os.getenv("FLEXNET_STABILITY_EPS", "1e-12")),
            exact=_env_bool("FLEXNET_STABILITY_EXACT", "true"),
        )


@dataclass
class SolverConfig:
    """Truncated-chain solver configuration"""
    state_cap: int = 5_000_000
    tol: float = 1e-12
    max_iter: int = 10_000_000
    check_every: int = 10
    boundary_mass_max: float = 1e-10
    default_cap: int = 40
    method: str = "power"

    @classmethod
    def from_env(cls) -> "SolverConfig":
        """Load from environment variables"""
        return cls(
            state_cap=int(os.getenv("FLEXNET_STATE_CAP", "5000000")),
            tol=float(os.getenv("FLEXNET_SOLVER_TOL", "1e-12")),
            max_iter=int(os.getenv("FLEXNET_MAX_ITER", "10000000")),
            check_every=int(os.getenv("FLEXNET_CHECK_EVERY", "10")),
            boundary_mass_max=float(os.getenv("FLEXNET_BOUNDARY_MASS_MAX", "1e-10")),
            default_cap=int(os.getenv("FLEXNET_DEFAULT_CAP", "40")),
            method=os.getenv("FLEXNET_SOLVER_METHOD", "power"),
        )


@dataclass
class SimulationConfig:
    """Simulator defaults (heuristics, not derived from the model)"""
    burn_in: float = 0.2
    batches: int = 20
    confidence: float = 0.99
    divergence_guard: int = 1_000_000
    chunk: int = 65536

    @classmethod
    def from_env(cls) -> "SimulationConfig":
        """Load from environment variables"""
        return cls(
            burn_in=float(os.getenv("FLEXNET_SIM_BURN_IN", "0.2")),
            batches=int(os.getenv("FLEXNET_SIM_BATCHES", "20")),
            confidence=float(os.getenv("FLEXNET_SIM_CONFIDENCE", "0.99")),
            divergence_guard=int(os.getenv("FLEXNET_SIM_DIVERGENCE_GUARD", "1000000")),
            chunk=int(os.getenv("FLEXNET_SIM_CHUNK", "65536")),
        )


@dataclass
class ExperimentConfig:
    """Harness configuration: concurrency, rate scaling and random model sampler"""
    workers: int = 1
    load_factor: float = 0.8
    sampler_margin: float = 0.05
    sampler_edge_p: float = 0.5
    sampler_rate_low: float = 0.2
    sampler_rate_high: float = 2.0
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "ExperimentConfig":
        """Load from environment variables"""
        return cls(
            workers=int(os.getenv("FLEXNET_WORKERS", "1")),
            load_factor=float(os.getenv("FLEXNET_LOAD_FACTOR", "0.8")),
            sampler_margin=float(os.getenv("FLEXNET_SAMPLER_MARGIN", "0.05")),
            sampler_edge_p=float(os.getenv("FLEXNET_SAMPLER_EDGE_P", "0.5")),
            sampler_rate_low=float(os.getenv("FLEXNET_SAMPLER_RATE_LOW", "0.2")),
            sampler_rate_high=float(os.getenv("FLEXNET_SAMPLER_RATE_HIGH", "2.0")),
            log_level=os.getenv("FLEXNET_LOG_LEVEL", "INFO").upper(),
        )


@dataclass
class FlexnetConfig:
    """Complete configuration"""
    stability: StabilityConfig
    solver: SolverConfig
    simulation: SimulationConfig
    experiment: ExperimentConfig

    @classmethod
    def from_env(cls) -> "FlexnetConfig":
        """Load all configuration from environment"""
        return cls(
            stability=StabilityConfig.from_env(),
            solver=SolverConfig.from_env(),
            simulation=SimulationConfig.from_env(),
            experiment=ExperimentConfig.from_env(),
        )


# Global configuration instance
_config: Optional[FlexnetConfig] = None


def get_config() -> FlexnetConfig:
    """Get the global configuration"""
    global _config
    if _config is None:
        _config = FlexnetConfig.from_env()
    return _config


def reload_config() -> FlexnetConfig:
    """Reload configuration from environment"""
    global _config
    _config = FlexnetConfig.from_env()
    return _config
