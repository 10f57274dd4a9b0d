from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class NodeEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(..., min_length=1)
    rate: float = Field(..., description="Arrival rate for dispatchers, service rate for servers")

    @field_validator("rate")
    @classmethod
    def rate_positive(cls, v):
        if not v > 0 or v == float("inf"):
            raise ValueError(f"rate must be > 0 and finite, got {v}")
        return v


class NetworkFile(BaseModel):
    """JSON network format"""
    model_config = ConfigDict(extra="forbid")

    dispatchers: List[NodeEntry]
    servers: List[NodeEntry]
    edges: List[Tuple[str, str]]
    partition: Optional[List[List[str]]] = None


class ExperimentSpec(BaseModel):
    """What to run for a verification or sweep"""
    model_config = ConfigDict(extra="forbid")

    model_path: Optional[str] = None
    family: Optional[Literal["g1", "g2", "complete"]] = None
    n: Optional[int] = Field(None, ge=1)
    load_factor: Optional[float] = Field(None, gt=0, lt=1)
    method: Literal["exact", "simulate"] = "exact"
    bounds: List[Literal["prop1", "thm1", "thm2", "thm3", "theta"]] = Field(
        default_factory=lambda: ["prop1", "thm1", "thm2", "thm3"]
    )
    i_max: int = Field(10, ge=1)
    cap: Optional[int] = Field(None, ge=1)
    tol: Optional[float] = Field(None, gt=0)
    solver_method: Optional[Literal["power", "direct"]] = None
    horizon: float = Field(1e5, gt=0)
    replications: int = Field(1, ge=1)
    seed: int = 0
    output: Optional[str] = None

    @model_validator(mode="after")
    def source_complete(self):
        if (self.model_path is None) == (self.family is None):
            raise ValueError("exactly one of model_path or family is required")
        if self.family is not None and self.n is None:
            raise ValueError(f"family {self.family} needs n")
        return self