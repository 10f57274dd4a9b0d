from typing import Any, Optional


class FlexnetError(Exception):
    """Base class for all flexnet errors"""


class ModelValidationError(FlexnetError, ValueError):
    """A network description violates a model invariant"""

    def __init__(self, message: str, element: Optional[str] = None):
        super().__init__(message)
        self.element = element


class WeightFunctionError(FlexnetError, ValueError):
    pass


class TransformError(FlexnetError, ValueError):
    pass


class BoundDomainError(FlexnetError, ValueError):
    pass


class SubsetCapExceeded(FlexnetError):
    """Too many servers for exhaustive subset enumeration"""

    def __init__(self, servers: int, cap: int):
        super().__init__(f"{servers} servers exceed the subset enumeration cap of {cap}")
        self.servers = servers
        self.cap = cap


class StabilityRejected(FlexnetError):
    """The model is not ergodic (or sits on the boundary)"""

    def __init__(self, verdict: Any):
        witness = sorted(verdict.witness) if verdict.witness else []
        super().__init__(f"model rejected as {verdict.status.value}, witness {witness}")
        self.verdict = verdict


class StateCapExceeded(FlexnetError):
    def __init__(self, states: int, cap: int):
        super().__init__(f"truncated chain has {states} states, above the cap of {cap}")
        self.states = states
        self.cap = cap


class ConvergenceError(FlexnetError):
    pass
