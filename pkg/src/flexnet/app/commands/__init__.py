from .audit import register as audit_commands
from .network import register as network_commands
from .solve import register as solve_commands

__all__ = ["network_commands", "solve_commands", "audit_commands"]
