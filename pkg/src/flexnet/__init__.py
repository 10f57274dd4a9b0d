"""Load-balancing networks on bipartite compatibility graphs: stability, exact and simulated occupancy, and flexibility lower bounds."""

__version__ = "0.1.0"
