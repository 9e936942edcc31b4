"""Event-driven simulation and statistical verification lab for voter-type
interacting particle systems and their dual walker systems.

The package covers four model families: the nearest-neighbour voter model,
the voter model with stirring, voter dynamics on dynamical percolation, and
the dual systems of (coalescing, stirring, environment-reading) random
walks.  Forward simulators, dual simulators, explicit couplings, exact
small-chain oracles and Monte Carlo experiment harnesses live in their own
modules; everything is reproducible from a single master seed.
"""

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "lattice",
    "randomness",
    "dynamics",
    "duals",
    "couplings",
    "experiments",
    "oracle",
    "stats",
    "reports",
]
