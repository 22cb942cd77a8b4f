"""arrowlab: a numerical laboratory for irreversible dynamics.

Subpackages cover finite-dimensional quantum-state algebra (qcore),
two-reservoir heat flow and driven engines (thermo), kinetic-regime
momentum-jump Brownian motion (qbm), sound-field Cherenkov friction
(friction), and stochastic collapse histories on tensor chains (eth).
The `arrowlab` command line drives all of them from JSON configs.
"""

__version__ = "0.1.0"
