"""Persistence analysis for phenotypically structured populations on
migration-coupled patches.

The central quantity is the principal eigenvalue of the coupled
mutation-selection-migration operator: the population persists when it is
negative and goes extinct when it is positive.  Closed forms and
perturbative expressions live in :mod:`multipatch.analytics`; the grid
solver in :mod:`multipatch.eigen`; time integration of the nonlinear
dynamics in :mod:`multipatch.dynamics`; parameter sweeps and region maps
in :mod:`multipatch.sweep`; and the command line in :mod:`multipatch.cli`.
"""

__version__ = "0.1.0"

from . import analytics, cli, domain, dynamics, eigen, sweep  # noqa: E402,F401

__all__ = ["analytics", "cli", "domain", "dynamics", "eigen", "sweep",
           "__version__"]
