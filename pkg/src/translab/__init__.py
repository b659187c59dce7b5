"""Self-organizing lists under the transposition rule, the constrained
exclusion process that bounds them, and the coupling between the two."""

from . import coupling, distributions, exact_stationary, exclusion, experiments, list_dynamics
from .distributions import geometric, power_law, truncate
from .errors import CapacityError, DominationError, InvalidParameter, StationarySolveError

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "DominationError",
    "InvalidParameter",
    "StationarySolveError",
    "coupling",
    "distributions",
    "exact_stationary",
    "exclusion",
    "experiments",
    "geometric",
    "list_dynamics",
    "power_law",
    "truncate",
]
