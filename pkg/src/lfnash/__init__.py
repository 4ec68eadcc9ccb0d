"""Leader-follower Nash equilibrium toolkit.

Multi-leader-multi-follower games where each leader anticipates the
followers' noncooperative equilibrium.  The package reformulates each
leader's bilevel problem into a mixed-integer QP via follower KKT systems
with big-M complementarity switches, and searches for a leaders'
equilibrium by proximal best-response sweeps over an exact potential.
"""

from ._kernels import backend_name
from .model import (
    MODE_GNE,
    MODE_VARIATIONAL,
    Follower,
    FollowerConstraints,
    FollowerCost,
    HierarchicalGame,
    LeaderBlock,
    LeaderSpec,
    validate_game,
)
from .quadform import QuadForm

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "Follower",
    "FollowerConstraints",
    "FollowerCost",
    "HierarchicalGame",
    "LeaderBlock",
    "LeaderSpec",
    "MODE_GNE",
    "MODE_VARIATIONAL",
    "QuadForm",
    "validate_game",
    "__version__",
]
