"""
lavlab: numerical laboratory for the cavitation-free invertibility gap of
polyconvex energies on two touching stripes.

The subpackages are re-exported here so interactive work only needs
``import lavlab``.
"""

__version__ = "0.1.0"

from .errors import (
    LavlabError,
    ParameterError,
    DomainError,
    SingularInputError,
    ConstraintError,
    NumericalError,
)
from .energy import *  # noqa: F401,F403
from .geometry import *  # noqa: F401,F403
from .deformations import *  # noqa: F401,F403
from .quadrature import *  # noqa: F401,F403
from .injectivity import *  # noqa: F401,F403
from .scaling import *  # noqa: F401,F403
from .minimizer import *  # noqa: F401,F403
