"""Finite-element and series tools for the bottom of the spectrum of
randomly wiggled planar waveguides."""

__version__ = "0.1.0"

from .assembly import *  # noqa: F401,F403,E402
from .eigensolve import *  # noqa: F401,F403,E402
from .exceptions import *  # noqa: F401,F403,E402
from .geometry import *  # noqa: F401,F403,E402
from .greens import *  # noqa: F401,F403,E402
from .perturbation import *  # noqa: F401,F403,E402
from .probability import *  # noqa: F401,F403,E402
