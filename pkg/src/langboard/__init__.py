"""langboard: a desk-scale language-conditioned block-pushing testbed.

Deterministic 2D pushing simulator, a 696-condition instruction benchmark,
an episode/relabel datastore, a scripted expert for corpus generation,
language-conditioned behavioral-cloning policies trained with verified
gradients, and a real-time guidance service.
"""

__version__ = "0.1.0"

from . import sim, tasks  # noqa: F401
