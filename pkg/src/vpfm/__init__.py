"""Vortex particle flow-map simulator for incompressible flow in 2D and 3D."""

import os

# the bundled TBB is too old for numba; pick a layer that needs no probing
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .grid import GridDesc  # noqa: E402

__all__ = ["GridDesc"]
__version__ = "0.1.0"
