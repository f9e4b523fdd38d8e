"""Fused embeddings, SAE-guided negative selection, and Plackett-Luce
multi-negative preference losses."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
