"""Ultrasound masked-autoencoder toolkit: preprocessing, training, evaluation.

Thin python wrapper over the C++ core. The heavy lifting (autodiff engine,
transformer, inpainting, metrics) lives in the compiled ``_core`` module.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
