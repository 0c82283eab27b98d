"""Configuration-dependent stiffness skills for cooperative sawing.

Human arm keypoints -> geometric endpoint stiffness -> Gaussian mixture skill
-> impedance-controlled two-endpoint sawing simulation.
"""
from .errors import CdsError

__version__ = "0.1.0"

__all__ = ["CdsError", "__version__"]
