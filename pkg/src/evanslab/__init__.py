"""Spectral stability of travelling waves in two-component reaction-diffusion
systems with linearly dependent reaction terms, via Riccati-Evans functions."""

from .linearization import Chart, SpectralProblem, build
from .model import FarFieldData, ReactionTerm, WaveProfile, catalog, far_field
from .riccati_evans import EvansReport, EvansSettings, RiccatiEvans, evaluate, scan_real, winding

__all__ = [
    "Chart", "EvansReport", "EvansSettings", "FarFieldData", "ReactionTerm", "RiccatiEvans", "SpectralProblem",
    "WaveProfile", "build", "catalog", "evaluate", "far_field", "scan_real", "winding",
]
__version__ = "0.1.0"
