"""Cooperative multi-monostatic sensing simulator.

Each base station synthesizes its own post-FFT OFDM echo grid, estimates range
and velocity from a zero-padded 2D periodogram, and reports a weighted range
measurement. A central stage fuses the measurements into a position estimate
with an ML, MAP or NLLS objective.
"""

from mmsense.echo import OfdmParams, RxGrid, make_symbols, synthesize_received, zero_force
from mmsense.fusion import FusionConfig, PositionEstimate, estimate_position
from mmsense.periodogram import BsMeasurement, PeriodogramConfig, measure
from mmsense.scene import BsConfig, PathComponent, Scatterer, TargetState, Trajectory

__all__ = [
    "BsConfig",
    "BsMeasurement",
    "FusionConfig",
    "OfdmParams",
    "PathComponent",
    "PeriodogramConfig",
    "PositionEstimate",
    "RxGrid",
    "Scatterer",
    "TargetState",
    "Trajectory",
    "estimate_position",
    "make_symbols",
    "measure",
    "synthesize_received",
    "zero_force",
]

__version__ = "0.1.0"
