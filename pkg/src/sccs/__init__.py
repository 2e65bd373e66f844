"""Spatially coupled sparse measurement matrices and LM2 verification decoding."""

__version__ = "0.1.0"

from .density_evolution import (ChannelParams, DeFixedPoint, MessageDist, RegularEnsemble,
                                StopRule, run_de)
from .ensemble import (MeasurementMatrixInstance, Protograph, design_sampling_ratio,
                       lift_protograph, make_coupled_protograph, make_regular_protograph)

__all__ = [
    "ChannelParams", "DeFixedPoint", "MessageDist", "RegularEnsemble", "StopRule", "run_de",
    "MeasurementMatrixInstance", "Protograph", "design_sampling_ratio", "lift_protograph",
    "make_coupled_protograph", "make_regular_protograph",
]
