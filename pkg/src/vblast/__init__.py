"""Outage and error-rate analysis of ordered ZF-SIC (V-BLAST) detection."""

from .channel import MAX_ANTENNAS, Modulation, NoiseModel, SystemDims, ber_conditional, stream_rng
from .curves import AnalyticCurve, EstimatedCurve, OffsetRow, compare_curves, wilson_interval
from .receivers import (
    DetectionResult,
    OrderingStrategy,
    RankDeficientChannel,
    ReceiverKind,
    choose_order,
    linear_detect,
    zf_sic_detect,
)

__version__ = "0.1.0"

__all__ = [
    "MAX_ANTENNAS",
    "AnalyticCurve",
    "DetectionResult",
    "EstimatedCurve",
    "Modulation",
    "NoiseModel",
    "OffsetRow",
    "OrderingStrategy",
    "RankDeficientChannel",
    "ReceiverKind",
    "SystemDims",
    "ber_conditional",
    "choose_order",
    "compare_curves",
    "linear_detect",
    "stream_rng",
    "wilson_interval",
    "zf_sic_detect",
]
