"""
Target detection by diffusive molecular communication.
"""

from mcdetect.channel import NetworkLayout, ReactionChannelParams, ReactiveLink
from mcdetect.detection import (
    DetectionContext,
    Detector,
    NoiseModel,
    Scenario,
    Thresholds,
)
from mcdetect.experiments import ExperimentConfig

__all__ = [
    "DetectionContext",
    "Detector",
    "ExperimentConfig",
    "NetworkLayout",
    "NoiseModel",
    "ReactionChannelParams",
    "ReactiveLink",
    "Scenario",
    "Thresholds",
]
