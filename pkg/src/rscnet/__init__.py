"""Road surface condition engine.

A compact from-scratch CNN for three-way winter road snow-coverage
classification, the parameter-budget accounting and ablation sweeps around
it, a weather-fusion stage with classical classifiers, and a synthetic
RWIS-style data generator for desk-scale verification.
"""

from .model import BaselineConfig, build_plan, channel_schedule, count_params, size_ratios

__all__ = [
    "BaselineConfig",
    "build_plan",
    "channel_schedule",
    "count_params",
    "size_ratios",
]

__version__ = "0.1.0"
