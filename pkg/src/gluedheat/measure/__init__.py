"""Weighted measure: attachment, balls, doubling and Muckenhoupt diagnostics."""

from .diagnostics import (
    A2Report,
    MeasureProfile,
    TubeReport,
    check_a2,
    check_l_muckenhoupt,
    check_n_doubling,
    mu_ball,
)
from .weights import AnchorGeometry, AttachedWeight, WeightedComplex, WeightSpec, attach_weight

__all__ = [
    "WeightSpec",
    "AttachedWeight",
    "AnchorGeometry",
    "WeightedComplex",
    "attach_weight",
    "mu_ball",
    "check_a2",
    "check_n_doubling",
    "check_l_muckenhoupt",
    "A2Report",
    "MeasureProfile",
    "TubeReport",
]
