"""Triplet similarity learning with auxiliary features and active query selection."""

from tackl.core import (
    DEFAULT_MU,
    CombinedModel,
    ModelKind,
    TripletQuery,
    TripletResponse,
    ckl_model,
    features_only_model,
)

__all__ = [
    "DEFAULT_MU",
    "CombinedModel",
    "ModelKind",
    "TripletQuery",
    "TripletResponse",
    "ckl_model",
    "features_only_model",
]
