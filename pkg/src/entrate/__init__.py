"""Entropy rate of hidden Markov processes with unambiguous symbols."""

from .engine import EntropyEstimate, entropy_rate, terms_for_accuracy
from .model import (
    HmpModel,
    MarkovSource,
    NoiseSpec,
    ObservationSequence,
    build_hmp_model,
    build_markov_source,
)

__all__ = [
    "EntropyEstimate",
    "HmpModel",
    "MarkovSource",
    "NoiseSpec",
    "ObservationSequence",
    "build_hmp_model",
    "build_markov_source",
    "entropy_rate",
    "terms_for_accuracy",
]
