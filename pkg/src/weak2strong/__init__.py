"""Teacher/student weak-to-strong experiments: ridge, weighted ridge and
one-step two-layer networks, with their high-dimensional risk predictors."""

__version__ = "0.1.0"

from .mp_stieltjes import (
    DomainError,
    StieltjesPair,
    empirical_stieltjes,
    mp_m,
    mp_m_derivative,
    stieltjes_pair,
)
from .theory import (
    LinearProblemParams,
    PhaseClassification,
    Regime,
    TheoryPrediction,
    classify_phase,
    delta_gamma,
    predict,
    risk_gap_ridge,
    risk_gap_weighted,
    teacher_risk,
)

__all__ = [
    "DomainError",
    "StieltjesPair",
    "empirical_stieltjes",
    "mp_m",
    "mp_m_derivative",
    "stieltjes_pair",
    "LinearProblemParams",
    "PhaseClassification",
    "Regime",
    "TheoryPrediction",
    "classify_phase",
    "delta_gamma",
    "predict",
    "risk_gap_ridge",
    "risk_gap_weighted",
    "teacher_risk",
]
