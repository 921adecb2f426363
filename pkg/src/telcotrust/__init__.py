"""Remote attestation engine and telecom trust-topology simulator."""

from .core import Decision, ElementRef, attestable, decision_leq, decision_meet
from .pipeline import Environment, classify_trusted, run_pipeline, trustworthy

__all__ = [
    "Decision",
    "ElementRef",
    "Environment",
    "attestable",
    "classify_trusted",
    "decision_leq",
    "decision_meet",
    "run_pipeline",
    "trustworthy",
]
__version__ = "0.1.0"
