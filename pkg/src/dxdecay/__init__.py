"""Measure how dementia diagnosis-code usage in hospitalization claims drifts
across regions and populations."""

from .codebook import DEFAULT_CODEBOOK, Codebook, DiagnosticCategory, classify_code, is_dementia_qualifying
from .errors import ContractViolation, DxDecayError, InfeasibleModelError, InputError

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CODEBOOK", "Codebook", "DiagnosticCategory", "classify_code", "is_dementia_qualifying",
    "ContractViolation", "DxDecayError", "InfeasibleModelError", "InputError",
]
