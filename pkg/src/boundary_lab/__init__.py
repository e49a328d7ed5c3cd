"""Numerical laboratory for boundaries at infinity of nonpositively curved spaces."""

from .constants import (
    AUDIT_TOL,
    CLOSED_FORM_AUDIT_TOL,
    DEFAULT_THRESHOLD,
    IDENTITY_TOL,
    MEMBERSHIP_TOL,
    SOLVER_TOL,
)

__all__ = [
    "AUDIT_TOL",
    "CLOSED_FORM_AUDIT_TOL",
    "DEFAULT_THRESHOLD",
    "IDENTITY_TOL",
    "MEMBERSHIP_TOL",
    "SOLVER_TOL",
]

__version__ = "0.1.0"
