"""Shared numeric tolerances and defaults.

All acceptance-level tolerances are at least 1e-6; anything tighter is only
used for closed-form identities.
"""

# Closed-form identities (distances, products, defects computed without a solver).
IDENTITY_TOL = 1e-9

# Default h for path shortening: a returned path is certified once its length
# is within SOLVER_TOL of the certified lower bound.
SOLVER_TOL = 1e-6

# Slack on zero-coordinate and norm constraints in membership tests.
MEMBERSHIP_TOL = 1e-12

# Comparison audits are dominated by solver slack, not geometry.
AUDIT_TOL = 1e-3

# Triangles whose sides are all closed-form are held to a tighter bound.
CLOSED_FORM_AUDIT_TOL = 1e-6

# Default divergence-certificate threshold, in ambient distance units.
DEFAULT_THRESHOLD = 10.0
