"""Height-gap and central-charge constants.

LAMBDA is the continuum level-line height sqrt(pi/8).  The lattice field is
sampled with visit-count covariance, which carries twice the continuum
amplitude, so boundary data uses LAMBDA_FIELD = 2*LAMBDA = sqrt(pi/2).
"""

import math

LAMBDA = math.sqrt(math.pi / 8.0)
LAMBDA_FIELD = 2.0 * LAMBDA

KAPPA_MIN = 8.0 / 3.0


def h_kappa(kappa: float) -> float:
    """Boundary exponent h = (6 - kappa) / (2 kappa)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return (6.0 - kappa) / (2.0 * kappa)


def central_charge(kappa: float) -> float:
    """c = (6 - kappa)(3 kappa - 8) / (2 kappa)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa)


def check_kappa_range(kappa: float) -> None:
    if not (KAPPA_MIN < kappa <= 4.0):
        raise ValueError(f"kappa must lie in (8/3, 4], got {kappa}")
