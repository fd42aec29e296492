"""Small shared numeric helpers: smooth bump windows and finite-difference steps."""

import numpy as np

#: cube root of machine epsilon, the usual step scale for first-order central differences
FD_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)


def smoothstep(x):
    """C^2 quintic ramp: 0 for x<=0, 1 for x>=1, 6x^5-15x^4+10x^3 between."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30.0 * xc * xc * (1.0 - xc) ** 2, 0.0)


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 60.0 * xc * (1.0 - xc) * (1.0 - 2.0 * xc), 0.0)


def cutoff(rho, radius):
    """Radial bump: 1 on [0, radius/2], 0 beyond radius, monotone quintic between.

    max |d cutoff / d rho| = 3.75 / radius, below 2 whenever radius >= 1.875.
    """
    half = 0.5 * radius
    return 1.0 - smoothstep((np.asarray(rho, dtype=float) - half) / half)


def cutoff_d1(rho, radius):
    half = 0.5 * radius
    return -smoothstep_d1((np.asarray(rho, dtype=float) - half) / half) / half


def fitted_slope(x, y):
    """Least-squares slope of log|y| against log x, ignoring zero entries."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = y > 0.0
    if keep.sum() < 2:
        return np.nan
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])
