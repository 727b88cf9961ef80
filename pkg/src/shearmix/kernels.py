"""Closed-form heat kernels and the explicit Kolmogorov fundamental solution.

Line, torus and Dirichlet-interval heat kernels are evaluated with certified
series tails (below 1e-14 unless the caller forces a shorter truncation, in
which case the call is rejected).  The plane kernel of the equation
du/dt = dxx u - x dy u is built from the quadratic cost of its minimum-energy
control problem and normalized to unit mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc

__all__ = [
    "heat_line",
    "heat_torus",
    "heat_torus_cell_mass",
    "heat_dirichlet",
    "KolmogorovState",
    "ControlSolution",
    "kolmogorov_cost",
    "kolmogorov_control",
    "kolmogorov_kernel",
    "KOLMOGOROV_NORMALIZATION",
]

TAIL_TOL = 1e-14


def heat_line(x, t):
    """Heat kernel on the line, (4 pi t)^{-1/2} exp(-x^2 / 4t)."""
    if t <= 0:
        raise ValueError("time must be positive")
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
    return out if out.shape else float(out)


def _torus_images(t, truncation):
    # tail of the image sum is below erfc((M - 1/2) / (2 sqrt(t)))
    def tail(m):
        return float(erfc((m - 0.5) / (2.0 * math.sqrt(t))))

    if truncation is None:
        m = 1
        while tail(m) > TAIL_TOL and m < 400:
            m += 1
        return m
    truncation = int(truncation)
    if truncation < 1 or tail(truncation) > TAIL_TOL:
        raise ValueError("truncation too small for a certified tail below 1e-14")
    return truncation


def heat_torus(x, xp=0.0, t=0.125, truncation=None):
    """Heat kernel on the unit torus via the image sum.

    Dominates the line kernel at the wrapped offset and converges to the
    uniform density 1 as t grows.
    """
    if t <= 0:
        raise ValueError("time must be positive")
    m = _torus_images(t, truncation)
    d = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    d = d - np.round(d)  # wrap to [-1/2, 1/2]
    out = np.zeros_like(d, dtype=float)
    for j in range(-m, m + 1):
        out += np.exp(-((d + j) ** 2) / (4.0 * t))
    out /= math.sqrt(4.0 * math.pi * t)
    return out if out.shape else float(out)


def heat_torus_cell_mass(x0, lo, hi, t, truncation=None):
    """Exact mass the torus kernel started at x0 assigns to the cell [lo, hi]."""
    if t <= 0:
        raise ValueError("time must be positive")
    m = _torus_images(t, truncation)
    s = 2.0 * math.sqrt(t)
    total = 0.0
    for j in range(-m, m + 1):
        total += 0.5 * (erf((hi - x0 + j) / s) - erf((lo - x0 + j) / s))
    return float(total)


def heat_dirichlet(x, xp, interval=(0.0, 1.0), t=0.125, truncation=None):
    """Heat kernel on an interval with absorbing endpoints (sine series)."""
    if t <= 0:
        raise ValueError("time must be positive")
    a, b = float(interval[0]), float(interval[1])
    length = b - a
    q = math.pi**2 * t / length**2

    def tail(m):
        # sum_{k>m} e^{-k^2 q} <= integral, evaluated through erfc
        return (2.0 / length) * 0.5 * math.sqrt(math.pi / q) * float(erfc(m * math.sqrt(q)))

    if truncation is None:
        m = 1
        while tail(m) > TAIL_TOL and m < 100_000:
            m += 1
    else:
        m = int(truncation)
        if m < 1 or tail(m) > TAIL_TOL:
            raise ValueError("truncation too small for a certified tail below 1e-14")

    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if np.any((x < a - 1e-12) | (x > b + 1e-12) | (xp < a - 1e-12) | (xp > b + 1e-12)):
        raise ValueError("points must lie inside the interval")
    out = np.zeros(np.broadcast(x, xp).shape, dtype=float)
    u = math.pi * (x - a) / length
    v = math.pi * (xp - a) / length
    for k in range(1, m + 1):
        out += math.exp(-(k**2) * q) * np.sin(k * u) * np.sin(k * v)
    out *= 2.0 / length
    return out if out.shape else float(out)


# ---------------------------------------------------------------------------
# the plane kernel of du/dt = dxx u - x dy u

# unit-mass normalization: the x and y Gaussian factors integrate to
# sqrt(4 pi t) and sqrt(pi t^3 / 3), whose product is 2 pi t^2 / sqrt(3)
KOLMOGOROV_NORMALIZATION = math.sqrt(3.0) / (2.0 * math.pi)


@dataclass(frozen=True)
class KolmogorovState:
    """Endpoint data (x0, y0) -> (x, y) in time t > 0 on the plane."""

    x0: float
    y0: float
    x: float
    y: float
    t: float

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("time must be positive")


@dataclass(frozen=True)
class ControlSolution:
    """Minimum-energy control w(s) = a + 2 b s steering the endpoint problem."""

    a: float
    b: float
    cost: float


def kolmogorov_cost(t, x, y, x0=0.0, y0=0.0):
    """Quadratic action (x-x0)^2/(4t) + 3 (y - y0 - (x+x0) t / 2)^2 / t^3."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    straight = y - y0 - 0.5 * (x + x0) * t
    out = (x - x0) ** 2 / (4.0 * t) + 3.0 * straight**2 / t**3
    return out if out.shape else float(out)


def kolmogorov_control(state):
    """Solve the two-by-two endpoint system for the affine optimal control.

    The control w(s) = a + 2 b s drives dX = w, dY = X from (x0, y0) to
    (x, y) in time t with minimal integral of w^2/4; that minimal value
    coincides with kolmogorov_cost on the same endpoints.
    """
    t = state.t
    rhs = np.array([state.x - state.x0, state.y - state.y0 - state.x0 * t])
    # endpoint constraints: [[t, t^2], [t^2/2, t^3/3]] (a, b) = rhs
    mat = np.array([[t**2 / 3.0, -t], [-t / 2.0, 1.0]])
    a, b = -6.0 / t**3 * (mat @ rhs)
    cost = 0.25 * (a * a * t + 2.0 * a * b * t * t + 4.0 / 3.0 * b * b * t**3)
    return ControlSolution(float(a), float(b), float(cost))


def kolmogorov_kernel(t, x, y, x0=0.0, y0=0.0):
    """Unit-mass fundamental solution of du/dt = dxx u - x dy u on the plane."""
    if t <= 0:
        raise ValueError("time must be positive")
    out = KOLMOGOROV_NORMALIZATION / t**2 * np.exp(-kolmogorov_cost(t, x, y, x0, y0))
    out = np.asarray(out)
    return out if out.shape else float(out)
