"""Velocity fields on the torus or an interval.

A velocity field V is a bounded function given in one of four concrete
representations: piecewise constant, piecewise linear, grid-sampled
(midpoint-held step function), or a named closed form (sine, sawtooth,
heaviside, binary cascade).  Every representation supports exact pointwise
evaluation, exact oscillation (sup - inf), an exact primitive, plateau
detection, and quantitative non-flatness estimation.

Conventions: cells of step-like representations are right-open, and torus
fields wrap their argument modulo 1.  The value at a breakpoint is the value
of the cell starting there; this is a convention, not a modelling statement
(breakpoints form a null set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "Plateau",
    "PlateauPair",
    "FlatnessEstimate",
    "VelocityField",
    "PiecewiseConstantField",
    "PiecewiseLinearField",
    "GridField",
    "SineField",
    "SawtoothField",
    "HeavisideField",
    "BinaryCascadeField",
    "Primitive",
    "field_from_config",
    "two_plateau",
    "estimate_flatness_constant",
]


class DomainError(ValueError):
    """Raised when a point lies outside a field's domain."""


class Plateau(tuple):
    """Maximal interval (left, right, value) on which V is constant.

    For a torus field whose constancy interval wraps through 0, `right`
    exceeds 1 and the interval is understood modulo 1.
    """

    __slots__ = ()

    def __new__(cls, left, right, value):
        return tuple.__new__(cls, (float(left), float(right), float(value)))

    @property
    def left(self):
        return self[0]

    @property
    def right(self):
        return self[1]

    @property
    def value(self):
        return self[2]

    @property
    def length(self):
        return self[1] - self[0]


@dataclass(frozen=True)
class PlateauPair:
    """Two plateaus of V at distinct heights, ordered left to right."""

    first: Plateau
    second: Plateau

    @property
    def ell(self):
        """Length of the shorter plateau."""
        return min(self.first.length, self.second.length)

    @property
    def dv(self):
        """Absolute height difference between the plateaus."""
        return abs(self.first.value - self.second.value)


@dataclass(frozen=True)
class FlatnessEstimate:
    """Result of the non-flatness scan on an interval.

    `constant` is the smallest admissible constant (clamped below at 1) for
    which every scanned scale/subinterval satisfies the exponential residual
    lower bound; it is estimated on finite grids, never certified.  When a
    scanned subinterval has zero affine residual (V is flat there) the scan
    is infeasible and `witness` records the offending subinterval.
    """

    constant: float
    feasible: bool
    witness: tuple | None
    table: dict


# ---------------------------------------------------------------------------
# quadrature helpers (exact for piecewise polynomials of modest degree)

_GL_CACHE: dict = {}


def _gauss_rule(order):
    try:
        return _GL_CACHE[order]
    except KeyError:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (nodes, weights)
        return nodes, weights


def _panel_quadrature(panels, order):
    """Gauss-Legendre nodes/weights over a list of (lo, hi) panels."""
    base, wts = _gauss_rule(order)
    xs = []
    ws = []
    for lo, hi in panels:
        half = 0.5 * (hi - lo)
        if half <= 0.0:
            continue
        xs.append(0.5 * (lo + hi) + half * base)
        ws.append(half * wts)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)


def _split_panels(alpha, beta, interior):
    cuts = [alpha]
    for x in interior:
        if alpha < x < beta:
            cuts.append(float(x))
    cuts.append(beta)
    return list(zip(cuts[:-1], cuts[1:]))


class Primitive:
    """Antiderivative PV of a velocity field with PV(base) = 0.

    PV is Lipschitz with constant sup|V|.  Subclasses provide exact (or
    machine-accurate) evaluation and integration; the affine least-squares
    residual over a subinterval is computed in two passes, first fitting the
    optimal affine function from moments and then integrating the squared
    deviation directly so the result is nonnegative by construction.
    """

    def __init__(self, a, b, base, lipschitz, periodic, full_integral):
        self.a = float(a)
        self.b = float(b)
        self.base = float(base)
        self.lipschitz = float(lipschitz)
        self.periodic = bool(periodic)
        self.full_integral = float(full_integral)

    def _eval_inside(self, x):
        raise NotImplementedError

    def _quad(self, alpha, beta):
        """Quadrature rule on [alpha, beta], exact for this primitive's class."""
        raise NotImplementedError

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.periodic:
            span = self.b - self.a
            wraps = np.floor((x - self.a) / span)
            inside = x - wraps * span
            out = self._eval_inside(inside) + wraps * self.full_integral
        else:
            if np.any(x < self.a - 1e-12) or np.any(x > self.b + 1e-12):
                raise DomainError("point outside the primitive's domain")
            out = self._eval_inside(np.clip(x, self.a, self.b))
        return out if out.shape else float(out)

    def moments(self, alpha, beta):
        """Return (integral PV, integral x*PV, integral PV^2) over [alpha, beta]."""
        xs, ws = self._quad(alpha, beta)
        vals = self._eval_inside(xs)
        return (
            float(np.dot(ws, vals)),
            float(np.dot(ws, xs * vals)),
            float(np.dot(ws, vals * vals)),
        )

    def affine_fit(self, alpha, beta):
        """Least-squares affine fit p*x + q of PV on [alpha, beta]."""
        length = beta - alpha
        mid = 0.5 * (alpha + beta)
        xs, ws = self._quad(alpha, beta)
        vals = self._eval_inside(xs)
        d0 = float(np.dot(ws, vals)) / length
        d1 = float(np.dot(ws, (xs - mid) * vals)) * 12.0 / length**3
        return d1, d0 - d1 * mid

    def affine_residual(self, alpha, beta):
        """inf over (p, q) of the integral of |PV - p x - q|^2 over [alpha, beta]."""
        p, q = self.affine_fit(alpha, beta)
        xs, ws = self._quad(alpha, beta)
        dev = self._eval_inside(xs) - (p * xs + q)
        return float(np.dot(ws, dev * dev))


class PiecewisePolyPrimitive(Primitive):
    """Primitive stored as per-segment quadratics in local coordinates."""

    QUAD_ORDER = 3  # exact through degree 5, enough for squared quadratics

    def __init__(self, nodes, coeffs, base, lipschitz, periodic):
        nodes = np.asarray(nodes, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)  # rows (c0, c1, c2)
        full = _poly_segment_value(nodes, coeffs, nodes[-1])
        super().__init__(nodes[0], nodes[-1], base, lipschitz, periodic, full)
        offset = _poly_segment_value(nodes, coeffs, base)
        coeffs = coeffs.copy()
        coeffs[:, 0] -= offset
        self.nodes = nodes
        self.coeffs = coeffs

    def _eval_inside(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.coeffs) - 1)
        u = x - self.nodes[idx]
        c = self.coeffs[idx]
        return c[..., 0] + u * (c[..., 1] + u * c[..., 2])

    def _quad(self, alpha, beta):
        panels = _split_panels(alpha, beta, self.nodes[1:-1])
        return _panel_quadrature(panels, self.QUAD_ORDER)


def _poly_segment_value(nodes, coeffs, x):
    idx = min(max(int(np.searchsorted(nodes, x, side="right")) - 1, 0), len(coeffs) - 1)
    u = x - nodes[idx]
    c = coeffs[idx]
    return c[0] + u * (c[1] + u * c[2])


class SmoothPrimitive(Primitive):
    """Primitive given in closed form, integrated by dense Gauss panels."""

    QUAD_ORDER = 10

    def __init__(self, fn, a, b, base, lipschitz, periodic, full_integral, panels_per_unit):
        super().__init__(a, b, base, lipschitz, periodic, full_integral)
        self._fn = fn
        self._per_unit = panels_per_unit

    def _eval_inside(self, x):
        return self._fn(np.asarray(x, dtype=float))

    def _quad(self, alpha, beta):
        n = max(8, int(math.ceil((beta - alpha) * self._per_unit)))
        cuts = np.linspace(alpha, beta, n + 1)
        return _panel_quadrature(list(zip(cuts[:-1], cuts[1:])), self.QUAD_ORDER)


# ---------------------------------------------------------------------------
# velocity field representations


class VelocityField:
    """Base class; concrete representations override the evaluation hooks.

    Fields are immutable after construction and all operations are pure, so
    instances may be shared freely across workers.
    """

    kind = "abstract"

    def __init__(self, a, b, periodic):
        self.a = float(a)
        self.b = float(b)
        self.periodic = bool(periodic)
        if not self.b > self.a:
            raise DomainError("empty domain")

    @property
    def length(self):
        return self.b - self.a

    def _wrap(self, x):
        x = np.asarray(x, dtype=float)
        if self.periodic:
            return self.a + np.mod(x - self.a, self.length)
        if np.any(x < self.a - 1e-12) or np.any(x > self.b + 1e-12):
            raise DomainError(f"point outside domain [{self.a}, {self.b}]")
        return np.clip(x, self.a, self.b)

    def __call__(self, x):
        out = self._eval_inside(self._wrap(x))
        return out if out.shape else float(out)

    def _eval_inside(self, x):
        raise NotImplementedError

    def range(self):
        """Exact (inf, sup) of the representation's reachable values."""
        raise NotImplementedError

    def oscillation(self):
        lo, hi = self.range()
        return hi - lo

    def bound(self):
        lo, hi = self.range()
        return max(abs(lo), abs(hi))

    def primitive(self, base=None):
        raise NotImplementedError

    def plateaus(self, min_length=0.0):
        """Maximal constancy intervals of length >= min_length, left to right."""
        if min_length < 0.0:
            raise ValueError("min_length must be nonnegative")
        return [p for p in self._all_plateaus() if p.length >= max(min_length, 0.0)]

    def _all_plateaus(self):
        raise NotImplementedError

    def find_plateau_pair(self):
        """Best pair of plateaus at distinct heights, or None.

        The pair maximizes the shorter length, ties broken by larger height
        difference, then by the leftmost left endpoint.
        """
        plats = self._all_plateaus()
        best = None
        best_key = None
        for i in range(len(plats)):
            for j in range(i + 1, len(plats)):
                p, r = plats[i], plats[j]
                if p.value == r.value:
                    continue
                if p.left > r.left:
                    p, r = r, p
                key = (min(p.length, r.length), abs(p.value - r.value), -p.left)
                if best_key is None or key > best_key:
                    best_key = key
                    best = PlateauPair(p, r)
        return best

    def to_config(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"


def _resolve_domain(domain):
    if domain is None or domain == "torus":
        return 0.0, 1.0, True
    a, b = float(domain[0]), float(domain[1])
    return a, b, False


class _StepField(VelocityField):
    """Shared machinery for representations that are step functions."""

    def __init__(self, edges, values, a, b, periodic):
        super().__init__(a, b, periodic)
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(edges) != len(values) + 1:
            raise ValueError("need one more edge than cell values")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("cell edges must be strictly increasing")
        if not (abs(edges[0] - a) < 1e-12 and abs(edges[-1] - b) < 1e-12):
            raise DomainError("cells must tile the domain exactly")
        self.edges = edges
        self.values = values

    def _eval_inside(self, x):
        idx = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.values) - 1)
        return self.values[idx]

    def range(self):
        return float(self.values.min()), float(self.values.max())

    def primitive(self, base=None):
        base = self.a if base is None else float(base)
        widths = np.diff(self.edges)
        cumint = np.concatenate([[0.0], np.cumsum(widths * self.values)])
        coeffs = np.column_stack([cumint[:-1], self.values, np.zeros_like(self.values)])
        return PiecewisePolyPrimitive(self.edges, coeffs, base, self.bound(), self.periodic)

    def _all_plateaus(self):
        return _merge_step_runs(self.edges, self.values, self.periodic)


def _merge_step_runs(edges, values, periodic):
    runs = []
    for i, v in enumerate(values):
        if runs and runs[-1][2] == v:
            runs[-1][1] = edges[i + 1]
        else:
            runs.append([edges[i], edges[i + 1], v])
    if periodic and len(runs) > 1 and runs[0][2] == runs[-1][2]:
        span = edges[-1] - edges[0]
        first = runs.pop(0)
        runs[-1][1] = first[1] + span  # wraps through the seam
    return [Plateau(*r) for r in runs]


class PiecewiseConstantField(_StepField):
    """Step function given by left cell edges and cell values."""

    kind = "piecewise_constant"

    def __init__(self, breakpoints, values, domain=None):
        a, b, periodic = _resolve_domain(domain)
        breakpoints = list(map(float, breakpoints))
        if not breakpoints or abs(breakpoints[0] - a) > 1e-12:
            raise DomainError("first breakpoint must coincide with the domain start")
        super().__init__(breakpoints + [b], values, a, b, periodic)

    def to_config(self):
        cfg = {"kind": self.kind, "breakpoints": list(self.edges[:-1]), "values": list(self.values)}
        if not self.periodic:
            cfg["domain"] = [self.a, self.b]
        return cfg


class GridField(_StepField):
    """N equispaced midpoint-held samples, i.e. a step function on N cells."""

    kind = "grid"

    def __init__(self, samples, domain=None):
        a, b, periodic = _resolve_domain(domain)
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1 or len(samples) < 1:
            raise ValueError("samples must be a nonempty 1D sequence")
        edges = np.linspace(a, b, len(samples) + 1)
        super().__init__(edges, samples, a, b, periodic)

    def to_config(self):
        cfg = {"kind": self.kind, "samples": list(self.values)}
        if not self.periodic:
            cfg["domain"] = [self.a, self.b]
        return cfg


class HeavisideField(_StepField):
    """Two-level field: `high` on [0, 1/2), `low` on [1/2, 1)."""

    kind = "heaviside"

    def __init__(self, high=1.0, low=0.0):
        self.high = float(high)
        self.low = float(low)
        super().__init__([0.0, 0.5, 1.0], [self.high, self.low], 0.0, 1.0, True)

    def to_config(self):
        return {"kind": self.kind, "high": self.high, "low": self.low}


class BinaryCascadeField(_StepField):
    """Field whose value flips sign with each binary digit of x.

    V(x) = sum_k a_k (-1)^{b_k} with a_k = exp(-c 4^k) and b_k the binary
    digits of x; terms below `tail_tol` are dropped, which truncates the
    cascade at a finite digit depth.  As an idealized object the cascade has
    no plateau, so plateau queries report none even though the truncated
    evaluator is piecewise constant on dyadic cells.
    """

    kind = "binary_cascade"
    MAX_DEPTH = 16

    def __init__(self, c=1.0, tail_tol=1e-15):
        if c <= 0:
            raise ValueError("cascade decay parameter must be positive")
        self.c = float(c)
        self.tail_tol = float(tail_tol)
        coefs = []
        for k in range(1, self.MAX_DEPTH + 1):
            ak = math.exp(-self.c * 4.0**k)
            if ak < self.tail_tol:
                break
            coefs.append(ak)
        self.coefficients = np.asarray(coefs)
        depth = len(coefs)
        if depth == 0:
            edges, values = np.array([0.0, 1.0]), np.array([0.0])
        else:
            cells = np.arange(2**depth)
            values = np.zeros(2**depth)
            for k in range(1, depth + 1):
                bit = (cells >> (depth - k)) & 1
                values += coefs[k - 1] * (1.0 - 2.0 * bit)
            edges = np.linspace(0.0, 1.0, 2**depth + 1)
        super().__init__(edges, values, 0.0, 1.0, True)

    def _all_plateaus(self):
        if len(self.coefficients) == 0:
            return [Plateau(0.0, 1.0, 0.0)]
        return []

    def to_config(self):
        return {"kind": self.kind, "c": self.c}


class PiecewiseLinearField(VelocityField):
    """Continuous piecewise-linear interpolant of (knot, value) pairs.

    On the torus the last segment closes the loop from the final knot back to
    the first value at x = 1.
    """

    kind = "piecewise_linear"

    def __init__(self, knots, values, domain=None):
        a, b, periodic = _resolve_domain(domain)
        super().__init__(a, b, periodic)
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(knots) != len(values) or len(knots) < (1 if periodic else 2):
            raise ValueError("knots and values must match and be nonempty")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if abs(knots[0] - a) > 1e-12:
            raise DomainError("first knot must coincide with the domain start")
        if periodic:
            if knots[-1] >= b:
                raise DomainError("torus knots must lie in [0, 1)")
            self._x = np.concatenate([knots, [b]])
            self._v = np.concatenate([values, [values[0]]])
        else:
            if abs(knots[-1] - b) > 1e-12:
                raise DomainError("last knot must coincide with the domain end")
            self._x = knots
            self._v = values
        self.knots = knots
        self.values = values

    def _eval_inside(self, x):
        return np.interp(x, self._x, self._v)

    def range(self):
        return float(self._v.min()), float(self._v.max())

    def primitive(self, base=None):
        base = self.a if base is None else float(base)
        widths = np.diff(self._x)
        slopes = np.diff(self._v) / widths
        seg_int = widths * (self._v[:-1] + 0.5 * slopes * widths)
        cum = np.concatenate([[0.0], np.cumsum(seg_int)])
        coeffs = np.column_stack([cum[:-1], self._v[:-1], 0.5 * slopes])
        return PiecewisePolyPrimitive(self._x, coeffs, base, self.bound(), self.periodic)

    def _all_plateaus(self):
        flat = self._v[:-1] == self._v[1:]  # exact equality, per the representation
        runs = []
        for i, is_flat in enumerate(flat):
            if not is_flat:
                continue
            if runs and runs[-1][1] == self._x[i] and runs[-1][2] == self._v[i]:
                runs[-1][1] = self._x[i + 1]
            else:
                runs.append([self._x[i], self._x[i + 1], self._v[i]])
        if self.periodic and len(runs) > 1 and runs[0][0] == self.a and runs[-1][1] == self.b \
                and runs[0][2] == runs[-1][2]:
            first = runs.pop(0)
            runs[-1][1] = first[1] + self.length
        return [Plateau(*r) for r in runs]

    def to_config(self):
        cfg = {"kind": self.kind, "knots": list(self.knots), "values": list(self.values)}
        if not self.periodic:
            cfg["domain"] = [self.a, self.b]
        return cfg


class SineField(VelocityField):
    """V(x) = amplitude * sin(2 pi frequency x + phase) on the torus."""

    kind = "sine"

    def __init__(self, amplitude=1.0, frequency=1, phase=0.0):
        super().__init__(0.0, 1.0, True)
        self.amplitude = float(amplitude)
        self.frequency = int(frequency)
        self.phase = float(phase)
        if self.frequency < 1:
            raise ValueError("frequency must be a positive integer")

    def _eval_inside(self, x):
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * x + self.phase)

    def range(self):
        # a full period is always covered, so the range is +-|amplitude|
        return -abs(self.amplitude), abs(self.amplitude)

    def primitive(self, base=None):
        base = 0.0 if base is None else float(base)
        amp, freq, phase = self.amplitude, self.frequency, self.phase
        scale = amp / (2.0 * np.pi * freq)
        c0 = math.cos(2.0 * np.pi * freq * base + phase)

        def pv(x):
            return scale * (c0 - np.cos(2.0 * np.pi * freq * x + phase))

        return SmoothPrimitive(pv, 0.0, 1.0, base, abs(amp), True, 0.0,
                               panels_per_unit=32 * freq)

    def _all_plateaus(self):
        if self.amplitude == 0.0:
            return [Plateau(0.0, 1.0, 0.0)]
        return []

    def to_config(self):
        return {"kind": self.kind, "amplitude": self.amplitude,
                "frequency": self.frequency, "phase": self.phase}


class SawtoothField(VelocityField):
    """V(x) = amplitude * x on [0, 1), repeating with a jump at the seam."""

    kind = "sawtooth"

    def __init__(self, amplitude=1.0):
        super().__init__(0.0, 1.0, True)
        self.amplitude = float(amplitude)

    def _eval_inside(self, x):
        return self.amplitude * np.asarray(x, dtype=float)

    def range(self):
        lo, hi = sorted((0.0, self.amplitude))
        return lo, hi  # sup over [0, 1) as a supremum, not an attained max

    def primitive(self, base=None):
        base = 0.0 if base is None else float(base)
        coeffs = np.array([[0.0, 0.0, 0.5 * self.amplitude]])
        return PiecewisePolyPrimitive(np.array([0.0, 1.0]), coeffs, base,
                                      abs(self.amplitude), True)

    def _all_plateaus(self):
        if self.amplitude == 0.0:
            return [Plateau(0.0, 1.0, 0.0)]
        return []

    def to_config(self):
        return {"kind": self.kind, "amplitude": self.amplitude}


def two_plateau(low=0.0, high=1.0, split=0.5):
    """Torus field equal to `low` on [0, split) and `high` on [split, 1)."""
    return PiecewiseConstantField([0.0, split], [low, high])


_CONFIG_KEYS = {
    "piecewise_constant": {"breakpoints", "values", "domain"},
    "piecewise_linear": {"knots", "values", "domain"},
    "grid": {"samples", "domain"},
    "sine": {"amplitude", "frequency", "phase"},
    "sawtooth": {"amplitude"},
    "heaviside": {"high", "low"},
    "binary_cascade": {"c", "tail_tol"},
}

_CONSTRUCTORS = {
    "piecewise_constant": PiecewiseConstantField,
    "piecewise_linear": PiecewiseLinearField,
    "grid": GridField,
    "sine": SineField,
    "sawtooth": SawtoothField,
    "heaviside": HeavisideField,
    "binary_cascade": BinaryCascadeField,
}


def field_from_config(config):
    """Build a velocity field from its JSON description.

    The schema is {"kind": <name>, ...parameters}; see the CLI documentation
    for the parameter list of each kind.  Unknown kinds or keys are rejected.
    """
    if not isinstance(config, dict):
        raise ValueError("velocity config must be a mapping")
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind not in _CONSTRUCTORS:
        raise ValueError(f"unknown velocity kind: {kind!r}")
    extra = set(cfg) - _CONFIG_KEYS[kind]
    if extra:
        raise ValueError(f"unknown keys for velocity kind {kind!r}: {sorted(extra)}")
    return _CONSTRUCTORS[kind](**cfg)


# ---------------------------------------------------------------------------
# non-flatness estimation


def _lattice_pairs(a, b, points, min_len):
    grid = np.linspace(a, b, points)
    out = []
    for i in range(points - 1):
        for j in range(i + 1, points):
            if grid[j] - grid[i] >= min_len - 1e-12:
                out.append((grid[i], grid[j]))
    return out


def estimate_flatness_constant(field, interval, eps_grid, j_points=65):
    """Estimate the non-flatness constant of `field` on `interval`.

    Scans scales eps from `eps_grid` and subintervals J (endpoints on a
    uniform lattice of `j_points` points, |J| >= eps) and returns the largest
    eps^2 * log(1 / (eps * residual)) encountered, clamped below at 1, where
    `residual` is the exact affine least-squares residual of the primitive of
    the field on J.  A zero residual means the field is flat on J and the
    estimate is infeasible; the witness interval is reported.

    The result is a finite-grid estimate of the true constant, not a proof.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("empty interval")
    eps_grid = sorted(float(e) for e in eps_grid)
    if not eps_grid or eps_grid[0] <= 0 or eps_grid[-1] >= hi - lo:
        raise ValueError("eps values must lie strictly between 0 and the interval length")
    pv = field.primitive(base=lo)
    pairs = _lattice_pairs(lo, hi, j_points, eps_grid[0])
    residuals = []
    for (ja, jb) in pairs:
        p, q = pv.affine_fit(ja, jb)
        res = pv.affine_residual(ja, jb)
        if res <= 1e-13 * (jb - ja) * (1.0 + p * p + q * q):
            return FlatnessEstimate(math.inf, False, (ja, jb), {})
        residuals.append((jb - ja, res))
    table = {}
    best = -math.inf
    for eps in eps_grid:
        admissible = [r for (length, r) in residuals if length >= eps - 1e-12]
        if not admissible:
            continue
        k_eps = eps**2 * math.log(1.0 / (eps * min(admissible)))
        table[eps] = k_eps
        best = max(best, k_eps)
    if not table:
        raise ValueError("no admissible subintervals at the requested scales")
    return FlatnessEstimate(max(best, 1.0), True, None, table)
