"""Monte Carlo simulation of the diffusion-with-shear Markov process.

The process is X_t = X_0 + sqrt(2) W_t (mod 1) and Y_t = Y_0 + integral of
V(X_s) ds (mod 1).  X is stepped by exact Gaussian increments, so its law
carries no time-discretization error at any step size; the Y integral uses a
disclosed quadrature (left endpoint by default, optional trapezoid).

Randomness comes from counter-based Philox streams keyed by (seed xor
start-tag, block index) over fixed-size path blocks, which makes every
result bit-identical regardless of worker count and reproducible from the
run metadata alone.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats

from . import kernels

__all__ = [
    "PathConfig",
    "TransitionHistogram",
    "DoeblinEstimate",
    "TVDecay",
    "ArcsineResult",
    "KolmogorovResult",
    "simulate",
    "simulate_snapshots",
    "doeblin_estimate",
    "tv_decay",
    "arcsine_experiment",
    "kolmogorov_experiment",
]

_STEP_CHUNK = 256


@dataclass(frozen=True)
class PathConfig:
    """Simulation parameters; the seed pins the entire output."""

    dt: float
    n_paths: int
    t_end: float
    seed: int = 0
    y_integrator: str = "left"
    geometry: str = "torus2"
    bins: int = 32
    block_size: int = 1 << 15
    workers: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.y_integrator not in ("left", "trapezoid"):
            raise ValueError(f"unknown y integrator: {self.y_integrator!r}")
        if self.geometry not in ("torus2", "plane"):
            raise ValueError(f"unknown geometry: {self.geometry!r}")
        if self.bins < 1 or self.block_size < 1:
            raise ValueError("bins and block_size must be positive")

    def replace(self, **kw):
        from dataclasses import replace

        return replace(self, **kw)


@dataclass
class TransitionHistogram:
    """Cell counts of the process position on an M x M partition of the torus."""

    bins: int
    counts: np.ndarray
    n_paths: int
    start: tuple
    t: float
    meta: dict = dc_field(default_factory=dict)
    n_absorbed: int = 0

    def probabilities(self):
        return self.counts / self.n_paths

    def alpha_hat(self):
        """Empirical uniform minorization mass M^2 * min cell probability."""
        return float(self.bins**2 * self.counts.min() / self.n_paths)

    def alpha_lower_confidence(self, level=0.99):
        """Exact binomial (Clopper-Pearson) lower bound aggregated by min."""
        worst = math.inf
        n = self.n_paths
        for k in np.sort(self.counts, axis=None)[:16]:
            k = int(k)
            lo = 0.0 if k == 0 else float(stats.beta.ppf(1.0 - level, k, n - k + 1))
            worst = min(worst, self.bins**2 * lo)
        return worst

    def empty_cells(self):
        return [tuple(map(int, idx)) for idx in np.argwhere(self.counts == 0)]

    def to_csv(self, path):
        with open(path, "w") as handle:
            handle.write("row,col,count\n")
            for i in range(self.bins):
                for j in range(self.bins):
                    handle.write(f"{i},{j},{int(self.counts[i, j])}\n")

    def metadata(self):
        out = {
            "bins": self.bins,
            "n_paths": self.n_paths,
            "n_absorbed": self.n_absorbed,
            "start": list(self.start),
            "t": self.t,
        }
        out.update(self.meta)
        return out


def _start_tag(start):
    """Stable 64-bit tag of the starting point, mixed into the stream key."""
    bits = np.asarray(start, dtype="<f8").view(np.uint64)
    tag = np.uint64(0x9E3779B97F4A7C15)
    for b in bits:
        tag = np.uint64((int(tag) ^ int(b)) * 0xBF58476D1CE4E5B9 % (1 << 64))
    return int(tag)


def _blocks(n_paths, block_size):
    return [(b, lo, min(lo + block_size, n_paths))
            for b, lo in enumerate(range(0, n_paths, block_size))]


def _steps_for(cfg):
    n_steps = max(1, int(round(cfg.t_end / cfg.dt)))
    return n_steps, cfg.t_end / n_steps


def _simulate_block(block_index, lo, hi, start, vfun, cfg, snapshot_steps,
                    kill_interval, collect_positions):
    """Advance one block of paths; returns per-snapshot results."""
    m = hi - lo
    n_steps, dt = _steps_for(cfg)
    wrap = cfg.geometry == "torus2"
    key = np.array([(cfg.seed ^ _start_tag(start)) % (1 << 64), block_index],
                   dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    x = np.full(m, float(start[0]))
    y = np.full(m, float(start[1]))
    alive = np.ones(m, dtype=bool) if kill_interval is not None else None
    root2dt = math.sqrt(2.0 * dt)
    trapezoid = cfg.y_integrator == "trapezoid"
    snapshots = {}
    step = 0
    last = min(n_steps, max(snapshot_steps))
    while step < last:
        chunk = min(_STEP_CHUNK, last - step)
        draws = rng.standard_normal((chunk, m))
        for r in range(chunk):
            step += 1
            v_before = vfun(x)
            x = x + root2dt * draws[r]
            if wrap:
                x %= 1.0
            if trapezoid:
                y = y + dt * 0.5 * (v_before + vfun(x))
            else:
                y = y + dt * v_before
            if alive is not None:
                alive &= (x >= kill_interval[0]) & (x <= kill_interval[1])
            if step in snapshot_steps:
                snapshots[step] = _collect(x, y, alive, cfg, collect_positions)
    return snapshots


def _collect(x, y, alive, cfg, collect_positions):
    if alive is not None:
        x, y = x[alive], y[alive]
    if collect_positions:
        return x.copy(), y.copy()
    m = cfg.bins
    ix = np.minimum((np.mod(x, 1.0) * m).astype(np.int64), m - 1)
    iy = np.minimum((np.mod(y, 1.0) * m).astype(np.int64), m - 1)
    return np.bincount(ix * m + iy, minlength=m * m).reshape(m, m)


def _run(start, vfun, cfg, snapshot_steps, kill_interval=None, collect_positions=False):
    blocks = _blocks(cfg.n_paths, cfg.block_size)

    def work(block):
        b, lo, hi = block
        return _simulate_block(b, lo, hi, start, vfun, cfg, snapshot_steps,
                               kill_interval, collect_positions)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(block) for block in blocks]

    merged = {}
    for step in snapshot_steps:
        parts = [res[step] for res in results]
        if collect_positions:
            merged[step] = (np.concatenate([p[0] for p in parts]),
                            np.concatenate([p[1] for p in parts]))
        else:
            merged[step] = sum(parts)
    return merged


def _torus_vfun(field):
    if not field.periodic:
        raise ValueError("torus simulation needs a torus velocity field")
    return field._eval_inside  # engine keeps x wrapped, so skip the public wrap


def simulate(start, field, cfg, kill_interval=None):
    """Transition histogram of the process at time t_end.

    X is advanced by exact Gaussian increments and Y by the configured
    quadrature of V along the path; final positions are binned on a
    bins x bins partition of the torus.  With `kill_interval`, paths whose X
    leaves the interval are absorbed and reported separately.
    """
    return simulate_snapshots(start, field, cfg, [cfg.t_end],
                              kill_interval=kill_interval)[0]


def simulate_snapshots(start, field, cfg, times, kill_interval=None):
    """Histograms at several times along the same trajectories."""
    if cfg.geometry != "torus2":
        raise ValueError("histogram simulation lives on the torus")
    n_steps, dt = _steps_for(cfg)
    step_of = {}
    for t in times:
        s = int(round(t / dt))
        if not 1 <= s <= n_steps:
            raise ValueError(f"snapshot time {t} outside the simulated horizon")
        step_of[t] = s
    merged = _run(start, _torus_vfun(field), cfg, set(step_of.values()),
                  kill_interval=kill_interval)
    out = []
    meta = {
        "seed": cfg.seed,
        "dt": dt,
        "y_integrator": cfg.y_integrator,
        "block_size": cfg.block_size,
        "velocity": field.to_config(),
    }
    if kill_interval is not None:
        meta["kill_interval"] = list(kill_interval)
    for t in times:
        counts = merged[step_of[t]]
        absorbed = cfg.n_paths - int(counts.sum())
        out.append(TransitionHistogram(cfg.bins, counts, cfg.n_paths, tuple(start),
                                       step_of[t] * dt, dict(meta), absorbed))
    return out


@dataclass
class DoeblinEstimate:
    """Empirical uniform minorization across several starting points."""

    alpha_hat: float
    alpha_lower_confidence: float
    t_star: float
    per_start: list
    empty_cells: list

    @property
    def all_cells_hit(self):
        return not self.empty_cells


def doeblin_estimate(field, t_star, starts, cfg):
    """Estimate the uniform kernel floor at time t_star over given starts.

    alpha_hat is the minimum over starts of bins^2 times the smallest cell
    probability; an exact binomial 99% lower confidence bound is aggregated
    the same way.  Any empty cell is reported with its index and forces
    alpha_hat = 0.
    """
    if not starts:
        raise ValueError("need at least one starting point")
    run_cfg = cfg if cfg.t_end == t_star else cfg.replace(t_end=t_star)
    per_start = []
    empty = []
    alpha = math.inf
    lcb = math.inf
    for start in starts:
        hist = simulate(start, field, run_cfg)
        per_start.append(hist)
        alpha = min(alpha, hist.alpha_hat())
        lcb = min(lcb, hist.alpha_lower_confidence())
        for cell in hist.empty_cells():
            empty.append((tuple(start), cell))
    return DoeblinEstimate(float(alpha), float(lcb), t_star, per_start, empty)


@dataclass
class TVDecay:
    """Empirical total-variation distances between two transition laws."""

    times: np.ndarray
    tv: np.ndarray
    bias: np.ndarray
    n_paths: int


def tv_decay(field, start1, start2, times, cfg):
    """Estimated TV distance between the kernels from two starting points.

    Each start gets its own independent ensemble (streams are keyed by the
    starting point, so identical starts under the same seed are perfectly
    coupled and give exactly zero).  The estimator 0.5 sum |p_hat - q_hat|
    carries an upward bias at equality of roughly M(pi n)^{-1/2}; a normal
    approximation of that floor is reported per time.
    """
    times = sorted(float(t) for t in times)
    run_cfg = cfg.replace(t_end=max(times))
    h1 = simulate_snapshots(start1, field, run_cfg, times)
    h2 = simulate_snapshots(start2, field, run_cfg, times)
    tv = np.empty(len(times))
    bias = np.empty(len(times))
    for i, (a, b) in enumerate(zip(h1, h2)):
        p = a.probabilities()
        q = b.probabilities()
        tv[i] = 0.5 * float(np.abs(p - q).sum())
        pooled = 0.5 * (p + q)
        var = pooled * (1.0 - pooled) * (1.0 / a.n_paths + 1.0 / b.n_paths)
        bias[i] = 0.5 * float(np.sum(np.sqrt(2.0 * var / math.pi)))
    return TVDecay(np.asarray(times), tv, bias, cfg.n_paths)


# ---------------------------------------------------------------------------
# validation experiments on the plane


@dataclass
class ArcsineResult:
    ks_distance: float
    n_paths: int
    dt: float
    t_end: float

    @staticmethod
    def cdf(a):
        return 2.0 / math.pi * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def arcsine_experiment(cfg):
    """Occupation-time law of the positive half-line for plane Brownian X.

    Simulates Z = (1/t) integral of 1_{X_s > 0} ds from the origin and
    returns the one-sample Kolmogorov-Smirnov distance to the arcsine
    distribution.  The left-endpoint rule biases Z by O(sqrt(dt)).
    """
    if cfg.geometry != "plane":
        raise ValueError("the occupation-time experiment runs on the plane")
    n_steps, dt = _steps_for(cfg)

    def indicator(x):
        return (x > 0.0).astype(float)

    positions = _run((0.0, 0.0), indicator, cfg, {n_steps}, collect_positions=True)
    z = positions[n_steps][1] / cfg.t_end
    z.sort()
    n = len(z)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    cdf = ArcsineResult.cdf(z)
    ks = float(max(np.max(np.abs(cdf - grid_hi)), np.max(np.abs(cdf - grid_lo))))
    return ArcsineResult(ks, cfg.n_paths, dt, cfg.t_end)


@dataclass
class KolmogorovResult:
    max_rel_error: float
    rel_errors: np.ndarray
    high_mass_cells: int
    chi2_pvalue: float
    var_x: float
    var_y: float
    var_x_expected: float
    var_y_expected: float
    n_paths: int


def kolmogorov_experiment(cfg, bins=24, span_sigmas=4.0):
    """Free-space shear V(x) = x against the explicit plane kernel.

    Bins the endpoint cloud on a grid spanning +-span_sigmas standard
    deviations per axis, compares cell frequencies with the cell-averaged
    kernel on every cell holding at least 1% of the mass, chi-square tests
    the exactly-Gaussian X marginal, and checks the Y moments against the
    kernel's own quadrature moments.
    """
    if cfg.geometry != "plane":
        raise ValueError("the free-space comparison runs on the plane")
    n_steps, dt = _steps_for(cfg)
    positions = _run((0.0, 0.0), lambda x: x, cfg, {n_steps}, collect_positions=True)
    x, y = positions[n_steps]
    t = cfg.t_end

    sx = math.sqrt(2.0 * t)
    sy = math.sqrt(2.0 * t**3 / 3.0)
    x_edges = np.linspace(-span_sigmas * sx, span_sigmas * sx, bins + 1)
    y_edges = np.linspace(-span_sigmas * sy, span_sigmas * sy, bins + 1)
    counts, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges])

    # cell averages of the kernel by 4x4 Gauss-Legendre per cell
    gl_nodes, gl_w = np.polynomial.legendre.leggauss(4)
    expected = np.empty((bins, bins))
    for i in range(bins):
        xa, xb = x_edges[i], x_edges[i + 1]
        xs = 0.5 * (xa + xb) + 0.5 * (xb - xa) * gl_nodes
        wxs = 0.5 * (xb - xa) * gl_w
        for j in range(bins):
            ya, yb = y_edges[j], y_edges[j + 1]
            ys = 0.5 * (ya + yb) + 0.5 * (yb - ya) * gl_nodes
            wys = 0.5 * (yb - ya) * gl_w
            xx, yy = np.meshgrid(xs, ys, indexing="ij")
            vals = kernels.kolmogorov_kernel(t, xx, yy)
            expected[i, j] = float(wxs @ vals @ wys)

    mask = expected >= 0.01
    rel = np.abs(counts[mask] / cfg.n_paths - expected[mask]) / expected[mask]

    # X marginal is exactly Gaussian with variance 2t; include the tails so
    # the cells partition the line and Pearson's k-1 degrees apply
    full_edges = np.concatenate([[-np.inf], x_edges, [np.inf]])
    x_probs = np.diff(stats.norm.cdf(full_edges, scale=sx))
    x_counts, _ = np.histogram(x, bins=full_edges)
    keep = x_probs * cfg.n_paths >= 5
    stat = float(np.sum((x_counts[keep] - cfg.n_paths * x_probs[keep]) ** 2
                        / (cfg.n_paths * x_probs[keep])))
    pvalue = float(stats.chi2.sf(stat, int(keep.sum()) - 1))

    return KolmogorovResult(
        max_rel_error=float(rel.max()) if rel.size else math.nan,
        rel_errors=rel,
        high_mass_cells=int(mask.sum()),
        chi2_pvalue=pvalue,
        var_x=float(np.var(x)),
        var_y=float(np.var(y)),
        var_x_expected=2.0 * t,
        var_y_expected=2.0 * t**3 / 3.0,
        n_paths=cfg.n_paths,
    )
