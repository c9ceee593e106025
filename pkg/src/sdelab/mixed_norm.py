"""Mixed space-time Lebesgue norms on grid-sampled and analytic fields.

The norm takes the p-th power integral in space and the q-th in time when
p >= q (outer integral in t), and the reverse order when p <= q (outer
integral in x); suprema replace integrals at infinite exponents.  Closed
radial/time forms handle the singular inverse-power drift family, whose
integrable singularities defeat fixed-grid quadrature; the tensor-product
midpoint rule on uniform grids is trusted for bounded fields only.

Also computed here: the exponent bookkeeping theta = 1 - d/p - 1/q and the
cumulative drift mass B(t) = || b 1_{(-inf,t)} ||_{p,q}^q used by the
time-change diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .fields import (
    BoxedConstantDrift,
    ScaledDrift,
    SingularDrift,
    TruncatedDrift,
    ZeroDrift,
)

__all__ = [
    "MixedExponents",
    "subcriticality",
    "SpaceTimeGrid",
    "GridField",
    "field_from_callable",
    "compute_mixed_norm",
    "mixed_norm_branch",
    "drift_mass",
    "drift_mass_table",
    "truncation_tail_norm",
    "sphere_area",
    "ball_volume",
]

INF = math.inf
CRITICAL_TOL = 1e-12


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * radius ** d


@dataclass(frozen=True)
class MixedExponents:
    """Integrability pair (p, q) in [1, inf] with spatial dimension d >= 2.

    theta = 1 - d/p - 1/q (with d/inf = 1/inf = 0); the admissibility
    condition of the subcritical regime is theta >= 0, with theta = 0 the
    critical case.
    """

    p: float
    q: float
    d: int

    def __post_init__(self):
        if not (self.p >= 1.0 and self.q >= 1.0):
            raise ValueError(f"exponents must lie in [1, inf], got p={self.p}, q={self.q}")
        if not (isinstance(self.d, int) and self.d >= 2):
            raise ValueError(f"spatial dimension must be an integer >= 2, got {self.d}")

    @property
    def theta(self) -> float:
        inv_p = 0.0 if math.isinf(self.p) else 1.0 / self.p
        inv_q = 0.0 if math.isinf(self.q) else 1.0 / self.q
        return 1.0 - self.d * inv_p - inv_q

    @property
    def is_subcritical(self) -> bool:
        """True when d/p + 1/q <= 1 (critical boundary included)."""
        return self.theta >= -CRITICAL_TOL

    def classify(self) -> str:
        th = self.theta
        if abs(th) <= CRITICAL_TOL:
            return "critical"
        return "subcritical" if th > 0 else "supercritical"

    @property
    def dual(self) -> "MixedExponents":
        p_dual = INF if self.p == 1.0 else (1.0 if math.isinf(self.p) else self.p / (self.p - 1.0))
        q_dual = INF if self.q == 1.0 else (1.0 if math.isinf(self.q) else self.q / (self.q - 1.0))
        return MixedExponents(p_dual, q_dual, self.d)


def subcriticality(e: MixedExponents):
    """Return (theta, classification)."""
    return e.theta, e.classify()


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform cells on [t_min, t_max] x [-L, L]^d; fields sample cell midpoints."""

    t_min: float
    t_max: float
    n_t: int
    extent: float          # L
    n_x: int
    d: int

    def __post_init__(self):
        if self.n_t < 2 or self.n_x < 2:
            raise ValueError("need at least 2 cells per axis")
        if not (self.t_max > self.t_min and self.extent > 0.0):
            raise ValueError("degenerate grid box")
        if self.d < 1:
            raise ValueError("spatial dimension must be positive")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n_t

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.n_x

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    def time_midpoints(self) -> np.ndarray:
        return self.t_min + (np.arange(self.n_t) + 0.5) * self.dt

    def axis_midpoints(self) -> np.ndarray:
        return -self.extent + (np.arange(self.n_x) + 0.5) * self.dx

    def shape(self):
        return (self.n_t,) + (self.n_x,) * self.d

    def meshgrid(self):
        """Midpoint coordinates: times (n_t,), points (n_x^d, d)."""
        ax = self.axis_midpoints()
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return self.time_midpoints(), pts


@dataclass
class GridField:
    """Scalar samples at the midpoints of a space-time grid."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape():
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape()}")
        if not np.isfinite(self.values).all():
            raise ValueError("grid field contains non-finite samples; mask singularities first")


def field_from_callable(fn, grid: SpaceTimeGrid) -> GridField:
    """Sample a vectorized scalar field fn(t, x) at the grid midpoints."""
    times, pts = grid.meshgrid()
    n_cells = pts.shape[0]
    t_flat = np.repeat(times, n_cells)
    x_flat = np.tile(pts, (grid.n_t, 1))
    vals = np.asarray(fn(t_flat, x_flat), dtype=float).reshape(grid.shape())
    return GridField(grid, vals)


def _lp_over_space(v: np.ndarray, p: float, cell_volume: float) -> np.ndarray:
    """L_p norm over the flattened space axes, one value per time slice."""
    flat = v.reshape(v.shape[0], -1)
    if math.isinf(p):
        return flat.max(axis=1)
    return ((flat ** p).sum(axis=1) * cell_volume) ** (1.0 / p)


def _lq_over_time(v: np.ndarray, q: float, dt: float) -> np.ndarray:
    """L_q norm over the time axis, one value per spatial cell."""
    flat = v.reshape(v.shape[0], -1)
    if math.isinf(q):
        return flat.max(axis=0)
    return ((flat ** q).sum(axis=0) * dt) ** (1.0 / q)


def mixed_norm_branch(field: GridField, p: float, q: float, outer_in_time: bool) -> float:
    """Evaluate one branch formula explicitly (midpoint rule, suprema at inf).

    outer_in_time=True: space integral at exponent p inside, time at q outside
    (the p >= q branch); False is the transposed order.  Supremum values are
    grid maxima and therefore lower bounds of the essential supremum.
    """
    v = np.abs(field.values)
    g = field.grid
    if outer_in_time:
        inner = _lp_over_space(v, p, g.cell_volume)
        if math.isinf(q):
            return float(inner.max())
        return float(((inner ** q).sum() * g.dt) ** (1.0 / q))
    inner = _lq_over_time(v, q, g.dt)
    if math.isinf(p):
        return float(inner.max())
    return float(((inner ** p).sum() * g.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------------------
# closed forms for the singular drift family
# ---------------------------------------------------------------------------

def _power_time_integral(expo: float, lo: float, hi: float) -> float:
    """integral of t^expo over [lo, hi], lo >= 0; +inf when divergent."""
    if hi <= lo:
        return 0.0
    if lo == 0.0 and expo <= -1.0:
        return INF
    if expo == -1.0:
        return math.log(hi / lo)
    e1 = expo + 1.0
    return (hi ** e1 - lo ** e1) / e1


def _radial_integral(d: int, expo: float, lo: float, hi: float) -> float:
    """integral of r^(d-1+expo) over [lo, hi] times the unit-sphere area."""
    return sphere_area(d) * _power_time_integral(d - 1.0 + expo, lo, hi)


def _singular_norm(s: SingularDrift, e: MixedExponents) -> float:
    """|| t^-alpha |x|^-beta ||_{p,q} on (0,1] x B_1: exact by separation."""
    p, q, d = e.p, e.q, e.d
    if math.isinf(p) or math.isinf(q):
        return INF  # both factors have infinite essential suprema near the origin
    space = _radial_integral(d, -s.beta * p, 0.0, 1.0)       # int |x|^{-beta p} dx
    time = _power_time_integral(-s.alpha * q, 0.0, 1.0)      # int t^{-alpha q} dt
    if math.isinf(space) or math.isinf(time):
        return INF
    if p >= q:
        return (space ** (q / p) * time) ** (1.0 / q)
    return (time ** (p / q) * space) ** (1.0 / p)


def _truncated_radius(s: SingularDrift, level: float, t: float) -> float:
    """Radius below which t^-alpha r^-beta exceeds the truncation level."""
    return (t ** s.alpha * level) ** (-1.0 / s.beta)


def _truncated_space_integral(s: SingularDrift, level: float, t: float, p: float, d: int) -> float:
    """int |b_M(t, x)|^p dx: the active shell is rho_*(t) <= |x| <= 1."""
    if t <= 0.0 or t > 1.0:
        return 0.0
    rho = min(_truncated_radius(s, level, t), 1.0)
    return t ** (-s.alpha * p) * _radial_integral(d, -s.beta * p, rho, 1.0)


def _truncated_norm(s: SingularDrift, level: float, e: MixedExponents) -> float:
    p, q, d = e.p, e.q, e.d
    t_on = level ** (-1.0 / s.alpha)  # below this time the whole ball exceeds the level
    if t_on >= 1.0:
        return 0.0
    if math.isinf(p) and math.isinf(q):
        return level
    if math.isinf(p):  # sup over x is exactly the level on [t_on, 1]
        return level * (1.0 - t_on) ** (1.0 / q)
    if math.isinf(q):  # sup over t is the level on the active annulus
        r_on = _truncated_radius(s, level, 1.0)
        return level * _radial_integral(d, 0.0, min(r_on, 1.0), 1.0) ** (1.0 / p)
    if p >= q:
        val, _ = integrate.quad(
            lambda t: _truncated_space_integral(s, level, t, p, d) ** (q / p),
            t_on, 1.0, limit=200)
        return val ** (1.0 / q)

    def inner_time(r: float) -> float:
        t_r = min(max((level * r ** s.beta) ** (-1.0 / s.alpha), 0.0), 1.0)
        return r ** (-s.beta * q) * _power_time_integral(-s.alpha * q, t_r, 1.0)

    val, _ = integrate.quad(
        lambda r: sphere_area(d) * r ** (d - 1.0) * inner_time(r) ** (p / q),
        min(_truncated_radius(s, level, 1.0), 1.0), 1.0, limit=200)
    return val ** (1.0 / p)


def truncation_tail_norm(s: SingularDrift, level: float, e: MixedExponents) -> float:
    """|| b - b 1_{|b| <= level} ||_{p,q}: the mass killed by truncation."""
    p, q, d = e.p, e.q, e.d
    if math.isinf(p) or math.isinf(q):
        return INF
    t_on = min(level ** (-1.0 / s.alpha), 1.0)
    if p < q:
        raise NotImplementedError("tail norm implemented for the p >= q branch")
    space_full = _radial_integral(d, -s.beta * p, 0.0, 1.0)
    if math.isinf(space_full):
        return INF
    # on (0, t_on] the whole ball is above the level
    head = space_full ** (q / p) * _power_time_integral(-s.alpha * q, 0.0, t_on)
    if math.isinf(head):
        return INF

    def above(t: float) -> float:
        rho = min(_truncated_radius(s, level, t), 1.0)
        return t ** (-s.alpha * p) * _radial_integral(d, -s.beta * p, 0.0, rho)

    tail = 0.0
    if t_on < 1.0:
        tail, _ = integrate.quad(lambda t: above(t) ** (q / p), t_on, 1.0, limit=200)
    return (head + tail) ** (1.0 / q)


def _boxed_norm(b: BoxedConstantDrift, e: MixedExponents) -> float:
    p, q, d = e.p, e.q, e.d
    mag = float(np.linalg.norm(np.asarray(b.vector, dtype=float)))
    if mag == 0.0:
        return 0.0
    span = max(b.t_hi - b.t_lo, 0.0)
    vol = ball_volume(d, b.radius)
    if math.isinf(p) and math.isinf(q):
        return mag
    if math.isinf(p):
        return mag * span ** (1.0 / q)
    if math.isinf(q):
        return mag * vol ** (1.0 / p)
    if p >= q:
        return ((mag ** p * vol) ** (q / p) * span) ** (1.0 / q)
    return ((mag ** q * span) ** (p / q) * vol) ** (1.0 / p)


def _analytic_norm(f, e: MixedExponents):
    """Closed-form norm for catalog drifts; None when no analytic route exists."""
    if isinstance(f, ZeroDrift):
        return 0.0
    if isinstance(f, ScaledDrift):
        base = _analytic_norm(f.base, e)
        return None if base is None else abs(f.factor) * base
    if isinstance(f, SingularDrift):
        return _singular_norm(f, e)
    if isinstance(f, TruncatedDrift):
        if isinstance(f.base, SingularDrift):
            return _truncated_norm(f.base, f.level, e)
        if isinstance(f.base, BoxedConstantDrift):
            mag = float(np.linalg.norm(np.asarray(f.base.vector, dtype=float)))
            return _boxed_norm(f.base, e) if mag <= f.level else 0.0
        return None
    if isinstance(f, BoxedConstantDrift):
        return _boxed_norm(f, e)
    return None


def compute_mixed_norm(f, e: MixedExponents, grid: SpaceTimeGrid | None = None) -> float:
    """Mixed (p, q) norm of |f|.

    Accepts a catalog drift descriptor (closed radial/time forms), a
    GridField (midpoint quadrature on its own grid), or a vectorized scalar
    callable together with a grid.  Divergent norms return +inf.
    """
    analytic = _analytic_norm(f, e)
    if analytic is not None:
        return analytic
    if isinstance(f, GridField):
        gf = f
    elif callable(f):
        if grid is None:
            raise ValueError("a grid is required to integrate a callable field")
        gf = field_from_callable(f, grid)
    else:
        raise TypeError(f"cannot compute a mixed norm of {type(f).__name__}")
    return mixed_norm_branch(gf, e.p, e.q, outer_in_time=e.p >= e.q)


# ---------------------------------------------------------------------------
# cumulative drift mass B(t)
# ---------------------------------------------------------------------------

def _require_time_sliced(e: MixedExponents):
    if e.p < e.q:
        raise ValueError(
            "drift mass B(t) needs p >= q: only the outer-in-time branch is additive over time slices")


def drift_mass(b, e: MixedExponents, t: float) -> float:
    """B(t) = integral_(-inf)^t ( int |b(s, x)|^p dx )^(q/p) ds.

    Nondecreasing in t with B(inf) = ||b||_{p,q}^q; requires p >= q.
    """
    _require_time_sliced(e)
    p, q, d = e.p, e.q, e.d
    if isinstance(b, ZeroDrift):
        return 0.0
    if isinstance(b, ScaledDrift):
        return abs(b.factor) ** q * drift_mass(b.base, e, t)
    if isinstance(b, SingularDrift):
        if t <= 0.0:
            return 0.0
        space = _radial_integral(d, -b.beta * p, 0.0, 1.0)
        if math.isinf(space):
            return INF
        time = _power_time_integral(-b.alpha * q, 0.0, min(t, 1.0))
        return space ** (q / p) * time
    if isinstance(b, TruncatedDrift) and isinstance(b.base, SingularDrift):
        s = b.base
        t_on = b.level ** (-1.0 / s.alpha)
        hi = min(t, 1.0)
        if hi <= t_on:
            return 0.0
        val, _ = integrate.quad(
            lambda u: _truncated_space_integral(s, b.level, u, p, d) ** (q / p),
            t_on, hi, limit=200)
        return val
    if isinstance(b, TruncatedDrift) and isinstance(b.base, BoxedConstantDrift):
        mag = float(np.linalg.norm(np.asarray(b.base.vector, dtype=float)))
        return drift_mass(b.base, e, t) if mag <= b.level else 0.0
    if isinstance(b, BoxedConstantDrift):
        mag = float(np.linalg.norm(np.asarray(b.vector, dtype=float)))
        if mag == 0.0 or t <= b.t_lo:
            return 0.0
        span = min(t, b.t_hi) - b.t_lo
        if span <= 0.0:
            return 0.0
        return (mag ** p * ball_volume(d, b.radius)) ** (q / p) * span
    raise TypeError(f"no drift-mass rule for {type(b).__name__}")


def drift_mass_table(b, e: MixedExponents, times: Sequence[float]) -> np.ndarray:
    """B at an increasing sequence of times; cumulative quadrature where needed."""
    _require_time_sliced(e)
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size < 1:
        raise ValueError("times must be a nonempty 1-d sequence")
    if np.any(np.diff(ts) <= 0.0):
        raise ValueError("times must be strictly increasing")
    if isinstance(b, TruncatedDrift) and isinstance(b.base, SingularDrift):
        s = b.base
        p, q, d = e.p, e.q, e.d
        t_on = b.level ** (-1.0 / s.alpha)
        out = np.zeros_like(ts)
        acc, prev = 0.0, t_on
        for i, t in enumerate(ts):
            hi = min(t, 1.0)
            if hi > prev:
                inc, _ = integrate.quad(
                    lambda u: _truncated_space_integral(s, b.level, u, p, d) ** (q / p),
                    prev, hi, limit=200)
                acc += inc
                prev = hi
            out[i] = acc
        return out
    return np.array([drift_mass(b, e, float(t)) for t in ts])
