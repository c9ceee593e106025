"""Analytic drift and diffusion descriptors.

Drifts are immutable descriptors with a vectorized ``eval(t, x)`` returning
the vector field at time ``t`` (scalar or per-point array) and points
``x`` of shape ``(n, d)``.  The catalog is closed: an inverse-power
attracting drift singular at the space-time origin, truncations
``b * 1_{|b| <= M}``, convolution smoothing, and a handful of regular
drifts used as controls (zero, constant, linear, compactly supported
constant).  Diffusions are symmetric matrix fields with eigenvalues pinned
to ``[delta, 1/delta]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = [
    "SingularDrift",
    "TruncatedDrift",
    "ScaledDrift",
    "ShiftedTimeDrift",
    "ZeroDrift",
    "ConstantDrift",
    "LinearDrift",
    "BoxedConstantDrift",
    "CallableDrift",
    "MollifiedField",
    "mollify",
    "truncate",
    "DiffusionSpec",
    "DiffusionCheck",
    "identity_diffusion",
    "validate_diffusion",
]

_SUM_TOL = 1e-12


def _prep_points(t, x, dim=None):
    """Normalize (t, x) to (t_arr, x_arr, squeeze) with x_arr of shape (n, d)."""
    x_arr = np.asarray(x, dtype=float)
    squeeze = x_arr.ndim == 1
    if squeeze:
        x_arr = x_arr[None, :]
    if dim is not None and x_arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x_arr.shape[1]}")
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim == 0:
        t_arr = np.full(x_arr.shape[0], float(t_arr))
    return t_arr, x_arr, squeeze


@dataclass(frozen=True)
class SingularDrift:
    """Attracting drift -t^{-alpha} |x|^{-beta} x/|x| on (0,1] x (unit ball minus 0).

    Exponents satisfy 0 < alpha <= beta < 1 with alpha + beta = 1.  The field
    is a total function: zero at x = 0, outside the unit ball, and for
    t <= 0 or t > 1.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= self.beta < 1.0):
            raise ValueError(f"need 0 < alpha <= beta < 1, got ({self.alpha}, {self.beta})")
        if abs(self.alpha + self.beta - 1.0) > _SUM_TOL:
            raise ValueError(f"alpha + beta must equal 1, got {self.alpha + self.beta!r}")

    def magnitude(self, t, x):
        t_arr, x_arr, squeeze = _prep_points(t, x)
        r = np.sqrt((x_arr * x_arr).sum(axis=1))
        active = (r > 0.0) & (r <= 1.0) & (t_arr > 0.0) & (t_arr <= 1.0)
        r_safe = np.where(active, r, 1.0)
        t_safe = np.where(active, t_arr, 1.0)
        mag = np.where(active, t_safe ** (-self.alpha) * r_safe ** (-self.beta), 0.0)
        return mag[0] if squeeze else mag

    def eval(self, t, x):
        t_arr, x_arr, squeeze = _prep_points(t, x)
        r = np.sqrt((x_arr * x_arr).sum(axis=1))
        active = (r > 0.0) & (r <= 1.0) & (t_arr > 0.0) & (t_arr <= 1.0)
        r_safe = np.where(active, r, 1.0)
        t_safe = np.where(active, t_arr, 1.0)
        scale = np.where(active, -(t_safe ** (-self.alpha)) * r_safe ** (-self.beta - 1.0), 0.0)
        out = scale[:, None] * x_arr
        return out[0] if squeeze else out


@dataclass(frozen=True)
class TruncatedDrift:
    """b * 1_{|b| <= level}: the field is dropped, not clipped, where it exceeds level."""

    base: object
    level: float

    def __post_init__(self):
        if not self.level > 0.0:
            raise ValueError("truncation level must be positive")

    def eval(self, t, x):
        vals = np.asarray(self.base.eval(t, x), dtype=float)
        squeeze = vals.ndim == 1
        v = vals[None, :] if squeeze else vals
        mag2 = (v * v).sum(axis=1)
        keep = mag2 <= self.level * self.level
        out = np.where(keep[:, None], v, 0.0)
        return out[0] if squeeze else out

    def magnitude(self, t, x):
        vals = self.eval(t, x)
        v = vals[None, :] if vals.ndim == 1 else vals
        mag = np.sqrt((v * v).sum(axis=1))
        return mag[0] if vals.ndim == 1 else mag


@dataclass(frozen=True)
class ScaledDrift:
    """factor * b; factor = -1 flips an attracting drift into the repelling control."""

    base: object
    factor: float

    def eval(self, t, x):
        return self.factor * np.asarray(self.base.eval(t, x), dtype=float)


@dataclass(frozen=True)
class ShiftedTimeDrift:
    """Evaluate the base drift at max(t, t_floor); left-limit shift for the first step."""

    base: object
    t_floor: float

    def eval(self, t, x):
        t_arr = np.asarray(t, dtype=float)
        return self.base.eval(np.maximum(t_arr, self.t_floor), x)


@dataclass(frozen=True)
class ZeroDrift:
    def eval(self, t, x):
        x_arr = np.asarray(x, dtype=float)
        return np.zeros_like(x_arr)


@dataclass(frozen=True)
class ConstantDrift:
    vector: tuple

    def eval(self, t, x):
        t_arr, x_arr, squeeze = _prep_points(t, x)
        out = np.broadcast_to(np.asarray(self.vector, dtype=float), x_arr.shape).copy()
        return out[0] if squeeze else out


@dataclass(frozen=True)
class LinearDrift:
    """b(t, x) = -rate * x (mean reversion toward the origin)."""

    rate: float = 1.0

    def eval(self, t, x):
        return -self.rate * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class BoxedConstantDrift:
    """Constant vector on [t_lo, t_hi] x {|x| <= radius}, zero elsewhere."""

    vector: tuple
    t_lo: float = 0.0
    t_hi: float = 1.0
    radius: float = 1.0

    def eval(self, t, x):
        t_arr, x_arr, squeeze = _prep_points(t, x)
        r2 = (x_arr * x_arr).sum(axis=1)
        active = (t_arr >= self.t_lo) & (t_arr <= self.t_hi) & (r2 <= self.radius ** 2)
        out = np.where(active[:, None], np.asarray(self.vector, dtype=float)[None, :], 0.0)
        return out[0] if squeeze else out


@dataclass(frozen=True)
class CallableDrift:
    """Adapter for an arbitrary vectorized fn(t, x) -> (n, d)."""

    fn: Callable

    def eval(self, t, x):
        return np.asarray(self.fn(t, x), dtype=float)


def truncate(drift, level: float):
    """Return the drift killed wherever its magnitude exceeds ``level``."""
    return TruncatedDrift(drift, float(level))


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _kernel_quadrature(dim: int, nodes_per_axis: int):
    """Midpoint nodes on [-1,1]^(dim+1) weighted by the standard bump on the unit ball.

    Weights are normalized to sum to one, so smoothing is a convex combination
    of base-field samples: constants are preserved exactly and the supremum of
    the base field is never exceeded.  An even node count keeps the kernel
    center and any symmetric discontinuity off the sample set.
    """
    m = nodes_per_axis
    axis = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
    grids = np.meshgrid(*([axis] * (dim + 1)), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    z2 = (nodes * nodes).sum(axis=1)
    inside = z2 < 1.0
    raw = np.zeros(nodes.shape[0])
    raw[inside] = np.exp(-1.0 / (1.0 - z2[inside]))
    nodes = nodes[raw > 0.0]
    raw = raw[raw > 0.0]
    weights = raw / raw.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class MollifiedField:
    """Convolution of a space-time field with the rescaled bump kernel.

    The kernel zeta is the usual exp(-1/(1-|z|^2)) bump supported on the unit
    ball of R^(dim+1), scaled as zeta_eps(s, y) = eps^-(dim+1) zeta(s/eps, y/eps)
    and normalized to unit mass on its quadrature nodes.
    """

    base: object
    epsilon: float
    dim: int
    vector: bool = False
    nodes_per_axis: int = 8

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")

    def kernel_mass(self) -> float:
        """Quadrature mass of the normalized kernel (1 by construction)."""
        _, weights = _kernel_quadrature(self.dim, self.nodes_per_axis)
        return float(weights.sum())

    def _base_values(self, t_flat, x_flat):
        if self.vector:
            return np.asarray(self.base.eval(t_flat, x_flat), dtype=float)
        return np.asarray(self.base(t_flat, x_flat), dtype=float)

    def eval(self, t, x):
        t_arr, x_arr, squeeze = _prep_points(t, x, self.dim)
        nodes, weights = _kernel_quadrature(self.dim, self.nodes_per_axis)
        n, m = x_arr.shape[0], nodes.shape[0]
        t_shift = t_arr[:, None] - self.epsilon * nodes[None, :, 0]
        x_shift = x_arr[:, None, :] - self.epsilon * nodes[None, :, 1:]
        vals = self._base_values(t_shift.ravel(), x_shift.reshape(n * m, self.dim))
        if self.vector:
            vals = vals.reshape(n, m, self.dim)
            out = (weights[None, :, None] * vals).sum(axis=1)
        else:
            vals = vals.reshape(n, m)
            out = (weights[None, :] * vals).sum(axis=1)
        return out[0] if squeeze else out

    # scalar fields double as plain callables
    def __call__(self, t, x):
        if self.vector:
            raise TypeError("vector-valued mollified field; use eval()")
        return self.eval(t, x)


def mollify(field, epsilon: float, dim: int, vector: bool = False,
            nodes_per_axis: int = 8) -> MollifiedField:
    """Smooth ``field`` at scale ``epsilon``.

    ``field`` is a scalar callable ``f(t, x)`` or, with ``vector=True``, a
    drift descriptor with ``eval``.  Evaluation integrates over the kernel
    support by the midpoint rule; the base field must be finite on the
    epsilon-neighborhood of the requested points.
    """
    return MollifiedField(field, float(epsilon), int(dim), vector, nodes_per_axis)


# ---------------------------------------------------------------------------
# diffusion matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionSpec:
    """Symmetric d x d diffusion matrix field with spectrum inside [delta, 1/delta]."""

    delta: float
    dim: int
    matrix: tuple | None = None           # constant coefficient, row-major
    fn: Callable | None = None            # fn(t, x:(n,d)) -> (n,d,d)

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if (self.matrix is None) == (self.fn is None):
            raise ValueError("provide exactly one of matrix / fn")

    @property
    def is_constant(self) -> bool:
        return self.matrix is not None

    def constant_matrix(self) -> np.ndarray:
        if not self.is_constant:
            raise ValueError("diffusion is state dependent")
        return np.asarray(self.matrix, dtype=float).reshape(self.dim, self.dim)

    def eval(self, t, x) -> np.ndarray:
        """Matrices at the given points, shape (n, d, d)."""
        t_arr, x_arr, squeeze = _prep_points(t, x, self.dim)
        if self.is_constant:
            out = np.broadcast_to(self.constant_matrix(), (x_arr.shape[0], self.dim, self.dim))
        else:
            out = np.asarray(self.fn(t_arr, x_arr), dtype=float)
        return out[0] if squeeze else out


def identity_diffusion(dim: int, delta: float = 0.5) -> DiffusionSpec:
    eye = tuple(np.eye(dim).ravel())
    return DiffusionSpec(delta=delta, dim=dim, matrix=eye)


@dataclass(frozen=True)
class DiffusionCheck:
    passed: bool
    worst_eigenvalue: float
    min_eigenvalue: float
    max_eigenvalue: float
    max_asymmetry: float
    n_points: int


_SYM_TOL = 1e-12
_EIG_TOL = 1e-12


def validate_diffusion(spec: DiffusionSpec, sample) -> DiffusionCheck:
    """Check symmetry and the eigenvalue band at every sampled (t, x).

    Diagnostic only: returns the verdict with the most offending eigenvalue
    rather than raising.
    """
    if len(sample) == 0:
        raise ValueError("empty sample")
    mats = np.stack([spec.eval(t, np.asarray(x, dtype=float)) for t, x in sample])
    asym = np.abs(mats - np.swapaxes(mats, 1, 2)).max()
    eigs = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, 1, 2)))
    lo, hi = float(eigs.min()), float(eigs.max())
    lo_ok = lo >= spec.delta - _EIG_TOL
    hi_ok = hi <= 1.0 / spec.delta + _EIG_TOL
    passed = bool(lo_ok and hi_ok and asym <= _SYM_TOL)
    # the eigenvalue farthest outside the band, or the extreme closest to it
    low_excess = spec.delta - lo
    high_excess = hi - 1.0 / spec.delta
    worst = lo if low_excess >= high_excess else hi
    return DiffusionCheck(passed, float(worst), lo, hi, float(asym), len(sample))
