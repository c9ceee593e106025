"""Monte Carlo occupation functionals and their integral-norm bounds.

Estimates path functionals of the form

    E sum_{k < gamma} e^{-phi_k} kappa_k f(tau_k, x_k) dA_k,

the discrete left-endpoint form of weighted occupation integrals, where
tau = int r dA is the reweighted clock, phi = int c dA the discount
exponent, a = (1/2) d<m>/dA the half covariance of the martingale part,
and kappa = r^(1/q) (det a)^(1/p) c^theta (with the convention z^0 = 1 when
theta = 0).  The stopping index gamma is a fixed horizon or the first grid
time outside a ball.

Every comparison against an integral-norm bound is a fitted-constant or
scaling test: the theoretical constants are not explicit, so reports carry
the bound value and the ratio, never a pass/fail against an absolute
constant.  Reductions over paths are order-fixed (numpy pairwise sums in
path order), keeping estimates deterministic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fields import ZeroDrift
from .mixed_norm import CRITICAL_TOL, GridField, MixedExponents, SpaceTimeGrid, mixed_norm_branch
from .solver import PathEnsemble

__all__ = [
    "EstimateReport",
    "SemimartingaleWeights",
    "make_time_weights",
    "estimate_occupation",
    "weighted_functional",
    "estimate_AB",
    "green_density",
    "GreenDensityResult",
    "drift_budget_check",
    "DriftBudgetReport",
]


@dataclass
class EstimateReport:
    """A Monte Carlo estimate with its standard error and an optional bound."""

    estimate: float
    standard_error: float
    n_paths: int
    bound_value: Optional[float] = None
    bound_label: str = ""

    def __post_init__(self):
        if self.standard_error < 0.0:
            raise ValueError("standard error must be nonnegative")

    @property
    def ratio(self) -> Optional[float]:
        if self.bound_value is None or self.bound_value == 0.0:
            return None
        return self.estimate / self.bound_value


@dataclass
class SemimartingaleWeights:
    """Per-path, per-step weight processes along an ensemble.

    clock_rate (r >= 0) and discount_rate (c >= 0) are scalars or
    (n_paths, n_steps) arrays at left endpoints; dA likewise (the increment
    of the nondecreasing process A over each step).  det_a / tr_a describe
    a = (1/2) d<m>/dA.  clock and discount are the running sums
    tau_k = sum_{j<k} r_j dA_j and phi_k = sum_{j<k} c_j dA_j (so both start
    at zero, matching A_0 = 0).  stop_idx is the per-path exclusive stopping
    step: steps k < stop_idx contribute.
    """

    clock_rate: object
    discount_rate: object
    dA: object
    det_a: object
    tr_a: object
    clock: np.ndarray
    discount: np.ndarray
    stop_idx: np.ndarray
    n_paths: int
    n_steps: int

    def step_mask(self) -> np.ndarray:
        return np.arange(self.n_steps)[None, :] < self.stop_idx[:, None]

    def kappa(self, e: MixedExponents, allow_negative_theta: bool = False) -> object:
        """r^(1/q) (det a)^(1/p) c^theta; scalar when all inputs are scalars.

        theta < 0 falls outside the admissible regime and is rejected unless
        the caller opts in; then a vanishing discount rate drops the c-factor
        (the degenerate form of the fixed-horizon specialization, where the
        weight is (det a)^(1/p) alone).
        """
        theta = e.theta
        if theta < -CRITICAL_TOL and not allow_negative_theta:
            raise ValueError("weight exponent theta is negative: outside the admissible regime")
        inv_q = 0.0 if math.isinf(e.q) else 1.0 / e.q
        inv_p = 0.0 if math.isinf(e.p) else 1.0 / e.p
        out = _pow(self.clock_rate, inv_q) * _pow(self.det_a, inv_p)
        if theta > CRITICAL_TOL:
            out = out * _pow(self.discount_rate, theta)
        elif theta < -CRITICAL_TOL:
            if np.isscalar(self.discount_rate) and self.discount_rate == 0.0:
                pass  # c == 0 with the c-factor dropped
            else:
                out = out * _pow(self.discount_rate, theta)
        # |theta| <= tol: z^0 = 1 by convention, including z = 0
        return out

    def discount_factor(self) -> object:
        if np.isscalar(self.discount_rate) and self.discount_rate == 0.0:
            return 1.0
        return np.exp(-self.discount)


def _pow(base, expo):
    if expo == 0.0:
        return 1.0
    if np.isscalar(base):
        return float(base) ** expo
    return np.asarray(base) ** expo


def _half_covariance(ens: PathEnsemble):
    """(det a, tr a) for a = sigma sigma^T / 2 per unit dA = dt."""
    diffusion = ens.diffusion
    if diffusion is None:
        raise ValueError("ensemble carries no diffusion descriptor")
    if diffusion.is_constant:
        sig = diffusion.constant_matrix()
        a = 0.5 * (sig @ sig.T)
        return float(np.linalg.det(a)), float(np.trace(a))
    d = ens.dim
    det_a = np.empty((ens.n_paths, ens.n_steps))
    tr_a = np.empty((ens.n_paths, ens.n_steps))
    for k in range(ens.n_steps):
        sig = diffusion.eval(ens.config.t0 + ens.times[k], ens.states[:, k])
        a = 0.5 * np.einsum("pij,pkj->pik", sig, sig)
        det_a[:, k] = np.linalg.det(a)
        tr_a[:, k] = np.trace(a, axis1=1, axis2=2)
    return det_a, tr_a


def make_time_weights(ens: PathEnsemble, clock_rate=1.0, discount_rate=0.0,
                      stop=None) -> SemimartingaleWeights:
    """Weights for A_t = t along the ensemble grid.

    stop: None for the full horizon, ("horizon", T) for a grid horizon, or
    ("exit_ball", R) for the first grid time with |x| >= R.
    """
    m, n, dt = ens.n_paths, ens.n_steps, ens.config.dt
    if stop is None:
        stop_idx = np.full(m, n, dtype=int)
    else:
        kind, val = stop
        if kind == "horizon":
            k = ens.grid_index(float(val))
            stop_idx = np.full(m, k, dtype=int)
        elif kind == "exit_ball":
            radius2 = float(val) ** 2
            outside = (ens.states * ens.states).sum(axis=2) >= radius2
            hit = outside.any(axis=1)
            first = np.argmax(outside, axis=1)
            stop_idx = np.where(hit, np.minimum(first, n), n)
        else:
            raise ValueError(f"unknown stopping rule {kind!r}")
    steps = np.arange(n)
    if np.isscalar(clock_rate):
        clock = (float(clock_rate) * dt * steps)[None, :]
    else:
        r = np.asarray(clock_rate, dtype=float)
        clock = np.concatenate([np.zeros((m, 1)), np.cumsum(r * dt, axis=1)[:, :-1]], axis=1)
    if np.isscalar(discount_rate):
        discount = (float(discount_rate) * dt * steps)[None, :]
    else:
        c = np.asarray(discount_rate, dtype=float)
        discount = np.concatenate([np.zeros((m, 1)), np.cumsum(c * dt, axis=1)[:, :-1]], axis=1)
    det_a, tr_a = _half_covariance(ens)
    return SemimartingaleWeights(
        clock_rate=clock_rate, discount_rate=discount_rate, dA=dt,
        det_a=det_a, tr_a=tr_a, clock=clock, discount=discount,
        stop_idx=stop_idx, n_paths=m, n_steps=n)


def _sample_field(f: Callable, t_vals: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Evaluate f at (t, x) over all (path, step) left endpoints; returns (M, n)."""
    m, n, d = states.shape[0], states.shape[1] - 1, states.shape[2]
    t_full = np.broadcast_to(t_vals, (m, n))
    x_flat = states[:, :-1, :].reshape(m * n, d)
    vals = np.asarray(f(t_full.ravel(), x_flat), dtype=float)
    return vals.reshape(m, n)


def _per_path_sums(weights, mask, samples=None) -> np.ndarray:
    term = weights * mask if samples is None else weights * mask * samples
    return term.sum(axis=1)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def estimate_occupation(ens: PathEnsemble, f: Callable, T: float,
                        f_norm: Optional[float] = None) -> EstimateReport:
    """Left-endpoint Riemann estimate of E int_0^T f(t, x_t) dt, f >= 0.

    When f_norm (the mixed norm of f restricted to (0, T)) is supplied, it is
    recorded as the comparison bound; the theoretical constant is left as the
    observable ratio.
    """
    k_T = ens.grid_index(T)
    dt = ens.config.dt
    states = ens.states[:, :k_T + 1]
    vals = _sample_field(f, ens.times[:k_T], states)
    if vals.size and vals.min() < 0.0:
        raise ValueError("occupation estimates require f >= 0 along paths")
    sums = vals.sum(axis=1) * dt
    est = float(sums.mean())
    se = float(sums.std(ddof=1) / math.sqrt(ens.n_paths)) if ens.n_paths > 1 else 0.0
    label = f"norm bound f on (0,{T})" if f_norm is not None else ""
    return EstimateReport(est, se, ens.n_paths, f_norm, label)


def weighted_functional(ens: PathEnsemble, w: SemimartingaleWeights, f: Callable,
                        e: MixedExponents, f_norm: Optional[float] = None) -> EstimateReport:
    """Estimate E sum_{k<gamma} e^{-phi} kappa f(tau_k, x_k) dA.

    Requires theta >= 0.  With f_norm supplied, the report carries the bound
    shape (A + B^2)^(d/(2p)) * f_norm with A, B estimated from the same
    ensemble, leaving the constant as the ratio.
    """
    kappa = w.kappa(e)
    mask = w.step_mask()
    samples = _sample_field(f, w.clock, ens.states)
    weight = w.discount_factor() * kappa * w.dA
    sums = _per_path_sums(weight, mask, samples)
    est = float(sums.mean())
    se = float(sums.std(ddof=1) / math.sqrt(w.n_paths)) if w.n_paths > 1 else 0.0
    bound = None
    label = ""
    if f_norm is not None:
        a_rep, b_rep = estimate_AB(ens, w)
        expo = 0.0 if math.isinf(e.p) else e.d / (2.0 * e.p)
        bound = (a_rep.estimate + b_rep.estimate ** 2) ** expo * f_norm
        label = f"(A+B^2)^(d/2p) * ||f|| with A={a_rep.estimate:.6g}, B={b_rep.estimate:.6g}"
    return EstimateReport(est, se, w.n_paths, bound, label)


def estimate_AB(ens: PathEnsemble, w: SemimartingaleWeights):
    """Monte Carlo (A, B): discounted quadratic-variation mass and drift mass.

    A = E sum e^{-phi} tr a dA;  B = E sum e^{-phi} |b| dt with the drift
    magnitudes recomputed from the ensemble's drift descriptor.
    """
    mask = w.step_mask()
    disc = w.discount_factor()
    a_sums = _per_path_sums(disc * w.tr_a * w.dA, mask)
    a_rep = EstimateReport(float(a_sums.mean()),
                           float(a_sums.std(ddof=1) / math.sqrt(w.n_paths)) if w.n_paths > 1 else 0.0,
                           w.n_paths, bound_label="A")
    drift = ens.drift
    if drift is None or isinstance(drift, ZeroDrift):
        return a_rep, EstimateReport(0.0, 0.0, w.n_paths, bound_label="B")
    mags = _drift_magnitudes(ens)
    b_sums = _per_path_sums(disc * mags * ens.config.dt, mask)
    b_rep = EstimateReport(float(b_sums.mean()),
                           float(b_sums.std(ddof=1) / math.sqrt(w.n_paths)) if w.n_paths > 1 else 0.0,
                           w.n_paths, bound_label="B")
    return a_rep, b_rep


def _drift_magnitudes(ens: PathEnsemble) -> np.ndarray:
    m, n = ens.n_paths, ens.n_steps
    out = np.empty((m, n))
    for k in range(n):
        bv = np.asarray(ens.drift.eval(ens.config.t0 + ens.times[k], ens.states[:, k]), dtype=float)
        out[:, k] = np.sqrt((bv * bv).sum(axis=1))
    return out


# ---------------------------------------------------------------------------
# occupation density histogram
# ---------------------------------------------------------------------------

@dataclass
class GreenDensityResult:
    density: GridField
    mass_inside: float
    mass_leaked: float
    leaked_fraction: float
    total_functional: float        # the f == 1 weighted functional, same sum reordered
    dual_norm: float
    bound_value: float
    dual_ratio: float


def green_density(ens: PathEnsemble, w: SemimartingaleWeights, grid: SpaceTimeGrid,
                  e: MixedExponents, leak_warn: float = 0.01) -> GreenDensityResult:
    """Histogram density of the weighted occupation measure on a space-time grid.

    Cell mass is the per-path average of e^{-phi} kappa dA accumulated at
    (tau_k, x_k); density divides by cell volume, so the dual mixed norm is
    exact on the histogram.  The dual norm keeps the primal integration
    order (outer in time iff p >= q) at the conjugate exponents, and is
    compared against the shape (B^2 + A)^((1-theta) d / (2p)).
    """
    if grid.d != ens.dim:
        raise ValueError("grid dimension does not match the ensemble")
    kappa = w.kappa(e)
    mask = w.step_mask()
    weight = w.discount_factor() * kappa * w.dA / ens.n_paths
    wfull = np.broadcast_to(np.asarray(weight, dtype=float) * np.ones(()), mask.shape) * mask
    tau = np.broadcast_to(w.clock, mask.shape)
    x = ens.states[:, :-1, :]

    it = np.floor((tau - grid.t_min) / grid.dt).astype(np.int64)
    inside = mask & (it >= 0) & (it < grid.n_t)
    ix = []
    for j in range(grid.d):
        idx = np.floor((x[:, :, j] + grid.extent) / grid.dx).astype(np.int64)
        inside &= (idx >= 0) & (idx < grid.n_x)
        ix.append(idx)

    hist = np.zeros(grid.shape())
    sel = inside
    np.add.at(hist, tuple([it[sel]] + [idx[sel] for idx in ix]), wfull[sel])
    mass_inside = float(hist.sum())
    mass_leaked = float(wfull[mask & ~inside].sum())
    total = mass_inside + mass_leaked
    leaked_fraction = mass_leaked / total if total > 0 else 0.0
    if leaked_fraction > leak_warn:
        warnings.warn(f"grid does not cover the visited region: "
                      f"{leaked_fraction:.3%} of the occupation mass leaked")

    total_functional = float(_per_path_sums(weight * ens.n_paths, mask).mean())

    cellvol = grid.dt * grid.cell_volume
    density = GridField(grid, hist / cellvol)
    dual = e.dual
    dual_norm = mixed_norm_branch(density, dual.p, dual.q, outer_in_time=e.p >= e.q)
    a_rep, b_rep = estimate_AB(ens, w)
    expo = (1.0 - e.theta) * (0.0 if math.isinf(e.p) else e.d / (2.0 * e.p))
    bound = (b_rep.estimate ** 2 + a_rep.estimate) ** expo
    ratio = dual_norm / bound if bound > 0 else math.inf
    return GreenDensityResult(density, mass_inside, mass_leaked, leaked_fraction,
                              total_functional, dual_norm, bound, ratio)


# ---------------------------------------------------------------------------
# drift budget
# ---------------------------------------------------------------------------

@dataclass
class DriftBudgetReport:
    B: EstimateReport
    A: EstimateReport
    h_norm: float
    rhs: float
    ratio: float
    violation_fraction: float


def drift_budget_check(ens: PathEnsemble, w: SemimartingaleWeights, h: Callable,
                       e0: MixedExponents, h_norm: float,
                       reject_fraction: float = 1e-3) -> DriftBudgetReport:
    """Check |b_k| <= kappa0_k h(tau_k, x_k) along paths and compare the drift
    mass B against A^(1/2) + ||h||^(p0/(p0-d)) with the constant as a ratio.

    Violations of the pointwise hypothesis are counted at active (path, step)
    samples; a fraction above reject_fraction aborts.
    """
    if math.isinf(e0.q):
        raise ValueError("the drift budget needs q0 < inf")
    if e0.p <= e0.d:
        raise ValueError("q0 < inf forces p0 > d; got p0 <= d")
    kappa0 = w.kappa(e0, allow_negative_theta=True)
    mask = w.step_mask()
    h_vals = _sample_field(h, w.clock, ens.states)
    if h_vals.size and h_vals.min() < 0.0:
        raise ValueError("h must be nonnegative")
    mags = _drift_magnitudes(ens) if not isinstance(ens.drift, ZeroDrift) else np.zeros(mask.shape)
    allowed = np.broadcast_to(np.asarray(kappa0 * np.ones(()), dtype=float), mask.shape) * h_vals
    viol = mask & (mags > allowed * (1.0 + 1e-9) + 1e-12)
    n_active = int(mask.sum())
    frac = float(viol.sum()) / n_active if n_active else 0.0
    if frac > reject_fraction:
        raise ValueError(f"drift-budget hypothesis violated on {frac:.4%} of samples")
    a_rep, b_rep = estimate_AB(ens, w)
    rhs = math.sqrt(a_rep.estimate) + h_norm ** (e0.p / (e0.p - e0.d))
    ratio = b_rep.estimate / rhs if rhs > 0 else math.inf
    return DriftBudgetReport(b_rep, a_rep, h_norm, rhs, ratio, frac)
