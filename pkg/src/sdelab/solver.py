"""Euler-Maruyama path ensembles with deterministic parallel random numbers.

Each path owns a counter-based Philox stream keyed by (master_seed,
path_index), so the ensemble is bit-reproducible for a given
(master_seed, n_paths, n_steps) regardless of batch layout or worker
count.  Gaussian increments come from numpy's Generator.standard_normal
(ziggurat method), fixed for the build.

The scheme is the explicit update
    x_{k+1} = x_k + sigma(t0 + t_k, x_k) dW_k + b(t0 + t_k, x_k) dt,
with dW_k ~ N(0, dt I).  Singular drifts must be truncated by the caller;
any non-finite coefficient value aborts the run with the offending
(path, step, t, x).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .fields import DiffusionSpec, TruncatedDrift, ZeroDrift

__all__ = [
    "SolverConfig",
    "PathEnsemble",
    "SimulationError",
    "simulate",
    "increment_moment",
    "marginal_distance",
    "ito_residual",
    "ensemble_to_csv",
    "MomentEstimate",
]

_BLOCK = 4096  # paths per simulation block; fixed so threading cannot change results


class SimulationError(RuntimeError):
    """Non-finite coefficient met along a path."""

    def __init__(self, what: str, path_index: int, step: int, t: float, x: np.ndarray):
        self.what = what
        self.path_index = int(path_index)
        self.step = int(step)
        self.t = float(t)
        self.x = np.asarray(x, dtype=float)
        super().__init__(
            f"non-finite {what} at path={self.path_index} step={self.step} "
            f"t={self.t!r} x={self.x.tolist()!r}")


@dataclass(frozen=True)
class SolverConfig:
    T: float
    n_steps: int
    n_paths: int
    master_seed: int
    t0: float = 0.0
    x0: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValueError("horizon T must be positive and finite")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("n_steps and n_paths must be >= 1")
        if not (0 <= self.master_seed < 2 ** 64):
            raise ValueError("master_seed must fit in 64 bits")
        if not all(math.isfinite(v) for v in self.x0) or not math.isfinite(self.t0):
            raise ValueError("start point must be finite")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def dim(self) -> int:
        return len(self.x0)

    def times(self) -> np.ndarray:
        """Grid times relative to t0."""
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class PathEnsemble:
    """Simulated trajectories on the uniform grid, plus the noise that drove them."""

    times: np.ndarray                      # (n_steps+1,), relative to t0
    states: np.ndarray                     # (n_paths, n_steps+1, d)
    increments: Optional[np.ndarray]       # (n_paths, n_steps, d) Brownian increments
    config: SolverConfig
    drift: object = field(default=None, repr=False)
    diffusion: object = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def grid_index(self, t: float) -> int:
        """Index of a grid time; rejects off-grid requests."""
        dt = self.config.dt
        k = int(round(t / dt))
        if k < 0 or k > self.n_steps or abs(t - k * dt) > 1e-9 * max(1.0, abs(t)) + 1e-12:
            raise ValueError(f"t={t!r} is not a grid node (dt={dt!r})")
        return k


def _path_normals(master_seed: int, path_index: int, n_steps: int, dim: int) -> np.ndarray:
    key = (int(master_seed) << 64) | int(path_index)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal((n_steps, dim))


def _first_bad(arr: np.ndarray) -> tuple:
    flat_bad = ~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1)
    idx = int(np.argmax(flat_bad))
    return idx


def _simulate_block(lo, hi, drift, diffusion, cfg, states, increments, keep_increments):
    n, d, dt = cfg.n_steps, cfg.dim, cfg.dt
    m = hi - lo
    sqdt = math.sqrt(dt)
    z = np.empty((m, n, d))
    for i in range(m):
        z[i] = _path_normals(cfg.master_seed, lo + i, n, d)
    dw = z
    dw *= sqdt
    const_sigma = diffusion.is_constant
    if const_sigma:
        noise = dw @ diffusion.constant_matrix().T
    zero_drift = isinstance(drift, ZeroDrift)
    x = np.broadcast_to(np.asarray(cfg.x0, dtype=float), (m, d)).copy()
    states[lo:hi, 0] = x
    for k in range(n):
        t_abs = cfg.t0 + k * dt
        if const_sigma:
            step = noise[:, k].copy()
        else:
            sig = np.asarray(diffusion.eval(t_abs, x), dtype=float)
            if not np.isfinite(sig).all():
                i = _first_bad(sig)
                raise SimulationError("diffusion", lo + i, k, t_abs, x[i])
            step = np.einsum("pij,pj->pi", sig, dw[:, k])
        if not zero_drift:
            bv = np.asarray(drift.eval(t_abs, x), dtype=float)
            if not np.isfinite(bv).all():
                i = _first_bad(bv)
                raise SimulationError("drift", lo + i, k, t_abs, x[i])
            step += bv * dt
        x = x + step
        states[lo:hi, k + 1] = x
    if keep_increments:
        increments[lo:hi] = dw


def simulate(diffusion: DiffusionSpec, drift, cfg: SolverConfig,
             keep_increments: bool = True, n_workers: int = 1) -> PathEnsemble:
    """Run the ensemble; identical output for any n_workers.

    keep_increments=False drops the Brownian increments after stepping
    (they are only needed for the Ito-residual statistics).
    """
    if diffusion.dim != cfg.dim:
        raise ValueError("diffusion dimension does not match the start point")
    states = np.empty((cfg.n_paths, cfg.n_steps + 1, cfg.dim))
    increments = np.empty((cfg.n_paths, cfg.n_steps, cfg.dim)) if keep_increments else None
    blocks = [(lo, min(lo + _BLOCK, cfg.n_paths)) for lo in range(0, cfg.n_paths, _BLOCK)]
    if n_workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futs = [pool.submit(_simulate_block, lo, hi, drift, diffusion, cfg,
                                states, increments, keep_increments)
                    for lo, hi in blocks]
            for f in futs:
                f.result()
    else:
        for lo, hi in blocks:
            _simulate_block(lo, hi, drift, diffusion, cfg, states, increments, keep_increments)
    return PathEnsemble(cfg.times(), states, increments, cfg, drift, diffusion)


# ---------------------------------------------------------------------------
# path statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    n_paths: int


def _mean_se(samples: np.ndarray) -> MomentEstimate:
    m = samples.shape[0]
    mean = float(samples.mean())
    # jackknife of the sample mean reduces to the usual standard error
    se = float(samples.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return MomentEstimate(mean, se, m)


def increment_moment(ens: PathEnsemble, order: int, s: float, t: float) -> MomentEstimate:
    """Monte Carlo E |x_t - x_s|^order for grid times s <= t, order in {2,4,6,8}."""
    if order not in (2, 4, 6, 8):
        raise ValueError("order must be one of 2, 4, 6, 8")
    ks, kt = ens.grid_index(s), ens.grid_index(t)
    if ks > kt:
        raise ValueError("need s <= t")
    if ks == kt:
        return MomentEstimate(0.0, 0.0, ens.n_paths)
    diff = ens.states[:, kt] - ens.states[:, ks]
    vals = ((diff * diff).sum(axis=1)) ** (order / 2)
    return _mean_se(vals)


def marginal_distance(a: PathEnsemble, b: PathEnsemble, t: float) -> float:
    """Sum over coordinates of the 1-Wasserstein distance between the
    empirical marginals at a shared grid time (sorted-sample formula)."""
    if a.dim != b.dim:
        raise ValueError("mismatched dimensions")
    if a.n_paths != b.n_paths:
        raise ValueError("sorted-sample distance needs equal path counts")
    xa = a.states[:, a.grid_index(t)]
    xb = b.states[:, b.grid_index(t)]
    total = 0.0
    for j in range(a.dim):
        total += float(np.abs(np.sort(xa[:, j]) - np.sort(xb[:, j])).mean())
    return total


def ito_residual(ens: PathEnsemble, eps: float, beta: float,
                 include_drift_term: bool = True) -> MomentEstimate:
    """Per-path residual of the smoothed |x|^(1+beta) expansion; zero mean up
    to O(dt) discretization bias.

    With xi = |x|^2 and f(xi) = (xi + eps)^((1+beta)/2), the residual is
    f(xi_T) - f(xi_0) minus the left-endpoint sums of the drift part
    (only with include_drift_term, for ensembles driven by the attracting
    inverse-power drift with alpha = 1 - beta), the second-order part, and
    the discrete stochastic integral.  The stochastic sum has exactly zero
    mean, so the sample mean isolates the Euler weak error.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if not (0.0 < beta < 1.0):
        raise ValueError("beta must lie in (0, 1)")
    if ens.increments is None:
        raise ValueError("ensemble was simulated without increments")
    alpha = 1.0 - beta
    x = ens.states
    d = ens.dim
    xi = (x * x).sum(axis=2)                       # (M, n+1)
    xi_left = xi[:, :-1]
    g = (xi_left + eps) ** ((beta - 1.0) / 2.0)
    x_left = x[:, :-1, :]
    dt = ens.config.dt
    t_abs = ens.config.t0 + ens.times[:-1]
    if include_drift_term:
        if t_abs[0] <= 0.0:
            raise ValueError("drift term needs t0 > 0 (time singularity at t = 0)")
        if isinstance(ens.drift, TruncatedDrift):
            r = np.sqrt(xi_left)
            active = (r > 0) & (r <= 1.0) & (t_abs[None, :] > 0) & (t_abs[None, :] <= 1.0)
            mag = np.where(active, t_abs[None, :] ** (-alpha) * np.where(r > 0, r, 1.0) ** (-beta), 0.0)
            if mag.max() > ens.drift.level:
                warnings.warn("truncation is active on visited points; "
                              "the drift term of the residual assumes it is not")
        r_alpha = (xi_left ** (alpha / 2.0))
        drift_term = -(1.0 + beta) * g * r_alpha / (t_abs[None, :] ** alpha)
    else:
        drift_term = 0.0
    second = 0.5 * (1.0 + beta) * (d + (beta - 1.0) * xi_left / (xi_left + eps)) * g
    stoch = (1.0 + beta) * g * (x_left * ens.increments).sum(axis=2)
    f_end = (xi[:, -1] + eps) ** ((1.0 + beta) / 2.0)
    f_start = (xi[:, 0] + eps) ** ((1.0 + beta) / 2.0)
    resid = f_end - f_start - ((drift_term + second) * dt).sum(axis=1) - stoch.sum(axis=1)
    return _mean_se(resid)


def ensemble_to_csv(ens: PathEnsemble, fh: IO[str]) -> None:
    """Columnar dump: path_id, step, t, x1..xd (floats at 17 significant digits)."""
    d = ens.dim
    header = "path_id,step,t," + ",".join(f"x{j + 1}" for j in range(d))
    fh.write(header + "\n")
    times = ens.times
    for pid in range(ens.n_paths):
        path = ens.states[pid]
        for k in range(ens.n_steps + 1):
            coords = ",".join(format(v, ".17g") for v in path[k])
            fh.write(f"{pid},{k},{format(times[k], '.17g')},{coords}\n")
