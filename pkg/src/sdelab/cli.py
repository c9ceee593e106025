"""Config-driven experiment runner.

One experiment per invocation: `sdelab <kind> --config file.cfg [--out DIR]
[--seed N] [--threads N]`.  Configs are INI-style key/value sections.  Every
CSV starts with `# config_hash=<hex> seed=<u64> version=<semver>`; reruns
with an identical effective config are byte-identical regardless of the
thread count.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import os
import sys

import numpy as np

from . import __version__
from .fields import (
    BoxedConstantDrift,
    ConstantDrift,
    LinearDrift,
    ScaledDrift,
    SingularDrift,
    ZeroDrift,
    identity_diffusion,
    truncate,
)
from .mixed_norm import MixedExponents, SpaceTimeGrid, compute_mixed_norm, subcriticality
from .nonexistence import TruncationLadder, ladder_experiment
from .occupation import estimate_occupation, green_density, make_time_weights, weighted_functional
from .solver import SimulationError, SolverConfig, increment_moment, simulate
from .tightness import CoefficientSet, build_time_change, convergence_diagnostic, moment_bound_check

KINDS = ("norm", "simulate", "occupation", "green", "nonexistence", "tightness", "converge")


class ConfigError(Exception):
    def __init__(self, path, where, msg):
        self.path = path
        self.where = where
        super().__init__(f"{path}: [{where}] {msg}")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

class Config:
    """Parsed config with typed accessors and canonical serialization."""

    def __init__(self, path: str, parser: configparser.ConfigParser):
        self.path = path
        self._cp = parser

    @classmethod
    def load(cls, path: str) -> "Config":
        if not os.path.exists(path):
            raise ConfigError(path, "-", "config file does not exist")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(path, "-", f"parse failure: {exc}") from exc
        return cls(path, cp)

    @classmethod
    def from_text(cls, text: str, path: str = "<memory>") -> "Config":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        return cls(path, cp)

    def has(self, section: str, key: str) -> bool:
        return self._cp.has_option(section, key)

    def _raw(self, section: str, key: str, default=None):
        if not self._cp.has_section(section) and default is None:
            raise ConfigError(self.path, section, "missing section")
        if not self._cp.has_option(section, key):
            if default is None:
                raise ConfigError(self.path, section, f"missing key '{key}'")
            return None
        return self._cp.get(section, key)

    def get_str(self, section, key, default=None):
        raw = self._raw(section, key, default)
        return default if raw is None else raw.strip()

    def get_float(self, section, key, default=None):
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return math.inf if raw.strip() in ("inf", "infinity") else float(raw)
        except ValueError as exc:
            raise ConfigError(self.path, section, f"key '{key}': not a number: {raw!r}") from exc

    def get_int(self, section, key, default=None):
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(self.path, section, f"key '{key}': not an integer: {raw!r}") from exc

    def get_floats(self, section, key, default=None):
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return tuple(float(v) for v in raw.split())
        except ValueError as exc:
            raise ConfigError(self.path, section, f"key '{key}': not a number list: {raw!r}") from exc

    def set(self, section, key, value):
        if not self._cp.has_section(section):
            self._cp.add_section(section)
        self._cp.set(section, key, str(value))

    def canonical_text(self) -> str:
        lines = []
        for section in sorted(self._cp.sections()):
            lines.append(f"[{section}]")
            for key in sorted(self._cp.options(section)):
                lines.append(f"{key} = {self._cp.get(section, key)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def parse_exponents(cfg: Config) -> MixedExponents:
    try:
        return MixedExponents(cfg.get_float("exponents", "p"),
                              cfg.get_float("exponents", "q"),
                              cfg.get_int("exponents", "d"))
    except ValueError as exc:
        raise ConfigError(cfg.path, "exponents", str(exc)) from exc


def parse_drift(cfg: Config, section: str = "drift"):
    family = cfg.get_str(section, "family")
    try:
        if family == "zero":
            return ZeroDrift()
        if family == "constant":
            return ConstantDrift(cfg.get_floats(section, "vector"))
        if family == "linear":
            return LinearDrift(cfg.get_float(section, "rate", 1.0))
        if family == "singular":
            drift = SingularDrift(cfg.get_float(section, "alpha"), cfg.get_float(section, "beta"))
            scale = cfg.get_float(section, "scale", 1.0)
            if scale != 1.0:
                drift = ScaledDrift(drift, scale)
            level = cfg.get_float(section, "truncation", 0.0)
            return truncate(drift, level) if level > 0.0 else drift
        if family == "boxed":
            return BoxedConstantDrift(cfg.get_floats(section, "vector"),
                                      cfg.get_float(section, "t_lo", 0.0),
                                      cfg.get_float(section, "t_hi", 1.0),
                                      cfg.get_float(section, "radius", 1.0))
    except ValueError as exc:
        raise ConfigError(cfg.path, section, str(exc)) from exc
    raise ConfigError(cfg.path, section, f"unknown drift family {family!r}")


def serialize_drift(drift, cfg: Config, section: str = "drift"):
    """Inverse of parse_drift for the catalog families."""
    if isinstance(drift, ZeroDrift):
        cfg.set(section, "family", "zero")
    elif isinstance(drift, ConstantDrift):
        cfg.set(section, "family", "constant")
        cfg.set(section, "vector", " ".join(fmt(v) for v in drift.vector))
    elif isinstance(drift, LinearDrift):
        cfg.set(section, "family", "linear")
        cfg.set(section, "rate", fmt(drift.rate))
    elif isinstance(drift, BoxedConstantDrift):
        cfg.set(section, "family", "boxed")
        cfg.set(section, "vector", " ".join(fmt(v) for v in drift.vector))
        cfg.set(section, "t_lo", fmt(drift.t_lo))
        cfg.set(section, "t_hi", fmt(drift.t_hi))
        cfg.set(section, "radius", fmt(drift.radius))
    else:
        level, scale, base = 0.0, 1.0, drift
        from .fields import TruncatedDrift
        if isinstance(base, TruncatedDrift):
            level, base = base.level, base.base
        if isinstance(base, ScaledDrift):
            scale, base = base.factor, base.base
        if not isinstance(base, SingularDrift):
            raise TypeError(f"cannot serialize drift {type(drift).__name__}")
        cfg.set(section, "family", "singular")
        cfg.set(section, "alpha", fmt(base.alpha))
        cfg.set(section, "beta", fmt(base.beta))
        if scale != 1.0:
            cfg.set(section, "scale", fmt(scale))
        if level > 0.0:
            cfg.set(section, "truncation", fmt(level))
    return cfg


def parse_solver(cfg: Config, seed_override=None) -> SolverConfig:
    seed = seed_override if seed_override is not None else cfg.get_int("solver", "master_seed")
    try:
        return SolverConfig(
            T=cfg.get_float("solver", "t_horizon"),
            n_steps=cfg.get_int("solver", "n_steps"),
            n_paths=cfg.get_int("solver", "n_paths"),
            master_seed=seed,
            t0=cfg.get_float("solver", "t0", 0.0),
            x0=cfg.get_floats("solver", "x0", (0.0, 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(cfg.path, "solver", str(exc)) from exc


def parse_grid(cfg: Config, d: int) -> SpaceTimeGrid:
    try:
        return SpaceTimeGrid(
            t_min=cfg.get_float("grid", "t_min", 0.0),
            t_max=cfg.get_float("grid", "t_max"),
            n_t=cfg.get_int("grid", "n_t"),
            extent=cfg.get_float("grid", "extent"),
            n_x=cfg.get_int("grid", "n_x"),
            d=d,
        )
    except ValueError as exc:
        raise ConfigError(cfg.path, "grid", str(exc)) from exc


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_csv(path, cfg_hash, seed, header, rows):
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg_hash} seed={seed} version={__version__}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return path


def write_plot_data(path, pairs):
    with open(path, "w") as fh:
        for x, y in pairs:
            fh.write(f"{fmt(x)} {fmt(y)}\n")
    return path


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_norm(cfg: Config, out_dir, seed, threads):
    e = parse_exponents(cfg)
    drift = parse_drift(cfg, "field")
    theta, label = subcriticality(e)
    norm = compute_mixed_norm(drift, e)
    print(f"theta = {theta:.12g} ({label})")
    print(f"norm = {norm:.12g}")
    rows = [("theta", theta), ("classification", label), ("norm", norm)]
    return [write_csv(os.path.join(out_dir, "norm.csv"), cfg.hash(), seed,
                      ["quantity", "value"], rows)]


def run_simulate(cfg: Config, out_dir, seed, threads):
    e_seed = seed
    sc = parse_solver(cfg, e_seed)
    drift = parse_drift(cfg)
    diffusion = identity_diffusion(sc.dim, cfg.get_float("diffusion", "delta", 0.5))
    ens = simulate(diffusion, drift, sc, keep_increments=False, n_workers=threads)
    report_times = cfg.get_floats("simulate", "report_times", (sc.T,))
    rows = []
    for t in report_times:
        m2 = increment_moment(ens, 2, 0.0, t)
        mean = ens.states[:, ens.grid_index(t)].mean(axis=0)
        rows.append((t, m2.value, m2.stderr) + tuple(mean))
    header = ["t", "mean_sq_displacement", "se"] + [f"mean_x{j+1}" for j in range(sc.dim)]
    files = [write_csv(os.path.join(out_dir, "simulate.csv"), cfg.hash(), e_seed, header, rows)]
    if cfg.get_int("simulate", "dump_paths", 0) == 1:
        from .solver import ensemble_to_csv
        path = os.path.join(out_dir, "paths.csv")
        with open(path, "w") as fh:
            fh.write(f"# config_hash={cfg.hash()} seed={e_seed} version={__version__}\n")
            ensemble_to_csv(ens, fh)
        files.append(path)
    return files


def run_occupation(cfg: Config, out_dir, seed, threads):
    e = parse_exponents(cfg)
    sc = parse_solver(cfg, seed)
    drift = parse_drift(cfg)
    diffusion = identity_diffusion(sc.dim, cfg.get_float("diffusion", "delta", 0.5))
    ens = simulate(diffusion, drift, sc, keep_increments=False, n_workers=threads)
    sigma_sq = cfg.get_float("occupation", "bump_width", 1.0)
    f_norm = cfg.get_float("occupation", "f_norm", 0.0) or None
    f = lambda t, x: np.exp(-(x * x).sum(axis=1) / (2.0 * sigma_sq))
    rep = estimate_occupation(ens, f, sc.T, f_norm=f_norm)
    w = make_time_weights(ens, stop=("horizon", sc.T))
    wrep = weighted_functional(ens, w, f, e, f_norm=f_norm)

    def row(name, r):
        bound = "" if r.bound_value is None else r.bound_value
        ratio = "" if r.ratio is None else r.ratio
        return (name, r.estimate, r.standard_error, bound, ratio, seed, sc.n_paths)

    rows = [row("occupation", rep), row("weighted_functional", wrep)]
    return [write_csv(os.path.join(out_dir, "occupation.csv"), cfg.hash(), seed,
                      ["estimator", "value", "se", "bound", "ratio", "seed", "n_paths"], rows)]


def run_green(cfg: Config, out_dir, seed, threads):
    e = parse_exponents(cfg)
    sc = parse_solver(cfg, seed)
    drift = parse_drift(cfg)
    diffusion = identity_diffusion(sc.dim, cfg.get_float("diffusion", "delta", 0.5))
    grid = parse_grid(cfg, sc.dim)
    ens = simulate(diffusion, drift, sc, keep_increments=False, n_workers=threads)
    w = make_time_weights(ens, stop=("horizon", sc.T))
    res = green_density(ens, w, grid, e)
    summary = [
        ("mass_inside", res.mass_inside), ("mass_leaked", res.mass_leaked),
        ("leaked_fraction", res.leaked_fraction), ("total_functional", res.total_functional),
        ("dual_norm", res.dual_norm), ("bound_value", res.bound_value),
        ("dual_ratio", res.dual_ratio),
    ]
    files = [write_csv(os.path.join(out_dir, "green.csv"), cfg.hash(), seed,
                       ["quantity", "value"], summary)]
    dens_rows = []
    tm = grid.time_midpoints()
    _, pts = grid.meshgrid()
    vals = res.density.values.reshape(grid.n_t, -1)
    for it in range(grid.n_t):
        nz = np.nonzero(vals[it])[0]
        for j in nz:
            dens_rows.append((tm[it],) + tuple(pts[j]) + (vals[it][j],))
    header = ["t"] + [f"x{j+1}" for j in range(grid.d)] + ["density"]
    files.append(write_csv(os.path.join(out_dir, "green_density.csv"), cfg.hash(), seed,
                           header, dens_rows))
    return files


def run_nonexistence(cfg: Config, out_dir, seed, threads):
    sc = parse_solver(cfg, seed)
    alpha = cfg.get_float("nonexistence", "alpha", 0.5)
    beta = cfg.get_float("nonexistence", "beta", 0.5)
    levels = cfg.get_floats("nonexistence", "levels")
    floors = cfg.get_floats("nonexistence", "floors", (0.01, 0.005))
    ladder = TruncationLadder(
        levels=levels, drift=SingularDrift(alpha, beta), config=sc,
        floors=floors, origin_radius=cfg.get_float("nonexistence", "origin_radius", 0.05),
        repelling=cfg.get_int("nonexistence", "repelling", 0) == 1)
    rows = ladder_experiment(ladder)
    table = []
    for r in rows:
        table.extend([
            (r.level, "median_cost", r.median_cost),
            (r.level, "median_cost_se", r.median_cost_se),
            (r.level, "median_cost_alt_floor", r.median_cost_alt_floor),
            (r.level, "q90_cost", r.q90_cost),
            (r.level, "origin_occupancy", r.origin_occupancy),
        ])
    files = [write_csv(os.path.join(out_dir, "nonexistence.csv"), cfg.hash(), seed,
                       ["level", "statistic", "value"], table)]
    files.append(write_plot_data(os.path.join(out_dir, "ladder_median_cost.dat"),
                                 [(r.level, r.median_cost) for r in rows]))
    files.append(write_plot_data(os.path.join(out_dir, "ladder_occupancy.dat"),
                                 [(r.level, r.origin_occupancy) for r in rows]))
    return files


def run_tightness(cfg: Config, out_dir, seed, threads):
    e = parse_exponents(cfg)
    sc = parse_solver(cfg, seed)
    drift = parse_drift(cfg)
    diffusion = identity_diffusion(sc.dim, cfg.get_float("diffusion", "delta", 0.5))
    ens = simulate(diffusion, drift, sc, keep_increments=False, n_workers=threads)
    order = cfg.get_int("tightness", "order", 2)
    n_pairs = cfg.get_int("tightness", "n_pairs", 10)
    gaps = np.linspace(0.1, min(0.9, 0.9 * sc.T), n_pairs)
    pairs = []
    for g in gaps:
        k_s = int(round(0.05 * (1 + len(pairs) % 3) / sc.dt))
        k_t = min(int(round((k_s * sc.dt + g) / sc.dt)), sc.n_steps)
        pairs.append((float(ens.times[k_s]), float(ens.times[k_t])))
    tc = build_time_change(drift, e, np.linspace(sc.t0, sc.t0 + sc.T, 201))
    rep = moment_bound_check(ens, tc, e, order, pairs)
    rows = [(r.s, r.t, r.moment, r.stderr, r.bound, r.ratio, int(r.held_out), int(r.violation),
             rep.fitted_constant) for r in rep.rows]
    return [write_csv(os.path.join(out_dir, "tightness.csv"), cfg.hash(), seed,
                      ["s", "t", "moment", "se", "bound", "ratio", "held_out", "violation",
                       "fitted_constant"], rows)]


def run_converge(cfg: Config, out_dir, seed, threads):
    sc = parse_solver(cfg, seed)
    alpha = cfg.get_float("converge", "alpha", 0.5)
    beta = cfg.get_float("converge", "beta", 0.5)
    n_levels = cfg.get_int("converge", "n_levels", 6)
    times = cfg.get_floats("converge", "times", (0.25, 0.5, 1.0))
    times = tuple(t for t in times if t <= sc.T)
    base = SingularDrift(alpha, beta)
    diffusion = identity_diffusion(sc.dim, cfg.get_float("diffusion", "delta", 0.5))
    seq = [CoefficientSet(diffusion, truncate(base, 2.0 ** n), sc) for n in range(1, n_levels + 1)]
    limit = CoefficientSet(diffusion, truncate(base, 2.0 ** (n_levels + 1)), sc)
    rows, _ = convergence_diagnostic(seq, limit, times)
    table = [(r.index + 1, r.time, r.distance, r.noise_floor) for r in rows]
    return [write_csv(os.path.join(out_dir, "converge.csv"), cfg.hash(), seed,
                      ["n", "time", "distance", "noise_floor"], table)]


RUNNERS = {
    "norm": run_norm,
    "simulate": run_simulate,
    "occupation": run_occupation,
    "green": run_green,
    "nonexistence": run_nonexistence,
    "tightness": run_tightness,
    "converge": run_converge,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def run(argv) -> int:
    parser = argparse.ArgumentParser(prog="sdelab", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = Config.load(args.config)
        declared = cfg.get_str("experiment", "kind", args.kind)
        if declared != args.kind:
            raise ConfigError(args.config, "experiment",
                              f"config declares kind {declared!r}, requested {args.kind!r}")
        if args.seed is not None:
            cfg.set("solver", "master_seed", args.seed)
        seed = cfg.get_int("solver", "master_seed", 0)
        out_dir = args.out or cfg.get_str("output", "dir", "out")
        os.makedirs(out_dir, exist_ok=True)
        files = RUNNERS[args.kind](cfg, out_dir, seed, max(args.threads, 1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f"wrote {f}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
