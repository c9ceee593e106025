import math
import os

import numpy as np
import pytest

from sdelab.cli import Config, parse_drift, run, serialize_drift
from sdelab.fields import BoxedConstantDrift, SingularDrift, TruncatedDrift

from oracles import ou_second_moment

NORM_CFG = """\
[experiment]
kind = norm

[exponents]
p = 2.5
q = 2.5
d = 2

[field]
family = singular
alpha = 0.3333333333333333
beta = 0.6666666666666667
"""

OU_CFG = """\
[experiment]
kind = simulate

[solver]
t_horizon = 1.0
n_steps = 500
n_paths = 6000
master_seed = 12345

[drift]
family = linear
rate = 1.0

[simulate]
report_times = 1.0
"""

NONEX_CFG = """\
[experiment]
kind = nonexistence

[solver]
t_horizon = 0.25
n_steps = 500
n_paths = 200
master_seed = 7

[nonexistence]
levels = 10 100
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def body(path):
    with open(path) as fh:
        return fh.read()


def test_norm_experiment(tmp_path, capsys):
    cfg = write(tmp_path, "norm.cfg", NORM_CFG)
    out = str(tmp_path / "out")
    assert run(["norm", "--config", cfg, "--out", out]) == 0
    printed = capsys.readouterr().out
    assert "theta" in printed
    lines = body(os.path.join(out, "norm.csv")).strip().split("\n")
    assert lines[0].startswith("# config_hash=") and "version=0.1.0" in lines[0]
    values = dict(line.split(",") for line in lines[2:])
    assert float(values["theta"]) == pytest.approx(-0.2)
    assert values["classification"] == "supercritical"
    assert float(values["norm"]) == pytest.approx((36.0 * math.pi) ** 0.4, rel=1e-10)


def test_missing_config_is_a_config_error(tmp_path, capsys):
    assert run(["norm", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "nope.cfg" in capsys.readouterr().err


def test_kind_mismatch_rejected(tmp_path):
    cfg = write(tmp_path, "norm.cfg", NORM_CFG)
    assert run(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_unknown_kind_rejected(tmp_path):
    cfg = write(tmp_path, "norm.cfg", NORM_CFG)
    assert run(["frobnicate", "--config", cfg]) == 2


def test_missing_key_diagnostic(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "[experiment]\nkind = simulate\n\n[solver]\nn_steps = 10\n")
    assert run(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "solver" in err and "t_horizon" in err


def test_simulate_matches_oracle(tmp_path):
    cfg = write(tmp_path, "ou.cfg", OU_CFG)
    out = str(tmp_path / "out")
    assert run(["simulate", "--config", cfg, "--out", out]) == 0
    lines = body(os.path.join(out, "simulate.csv")).strip().split("\n")
    t, msd, se = (float(v) for v in lines[2].split(",")[:3])
    assert t == 1.0
    assert abs(msd - ou_second_moment(1.0, 2)) <= 3.0 * se + 2.0 * (1.0 / 500)


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "ou.cfg", OU_CFG)
    outs = [str(tmp_path / f"o{i}") for i in range(3)]
    assert run(["simulate", "--config", cfg, "--out", outs[0], "--threads", "1"]) == 0
    assert run(["simulate", "--config", cfg, "--out", outs[1], "--threads", "1"]) == 0
    assert run(["simulate", "--config", cfg, "--out", outs[2], "--threads", "4"]) == 0
    b0 = body(os.path.join(outs[0], "simulate.csv"))
    assert b0 == body(os.path.join(outs[1], "simulate.csv"))
    assert b0 == body(os.path.join(outs[2], "simulate.csv"))


def test_seed_override_changes_hash_and_data(tmp_path):
    cfg = write(tmp_path, "ou.cfg", OU_CFG)
    o1, o2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run(["simulate", "--config", cfg, "--out", o1]) == 0
    assert run(["simulate", "--config", cfg, "--out", o2, "--seed", "999"]) == 0
    b1, b2 = body(os.path.join(o1, "simulate.csv")), body(os.path.join(o2, "simulate.csv"))
    assert b1 != b2
    assert "seed=999" in b2.split("\n")[0]


def test_nonexistence_outputs(tmp_path):
    cfg = write(tmp_path, "n.cfg", NONEX_CFG)
    out = str(tmp_path / "out")
    assert run(["nonexistence", "--config", cfg, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "nonexistence.csv"))
    pairs = [line.split() for line in body(os.path.join(out, "ladder_median_cost.dat")).strip().split("\n")]
    assert [float(p[0]) for p in pairs] == [0.0, 10.0, 100.0]


def test_config_round_trip():
    cfg = Config.from_text(NORM_CFG)
    drift = parse_drift(cfg, "field")
    out = Config.from_text("")
    serialize_drift(drift, out, "field")
    again = parse_drift(out, "field")
    assert again == drift

    for d in (BoxedConstantDrift((1.0, 2.0), 0.1, 0.9, 1.5),
              TruncatedDrift(SingularDrift(0.4, 0.6), 25.0)):
        buf = Config.from_text("")
        serialize_drift(d, buf, "drift")
        assert parse_drift(buf, "drift") == d


def test_canonical_text_reparses_identically(tmp_path):
    cfg = Config.from_text(OU_CFG)
    text = cfg.canonical_text()
    cfg2 = Config.from_text(text)
    assert cfg2.canonical_text() == text
    assert cfg2.hash() == cfg.hash()
