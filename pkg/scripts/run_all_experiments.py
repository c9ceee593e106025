#!/usr/bin/env python3
"""Run every example config through the CLI into out/<name>/."""

import pathlib
import sys

from sdelab.cli import run

HERE = pathlib.Path(__file__).parent
OUT = HERE.parent / "out"


def main() -> int:
    failures = 0
    for cfg in sorted((HERE / "configs").glob("*.cfg")):
        kind = None
        for line in cfg.read_text().splitlines():
            if line.strip().startswith("kind"):
                kind = line.split("=")[1].strip()
                break
        out_dir = OUT / cfg.stem
        print(f"== {cfg.name} ({kind}) -> {out_dir}")
        code = run([kind, "--config", str(cfg), "--out", str(out_dir)])
        if code != 0:
            print(f"   FAILED with exit code {code}")
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
