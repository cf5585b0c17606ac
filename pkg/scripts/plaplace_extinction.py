#!/usr/bin/env python3
"""Grid-backend study: axiom residuals, empirical decay rate, and a short
fluctuation run for the discrete weighted p-Laplacian flow."""

import pathlib
import sys

from regenjump.cli import main

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIG = ROOT / "configs" / "plaplace.ini"
OUT = ROOT / "out" / "plaplace"


def run():
    for command in ("validate", "semigroup-check", "kappa-fit", "slln"):
        out_dir = OUT / command.replace("-", "_")
        print(f"== {command} -> {out_dir}")
        code = main(
            [command, "--config", str(CONFIG), "--out", str(out_dir), "--threads", "1"]
        )
        if code != 0:
            print(f"{command} exited with {code}")
            return code
    print(f"all reports under {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
