#!/usr/bin/env python3
"""Full scalar-backend study: validation, long-run averages, fluctuations.

Drives the CLI end to end on the bundled scalar configuration and leaves
CSV/JSON/SVG reports under out/scalar/<subcommand>/.
"""

import pathlib
import sys

from regenjump.cli import main

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIG = ROOT / "configs" / "scalar.ini"
OUT = ROOT / "out" / "scalar"


def run():
    for command in ("validate", "semigroup-check", "slln", "clt", "anscombe"):
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
