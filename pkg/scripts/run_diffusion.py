#!/usr/bin/env python3
"""Transient diffusion to steady state, explicit and implicit, 2D."""

import json
import pathlib
import sys
import tempfile

from fcrkpm.cli import main

OUT_DIR = pathlib.Path(__file__).resolve().parent.parent / "results"


def run():
    OUT_DIR.mkdir(exist_ok=True)
    for scheme in ("explicit-euler", "implicit-euler"):
        doc = {
            "version": 1,
            "experiment": "diffuse",
            "dim": 2,
            "counts": 32,
            "scheme": scheme,
            "t_end": 2.5,
        }
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
            json.dump(doc, fh)
            cfg_path = fh.name
        out = OUT_DIR / f"diffusion_{scheme.split('-')[0]}.csv"
        code = main(["diffuse", "--config", cfg_path, "--out", str(out)])
        if code != 0:
            return code
        print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
