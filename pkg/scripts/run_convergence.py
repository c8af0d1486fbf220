#!/usr/bin/env python3
"""Convergence sweeps in 1D, 2D, and 3D; one CSV per dimension.

The per-dimension refinement ranges mirror the study setup (power-of-two
node counts, a_tilde = 1.5, linear basis, CG tolerance 1e-12).
"""

import json
import pathlib
import sys
import tempfile

from fcrkpm.cli import main

OUT_DIR = pathlib.Path(__file__).resolve().parent.parent / "results"

SWEEPS = {
    1: [3, 4, 5, 6, 7, 8, 9],
    2: [3, 4, 5, 6, 7],
    3: [3, 4, 5],
}


def run():
    OUT_DIR.mkdir(exist_ok=True)
    for dim, powers in SWEEPS.items():
        doc = {
            "version": 1,
            "experiment": "converge",
            "dim": dim,
            "powers": powers,
        }
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
            json.dump(doc, fh)
            cfg_path = fh.name
        out = OUT_DIR / f"convergence_{dim}d.csv"
        code = main(["converge", "--config", cfg_path, "--out", str(out)])
        if code != 0:
            return code
        print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
