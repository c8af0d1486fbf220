"""Command-line driver: verify | converge | bench | diffuse.

Experiments are described by a single versioned JSON config; every key is
schema-checked and unknown keys are rejected before any compute starts.
Outputs are plot-ready CSVs (converge, bench, diffuse) or a JSON report
(verify).  Exit codes: 0 success, 1 check failure, 2 config error.

Numeric CSV payloads are deterministic for a fixed config and seed
(timing columns excepted): random inputs come from a seeded generator and
floats are written at full precision.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings

import numpy as np

from . import operators as ops
from .bench import CSV_HEADER, bench_cell
from .errors import NonPowerOfTwoWarning
from .problems import (
    continuous_l2_error_1d,
    convergence_slope,
    discretize,
    nodal_errors,
    poisson_case,
)
from .solvers import (
    SolverConfig,
    explicit_stable_dt,
    run_transient,
    solve_static_linear,
)
from .spectral import ScipyFFTProvider
from .verify import run_verification

__all__ = ["main", "load_config", "ConfigError", "CONVERGE_HEADER"]

CONVERGE_HEADER = [
    "dim", "n", "a_tilde", "Nx", "Ny", "Nz", "N_omega",
    "e_l2", "e_linf", "cg_iters", "wall_s",
]

DIFFUSE_HEADER = ["t", "u_linf", "err_vs_static_linf"]

DEFAULT_POWERS = {1: [3, 4, 5, 6, 7, 8, 9], 2: [3, 4, 5, 6, 7], 3: [3, 4, 5]}


class ConfigError(ValueError):
    pass


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# key -> (validator, default); None default means "required"
_COMMON_SCHEMA = {
    "version": (lambda v: v == 1, None),
    "experiment": (lambda v: v in ("verify", "converge", "bench", "diffuse"), None),
    "dim": (lambda v: v in (1, 2, 3), 2),
    "n": (lambda v: isinstance(v, int) and v >= 0, 1),
    "a_tilde": (lambda v: _is_number(v) and v >= 1, 1.5),
    "seed": (lambda v: isinstance(v, int) and v >= 0, 0),
    "tol": (lambda v: _is_number(v) and v > 0, 1e-12),
    "max_iter": (lambda v: v is None or (isinstance(v, int) and v > 0), None),
    "threads": (lambda v: isinstance(v, int) and v >= 1, 1),
    "out": (lambda v: v is None or isinstance(v, str), None),
}

_EXPERIMENT_SCHEMA = {
    "verify": {
        "fault_injection": (lambda v: isinstance(v, bool), False),
        "verify_counts": (
            lambda v: v is None
            or (
                isinstance(v, dict)
                and all(k in ("1", "2", "3") for k in v)
                and all(isinstance(x, int) and x >= 8 for x in v.values())
            ),
            None,
        ),
    },
    "converge": {
        "powers": (
            lambda v: isinstance(v, list)
            and len(v) >= 3
            and all(isinstance(p, int) and 2 <= p <= 12 for p in v),
            None,  # resolved per dim
        ),
    },
    "bench": {
        "nodes_per_axis": (
            lambda v: isinstance(v, list)
            and all(isinstance(x, int) and x >= 6 for x in v),
            [20],
        ),
        "a_tilde_values": (
            lambda v: isinstance(v, list) and all(_is_number(x) and x >= 1 for x in v),
            [1.5, 2.5, 3.5],
        ),
        "reps": (lambda v: isinstance(v, int) and v >= 3, 5),
        "skip_traditional_above": (
            lambda v: isinstance(v, int) and v > 0,
            32**3,
        ),
    },
    "diffuse": {
        "counts": (lambda v: isinstance(v, int) and v >= 8, 32),
        "scheme": (
            lambda v: v in ("explicit-euler", "implicit-euler"),
            "explicit-euler",
        ),
        "t_end": (lambda v: _is_number(v) and v > 0, 2.5),
        "dt": (lambda v: v is None or (_is_number(v) and v > 0), None),
        "nu": (lambda v: _is_number(v) and v > 0, 1.0),
        "sample_stride": (lambda v: isinstance(v, int) and v >= 1, 10),
    },
}


def load_config(doc: dict) -> dict:
    """Validate a config document against the schema; unknown keys fail."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "experiment" not in doc:
        raise ConfigError("missing required key 'experiment'")
    if "version" not in doc:
        raise ConfigError("missing required key 'version'")
    experiment = doc["experiment"]
    if experiment not in _EXPERIMENT_SCHEMA:
        raise ConfigError(f"unknown experiment {experiment!r}")
    schema = dict(_COMMON_SCHEMA)
    schema.update(_EXPERIMENT_SCHEMA[experiment])
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = {}
    for key, (check, default) in schema.items():
        if key in doc:
            value = doc[key]
            if not check(value):
                raise ConfigError(f"invalid value for {key!r}: {value!r}")
            cfg[key] = value
        else:
            if default is None and key in ("version", "experiment"):
                raise ConfigError(f"missing required key {key!r}")
            cfg[key] = default
    if experiment == "converge" and cfg.get("powers") is None:
        cfg["powers"] = DEFAULT_POWERS[cfg["dim"]]
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if path:
            out.close()


def cmd_verify(cfg, provider) -> int:
    counts = None
    if cfg.get("verify_counts"):
        counts = {int(k): v for k, v in cfg["verify_counts"].items()}
    report = run_verification(
        counts=counts, seed=cfg["seed"], inject_fault=cfg["fault_injection"]
    )
    text = json.dumps(report, indent=2)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if report["passed"] else 1


def cmd_converge(cfg, provider) -> int:
    dim = cfg["dim"]
    case = poisson_case(dim)
    rows = []
    hs, e2s, einfs = [], [], []
    for power in cfg["powers"]:
        counts = 2**power
        disc = discretize(
            case, n=cfg["n"], a_tilde=cfg["a_tilde"], counts=counts,
            provider=provider, release=(dim != 1),
        )
        rhs = ops.external_force(disc.r, disc.precomp, provider)
        solver_cfg = SolverConfig(tol=cfg["tol"], max_iter=cfg["max_iter"])
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            d, u_h, report = solve_static_linear(
                disc.precomp, disc.chi_omega, rhs, dirichlet=disc.dirichlet,
                config=solver_cfg, provider=provider,
            )
        wall = time.perf_counter() - t0
        err = nodal_errors(u_h, disc.exact_field, disc.chi)
        if dim == 1:
            # the 1D study uses the continuous integral norm
            e_l2 = continuous_l2_error_1d(d, case.exact, disc.reference())
        else:
            e_l2 = err.e_l2
        shape = list(disc.grid.counts) + [""] * (3 - dim)
        rows.append(
            [dim, cfg["n"], cfg["a_tilde"], *shape, disc.n_omega,
             e_l2, err.e_linf, report.iterations, wall]
        )
        hs.append(max(disc.grid.spacing))
        e2s.append(e_l2)
        einfs.append(err.e_linf)
    slope_l2 = convergence_slope(hs, e2s)
    slope_linf = convergence_slope(hs, einfs)
    rows.append(
        [dim, cfg["n"], cfg["a_tilde"], "", "", "", "slope",
         slope_l2, slope_linf, "", ""]
    )
    _write_csv(cfg["out"], CONVERGE_HEADER, rows)
    return 0


def cmd_bench(cfg, provider) -> int:
    rows = []
    for nodes in cfg["nodes_per_axis"]:
        for a_tilde in cfg["a_tilde_values"]:
            records = bench_cell(
                dim=cfg["dim"],
                n=cfg["n"],
                a_tilde=a_tilde,
                nodes_per_axis=nodes,
                reps=cfg["reps"],
                skip_traditional_above=cfg["skip_traditional_above"],
                seed=cfg["seed"],
                provider=provider,
            )
            rows.extend(r.row() for r in records)
    _write_csv(cfg["out"], CSV_HEADER, rows)
    return 0


def cmd_diffuse(cfg, provider) -> int:
    dim = cfg["dim"]
    case = poisson_case(dim)
    disc = discretize(
        case, n=cfg["n"], a_tilde=cfg["a_tilde"], counts=cfg["counts"],
        provider=provider,
    )
    rhs = ops.external_force(disc.r, disc.precomp, provider)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        # steady state of the nu-scaled diffusion: nu K d = rhs
        _, u_static, _ = solve_static_linear(
            disc.precomp, disc.chi_omega, rhs,
            config=SolverConfig(tol=cfg["tol"]), provider=provider,
            operator=lambda x: cfg["nu"]
            * ops.internal_force(x, disc.precomp, provider),
        )
    active = disc.chi > 0.5
    static_scale = float(np.max(np.abs(u_static[active])))
    dt = cfg["dt"]
    if dt is None:
        Ml = ops.lumped_mass(disc.precomp, provider)
        dt = 0.5 * explicit_stable_dt(
            disc.precomp, disc.chi_omega, Ml, nu=cfg["nu"], provider=provider
        )
        if cfg["scheme"] == "implicit-euler":
            dt *= 50.0
    n_steps = int(np.ceil(cfg["t_end"] / dt))
    solver_cfg = SolverConfig(
        tol=cfg["tol"], dt=dt, n_steps=n_steps, scheme=cfg["scheme"],
        nu=cfg["nu"],
    )
    rows = []

    def sample(state):
        if state.step % cfg["sample_stride"] and state.step != n_steps:
            return
        u_t = ops.evaluate_field(state.d, disc.precomp, provider)
        gap = float(np.max(np.abs(u_t[active] - u_static[active])))
        rows.append(
            [state.t, float(np.max(np.abs(u_t[active]))), gap / static_scale]
        )

    run_transient(
        disc.precomp, disc.chi_omega, rhs, solver_cfg,
        dirichlet=disc.dirichlet, provider=provider, callback=sample,
    )
    _write_csv(cfg["out"], DIFFUSE_HEADER, rows)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fcrkpm",
        description="FFT-accelerated RKPM experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("verify", "converge", "bench", "diffuse"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--out", help="output file (CSV or JSON)")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--threads", type=int, help="FFT worker threads")
    args = parser.parse_args(argv)

    doc = {"version": 1, "experiment": args.command}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        doc.setdefault("version", 1)
        doc.setdefault("experiment", args.command)
    if doc.get("experiment") != args.command:
        print(
            f"config error: config is for {doc.get('experiment')!r}, "
            f"not {args.command!r}",
            file=sys.stderr,
        )
        return 2
    for key in ("out", "seed", "threads"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    try:
        cfg = load_config(doc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    provider = ScipyFFTProvider(workers=cfg["threads"])
    if cfg["threads"] > 1:
        print(
            f"note: parallel FFT provider active ({cfg['threads']} workers); "
            "timings are not comparable with single-threaded runs",
            file=sys.stderr,
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPowerOfTwoWarning)
        handler = {
            "verify": cmd_verify,
            "converge": cmd_converge,
            "bench": cmd_bench,
            "diffuse": cmd_diffuse,
        }[cfg["experiment"]]
        return handler(cfg, provider)


if __name__ == "__main__":
    sys.exit(main())
