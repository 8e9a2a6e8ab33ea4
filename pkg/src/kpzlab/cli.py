"""Command-line front end: solve, hjb, norms, noise-gen, verify.

Configs are TOML; every command accepts --config/--seed/--out/--threads.
Keys may sit at the top level or inside a table named after the command
(the table wins), so one file can drive several commands.
"""

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .control import (
    ConstantStrategy,
    OpenLoopStrategy,
    ZeroStrategy,
    cost_functional,
    simulate_paths,
    tail_probability,
    value_from_feedback,
)
from .experiments import (
    ConfigError,
    EXPERIMENT_NAMES,
    ExperimentConfig,
    run_campaign,
    write_results,
)
from .fields import (
    Grid,
    ScalarField,
    TimeField,
    bump_field,
    constant_field,
    export_csv,
    load_field,
    save_field,
)
from .noise import NoiseSpec, gen_noise
from .norms import ProfilePair, StarConfig, profile_from_spec, w_norm, w_time_norm
from .rates import rate_from_spec
from .solver import CflViolationError, CutoffParams, solve_kpz


class CliError(ValueError):
    """Bad command-line arguments or config contents."""


def _load_config(path, section):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        data = tomllib.load(fh)
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    for name in (section,):
        table = data.get(name)
        if isinstance(table, dict):
            merged.update(table)
    # keep foreign sub-tables (initial/forcing specs) visible to the command
    for k, v in data.items():
        if isinstance(v, dict) and k != section:
            merged.setdefault(k, v)
    return merged


def _require(cfg, key, kind=None):
    if key not in cfg:
        raise CliError(f"config key '{key}' is required")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise CliError(f"config key '{key}' has wrong type: {value!r}")
    return value


def _parse_j(raw):
    if raw in ("inf", "none", None):
        return None
    if isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    raise CliError(f"j must be a nonnegative integer or 'inf', got {raw!r}")


def _grid_from(cfg):
    dim = int(cfg.get("dim", 1))
    n = int(_require(cfg, "N"))
    length = float(_require(cfg, "L_dom"))
    return Grid(dim, n, length)


def _initial_field(cfg, grid, master_seed):
    spec = cfg.get("initial", {"kind": "constant", "value": 0.0})
    kind = spec.get("kind")
    if kind == "constant":
        return constant_field(grid, float(spec.get("value", 0.0)))
    if kind == "gaussian_bump":
        center = spec.get("center")
        return bump_field(
            grid,
            float(spec.get("amplitude", 1.0)),
            float(spec.get("width", grid.length / 8.0)),
            tuple(center) if center is not None else None,
        )
    if kind == "fourier_mode":
        modes = spec.get("mode", 1)
        if isinstance(modes, int):
            modes = (modes,) * grid.dim
        amp = float(spec.get("amplitude", 1.0))
        phase = float(spec.get("phase", 0.0))
        mesh = np.meshgrid(*(grid.coords() for _ in range(grid.dim)), indexing="ij")
        arg = sum(
            2.0 * math.pi * int(m) * x / grid.length for m, x in zip(modes, mesh)
        )
        return ScalarField(grid, amp * np.sin(arg + phase))
    if kind == "noise":
        seed = int(spec.get("seed", master_seed))
        ns = NoiseSpec(
            float(spec.get("ell_x", 0.5)),
            float(spec.get("ell_t", 0.25)),
            float(spec.get("amplitude", 0.2)),
            seed,
        )
        return ScalarField(grid, gen_noise(ns, grid, 1, ns.ell_t).frames[0])
    if kind == "file":
        field = load_field(_require(spec, "path"))
        if isinstance(field, TimeField):
            raise CliError("initial condition file must hold a single frame")
        if field.grid != grid:
            raise CliError("initial condition grid does not match config grid")
        return field
    raise CliError(f"unknown initial condition kind: {kind!r}")


def _forcing_field(cfg, grid, params, master_seed):
    spec = cfg.get("forcing")
    if spec is None or spec.get("kind", "none") == "none":
        return None
    kind = spec["kind"]
    n_frames = params.n_steps + 1
    if kind == "constant":
        values = np.full((n_frames,) + grid.shape, float(spec.get("value", 0.0)))
        return TimeField(grid, params.dt, values)
    if kind == "noise":
        seed = int(spec.get("seed", master_seed))
        ns = NoiseSpec(
            float(spec.get("ell_x", 0.5)),
            float(spec.get("ell_t", 0.25)),
            float(spec.get("amplitude", 0.2)),
            seed,
        )
        return gen_noise(ns, grid, n_frames, params.dt)
    if kind == "file":
        field = load_field(_require(spec, "path"))
        if isinstance(field, ScalarField):
            raise CliError("forcing file must hold a time-indexed field")
        if field.grid != grid:
            raise CliError("forcing grid does not match config grid")
        if field.times[-1] + 1e-12 < params.horizon:
            raise CliError("forcing file does not cover the solve horizon")
        return field
    raise CliError(f"unknown forcing kind: {kind!r}")


def _solve_from_config(cfg, master_seed):
    grid = _grid_from(cfg)
    rate = rate_from_spec(_require(cfg, "rate"))
    params = CutoffParams(
        j=_parse_j(cfg.get("j", "inf")),
        lam=float(_require(cfg, "lambda")),
        horizon=float(_require(cfg, "T")),
        dt=float(_require(cfg, "dt")),
    )
    h0 = _initial_field(cfg, grid, master_seed)
    g = _forcing_field(cfg, grid, params, master_seed)
    return solve_kpz(h0, g, rate, params), grid, rate, params


# ------------------------------------------------------------------ commands


def _cmd_solve(args):
    cfg = _load_config(args.config, "solve")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    sol, grid, rate, params = _solve_from_config(cfg, seed)
    out = Path(args.out or cfg.get("out", "solve_out"))
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / "trajectory.f64", sol.h, seed=seed)
    sol.diagnostics_csv(out / "diagnostics.csv")
    export_csv(out / "final_frame.csv", sol.h.frame(sol.h.n_frames - 1))
    print(f"solved {rate.kind} on {grid.dim}d N={grid.n}: wrote {out}/trajectory.f64")
    return 0


def _cmd_hjb(args):
    cfg = _load_config(args.config, "hjb")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    n_paths = args.paths or int(cfg.get("paths", 10_000))
    sol, grid, rate, params = _solve_from_config(cfg, seed)
    if args.x:
        x = tuple(float(tok) for tok in args.x.split(","))
        if len(x) != grid.dim:
            raise CliError(f"--x needs {grid.dim} coordinates, got {len(x)}")
    else:
        x = (grid.length / 2.0,) * grid.dim
    ci = tuple(int(round(c / grid.spacing)) % grid.n for c in x)
    pde_value = float(sol.h.frames[-1][ci])

    # 0.3*lam keeps the running cost finite for every built-in rate
    speed = 0.3 * params.lam
    period = params.horizon
    strategies = [
        ("zero", ZeroStrategy()),
        ("const+", ConstantStrategy((speed,) * grid.dim)),
        ("const-", ConstantStrategy((-speed,) * grid.dim)),
        (
            "open_loop",
            OpenLoopStrategy(
                lambda s, v=speed, p=period: (v * math.sin(2.0 * math.pi * s / p),)
                * grid.dim
            ),
        ),
    ]
    out = Path(args.out or cfg.get("out", "hjb_out"))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "strategies.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "mean", "stderr", "pde_value", "gap"])
        for k, (name, strat) in enumerate(strategies):
            paths = simulate_paths(
                strat, x, params.horizon, params.dt, n_paths, seed + 100 + k
            )
            est = cost_functional(paths, sol.g, sol.h.frame(0), rate, params)
            w.writerow(
                [
                    name,
                    repr(est.mean),
                    repr(est.stderr),
                    repr(pde_value),
                    repr(est.mean - pde_value),
                ]
            )
        fb = value_from_feedback(sol, x, rate, params, n_paths, seed + 99)
        w.writerow(
            [
                "feedback",
                repr(fb.mean),
                repr(fb.stderr),
                repr(pde_value),
                repr(fb.mean - pde_value),
            ]
        )

    fractions = cfg.get("radii_fractions", (0.4, 0.52, 0.66, 0.82, 1.0))
    radii = tuple(grid.length / 2.0 * float(f) for f in fractions)
    report = tail_probability(sol, x, rate, params, radii, n_paths, seed + 98)
    with open(out / "tails.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "p_hat", "stderr"])
        for r, p, se in zip(report.radii, report.p_hat, report.stderr):
            w.writerow([repr(float(r)), repr(float(p)), repr(float(se))])
    print(f"hjb at x={x}: pde_value={pde_value:.6g}, wrote {out}/strategies.csv")
    return 0


def _cmd_norms(args):
    field = load_field(args.field)
    profile = profile_from_spec(args.profile)
    j = args.j
    cfg = StarConfig.for_grid(field.grid)
    if args.time:
        if args.t is None:
            raise CliError("--time needs --t")
        if isinstance(field, ScalarField):
            raise CliError("--time needs a time-indexed field file")
        d_prime = args.dprime if args.dprime is not None else float(field.grid.dim)
        pair = ProfilePair(profile, profile, d_prime)
        result = w_time_norm(field, pair, args.t, j, cfg, tilde=args.tilde)
    else:
        if isinstance(field, TimeField):
            if field.n_frames != 1:
                raise CliError("spatial norm needs a single-frame field; use --time")
            field = field.frame(0)
        result = w_norm(field, profile, j, cfg)
    export_csv(args.out or "norms.csv", result)
    print(f"wrote {args.out or 'norms.csv'}")
    return 0


def _cmd_noise_gen(args):
    cfg = _load_config(args.config, "noise")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    grid = _grid_from(cfg)
    frames = int(cfg.get("frames", 1))
    dt = float(cfg.get("dt", cfg.get("ell_t", 0.25)))
    spec = NoiseSpec(
        float(cfg.get("ell_x", 0.5)),
        float(cfg.get("ell_t", 0.25)),
        float(cfg.get("amplitude", 0.2)),
        seed,
    )
    field = gen_noise(spec, grid, frames, dt)
    out = Path(args.out or cfg.get("out", "noise_out"))
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / "noise.f64", field, seed=seed)
    print(f"wrote {out}/noise.f64 ({frames} frames, N={grid.n}, dim={grid.dim})")
    return 0


def _cmd_verify(args):
    raw = _load_config(args.config, "verify")
    # shared config files carry solve/noise tables too; keep only campaign keys
    known = set(ExperimentConfig.__dataclass_fields__)
    mapping = {k: v for k, v in raw.items() if k in known}
    cfg = ExperimentConfig.from_mapping(mapping)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=str(args.out))
    if args.all:
        names = list(EXPERIMENT_NAMES)
    elif args.experiment:
        names = list(args.experiment)
    elif cfg.experiment:
        names = [cfg.experiment]
    else:
        names = list(EXPERIMENT_NAMES)
    results = run_campaign(cfg, names=names, threads=args.threads)
    summary = write_results(cfg.out_dir, cfg, results)
    for res in results:
        print(f"{res.name}: {'PASS' if res.passed else 'FAIL'} ({len(res.rows)} checks)")
    print(f"wrote {Path(cfg.out_dir) / 'summary.json'}")
    return 0 if summary["passed"] else 1


# --------------------------------------------------------------------- main


def _add_common(sub):
    sub.add_argument("--config", help="TOML config file")
    sub.add_argument("--seed", type=int, help="master seed override")
    sub.add_argument("--out", help="output directory (or file for norms)")
    sub.add_argument("--threads", type=int, default=1, help="worker threads")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kpzlab",
        description="Cutoff KPZ laboratory: spectral solver, control representation, quasi-norms.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("solve", help="march an instance and save the trajectory")
    _add_common(p)
    p.set_defaults(handler=_cmd_solve)

    p = commands.add_parser("hjb", help="strategy costs and endpoint tails at a point")
    _add_common(p)
    p.add_argument("--x", help="comma-separated coordinates (default: box center)")
    p.add_argument("--paths", type=int, help="Monte Carlo path count")
    p.set_defaults(handler=_cmd_hjb)

    p = commands.add_parser("norms", help="evaluate a weighted norm field")
    _add_common(p)
    p.add_argument("--field", required=True, help="field file (raw f8 + json sidecar)")
    p.add_argument("--profile", required=True, help="profile spec, e.g. exp:a=0.5 or poly:d=2")
    p.add_argument("--j", type=int, default=0, help="cutoff level (eps = 2^-j)")
    p.add_argument("--time", action="store_true", help="time-integrated norm")
    p.add_argument("--t", type=float, help="evaluation time for --time")
    p.add_argument("--tilde", action="store_true", help="include the (1+eps*s)^{d'/2} weight")
    p.add_argument("--dprime", type=float, help="tilde exponent d' (default: dim)")
    p.set_defaults(handler=_cmd_norms)

    p = commands.add_parser("noise-gen", help="generate a smoothed noise field file")
    _add_common(p)
    p.set_defaults(handler=_cmd_noise_gen)

    p = commands.add_parser("verify", help="run verification campaigns, write verdicts")
    _add_common(p)
    p.add_argument("--all", action="store_true", help="run every experiment")
    p.add_argument(
        "--experiment",
        action="append",
        choices=EXPERIMENT_NAMES,
        help="run one experiment (repeatable)",
    )
    p.set_defaults(handler=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (CliError, ConfigError, CflViolationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
