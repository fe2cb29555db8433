"""Command-line interface.

Subcommands: simulate, tune-pid, gen-data, train, evaluate, monte-carlo.
Every command takes a config file and honors --seed / --out overrides;
exit status is 0 on success and nonzero with a diagnostic otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import roles
from .config import MonteCarloConfig, load_sim_config
from .harness import (default_workers, evaluate_controllers, format_evaluation,
                      monte_carlo, run_closed_loop, tuning_objective)
from .pid import (default_gain_bounds, default_initial_gains, load_gains,
                  optimize_gains, save_gains)
from .sensors import NoiseSpec

ROLE_NAMES = ("controller", "estimator", "integrated")


class CliError(RuntimeError):
    pass


def _load_config(args):
    path = Path(args.config)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    cfg = load_sim_config(path)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, noise=replace(cfg.noise, seed=args.seed))
    return cfg


def _load_run_gains(cfg):
    if not cfg.gains_file:
        raise CliError("config has no gains_file; run tune-pid first")
    path = Path(cfg.gains_file)
    if not path.exists():
        raise CliError(f"gains file not found: {path}")
    return load_gains(path)


def _load_bundles(cfg, needed):
    bundles = {}
    for role in needed:
        d = Path(cfg.bundle_dir) / role if cfg.bundle_dir else None
        if d is None or not d.exists():
            raise CliError(f"missing trained {role!r} bundle: "
                           f"{d if d is not None else '(no bundle_dir configured)'}")
        bundles[role] = roles.load_bundle(d)
    return bundles


def _needed_roles(cfg):
    needed = set()
    if cfg.controller == "anfis":
        needed.add("controller")
    if cfg.controller == "integrated":
        needed.add("integrated")
    if cfg.estimator == "anfis":
        needed.add("estimator")
    return sorted(needed)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    gains = _load_run_gains(cfg) if cfg.controller == "pid" else None
    bundles = _load_bundles(cfg, _needed_roles(cfg))
    rec = run_closed_loop(cfg, gains=gains, bundles=bundles)
    out = args.out or "run_record.csv"
    rec.to_csv(out)
    print(f"wrote {len(rec)} samples to {out}")
    return 0


def cmd_tune_pid(args) -> int:
    cfg = _load_config(args)
    initial = default_initial_gains(cfg.inertia_nominal, args.mc_max)
    result = optimize_gains(tuning_objective(cfg), initial, budget=args.budget,
                            seed=cfg.seed,
                            bounds=default_gain_bounds(cfg.inertia_nominal))
    out = args.out or (cfg.gains_file or "gains.ini")
    save_gains(result.gains, out, extra={
        "cost": result.cost,
        "evaluations": result.n_evaluations,
        "seed": cfg.seed,
        "budget": args.budget,
    })
    print(f"tuned gains (J = {result.cost:.6f}, "
          f"{result.n_evaluations} evaluations) -> {out}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    gains = _load_run_gains(cfg)
    seed = cfg.seed
    if args.role == "controller":
        ds = roles.generate_controller_data(gains, n_conditions=args.runs or 15,
                                            duration=cfg.duration, dt=cfg.dt,
                                            seed=seed)
    else:
        gen = (roles.generate_estimator_data if args.role == "estimator"
               else roles.generate_integrated_data)
        ds = gen(gains, n_scenarios=args.runs or 12, duration=cfg.duration,
                 dt=cfg.dt, seed=seed, noise=cfg.noise, base=cfg)
    out = args.out or f"{args.role}_data.csv"
    ds.to_csv(out)
    print(f"wrote {len(ds)} samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    path = Path(args.data)
    if not path.exists():
        raise CliError(f"dataset not found: {path}")
    n_inputs = 6 if args.role == "controller" else 15
    ds = roles.RoleDataset.from_csv(path, n_inputs)
    if args.role == "controller":
        bundle = roles.train_controller(ds)
    elif args.role == "estimator":
        bundle = roles.train_estimator(ds)
    else:
        bundle = roles.train_integrated(ds)
    out = args.out or (str(Path(cfg.bundle_dir) / args.role) if cfg.bundle_dir
                       else args.role)
    roles.save_bundle(bundle, out)
    rmse = bundle.metadata.get("holdout_rmse")
    print(f"trained {args.role} bundle -> {out} (holdout RMSE per channel: "
          f"{[f'{r:.4g}' for r in rmse]})")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    gains = _load_run_gains(cfg)
    bundles = _load_bundles(cfg, ["controller", "estimator"])
    noise = cfg.noise if not cfg.noise.noiseless else NoiseSpec()
    rows = evaluate_controllers(gains, bundles, base=cfg, noise=noise)
    table = format_evaluation(rows)
    print(table)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table + "\n")
    return 0


def cmd_monte_carlo(args) -> int:
    cfg = _load_config(args)
    gains = _load_run_gains(cfg) if cfg.controller == "pid" else None
    bundles = _load_bundles(cfg, _needed_roles(cfg))
    mc = MonteCarloConfig(base=cfg, n_runs=args.runs,
                          master_seed=args.seed if args.seed is not None else cfg.seed)
    report = monte_carlo(mc, gains=gains, bundles=bundles, workers=args.workers)
    out = args.out or "monte_carlo.csv"
    report.to_csv(out)
    print(f"{mc.n_runs} runs ({report.n_failed} failed), "
          f"max |final error| = {report.max_abs_error:.4f} deg -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satgnc",
                                description="satellite attitude GNC toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        sp.add_argument("--out", default=None, help="output path override")

    sp = sub.add_parser("simulate", help="one closed-loop run to CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("tune-pid", help="optimize the PID gains")
    common(sp)
    sp.add_argument("--budget", type=int, default=500,
                    help="simulation evaluation budget")
    sp.add_argument("--mc-max", type=float, default=1.0, dest="mc_max",
                    help="torque saturation bound, N*m")
    sp.set_defaults(func=cmd_tune_pid)

    sp = sub.add_parser("gen-data", help="generate a training dataset")
    common(sp)
    sp.add_argument("--role", required=True, choices=ROLE_NAMES)
    sp.add_argument("--runs", type=int, default=None,
                    help="number of training trajectories")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train a role bundle from a dataset")
    common(sp)
    sp.add_argument("--role", required=True, choices=ROLE_NAMES)
    sp.add_argument("--data", required=True, help="dataset CSV path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="PID vs neuro-fuzzy comparison table")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("monte-carlo", help="robustness campaign")
    common(sp)
    sp.add_argument("--runs", type=int, default=200)
    sp.add_argument("--workers", type=int, default=None,
                    help=f"worker processes (default from SATGNC_WORKERS, "
                         f"currently {default_workers()})")
    sp.set_defaults(func=cmd_monte_carlo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
