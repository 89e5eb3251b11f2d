"""Command-line entry point: train, export-trajectories, validate, list-experiments."""

import argparse
import os
import sys


def _cap_threads():
    # APAC_THREADS caps per-process BLAS/OpenMP parallelism; must happen
    # before numpy loads its threading runtime.
    cap = os.environ.get("APAC_THREADS", "").strip()
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="apacnet",
        description="Adversarial solver for stochastic mean-field games.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run an experiment from a config file")
    p_train.add_argument("--config", required=True, help="TOML config path")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--iterations", type=int, default=None,
                         help="override the iteration count")
    p_train.add_argument("--output-dir", default=None, help="override the output directory")
    p_train.add_argument("--paper-scale", action="store_true",
                         help="use the full reference-scale iteration counts where defined")
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the checkpoint in the output directory")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p_exp = sub.add_parser("export-trajectories",
                           help="push initial-density samples through a trained generator")
    p_exp.add_argument("--run", required=True, help="training output directory")
    p_exp.add_argument("--samples", type=int, default=100)
    p_exp.add_argument("--times", type=int, default=16)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--output", default=None, help="CSV path (default <run>/trajectories.csv)")

    p_val = sub.add_parser("validate",
                           help="closed-form comparison for a trained analytic run")
    p_val.add_argument("--run", required=True, help="training output directory")
    p_val.add_argument("--oracle-phi", action="store_true",
                       help="score the closed form itself instead of the trained field")

    sub.add_parser("list-experiments", help="describe the shipped experiments")
    return parser


def _die(message, code=1):
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_train(args):
    from apacnet import config as config_mod
    from apacnet import trainer

    try:
        cfg = config_mod.load(args.config, overrides={
            "seed": args.seed,
            "iterations": args.iterations,
            "output_dir": args.output_dir,
        }, paper_scale=args.paper_scale)
    except config_mod.ConfigError as exc:
        return _die(str(exc), code=2)
    except FileNotFoundError:
        return _die(f"config file not found: {args.config}", code=2)

    out_dir = cfg.output_dir or os.path.join("runs", cfg.experiment)
    cfg.output_dir = out_dir
    os.makedirs(out_dir, exist_ok=True)

    lock_path = os.path.join(out_dir, ".lock")
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        return _die(f"output directory {out_dir} is locked by another run "
                    f"(remove {lock_path} if stale)")
    try:
        config_mod.save(cfg, os.path.join(out_dir, "config.resolved.toml"))
        trainer.train(cfg, out_dir=out_dir, resume=args.resume, verbose=not args.quiet)
    except trainer.TrainingDiverged as exc:
        return _die(str(exc))
    finally:
        os.close(lock_fd)
        os.unlink(lock_path)
    if not args.quiet:
        print(f"run complete: {os.path.join(out_dir, 'history.csv')}")
    return 0


def _load_run(run_dir):
    from apacnet import config as config_mod, networks

    cfg_path = os.path.join(run_dir, "config.resolved.toml")
    if not os.path.exists(cfg_path):
        raise FileNotFoundError(f"{run_dir} has no config.resolved.toml")
    cfg = config_mod.load(cfg_path)
    gen, it_g = networks.load_params(os.path.join(run_dir, "params_generator.apc"))
    val, it_v = networks.load_params(os.path.join(run_dir, "params_value.apc"))
    return cfg, val, gen, max(it_g, it_v)


def cmd_export_trajectories(args):
    import numpy as np

    from apacnet import environments, networks, trainer

    try:
        cfg, _, gen, _ = _load_run(args.run)
    except (FileNotFoundError, ValueError) as exc:
        return _die(str(exc))
    if gen.cfg.input_dim != cfg.dim + 1:
        return _die(f"checkpoint dimension {gen.cfg.input_dim - 1} does not match "
                    f"config dim {cfg.dim}")
    env = environments.make_environment(cfg)
    rng = np.random.default_rng(args.seed)
    z = environments.sample_rho0(env, args.samples, rng)
    times = np.linspace(0.0, env.horizon, args.times)

    import csv

    out_path = args.output or os.path.join(args.run, "trajectories.csv")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["sample_id", "t"] + [f"x_{i + 1}" for i in range(cfg.dim)])
        for t in times:
            tt = np.full(args.samples, t)
            x = networks.generator_forward(gen, z, tt, env.horizon)
            for i in range(args.samples):
                writer.writerow([i, trainer.format_real(t)]
                                + [trainer.format_real(v) for v in x[i]])
    print(f"wrote {args.samples * args.times} rows to {out_path}")
    return 0


def cmd_validate(args):
    import numpy as np

    from apacnet import environments, networks, trainer
    from apacnet.validation import (AnalyticSolution, KdeEstimator,
                                    build_validation_points, relative_error)

    try:
        cfg, val_params, gen_params, iteration = _load_run(args.run)
    except (FileNotFoundError, ValueError) as exc:
        return _die(str(exc))
    if cfg.experiment != "analytic":
        return _die("validate is only defined for the analytic experiment "
                    f"(this run is '{cfg.experiment}')")

    env = environments.make_environment(cfg)
    sol = AnalyticSolution(cfg.gamma, cfg.nu, cfg.beta, cfg.dim)
    mode = "grid2d" if cfg.dim == 2 else "samples"
    pts, tt = build_validation_points(sol, mode, seed=cfg.seed)

    if args.oracle_phi:
        pred = sol.phi(pts, tt)
    else:
        pred = networks.value_eval_plain(val_params.layers, val_params.cfg,
                                         env.terminal, pts, tt, env.horizon)
    rel_phi = relative_error(pred, sol.phi(pts, tt))

    rng = np.random.default_rng(cfg.seed)
    fit = environments.sample_batch(env, 1024, rng)
    pushed = networks.generator_forward(gen_params, fit.z, fit.t, env.horizon)
    sigma = max(float(np.sqrt(pushed.var(axis=0).mean())), 1e-6)
    rel_rho = relative_error(KdeEstimator(pushed, sigma=sigma).density(pts), sol.rho(pts))

    print(f"validation mode: {mode} ({pts.shape[0]} evaluation points)")
    print(f"rel_error_phi = {rel_phi:.6e}")
    print(f"rel_error_rho = {rel_rho:.6e}")

    history_path = os.path.join(args.run, "history.csv")
    if os.path.exists(history_path):
        import csv as _csv
        import io

        buf = io.StringIO()
        writer = _csv.writer(buf, lineterminator="\r\n")
        writer.writerow([iteration, "", "", "", "",
                         trainer.format_real(rel_phi), trainer.format_real(rel_rho)])
        with open(history_path, "a", newline="") as fh:
            fh.write(buf.getvalue())
    return 0


def cmd_list_experiments(args):
    from apacnet.config import EXPERIMENTS, PRESETS, paper_scale_iterations

    notes = {
        "nu_sweep": "obstacle-free planar travel; diffusion study",
        "obstacle": "two rotated quadratic obstacles on the diagonal path",
        "congestion": "pairwise bounded inverse-square crowd repulsion",
        "bottleneck": "congestion plus a squeeze obstacle",
        "symmetric": "symmetric obstacle that splits the density",
        "analytic": "confined quadratic problem with a closed-form reference",
        "quadcopter": "12-state hover-craft dynamics with spatial congestion",
    }
    print(f"{'experiment':<12} {'desk iters':>10} {'paper iters':>11}  description")
    for name in EXPERIMENTS:
        desk = PRESETS[name]["iterations"]
        paper = paper_scale_iterations(name) or desk
        print(f"{name:<12} {desk:>10} {paper:>11}  {notes[name]}")
    return 0


def main(argv=None):
    _cap_threads()
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "export-trajectories": cmd_export_trajectories,
        "validate": cmd_validate,
        "list-experiments": cmd_list_experiments,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
