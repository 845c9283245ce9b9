"""Command-line interface for the staged pipeline and experiment sweeps.

Stages share a working directory (``--out``) and communicate through the
documented file formats: measurements.csv, *.tensor (+ .mask), factors files,
*.bmap beam maps and results.csv. Scene and grid geometry is rebuilt
deterministically from the config at every stage.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench, decomp, interp, los, polar, scene as scene_mod


def _add_common(p):
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--scenario", choices=bench.SCENARIOS)
    p.add_argument("--out", required=True, help="working directory for stage artifacts")


def _load(args, **overrides):
    cfg = bench.parse_config(args.config) if args.config else {}
    if getattr(args, "scenario", None):
        overrides["scenario"] = args.scenario
    if getattr(args, "sampling_ratio", None) is not None:
        overrides["sampling_ratios"] = [args.sampling_ratio]
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = [args.seed]
    if getattr(args, "rank", None) is not None:
        overrides["rank"] = args.rank
    config = bench.experiment_from_config(cfg, **overrides)
    sc, mirror = bench.default_scene(config.scenario, **config.scene_overrides)
    return config, sc, mirror


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_simulate(args):
    config, sc, mirror = _load(args)
    r_s = config.sampling_ratios[0]
    seed = config.seeds[0]
    ms = scene_mod.sample_measurements(sc, mirror, r_s, seed)
    scene_mod.write_measurements_csv(ms, _out(args, "measurements.csv"))
    interp.write_beammap(scene_mod.ground_truth_map(sc, mirror, "direct"),
                         _out(args, "truth_direct.bmap"))
    if mirror is not None:
        interp.write_beammap(scene_mod.ground_truth_map(sc, mirror, "reflect"),
                             _out(args, "truth_reflect.bmap"))
        interp.write_beammap(scene_mod.ground_truth_map(sc, mirror, "total"),
                             _out(args, "truth_total.bmap"))
    print(f"wrote {len(ms)} records at sampling ratio {r_s} seed {seed}")


def cmd_transform(args):
    config, sc, mirror = _load(args)
    ms = scene_mod.read_measurements_csv(os.path.join(args.out, "measurements.csv"))
    tensors = bench.build_tensors(sc, mirror, ms, config.n_distance_bins,
                                  config.min_eval_distance)
    polar.write_tensor(tensors["x0"], _out(args, "direct.tensor"))
    dropped = tensors["x0"].n_dropped
    if mirror is not None:
        polar.write_tensor(tensors["x1"], _out(args, "reflect.tensor"))
        polar.write_tensor(tensors["xaug"], _out(args, "augmented.tensor"))
        dropped += tensors["x1"].n_dropped
    print(f"observed bins: {tensors['x0'].n_observed} direct"
          + (f", {tensors['x1'].n_observed} reflect" if mirror is not None else "")
          + f"; dropped {dropped} out-of-coverage records")


def _solver_input(args, mirror):
    name = "augmented.tensor" if mirror is not None else "direct.tensor"
    return polar.read_tensor(os.path.join(args.out, name))


def cmd_solve(args):
    config, sc, mirror = _load(args)
    x = _solver_input(args, mirror)
    opts = config.solver
    if args.method == "btd_plain":
        opts = replace(opts, lambda_toeplitz=0.0, lambda_frob=1e-6)
    prior = scene_mod.gain_matrix(sc.beam_angles, sc.beam_angles, sc.n_antennas)
    model, report = decomp.solve_general(x, config.rank, opts, gain_prior=prior)
    decomp.write_factors(model, x.shape[2], _out(args, "factors.txt"))
    decomp.write_convergence_csv(report, _out(args, "convergence.csv"))
    print(f"solved rank {config.rank} in {report.n_iterations} iterations, "
          f"objective {report.objectives[-1]:.6g}")


def cmd_solve_los(args):
    config, sc, mirror = _load(args)
    x = _solver_input(args, mirror)
    prior = scene_mod.gain_matrix(sc.beam_angles, sc.beam_angles, sc.n_antennas)
    if args.method == "hard":
        tg, rho, report = los.solve_los_hard(x, config.solver, gain_prior=prior)
        los.write_toeplitz_factors(tg, rho, _out(args, "factors_toeplitz.txt"))
        stale = os.path.join(args.out, "factors.txt")
        if os.path.exists(stale):
            os.remove(stale)
    else:
        g, rho, report = los.solve_los_regularized(x, opts=config.solver, gain_prior=prior)
        decomp.write_factors(decomp.FactorModel([g], rho[:, None]), x.shape[2],
                             _out(args, "factors.txt"))
        stale = os.path.join(args.out, "factors_toeplitz.txt")
        if os.path.exists(stale):
            os.remove(stale)
    decomp.write_convergence_csv(report, _out(args, "convergence.csv"))
    print(f"solved ({args.method}) in {report.n_iterations} iterations, "
          f"objective {report.objectives[-1]:.6g}")


def cmd_backmap(args):
    config, sc, mirror = _load(args)
    toeplitz_path = os.path.join(args.out, "factors_toeplitz.txt")
    if os.path.exists(toeplitz_path):
        tg, rho = los.read_toeplitz_factors(toeplitz_path)
        model = los.hard_model(tg, rho)
    else:
        model = decomp.read_factors(os.path.join(args.out, "factors.txt"))
    x_hat = decomp.reconstruct(model)
    g0, g1 = bench.make_grids(sc, mirror, config.n_distance_bins)
    K = g0.n_distance_bins
    parts = [(x_hat[:, :, :K], g0)]
    if mirror is not None:
        parts.append((x_hat[:, :, K:], g1))
    estimate, flags = interp.back_map(parts, sc, min_source_distance=config.min_eval_distance)
    interp.write_beammap(estimate, _out(args, "estimate.bmap"))
    if flags:
        print(f"note: nearest-neighbor fallback on {len(flags)} beam slices")
    print("wrote estimate.bmap")


def cmd_evaluate(args):
    config, sc, mirror = _load(args)
    target = bench.target_map(config.scenario)
    truth = interp.read_beammap(os.path.join(args.out, f"truth_{target}.bmap"))
    estimate = interp.read_beammap(os.path.join(args.out, "estimate.bmap"))
    mask = scene_mod.evaluation_mask(sc, config.min_eval_distance)
    value = bench.nmse(truth, estimate, mask=mask)
    with open(_out(args, "evaluate.csv"), "w") as f:
        f.write("scenario,target,nmse\n")
        f.write(f"{config.scenario},{target},{value:.17g}\n")
    print(f"nmse = {value:.6g}")


def cmd_experiment(args):
    config, sc, mirror = _load(args)
    if args.method:
        config = replace(config, methods=args.method.replace(",", " ").split())
    rows = bench.run_scenario(config, out_dir=args.out)
    by_method = {}
    for r in rows:
        by_method.setdefault((r.method, r.sampling_ratio), []).append(r.nmse)
    for (method, ratio), vals in sorted(by_method.items()):
        print(f"{method:12s} r_s={ratio:<5g} mean nmse {np.mean(vals):.4g} "
              f"(+/- {np.std(vals):.2g}, n={len(vals)})")
    print(f"wrote {os.path.join(args.out, 'results.csv')}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="beammap",
        description="Beam map reconstruction pipeline: simulate, transform, solve, back-map, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw measurements and write ground truth")
    _add_common(p)
    p.add_argument("--sampling-ratio", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("transform", help="aggregate measurements into polar tensors")
    _add_common(p)
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("solve", help="rank-R structured decomposition")
    _add_common(p)
    p.add_argument("--rank", type=int)
    p.add_argument("--method", choices=["general", "btd_plain"], default="general")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("solve-los", help="rank-1 solvers for clear propagation")
    _add_common(p)
    p.add_argument("--method", choices=["hard", "regularized"], default="hard")
    p.set_defaults(fn=cmd_solve_los)

    p = sub.add_parser("backmap", help="interpolate the solution onto the cell grid")
    _add_common(p)
    p.set_defaults(fn=cmd_backmap)

    p = sub.add_parser("evaluate", help="NMSE of estimate.bmap against the ground truth")
    _add_common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("experiment", help="full sweep into results.csv")
    _add_common(p)
    p.add_argument("--method", help="comma-separated method list override")
    p.set_defaults(fn=cmd_experiment)

    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except (ValueError, FileNotFoundError, decomp.ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
