"""Command line entry point: rollout, learn, sweep, estimate, analyze."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import Config, load_config
from .ephe import EpheConfig, run_learning, write_learning_log, write_learning_summary
from .perception import DistanceEstimator, PerceptionState
from .reward import compute_reward
from .rollout import PolicyParams, Scenario, trajectory_records, write_trajectory_csv
from .sweep import SweepGrid, WORKERS_ENV, load_records, run_sweep

log = logging.getLogger("perchlearn")


def _config(args) -> Config:
    return load_config(getattr(args, "config", None))


def cmd_rollout(args) -> int:
    cfg = _config(args)
    scenario = Scenario.build(args.V, args.phi, args.design, cfg)
    policy = PolicyParams.from_display(args.rrev, args.moment)
    res, logbuf = scenario.run(policy, args.seed, log=True)
    outcome = scenario.outcome(res, policy)
    reward = compute_reward(outcome)
    summary = {
        "V": args.V, "phi": args.phi, "design": scenario.design.name, "seed": args.seed,
        "rrev_trigger": args.rrev, "flip_moment_nmm": args.moment,
        "triggered": outcome.triggered, "n_legs": outcome.n_legs_attached,
        "body_or_rotor_contact": outcome.body_or_rotor_contact,
        "success": outcome.success_four_leg, "impact_angle": outcome.impact_angle,
        "min_d_ceiling": outcome.min_d_ceiling, "end_reason": outcome.extras["end_reason"],
        "r_d_ceil": reward.r_d_ceil, "r_theta": reward.r_theta, "r_legs": reward.r_legs,
        "reward": reward.total,
    }
    snap = outcome.trigger_snapshot
    if snap is not None:
        summary.update(trigger_rrev=snap.rrev, trigger_of_y=snap.of_y,
                       trigger_d_ceiling=snap.d_ceiling)
    _emit(summary)
    if args.out:
        from .plotting import trajectory
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = trajectory_records(scenario, logbuf)
        write_trajectory_csv(rows, out / "trajectory.csv")
        trajectory(rows, out / "trajectory.png")
        (out / "outcome.json").write_text(json.dumps(summary, indent=2))
    return 0


def cmd_learn(args) -> int:
    cfg = _config(args)
    result = run_learning((args.V, args.phi), args.design,
                          EpheConfig.from_params(cfg.ephe, args.seed), sim_config=cfg)
    summary = {"V": args.V, "phi": args.phi, "design": args.design, "seed": args.seed}
    summary.update(result.summary())
    _emit(summary)
    if args.out:
        from .plotting import learning_curve
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_learning_log(result, out / "learning_log.csv")
        write_learning_summary(result, out / "learning_summary.json", V=args.V, phi=args.phi,
                               design=args.design, seed=args.seed)
        learning_curve(result, out / "learning_curve.png")
    return 0 if result.converged else 2


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, grid=replace(cfg.grid, seed=args.seed))
    grid = SweepGrid.from_config(cfg)
    out = Path(args.out)

    def progress(done, total, rec):
        status = rec.error or f"success={rec.success_rate:.2f}"
        log.info("[%d/%d] V=%g phi=%g %s #%d %s", done, total, rec.speed, rec.angle,
                 rec.design, rec.repeat, status)

    records = run_sweep(grid, cfg, out, workers=args.workers, resume=args.resume,
                        progress=progress)
    from .plotting import design_comparison, success_polar
    for d in grid.designs:
        success_polar(records, d.name, out / f"success_{_slug(d.name)}.png")
    design_comparison(records, out / "success_vs_speed.png")
    errors = sum(bool(r.error) for r in records)
    print(f"{len(records)} records written to {out} ({errors} failed cells)")
    return 0


def cmd_estimate(args) -> int:
    cfg = _config(args)
    est = DistanceEstimator(cfg.perception)
    writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
    writer.writerow(["t", "rrev", "rrev_rate", "z_accel", "d_true", "d_estimate"])
    with open(args.trajectory_file, newline="") as fh:
        for row in csv.DictReader(fh):
            d_true = float(row["d_ceiling"]) if row.get("d_ceiling") else math.nan
            sample = PerceptionState(d_true, float(row["rrev"]), float(row.get("of_y") or 0.0),
                                     z_accel=float(row["z_accel"]), timestamp=float(row["t"]))
            sample, d_hat = est.update(sample)
            writer.writerow([row["t"], row["rrev"], _fmt(sample.rrev_rate), row["z_accel"],
                             _fmt(d_true), "undefined" if d_hat is None else _fmt(d_hat)])
    return 0


def cmd_analyze(args) -> int:
    from . import plotting
    from .region import build_region, save_region, separability
    records = load_records(args.records)
    model = build_region(records, tau=args.tau, design=args.design, k=args.k,
                         radius=args.radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_region(model, out / "region.json")
    with open(out / "region_points.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["V", "phi", "rrev", "of_y", "d_ceiling", "v_x", "v_z",
                         "flip_moment_nmm", "success", "in_region"])
        for p, lab in zip(model.points, model.labels):
            writer.writerow([p.speed, p.angle, p.rrev, p.of_y, p.d_ceiling,
                             -p.of_y * p.d_ceiling, p.rrev * p.d_ceiling,
                             p.flip_moment * 1e3, p.success, int(lab)])
    acc3, acc2 = separability(model, k=args.k)
    metrics = {"design": args.design, "tau": args.tau, "points": len(model.points),
               "in_region": int(model.labels.sum()), "loo_knn_accuracy_3d": acc3,
               "loo_knn_accuracy_2d": acc2, "separability_gain": acc3 - acc2}
    (out / "separability.json").write_text(json.dumps(metrics, indent=2))
    plotting.state_space(model, out / "state_space.png")
    plotting.optical_flow_space(model, out / "optical_flow_2d.png")
    plotting.optical_flow_space(model, out / "optical_flow_3d.png", with_distance=True)
    plotting.moment_map(model, out / "moment_map.png")
    plotting.success_polar(records, args.design, out / "success_polar.png")
    _emit(metrics)
    return 0


def _fmt(x: float) -> str:
    return "" if x is None or not math.isfinite(x) else f"{x:.9g}"


def _slug(name: str) -> str:
    return "".join(ch.lower() if ch.isalnum() else "_" for ch in name).strip("_")


def _emit(data: dict) -> None:
    for k, v in data.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        elif isinstance(v, (dict, list)):
            v = json.dumps(v)
        print(f"{k},{v}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perchlearn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def condition(sp):
        sp.add_argument("--V", type=float, required=True, help="approach speed [m/s]")
        sp.add_argument("--phi", type=float, required=True, help="flight angle [deg]")
        sp.add_argument("--design", default="Wide-Short", help="leg design name")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--out", help="directory for CSV/JSON/figures")

    sp = sub.add_parser("rollout", help="simulate one landing attempt")
    condition(sp)
    sp.add_argument("--rrev", type=float, required=True, help="RREV trigger threshold [1/s]")
    sp.add_argument("--moment", type=float, required=True, help="flip moment [N*mm]")
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("learn", help="learn a flip policy for one condition")
    condition(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("sweep", help="learn over the configured grid")
    sp.add_argument("--config", help="JSON configuration file")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=1,
                    help=f"parallel workers (overridden by ${WORKERS_ENV})")
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--seed", type=int, help="override the grid base seed")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("estimate", help="distance estimates along a logged trajectory")
    sp.add_argument("--trajectory-file", required=True)
    sp.add_argument("--config", help="JSON configuration file")
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("analyze", help="policy region from sweep records")
    sp.add_argument("--records", nargs="+", required=True)
    sp.add_argument("--design", required=True)
    sp.add_argument("--tau", type=float, default=0.8)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--radius", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
