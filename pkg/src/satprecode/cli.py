"""Command-line experiment harness.

Subcommands: train, sweep, beampattern, bench, weight-report. Every run
echoes its resolved configuration into the output directory so results are
reproducible from the artifacts alone.

Exit codes: 0 success, 2 configuration error, 3 missing artifact or bad
checkpoint, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .channel import ViewMode, draw_step, local_views
from .config import ExperimentConfig
from .exceptions import (CheckpointError, ConfigError, MissingArtifactError,
                         NumericalError)
from .metrics import beam_pattern, mean_sum_rate, sum_rate
from .precoders import make_precoder
from .rng import StreamBundle
from .sac import run_training
from .nn import read_checkpoint

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4

TRAIN_CSV_FIELDS = ("episode", "mean_reward", "actor_loss", "critic1_loss",
                    "critic2_loss", "mean_spread")
SWEEP_CSV_FIELDS = ("scenario_id", "precoder", "error_bound", "mean_rate",
                    "std_err", "n_draws", "seed")


def _scenario_id(exp: ExperimentConfig) -> str:
    s = exp.scenario
    return (f"K{s.num_satellites}N{s.antennas_per_satellite}"
            f"U{s.num_users}d{s.mean_user_distance_m / 1e3:g}km")


def _prepare_out(exp: ExperimentConfig, out_override: str | None) -> Path:
    out_dir = Path(out_override) if out_override else Path(exp.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    exp.dump_yaml(out_dir / "config.yaml")
    return out_dir


def _load_experiment(args) -> ExperimentConfig:
    exp = ExperimentConfig.from_yaml(args.config)
    if getattr(args, "seed", None) is not None:
        exp = dataclasses.replace(exp, seed=args.seed)
    if getattr(args, "draws", None) is not None:
        exp = dataclasses.replace(exp, n_eval_draws=args.draws)
    if getattr(args, "precoder", None):
        names = tuple(n for part in args.precoder for n in part.split(","))
        exp = dataclasses.replace(exp, precoders=names)
    if getattr(args, "ablation", None) == "vanilla":
        exp = dataclasses.replace(
            exp, train=dataclasses.replace(exp.train, vanilla=True))
    return exp


def _error_at(exp: ExperimentConfig, point: float):
    if exp.sweep_variable == "aod":
        return dataclasses.replace(exp.error, aod_error_bound=point)
    return dataclasses.replace(exp.error, phase_error_variance=point)


# -- subcommands ---------------------------------------------------------------

def cmd_train(args) -> int:
    exp = _load_experiment(args)
    out_dir = _prepare_out(exp, args.out)
    csv_path = out_dir / "training.csv"
    resume = args.resume
    mode = "a" if resume and csv_path.exists() else "w"
    with open(csv_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(TRAIN_CSV_FIELDS)

        def on_episode(row):
            writer.writerow([row.episode, f"{row.mean_reward:.10g}",
                             f"{row.actor_loss:.10g}",
                             f"{row.critic1_loss:.10g}",
                             f"{row.critic2_loss:.10g}",
                             f"{row.mean_spread:.10g}"])
            fh.flush()

        run_training(exp.scenario, exp.error, exp.train, exp.seed,
                     out_dir=out_dir, resume=resume,
                     episode_callback=on_episode)
    print(f"training complete; artifacts in {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    exp = _load_experiment(args)
    out_dir = _prepare_out(exp, args.out)
    scenario_id = _scenario_id(exp)
    rows = []
    for point in exp.sweep_grid:
        err = _error_at(exp, point)
        for name in exp.precoders:
            precoder, mode = make_precoder(name, exp.scenario, err,
                                           checkpoint_dir=args.checkpoint)
            result = mean_sum_rate(exp.scenario, err, precoder,
                                   exp.n_eval_draws, exp.seed, mode,
                                   squared=exp.sinr_squared)
            rows.append((scenario_id, name, point, result.mean,
                         result.std_err, result.n_draws, exp.seed))
            print(f"{scenario_id} {name} error={point:g}: "
                  f"{result.mean:.4f} +- {result.std_err:.4f}")
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_FIELDS)
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:g}", f"{row[3]:.10g}",
                             f"{row[4]:.10g}", row[5], row[6]])
    return 0


def cmd_beampattern(args) -> int:
    exp = _load_experiment(args)
    out_dir = _prepare_out(exp, args.out)
    streams = StreamBundle(exp.seed, "beampattern", 0)
    chan, est = draw_step(exp.scenario, exp.error, streams)
    cos_grid = np.linspace(-1.0, 1.0, args.grid_points)
    curves = {}
    rates = {}
    for name in exp.precoders:
        precoder, mode = make_precoder(name, exp.scenario, exp.error,
                                       checkpoint_dir=args.checkpoint)
        views = local_views(exp.scenario, est, chan, exp.error, mode)
        precoding = precoder(views)
        curves[name] = beam_pattern(precoding, exp.scenario, cos_grid)
        rates[name] = sum_rate(chan.matrix, precoding,
                               exp.scenario.noise_power_w,
                               squared=exp.sinr_squared).sum_rate
        print(f"{name}: sum rate {rates[name]:.4f} on this draw")
    with open(out_dir / "beampattern.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("precoder", "cosine", "user_index", "gain"))
        for name, gains in curves.items():
            for u in range(gains.shape[0]):
                for c, g in zip(cos_grid, gains[u]):
                    writer.writerow([name, f"{c:.10g}", u, f"{g:.10g}"])
    with open(out_dir / "beampattern_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("precoder", "sum_rate"))
        for name, rate in rates.items():
            writer.writerow([name, f"{rate:.10g}"])
    if args.svg:
        _render_beampattern(out_dir / "beampattern.svg", cos_grid, curves)
    return 0


def _render_beampattern(path: Path, cos_grid, curves) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, gains in curves.items():
        for u in range(gains.shape[0]):
            ax.plot(cos_grid, gains[u], label=f"{name} user {u}")
    ax.set_xlabel("departure-angle cosine")
    ax.set_ylabel("array gain")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_bench(args) -> int:
    exp = _load_experiment(args)
    out_dir = _prepare_out(exp, args.out)
    # Pre-draw a pool of view sets per mode so timing excludes channel
    # generation; calls cycle through the pool.
    pool_size = min(args.calls, 64)
    rows = []
    for name in exp.precoders:
        precoder, mode = make_precoder(name, exp.scenario, exp.error,
                                       checkpoint_dir=args.checkpoint)
        pool = []
        for i in range(pool_size):
            streams = StreamBundle(exp.seed, "bench", i)
            chan, est = draw_step(exp.scenario, exp.error, streams)
            pool.append(local_views(exp.scenario, est, chan, exp.error, mode))
        samples = np.empty(args.calls)
        for i in range(args.calls):
            views = pool[i % pool_size]
            start = time.perf_counter()
            precoder(views)
            samples[i] = time.perf_counter() - start
        median_s = statistics.median(samples)
        rows.append((name, median_s, args.calls))
        print(f"{name}: median {median_s * 1e6:.1f} us over {args.calls} calls")
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("precoder", "median_seconds", "calls"))
        for name, median_s, calls in rows:
            writer.writerow([name, f"{median_s:.10g}", calls])
    return 0


def weight_report(checkpoint_path: str | Path) -> dict[str, float]:
    """Aggregate first-layer actor weights by input group.

    The state layout puts all amplitude entries first, then all phase
    entries, each flattened row-major over (user, satellite, antenna). Means
    of absolute weights are reported per group plus the ratios the groups
    exist to compare.
    """
    meta, arrays = read_checkpoint(checkpoint_path)
    required = ("layout", "num_users", "num_satellites",
                "antennas_per_satellite", "view_mode", "agent_index")
    if any(key not in meta for key in required):
        raise CheckpointError("checkpoint lacks input-layout metadata")
    if meta["layout"] != "amps-then-phases":
        raise CheckpointError(f"unsupported state layout {meta['layout']!r}")
    w = arrays.get("actor/dense0/W")
    if w is None:
        raise CheckpointError("checkpoint has no first-layer actor weights")
    u, k, n = (meta["num_users"], meta["num_satellites"],
               meta["antennas_per_satellite"])
    local = meta["view_mode"] == "local"
    width = n if local else k * n
    if w.shape[0] != 2 * u * width:
        raise CheckpointError(
            f"first layer width {w.shape[0]} does not match layout "
            f"2*{u}*{width}")
    strength = np.abs(w).mean(axis=1)
    half = u * width
    # index within the flattened (user, satellite, antenna) ordering
    antenna = np.arange(half) % n
    sat = (np.arange(half) // n) % (1 if local else k)
    inner = (antenna >= n // 3) & (antenna < n - n // 3)
    own = sat == (0 if local else meta["agent_index"])

    def group(mask_amp, mask_ph=None):
        mask = np.concatenate([mask_amp, mask_amp if mask_ph is None else mask_ph])
        return float(strength[mask].mean()) if mask.any() else float("nan")

    amp_mean = float(strength[:half].mean())
    phase_mean = float(strength[half:].mean())
    all_true = np.ones(half, dtype=bool)
    report = {
        "amplitude_mean": amp_mean,
        "phase_mean": phase_mean,
        "phase_to_amplitude": phase_mean / amp_mean,
        "inner_antennas_mean": group(inner),
        "outer_antennas_mean": group(~inner),
        "inner_to_outer": group(inner) / group(~inner),
        "phase_inner_mean": float(strength[half:][inner].mean()) if inner.any() else float("nan"),
        "phase_outer_mean": float(strength[half:][~inner].mean()) if (~inner).any() else float("nan"),
        "own_block_mean": group(own & all_true),
        "other_block_mean": group(~own) if (~own).any() else float("nan"),
    }
    report["own_to_other"] = (report["own_block_mean"] / report["other_block_mean"]
                              if np.isfinite(report["other_block_mean"])
                              else float("nan"))
    return report


def cmd_weight_report(args) -> int:
    report = weight_report(args.checkpoint)
    for key, value in report.items():
        print(f"{key}: {value:.6g}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "weight_report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("group", "value"))
            for key, value in report.items():
                writer.writerow([key, f"{value:.10g}"])
    return 0


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satprecode",
        description="Satellite downlink precoding experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML experiment file")
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--out", default=None, help="output directory")
            p.add_argument("--precoder", action="append", default=None,
                           metavar="NAME[,NAME...]")
            p.add_argument("--draws", type=int, default=None)
            p.add_argument("--checkpoint", default=None,
                           help="directory with learned-precoder checkpoints")

    p_train = sub.add_parser("train", help="train the learned precoder")
    common(p_train)
    p_train.add_argument("--ablation", choices=("vanilla",), default=None)
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the persisted training state")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="mean sum rate over an error grid")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_beam = sub.add_parser("beampattern", help="per-user gain curves")
    common(p_beam)
    p_beam.add_argument("--grid-points", type=int, default=201)
    p_beam.add_argument("--svg", action="store_true",
                        help="also render an SVG plot")
    p_beam.set_defaults(func=cmd_beampattern)

    p_bench = sub.add_parser("bench", help="median precoding wall-clock time")
    common(p_bench)
    p_bench.add_argument("--calls", type=int, default=10_000)
    p_bench.set_defaults(func=cmd_bench)

    p_weight = sub.add_parser("weight-report",
                              help="first-layer weight aggregation")
    p_weight.add_argument("--checkpoint", required=True,
                          help="path to one agent checkpoint file")
    p_weight.add_argument("--out", default=None)
    p_weight.set_defaults(func=cmd_weight_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, CheckpointError) as exc:
        print(f"missing or invalid artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
