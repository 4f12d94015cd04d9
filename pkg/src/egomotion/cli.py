"""Command-line front end.

Subcommands: ``scenario``, ``synth``, ``filter``, ``bench``, ``sweep`` and
``fuse-check``. Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

import argparse
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, io, suite
from . import cascade as cas
from . import imu_synth, scene_sim
from .config import ConfigError, config_hash, load_config
from .fusion import CHECK_DIMS, FusionDims, FusionError, run_checks
from .trajectory import fit_spline

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INVALID", "EXIT_IO"]

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
EXAMPLE_DIR = suite.bundled_data_path("example")


class _Console:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


def _meta(command, cfg, **extra):
    return {
        "tool": "egomotion",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        **extra,
    }


def _out(args, cfg, given, default_name):
    if given:
        return Path(given)
    return Path(args.out_dir or cfg.output.out_dir) / default_name


def _noise(spec, cfg):
    if spec == "default":
        return cfg.noise
    if spec == "zero":
        return imu_synth.NoiseModel.zero(cfg.seed)
    return replace(load_config(spec).noise, seed=cfg.seed)


# -- subcommands -------------------------------------------------------------


def cmd_scenario(args, cfg, say):
    """Write a scene JSON and pose CSV; with no options, the bundled example."""
    out_dir = Path(args.out_dir or cfg.output.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.example:
        for name in ("scene.json", "poses.csv"):
            shutil.copyfile(EXAMPLE_DIR / name, out_dir / name)
        say(f"copied the bundled example scenario to {out_dir}")
        return EXIT_OK
    sc = cfg.scene
    seed = sc.seed if args.scene_seed is None else args.scene_seed
    room = (sc.room[:3], sc.room[3:])
    style = args.style or sc.style
    duration = args.duration or sc.duration
    scene = scene_sim.generate_scene(seed, sc.n_landmarks, room)
    poses = scene_sim.generate_scan_trajectory(seed, style, duration, room)
    scene.save(out_dir / "scene.json")
    io.write_poses(out_dir / "poses.csv", poses)
    say(f"{style} scan, seed {seed}: {len(poses)} poses, {len(scene)} landmarks -> {out_dir}")
    return EXIT_OK


def cmd_synth(args, cfg, say):
    poses = io.read_poses(args.poses)
    spline = fit_spline(poses, args.knot_dt or cfg.imu.knot_dt)
    rate = args.rate or cfg.imu.rate
    ideal = imu_synth.synthesize_ideal(spline, imu_synth.WorldFrame(), rate)
    model = _noise(args.noise, cfg)
    imu = imu_synth.apply_noise(ideal, model)
    path = io.write_imu(_out(args, cfg, args.out, "imu.csv"), imu)
    say(f"wrote {len(imu)} IMU samples at {rate:g} Hz over [{imu.t[0]:.3f}, {imu.t[-1]:.3f}] s to {path}")
    say(
        f"noise: sigma_a={model.sigma_a:g} sigma_g={model.sigma_g:g} "
        f"sigma_ba={model.sigma_ba:g} sigma_bg={model.sigma_bg:g} seed={model.seed} "
        f"(fit residual {spline.residual:.2e} m)"
    )
    return EXIT_OK


def _stats_json(stats, records, cfg, timing):
    out = {"meta": _meta("filter", cfg)}
    for key, value in stats.to_dict().items():
        if key != "wall_time" or timing:
            out[key] = value
    out["stage1_retention"] = stats.stage1_retention
    out["extraction_fraction"] = stats.extraction_fraction
    out["keyframes"] = [r.frame_index for r in records]
    return out


def cmd_filter(args, cfg, say):
    scene = scene_sim.SceneModel.load(args.scene)
    poses = io.read_poses(args.poses)
    imu = io.read_imu(args.imu)
    spline = fit_spline(poses, cfg.imu.knot_dt)
    providers = suite.SceneProviders(scene, poses, args.token_dim)
    frames = [cas.Frame(k, p.t) for k, p in enumerate(poses)]
    records, stats = cas.run_cascade(
        frames, imu, cfg.cascade, providers.parallax, providers.token, suite.initial_state(spline)
    )
    kf_path = io.write_keyframes(_out(args, cfg, args.out_keyframes, "keyframes.csv"), records)
    st_path = io.write_json(_out(args, cfg, args.out_stats, "stats.json"), _stats_json(stats, records, cfg, args.timing))
    say(
        f"{stats.n_frames} frames -> stage1 {stats.n_pass_stage1}, stage2 {stats.n_pass_stage2}, "
        f"keyframes {stats.n_keyframes}; {stats.n_token_extractions} token extractions "
        f"({100 * stats.extraction_fraction:.1f}%)"
    )
    say(f"wrote {kf_path} and {st_path}")
    return EXIT_OK


def _uniform_counts(specs):
    counts = []
    for spec in specs or ["uniform:32"]:
        text = spec.split(":", 1)[1] if spec.startswith("uniform:") else spec
        try:
            n = int(text)
        except ValueError:
            raise ConfigError(f"bad uniform baseline {spec!r}; expected uniform:<N>") from None
        if n < 1:
            raise ConfigError("uniform:<N> needs N >= 1")
        counts.append(n)
    return tuple(counts)


def _deltas(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad delta list {text!r}") from None


def _prepare_suite(args, say):
    scenarios = suite.load_suite(args.suite)
    if args.limit:
        scenarios = scenarios[: args.limit]
    if not scenarios:
        raise ConfigError("empty scenario suite")
    say(f"preparing {len(scenarios)} scenarios")
    return [suite.prepare(s) for s in scenarios]


def _table(rows, uniform):
    head = f"{'scenario':<18s} {'frames':>6s} {'stage1':>6s} {'stage2':>6s} {'kf':>4s} {'tokens':>6s}"
    head += "".join(f" {'u' + str(n):>6s}" for n in uniform)
    lines = [head, "-" * len(head)]
    for r in rows:
        c = r["cascade"]
        line = (
            f"{r['scenario']:<18s} {r['n_frames']:>6d} {c['n_pass_stage1']:>6d} {c['n_pass_stage2']:>6d} "
            f"{c['n_keyframes']:>4d} {c['n_token_extractions']:>6d}"
        )
        line += "".join(f" {r['uniform'][str(n)]['n_token_extractions']:>6d}" for n in uniform)
        lines.append(line)
    return "\n".join(lines)


def _summary(rows):
    def col(key):
        return np.array([r["cascade"][key] for r in rows], dtype=float)

    return {
        "n_scenarios": len(rows),
        "median_stage1_retention": float(np.median(col("stage1_retention"))),
        "median_extraction_fraction": float(np.median(col("extraction_fraction"))),
        "max_extraction_fraction": float(np.max(col("extraction_fraction"))),
        "median_keyframes": float(np.median(col("n_keyframes"))),
        "min_keyframes": int(np.min(col("n_keyframes"))),
        "max_keyframes": int(np.max(col("n_keyframes"))),
    }


def _sweep_report(prepared, cfg, deltas):
    runs = {p.scenario.name: p.run for p in prepared}
    return cas.sensitivity_sweep(cfg.cascade, deltas, runs)


def cmd_bench(args, cfg, say):
    uniform = _uniform_counts(args.uniform)
    clock = time.perf_counter
    tic = clock()
    prepared = _prepare_suite(args, say)
    timing = {"prepare_seconds": clock() - tic}
    tic = clock()
    rows = suite.bench(prepared, cfg.cascade, uniform)
    timing["cascade_seconds"] = clock() - tic
    report = {"meta": _meta("bench", cfg, suite=str(args.suite or "bundled")), "scenarios": rows}
    report["summary"] = _summary(rows)
    report["timing"] = timing
    if args.drift_seeds:
        tic = clock()
        report["stage1_drift"] = suite.stage1_drift(args.drift_seeds, seed=cfg.seed, noise=cfg.noise)
        timing["stage1_drift_seconds"] = clock() - tic
    if args.sweep:
        tic = clock()
        report["sweep"] = _sweep_report(prepared, cfg, _deltas(args.deltas))
        timing["sweep_seconds"] = clock() - tic
    path = io.write_json(_out(args, cfg, args.out, "bench.json"), report)
    say(_table(rows, uniform))
    s = report["summary"]
    say(
        f"median stage-1 retention {100 * s['median_stage1_retention']:.1f}%, "
        f"max extraction {100 * s['max_extraction_fraction']:.1f}%, "
        f"keyframes {s['min_keyframes']}-{s['max_keyframes']}"
    )
    if "stage1_drift" in report:
        d = report["stage1_drift"]
        say(f"stage-1 drift at {d['horizon_s']:g} s: median {d['median_displacement_error_m']:.4f} m over {d['n_seeds']} seeds")
    if "sweep" in report:
        say(f"sweep: median |keyframe change| {100 * report['sweep']['median_abs_keyframe_change']:.1f}%")
    say(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args, cfg, say):
    prepared = _prepare_suite(args, say)
    report = {"meta": _meta("sweep", cfg, suite=str(args.suite or "bundled"))}
    report.update(_sweep_report(prepared, cfg, _deltas(args.deltas)))
    path = io.write_json(_out(args, cfg, args.out, "sweep.json"), report)
    say(
        f"median |keyframe change| {100 * report['median_abs_keyframe_change']:.1f}%, "
        f"max {100 * report['max_abs_keyframe_change']:.1f}% over {len(report['runs'])} runs"
    )
    say(f"wrote {path}")
    return EXIT_OK


def _parse_dims(text):
    kw = {}
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"bad --dims entry {item!r}; expected key=value")
        try:
            kw[key.strip()] = int(value)
        except ValueError:
            raise ConfigError(f"--dims {key} must be an integer") from None
    unknown = set(kw) - set(CHECK_DIMS.to_dict())
    if unknown:
        raise ConfigError(f"unknown --dims keys {sorted(unknown)}")
    base = CHECK_DIMS.to_dict()
    if "d_model" in kw and "d_ff" not in kw:
        base["d_ff"] = None
    return FusionDims(**{**base, **kw})


def cmd_fuse_check(args, cfg, say):
    dims = _parse_dims(args.dims)
    seeds = tuple(cfg.seed + k for k in range(3))
    results = run_checks(dims, seeds, gradient_seeds=() if args.no_gradient else seeds[:1])
    for r in results:
        say(r.line(timing=args.timing))
    failed = [r.name for r in results if not r.passed]
    report = {
        "meta": _meta("fuse-check", cfg, dims=dims.to_dict()),
        "passed": not failed,
        "checks": [
            {"name": r.name, "passed": r.passed, "value": r.value, "tolerance": r.tolerance,
             **({"seconds": r.seconds} if args.timing else {})}
            for r in results
        ],
    }
    path = io.write_json(_out(args, cfg, args.out, "fuse_check.json"), report)
    say(f"{len(results) - len(failed)}/{len(results)} checks passed; wrote {path}")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def _globals(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="run configuration file")
    parser.add_argument("--seed", type=int, default=default, help="top-level seed (overrides the config)")
    parser.add_argument("--out-dir", default=default, help="output directory (overrides the config)")
    parser.add_argument(
        "--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False, help="no progress output"
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="egomotion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", parents=[common], help="write a synthetic scene and pose file")
    p.add_argument("--example", action="store_true", help="copy the bundled example instead of generating")
    p.add_argument("--style", choices=scene_sim.STYLES)
    p.add_argument("--duration", type=float)
    p.add_argument("--scene-seed", type=int, help="scene/trajectory seed (default: [scene] seed)")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("synth", parents=[common], help="synthesize an IMU CSV from a pose CSV")
    p.add_argument("--poses", required=True)
    p.add_argument("--rate", type=float)
    p.add_argument("--noise", default="default", help="default | zero | <config file with a [noise] section>")
    p.add_argument("--knot-dt", type=float)
    p.add_argument("--out", help="IMU CSV path (default <out-dir>/imu.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", parents=[common], help="select keyframes with the cascade")
    p.add_argument("--scene", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--out-keyframes")
    p.add_argument("--out-stats")
    p.add_argument("--token-dim", type=int, default=256)
    p.add_argument("--timing", action="store_true", help="include wall times (makes output run-dependent)")
    p.set_defaults(func=cmd_filter)

    for name, func, helptext in (
        ("bench", cmd_bench, "cascade vs uniform sampling over a scenario suite"),
        ("sweep", cmd_sweep, "threshold sensitivity sweep over a scenario suite"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--suite", help="suite manifest JSON (default: bundled suite)")
        p.add_argument("--limit", type=int, help="use only the first N scenarios")
        p.add_argument("--deltas", default="-0.5,0.5", help="relative threshold perturbations; write --deltas=-0.5,0.5 when the list starts with a minus")
        p.add_argument("--out")
        if name == "bench":
            p.add_argument("--uniform", action="append", help="uniform:<N> baseline (repeatable)")
            p.add_argument("--sweep", action="store_true", help="also run the sensitivity sweep")
            p.add_argument("--drift-seeds", type=int, default=100, help="seeds for the stage-1 drift report (0: skip)")
        p.set_defaults(func=func)

    p = sub.add_parser("fuse-check", parents=[common], help="fusion invariants and gradient checks")
    p.add_argument("--dims", help="overrides, e.g. d_model=16,n_heads=2,gru_hidden=8")
    p.add_argument("--no-gradient", action="store_true", help="skip the finite-difference check")
    p.add_argument("--timing", action="store_true", help="report per-check wall times")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    say = _Console(args.quiet)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return args.func(args, cfg, say)
    except OSError as exc:
        print(f"egomotion: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FusionError, ConfigError) as exc:
        print(f"egomotion: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
