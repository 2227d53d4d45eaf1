"""Command-line harness.

Subcommands::

    bsvgd run --config paper-gauss25-bsvgd --seed 7 --out runs/g25
    bsvgd wasserstein a.csv b.csv
    bsvgd report runs/g25-svgd runs/g25-bsvgd --out report/
    bsvgd presets [NAME]

Exit codes: 0 ok, 2 usage or config error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    metrics_columns,
    read_json,
    read_metrics,
    write_json,
    write_metrics,
    write_trace,
)
from .bsvgd import BsvgdConfig, initial_cloud, run_bsvgd
from .config import PRESET_CONFIGS, ConfigError, RunConfig, load_config, parse_override
from .core import Color, ParticleCloud, SeededRng, read_snapshot
from .kernels import warm_up
from .metrics import trajectory_report, wasserstein2
from .svgd import DivergenceError, svgd_trace

log = logging.getLogger("branched_svgd")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3


def execute_run(config: RunConfig, out_dir: str | Path) -> dict:
    """Run one configured experiment and write its artifacts to ``out_dir``.

    Raises:
        DivergenceError: if the particle dynamics blow up.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    warm_up()
    started = time.perf_counter()
    model = config.target()
    svgd_cfg = config.svgd_config()
    clock = config.get("timing.clock")
    snapshot_every = config.get("svgd.snapshot_every")
    root = SeededRng(config.seed)
    init_rng, metrics_rng = root.spawn(2)

    summary: dict = {}
    if config.algorithm == "svgd":
        count, std = config.get("svgd.initial.count"), config.get("svgd.initial.std")
        cloud = ParticleCloud(std * init_rng.normal((count, model.dimension)))
        entries, report = svgd_trace(cloud, model, svgd_cfg, snapshot_every=snapshot_every)
        summary.update(iterations_used=report.iterations_used,
                       final_displacement=report.final_displacement,
                       converged=report.iterations_used < svgd_cfg.max_iterations)
    else:
        count, std = config.get("bsvgd.initial.count"), config.get("bsvgd.initial.std")
        bcfg = BsvgdConfig(
            svgd=svgd_cfg,
            laws=config.laws(),
            max_population=config.get("bsvgd.max_population"),
            initial_cloud=initial_cloud(count, std, model.dimension, init_rng),
            seed=config.seed,
            precision=config.precision(),
            final_refine=config.get("bsvgd.final_refine"),
        )
        trace = run_bsvgd(model, bcfg, snapshot_every=snapshot_every)
        entries = trace.entries
        summary.update(svgd_iterations=trace.svgd_iterations,
                       levels=sum(1 for e in entries if e.phase == "post-branch"))

    algorithm_time = entries[-1].wall_time
    write_trace(out_dir, entries, clock)

    if config.get("metrics.enabled"):
        trajectory = trajectory_report(
            entries,
            lambda n, rng: model.sample(n, rng),
            config.get("metrics.replicates"),
            metrics_rng,
            time_of=(lambda e: e.work) if clock == "work" else (lambda e: e.wall_time),
        )
        write_metrics(out_dir / "metrics.csv", trajectory)
        summary["final_w"] = trajectory[-1].w_mean

    final = entries[-1]
    payload = {
        "algorithm": config.algorithm,
        "seed": config.seed,
        "version": __version__,
        "config": config.raw,
        "config_sha256": config.sha256(),
        "config_source": config.source,
        "clock": clock,
        "algorithm_wall_time_s": algorithm_time,
        "total_wall_time_s": time.perf_counter() - started,
        "final_sample_size": final.sample_size,
        "final_work": final.work,
        "spines_in_final": final.cloud.count(Color.SPINE),
        "python": platform.python_version(),
        "numpy": np.__version__,
        **summary,
    }
    write_json(out_dir / "run.json", payload)
    return payload


def _run_replica(args: tuple[dict, str | None, str | None, str]) -> int:
    raw, source, text, out = args
    config = RunConfig(raw, source, text)
    try:
        execute_run(config, out)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        overrides = dict(parse_override(item) for item in args.set or [])
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.algorithm is not None:
            overrides["algorithm"] = args.algorithm
        if args.snapshot_every is not None:
            overrides["svgd.snapshot_every"] = args.snapshot_every
        if args.clock is not None:
            overrides["timing.clock"] = args.clock
        if args.no_metrics:
            overrides["metrics.enabled"] = False
        if overrides:
            config = config.with_overrides(overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.replicas < 1:
        print("error: --replicas must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    stem = Path(args.config).name.removesuffix(".toml")
    out = Path(args.out) if args.out else Path("runs") / f"{stem}-{config.algorithm}-seed{config.seed}"
    if args.replicas == 1:
        try:
            payload = execute_run(config, out)
        except DivergenceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        msg = f"{config.algorithm}: {payload['final_sample_size']} particles -> {out}"
        if "final_w" in payload:
            msg += f" (final W = {payload['final_w']:.6g})"
        print(msg)
        return EXIT_OK

    jobs = []
    for k in range(args.replicas):
        raw = dict(config.raw)
        raw["seed"] = config.seed + k
        jobs.append((raw, config.source, config.text, str(out / f"replica_{k:03d}")))
    workers = min(args.replicas, os.cpu_count() or 1)
    if workers == 1:
        codes = [_run_replica(job) for job in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            codes = list(pool.map(_run_replica, jobs))
    print(f"{config.algorithm}: {args.replicas} replicas -> {out}")
    return max(codes)


def cmd_wasserstein(args) -> int:
    try:
        a = read_snapshot(args.file_a)
        b = read_snapshot(args.file_b)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if len(a) != len(b):
        print(f"error: empirical Wasserstein requires equal sample sizes ({len(a)} vs {len(b)})",
              file=sys.stderr)
        return EXIT_USAGE
    if a.dimension != b.dimension:
        print(f"error: dimension mismatch ({a.dimension} vs {b.dimension})", file=sys.stderr)
        return EXIT_USAGE
    print(f"{wasserstein2(a, b):.12g}")
    return EXIT_OK


REPORT_META = ["algorithm", "run", "seed", "clock", "svgd_convergence_time_s"]


def build_report(run_dirs: list[Path]) -> tuple[list[dict], dict]:
    """Merge ``metrics.csv`` of several runs into one table plus a summary.

    The SVGD convergence time is the time of the last snapshot of an SVGD
    run (the moment its stopping rule fired). For every BSVGD run the
    summary records its W estimate at that time: the last snapshot no
    later than the convergence time.
    """
    runs = []
    for d in run_dirs:
        metrics_path = d / "metrics.csv"
        if not metrics_path.is_file():
            raise FileNotFoundError(f"{metrics_path}: missing metrics.csv")
        meta = read_json(d / "run.json") if (d / "run.json").is_file() else {}
        runs.append((d, meta, read_metrics(metrics_path)))

    svgd_times = [traj[-1].wall_time for _, meta, traj in runs if meta.get("algorithm") == "svgd" and len(traj)]
    marker = min(svgd_times) if svgd_times else None
    width = max((len(p.replicates) for _, _, traj in runs for p in traj), default=0)

    rows = []
    summary: dict = {"svgd_convergence_time_s": marker, "runs": []}
    for d, meta, traj in runs:
        algorithm = meta.get("algorithm", "unknown")
        for p in traj:
            row = {
                "algorithm": algorithm,
                "run": d.name,
                "seed": meta.get("seed", ""),
                "clock": meta.get("clock", ""),
                "svgd_convergence_time_s": "" if marker is None else marker,
                "phase_index": p.phase_index,
                "wall_time_s": p.wall_time,
                "sample_size": p.sample_size,
                "w_mean": p.w_mean,
            }
            for a in range(width):
                row[f"w_rep_{a + 1}"] = p.replicates[a] if a < len(p.replicates) else ""
            rows.append(row)
        entry = {
            "run": d.name,
            "path": str(d),
            "algorithm": algorithm,
            "seed": meta.get("seed"),
            "final_wall_time_s": traj[-1].wall_time if len(traj) else None,
            "final_sample_size": traj[-1].sample_size if len(traj) else None,
            "final_w": traj[-1].w_mean if len(traj) else None,
        }
        if marker is not None and algorithm == "bsvgd":
            before = [p for p in traj if p.wall_time <= marker]
            entry["w_at_svgd_convergence"] = before[-1].w_mean if before else None
            entry["sample_size_at_svgd_convergence"] = before[-1].sample_size if before else None
        summary["runs"].append(entry)
    return rows, summary


def cmd_report(args) -> int:
    run_dirs = [Path(p) for p in args.run_dirs]
    try:
        rows, summary = build_report(run_dirs)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max((int(k.split("_")[-1]) for r in rows for k in r if k.startswith("w_rep_")), default=0)
    columns = REPORT_META + metrics_columns(width)
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    write_json(out / "report.json", summary)
    for entry in summary["runs"]:
        line = f"{entry['run']}: {entry['algorithm']} final W = {entry['final_w']:.6g} (n={entry['final_sample_size']})"
        if entry.get("w_at_svgd_convergence") is not None:
            line += f"; W at SVGD convergence = {entry['w_at_svgd_convergence']:.6g}"
        print(line)
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        key = args.name.removesuffix(".toml")
        if key not in PRESET_CONFIGS:
            print(f"error: unknown preset {args.name!r}; known: {', '.join(sorted(PRESET_CONFIGS))}",
                  file=sys.stderr)
            return EXIT_USAGE
        sys.stdout.write(PRESET_CONFIGS[key])
        return EXIT_OK
    for name in sorted(PRESET_CONFIGS):
        print(f"### {name}")
        sys.stdout.write(PRESET_CONFIGS[name])
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsvgd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run SVGD or BSVGD and write artifacts")
    run.add_argument("--config", required=True, help="TOML file or preset name")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--algorithm", choices=["svgd", "bsvgd"])
    run.add_argument("--replicas", type=int, default=1, help="independent seeds seed..seed+N-1")
    run.add_argument("--snapshot-every", type=int, help="snapshot every k SVGD iterations")
    run.add_argument("--clock", choices=["wall", "work"],
                     help="time column source: monotonic seconds or deterministic work count")
    run.add_argument("--no-metrics", action="store_true", help="skip the Wasserstein estimates")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config key, e.g. --set bsvgd.max_population=200")
    run.set_defaults(func=cmd_run)

    w = sub.add_parser("wasserstein", help="empirical 2-Wasserstein distance of two snapshot CSVs")
    w.add_argument("file_a")
    w.add_argument("file_b")
    w.set_defaults(func=cmd_wasserstein)

    rep = sub.add_parser("report", help="merge metrics of completed runs")
    rep.add_argument("run_dirs", nargs="+")
    rep.add_argument("--out", default=".", help="directory for report.csv and report.json")
    rep.set_defaults(func=cmd_report)

    pre = sub.add_parser("presets", help="print embedded preset configs")
    pre.add_argument("name", nargs="?")
    pre.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
