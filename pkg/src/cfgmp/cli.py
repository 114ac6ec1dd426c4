"""``cfgmp`` command-line front end.

Exit codes: 0 success, 1 failed property check (or a divergence under
``--strict``), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import CompareConfig, RunConfig, load_config
from .diagnostics import sample_quality
from .errors import CfgMpError, ConfigError, DivergenceError
from .outputs import (
    COMPARE_COLUMNS,
    jsonable,
    record_to_json,
    trajectory_svg,
    write_csv,
    write_json,
    write_samples_csv,
)
from .samplers import generate_batch, initial_noise, sample
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def conditional_fraction(cloud, samples, label):
    """Share of samples whose nearest label centroid is ``label``."""
    names = list(cloud.label_names)
    cents = np.stack([cloud.centroid(n) for n in names])
    d = np.sum((samples[:, None, :] - cents[None]) ** 2, axis=-1)
    return float(np.mean(np.argmin(d, axis=1) == names.index(label)))


def _quality(cloud, samples, label):
    finite = samples[np.all(np.isfinite(samples), axis=1)]
    if len(finite) == 0:
        return {"energy_distance": None, "mean_min_distance": None, "conditional_fraction": 0.0}
    q = sample_quality(finite, cloud, label)
    return {
        "energy_distance": q.energy_distance,
        "mean_min_distance": q.mean_min_distance,
        "conditional_fraction": conditional_fraction(cloud, finite, label),
    }


def run_simulation(cfg: RunConfig, base_dir=None):
    """Build world and fields from ``cfg`` and sample; returns (cloud, batch)."""
    cloud = cfg.build_world(base_dir)
    sampler = cfg.sampler.build()
    cond, uncond = cfg.build_fields(cloud, sampler.t_min)
    return cloud, generate_batch(sampler, cond, uncond, cfg.label)


def summary_document(cfg, cloud, batch):
    return {
        "config": cfg.model_dump(mode="json"),
        "dimension": cloud.dimension,
        "label": cfg.label,
        "chains": len(batch.records),
        "divergences": batch.divergences,
        "gap_profile": batch.profile.to_json(),
        "quality": _quality(cloud, batch.samples, cfg.label),
    }


def cmd_simulate(args):
    cfg = load_config(args.config, RunConfig)
    out = dict(cfg.output)
    if args.out is not None:
        out["dir"] = args.out
    if args.format is not None:
        out["format"] = args.format
    cfg = cfg.model_copy(update={"output": type(cfg.output)(**out)})
    cloud, batch = run_simulation(cfg, Path(args.config).parent)

    dest = Path(cfg.output.dir)
    dest.mkdir(parents=True, exist_ok=True)
    fmt = cfg.output.format
    if fmt in ("csv", "both"):
        write_samples_csv(dest / "samples.csv", batch.samples)
    if fmt in ("json", "both"):
        write_json(dest / "samples.json", {"samples": batch.samples})
    write_json(dest / "summary.json", summary_document(cfg, cloud, batch))
    if cfg.sampler.record == "full-trajectory":
        write_json(dest / "trajectory.json", {
            "config": cfg.model_dump(mode="json"),
            "records": [record_to_json(r) for r in batch.records],
        })
    if cfg.output.svg and cloud.dimension == 2:
        svg = trajectory_svg(cloud, batch.records, cfg.label, max_chains=cfg.output.svg_chains)
        (dest / "trajectory.svg").write_text(svg)

    print(f"wrote {dest} ({len(batch.records)} chains, {batch.divergences} divergences)")
    if batch.divergences and args.strict:
        print(f"error: {batch.divergences} divergent projection steps", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args):
    checks = run_suite(args.suite, args.seed)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def compare_rows(cfg: CompareConfig, base_dir=None):
    cloud = cfg.build_world(base_dir)
    rows = []
    for settings in cfg.runs:
        sampler = settings.build()
        cond, uncond = cfg.build_fields(cloud, sampler.t_min)
        start = time.perf_counter()
        batch = generate_batch(sampler, cond, uncond, cfg.label)
        wall = time.perf_counter() - start
        q = _quality(cloud, batch.samples, cfg.label)
        prof = batch.profile
        finals = prof.final_mean[np.isfinite(prof.final_mean)]
        plus = settings.method == "cfg-mp-plus"
        rows.append({
            "method": settings.method,
            "w": settings.w,
            "N": settings.steps,
            "K": settings.K,
            "m": settings.aa.m if plus else None,
            "beta": settings.aa.beta if plus else None,
            "energy_distance": q["energy_distance"],
            "mean_min_distance": q["mean_min_distance"],
            "mean_final_gap": float(np.mean(finals)) if finals.size else None,
            "mean_r": prof.r_all if np.isfinite(prof.r_all) else None,
            "divergences": batch.divergences,
            "wall_time": wall,
        })
    return rows


def cmd_compare(args):
    cfg = load_config(args.config, CompareConfig)
    rows = compare_rows(cfg, Path(args.config).parent)
    dest = Path(args.out if args.out is not None else cfg.output.dir)
    dest.mkdir(parents=True, exist_ok=True)
    write_csv(dest / "compare.csv", COMPARE_COLUMNS,
              ([row[c] for c in COMPARE_COLUMNS] for row in rows))
    write_json(dest / "compare.json", {"config": cfg.model_dump(mode="json"), "rows": rows})
    for row in rows:
        print("  ".join(f"{c}={row[c]}" for c in COMPARE_COLUMNS))
    return EXIT_OK


def cmd_trajectory(args):
    cfg = load_config(args.config, RunConfig)
    if not 0 <= args.chain < cfg.sampler.chains:
        raise ConfigError(f"chain: must lie in [0, {cfg.sampler.chains}), got {args.chain}")
    cloud = cfg.build_world(Path(args.config).parent)
    sampler = replace(cfg.sampler.build(), record="full-trajectory", workers=1)
    cond, uncond = cfg.build_fields(cloud, sampler.t_min)
    # blocks are independent, so running only the chain's block reproduces it
    start = (args.chain // sampler.block_size) * sampler.block_size
    block = initial_noise(sampler, cloud.dimension)[start:start + sampler.block_size]
    records = sample(sampler, cond, uncond, cfg.label, block)
    rec = records[args.chain - start]
    doc = record_to_json(rec)
    doc["chain"] = args.chain
    json.dump(jsonable(doc), sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cfgmp",
        description="Manifold-projected classifier-free guidance on analytic point-cloud worlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a batch of chains and write outputs")
    p.add_argument("--config", required=True, help="run config (JSON)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--format", choices=["csv", "json", "both"], help="sample table format")
    p.add_argument("--strict", action="store_true", help="exit 1 if any projection diverged")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a seeded property suite")
    p.add_argument("suite", choices=[*SUITES, "all"])
    p.add_argument("--seed", type=int, default=0, help="suite seed (unsigned 64-bit)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="run several sampler configs over one world")
    p.add_argument("--config", required=True, help="compare config (JSON)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trajectory", help="dump one chain's full trajectory as JSON")
    p.add_argument("--config", required=True, help="run config (JSON)")
    p.add_argument("--chain", type=int, required=True, help="chain index")
    p.set_defaults(func=cmd_trajectory)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if not 0 <= getattr(args, "seed", 0) < 2**64:
        parser.print_usage(sys.stderr)
        print("cfgmp: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (CfgMpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
