"""``wcb`` command line: gen, run, calibrate, compare.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .metrics import calibrate_threshold, compare_policies, emit_outputs
from .model import DatasetError, Task, Volunteer, write_tasks_csv, write_volunteers_csv
from .sim import POLICIES, SimulationConfig, SyntheticSource, run_experiment

log = logging.getLogger("wcb")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def load_config(path: str | None) -> SimulationConfig:
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
    seed = os.environ.get("WCB_SEED")
    if seed is not None:
        data["rng_seed"] = int(seed)
    return SimulationConfig.from_dict(data)


def generate_dataset(config: SimulationConfig, n_tasks: int, n_volunteers: int, seed: int):
    """Synthetic rows with arrivals spread uniformly over the configured horizon."""
    source = SyntheticSource(config)
    rng = np.random.default_rng(seed)
    horizon = config.rounds * config.round_length

    t_stamps = np.sort(rng.random(n_tasks) * horizon)
    tasks = [
        Task(f"t{i:08d}", b, s, float(t_stamps[i]), d)
        for i, (b, s, d) in enumerate(source.task_attrs(rng, n_tasks))
    ]
    v_stamps = np.sort(rng.random(n_volunteers) * horizon)
    vols = [
        Volunteer(f"v{i:08d}", float(e), s, float(v_stamps[i]), float(v_stamps[i] + stay),
                  float(w), float(b), float(r))
        for i, (e, s, stay, w, b, r) in enumerate(source.volunteer_attrs(rng, n_volunteers))
    ]
    return tasks, vols


def cmd_gen(args) -> int:
    config = load_config(args.config)
    tasks, vols = generate_dataset(config, args.tasks, args.volunteers, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tasks_csv(out / "tasks.csv", tasks)
    write_volunteers_csv(out / "volunteers.csv", vols)
    print(f"wrote {len(tasks)} tasks and {len(vols)} volunteers to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.policy:
        config = config.replace(policy=args.policy)
    bundle = run_experiment(config)
    emit_outputs(bundle, args.out)
    for name, agg in bundle.summary().items():
        print(f"{config.policy:<10} {name:<17} mean={agg['mean']:.4f} median={agg['median']:.4f} iqr={agg['iqr']:.4f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = load_config(args.config)
    cal = calibrate_threshold(config, args.offset)
    result = {
        "threshold": cal.threshold,
        "median": cal.median,
        "iqr": cal.iqr,
        "pool_size": cal.pool_size,
        "offset": args.offset,
        "config": config.to_dict(),
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"threshold={cal.threshold:.6f} median={cal.median:.6f} iqr={cal.iqr:.6f} n={cal.pool_size}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(args.config)
    comparison = compare_policies(config)
    emit_outputs(comparison.bundles, args.out, comparison=comparison)
    for policy, agg in comparison.aggregates.items():
        cells = " ".join(f"{k}={v['mean']:.4f}" for k, v in agg.items())
        print(f"{policy:<10} {cells}")
    for band in comparison.bands:
        status = "PASS" if band["passed"] else "FAIL"
        print(f"[{status}] {band['band']}: observed {json.dumps(band['observed'], sort_keys=True)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic tasks.csv / volunteers.csv pair")
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", type=int, required=True)
    p.add_argument("--volunteers", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run one policy and write round reports")
    p.add_argument("--config")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="derive a retention threshold from pooled satisfaction")
    p.add_argument("--config")
    p.add_argument("--offset", type=float, default=0.05)
    p.add_argument("--out", help="optional JSON file for the result")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare", help="run all policies on paired seeds")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"wcb: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, DatasetError) as exc:
        print(f"wcb: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
