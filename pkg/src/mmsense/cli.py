"""Command line entry point: ``mmsense run`` and ``mmsense summarize``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from mmsense.config import load_config
from mmsense.errors import ConfigError
from mmsense.harness import (
    CdfSummary,
    csv_metric_samples,
    output_summaries,
    read_steps_csv,
    run_scenario,
    write_outputs,
)


def _parse_steps(text: str | None):
    if text is None or text == "all":
        return None
    try:
        return {int(s) for s in text.split(",") if s.strip()}
    except ValueError:
        raise ConfigError(f"--dump-periodograms: expected comma-separated step indices, got '{text}'") from None


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.bandwidth is not None:
        config = config.with_bandwidth(args.bandwidth)
    if args.algorithms:
        try:
            config = config.with_algorithms([a.strip().lower() for a in args.algorithms.split(",") if a.strip()])
        except ValueError as exc:
            raise ConfigError(f"--algorithms: {exc}") from exc
    out = Path(args.out)
    dump_dir = out / "periodograms" if args.dump_periodograms is not None else None
    records = run_scenario(config, dump_dir=dump_dir, dump_steps=_parse_steps(args.dump_periodograms))
    written = write_outputs(records, output_summaries(records), out)
    print(f"{len(records)} steps, {len(config.algorithms)} algorithm(s) -> {written[0]}")
    return 0


def _cmd_summarize(args) -> int:
    if not 0 < args.percentile <= 100:
        raise ConfigError("--percentile must be in (0, 100]")
    rows = read_steps_csv(Path(args.input) / "steps.csv")
    if not rows:
        raise ConfigError(f"{args.input}/steps.csv has no data rows")
    p = args.percentile / 100.0
    algorithms = [args.algorithm] if args.algorithm else sorted({r["algorithm"] for r in rows})
    for algorithm in algorithms:
        samples = csv_metric_samples(rows, args.metric, algorithm)
        try:
            summary = CdfSummary.from_samples(samples)
        except ValueError:
            print(f"{algorithm}\tno samples")
            continue
        print(f"{algorithm}\t{args.metric}\tp{args.percentile:g}\t{summary.percentile(p):.4f} m\t(n={len(summary)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmsense", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write steps.csv and CDF files")
    run.add_argument("--config", required=True, help="scenario TOML file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--bandwidth", type=float, help="override bandwidth [Hz]")
    run.add_argument("--algorithms", help="comma-separated subset of ml,map,nlls")
    run.add_argument(
        "--dump-periodograms",
        nargs="?",
        const="all",
        metavar="STEPS",
        help="dump periodogram maps (all steps, or a comma-separated list of steps)",
    )
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="percentile of an error metric from a run directory")
    summ.add_argument("--in", dest="input", required=True, help="directory holding steps.csv")
    summ.add_argument("--metric", choices=["positioning", "distance"], default="positioning")
    summ.add_argument("--percentile", type=float, default=90.0)
    summ.add_argument("--algorithm", help="restrict to one algorithm")
    summ.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"mmsense: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
