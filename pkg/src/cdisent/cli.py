import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence

from rich.console import Console
from rich.table import Table

from .harness import ConfigError, ExperimentConfig, ExperimentKind, ExperimentResult, resolve_threads, run_experiment
from .logger import LogLevel, set_log_level
from .utils import atomic_write_text
from .verify import CheckOutcome, default_verifier

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

SUMMARY_METRICS = ("n", "loss", "acc_s", "acc_t", "drop", "recon", "d", "ioss", "irs", "uc", "cg", "mic_mean", "lc")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment config (JSON)")
    common.add_argument("--seed", type=int, help="Run a single seed instead of the config's seed list")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--threads", type=int, help="Worker threads (the CDISENT_THREADS variable takes precedence)")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="Report format")
    common.add_argument(
        "--log-level", choices=[level.name.lower() for level in LogLevel], default="info", help="Console verbosity"
    )

    parser = argparse.ArgumentParser(prog="cdisent", description="Confounder-aware disentanglement experiments")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")
    for kind in ExperimentKind:
        commands.add_parser(kind.value, parents=[common], help=f"Run the {kind.value} experiment")
    commands.add_parser("verify", parents=[common], help="Run the property checks over the exact oracles")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(kind=args.command)
    if config.kind != args.command:
        raise ConfigError(f"Config {args.config} describes a '{config.kind}' experiment, not '{args.command}'")
    if args.seed is not None:
        config.seeds = [args.seed]
    if args.out is not None:
        config.out_dir = str(args.out)
    return config


def summary_table(result: ExperimentResult) -> Table:
    metrics = [m for m in SUMMARY_METRICS if any(f"{m}_mean" in row for row in result.summary)]
    table = Table(title=f"{result.config.kind} ({result.config.hash})", show_header=True, header_style="bold magenta")
    for column in ("variant", "setting", "ok/failed", *metrics):
        table.add_column(column)
    for row in result.summary:
        cells = [row["variant"], row["setting"] or "-", f"{row['n_ok']}/{row['n_failed']}"]
        for m in metrics:
            mean, std = row.get(f"{m}_mean"), row.get(f"{m}_std")
            cells.append("-" if mean is None else f"{mean:.4f} ± {std:.4f}")
        table.add_row(*cells)
    return table


def verify_table(outcomes: Sequence[CheckOutcome]) -> Table:
    table = Table(title="Property checks", show_header=True, header_style="bold magenta")
    for column in ("check", "result", "seconds", "detail"):
        table.add_column(column)
    for o in outcomes:
        table.add_row(o.name, "[green]pass[/green]" if o.passed else "[red]FAIL[/red]", f"{o.seconds:.2f}", o.detail)
    return table


def _write_verify(outcomes: Sequence[CheckOutcome], out: Path, fmt: str):
    rows = [asdict(o) for o in outcomes]
    if fmt == "json":
        atomic_write_text(out / "verify.json", json.dumps(rows, indent=2))
        return
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_text(out / "verify.csv", buffer.getvalue())


def run_verify(args: argparse.Namespace, console: Console) -> int:
    outcomes = default_verifier().run(seed=args.seed or 0)
    console.print(verify_table(outcomes))
    if args.out is not None:
        _write_verify(outcomes, args.out, args.format)
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_FAILED


def cli(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code (0 ok, 1 failed runs, 2 usage or config error)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = LogLevel[args.log_level.upper()]
    set_log_level(level)
    console = Console()
    if args.seed is not None and args.seed < 0:
        print(f"cdisent: config error: --seed must be >= 0, got {args.seed}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "verify":
        return run_verify(args, console)

    try:
        config = load_config(args)
        threads = resolve_threads(args.threads, config.threads)
        result = run_experiment(config, threads, level)
    except ConfigError as e:
        print(f"cdisent: config error: {e.message}", file=sys.stderr)
        return EXIT_CONFIG

    paths = result.write(args.format)
    console.print(summary_table(result))
    for path in paths:
        console.print(f"wrote {path}")
    if result.n_failed:
        console.print(f"[red]{result.n_failed} of {len(result.records)} runs failed[/red]")
        return EXIT_FAILED
    return EXIT_OK


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
