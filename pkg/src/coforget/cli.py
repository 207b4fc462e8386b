"""Command-line entry point: validate configs, run scenarios, emit reports.

    coforget run --scenario byzantine_f1 --epochs 100 --seed 7 --out results/
    coforget validate my-run.cfg

Each run writes report.json (summary + per-epoch array), epochs.csv (flat
numeric columns), audit.jsonl (one line per per-memory consensus record), and
metadata.csv (the store's final persisted snapshot). Identical config and
seed produce byte-identical outputs. Exit codes: 0 success, 2 config error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .core import (
    ConfigError,
    FaultKind,
    FaultProfile,
    ProtocolConfig,
    config_violations,
    parse_config_text,
    protocol_config_from_items,
)
from .epoch import SimulationResult, run_simulation
from .transport import NetworkConfig, network_config_from_items
from .workload import WorkloadSpec, default_agents, workload_spec_from_items

SCENARIOS = ("baseline_no_faults", "byzantine_f1", "cache_profile", "custom")

# byzantine_f1 models a lossy network alongside the faulty agent; this drop
# rate lands the mean consensus success rate near the reference ~0.92.
BYZANTINE_DROP_PROB = 0.0065

# cache_profile steepens access skew so the hot set fits the 100-item cache.
CACHE_PROFILE_SKEW = 1.3

_FAULTY_AGENT = "planner-2"


def _setup_logging() -> None:
    level_name = os.environ.get("COFORGET_LOG", "").strip()
    if not level_name:
        return
    level = getattr(logging, level_name.upper(), None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _read_config_file(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config_text(text)


def _split_namespaces(items: dict) -> tuple[dict, dict, dict]:
    """Bare keys configure the protocol; workload./network. feed those specs."""
    protocol: dict = {}
    workload: dict = {}
    network: dict = {}
    for key, value in items.items():
        if key.startswith("workload."):
            workload[key[len("workload.") :]] = value
        elif key.startswith("network."):
            network[key[len("network.") :]] = value
        elif "." in key:
            raise ConfigError(f"unknown config namespace in key {key!r}")
        else:
            protocol[key] = value
    return protocol, workload, network


def _compose_run(
    scenario: str,
    seed: int,
    file_items: tuple[dict, dict, dict],
) -> tuple[ProtocolConfig, WorkloadSpec, NetworkConfig, tuple]:
    """Scenario preset, overlaid by the config file, stamped with the run seed.

    The run seed wins over any seed keys in the file so --seeds sweeps stay
    meaningful; everything else in the file overrides the preset.
    """
    protocol: dict = {}
    workload: dict = {}
    network: dict = {}
    faults: dict[str, FaultProfile] = {}
    if scenario == "byzantine_f1":
        kind = FaultKind.SILENT_HALF if seed % 2 == 0 else FaultKind.EQUIVOCATE_HALF
        faults[_FAULTY_AGENT] = FaultProfile(kind=kind, coin_seed=seed)
        network["drop_prob"] = BYZANTINE_DROP_PROB
    elif scenario == "cache_profile":
        workload["access_skew"] = CACHE_PROFILE_SKEW

    file_protocol, file_workload, file_network = file_items
    protocol.update(file_protocol)
    workload.update(file_workload)
    network.update(file_network)
    protocol["rng_seed"] = seed
    workload["seed"] = seed
    network["seed"] = seed

    cfg = protocol_config_from_items(protocol)
    spec = workload_spec_from_items(workload)
    net_cfg = network_config_from_items(network)
    return cfg, spec, net_cfg, default_agents(faults)


def _write_outputs(out_dir: Path, scenario: str, seed: int, epochs: int, result: SimulationResult) -> None:
    report = {
        "scenario": scenario,
        "seed": seed,
        "epochs_requested": epochs,
        "summary": asdict(result.summary),
        "baseline_footprints": result.baseline_footprints,
        "epochs": [asdict(r) for r in result.reports],
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    numeric_columns = [
        "epoch_index",
        "memories_start",
        "memories_end",
        "additions",
        "proposed",
        "consensus_reached",
        "consensus_failed",
        "deleted",
        "deletion_rate",
        "elapsed_virtual_s",
        "cache_hits",
        "cache_misses",
    ]
    with open(out_dir / "epochs.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(numeric_columns)
        for r in result.reports:
            writer.writerow([getattr(r, column) for column in numeric_columns])

    with open(out_dir / "audit.jsonl", "w", encoding="utf-8") as handle:
        for r in result.reports:
            for entry in r.per_memory_audit:
                line = {"epoch_index": r.epoch_index, **asdict(entry)}
                line["votes"] = dict(entry.votes)
                handle.write(json.dumps(line, sort_keys=True) + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    if args.epochs < 1:
        raise ConfigError(f"--epochs must be >= 1, got {args.epochs}")
    if args.seeds is not None and args.seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")
    if args.scenario == "custom" and args.config is None:
        raise ConfigError("scenario 'custom' requires --config")
    file_items = _split_namespaces(_read_config_file(args.config)) if args.config else ({}, {}, {})

    seeds = [args.seed + i for i in range(args.seeds)] if args.seeds else [args.seed]
    multi = args.seeds is not None
    for seed in seeds:
        out_dir = args.out / f"seed-{seed}" if multi else args.out
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg, spec, net_cfg, agents = _compose_run(args.scenario, seed, file_items)
        result = run_simulation(
            cfg,
            spec,
            args.epochs,
            agents=agents,
            net_cfg=net_cfg,
            strict_pbft=args.strict_pbft_success,
            snapshot_path=out_dir / "metadata.csv",
        )
        _write_outputs(out_dir, args.scenario, seed, args.epochs, result)
        summary = result.summary
        print(
            f"scenario={args.scenario} seed={seed} epochs={args.epochs} "
            f"footprint_reduction={summary.footprint_reduction:.4f} "
            f"pbft_success={summary.pbft_success_rate:.4f} "
            f"cache_hit_rate={summary.cache_hit_rate:.4f} -> {out_dir}"
        )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    items = _read_config_file(args.config)
    protocol_items, workload_items, network_items = _split_namespaces(items)
    problems: list[str] = []
    try:
        cfg = protocol_config_from_items(protocol_items, validate=False)
    except ConfigError as exc:
        problems.append(str(exc))
    else:
        problems.extend(message for _, message in config_violations(cfg))
    try:
        workload_spec_from_items(workload_items)
    except ConfigError as exc:
        problems.append(str(exc))
    try:
        network_config_from_items(network_items)
    except ConfigError as exc:
        problems.append(str(exc))
    if problems:
        for problem in problems:
            print(problem)
        return 2
    print(f"config valid: {args.config}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coforget",
        description="Deterministic simulator for consensus-gated collective forgetting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation scenario and write reports")
    run.add_argument("--scenario", choices=SCENARIOS, default="baseline_no_faults")
    run.add_argument("--config", type=Path, default=None, help="flat key = value config file")
    run.add_argument("--epochs", type=int, default=100)
    run.add_argument("--seed", type=int, default=0, help="run seed; overrides seed keys in the config file")
    run.add_argument(
        "--seeds",
        type=int,
        default=None,
        metavar="K",
        help="run K seeds (seed..seed+K-1), one sibling output directory each",
    )
    run.add_argument("--out", type=Path, default=Path("coforget-out"))
    run.add_argument(
        "--strict-pbft-success",
        action="store_true",
        help="exclude epochs with zero consensus instances from the success rate",
    )

    validate = sub.add_parser("validate", help="check a config file and list every violation")
    validate.add_argument("config", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
