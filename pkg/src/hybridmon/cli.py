"""Command-line interface.

Exit codes: 0 success, 1 domain error (invalid config, failed run),
2 usage error or missing file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import (
    EntropyRow,
    entropy_table_csv,
    entropy_table_text,
    msdnd_evaluate,
    msdnd_from_simulation,
    observer_domain,
)
from .config import ConfigError, ScenarioConfig, load_config, validate_config
from .harness import focus_channel, run_montecarlo, run_scenario
from .scenarios import builtin_path

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class _Usage(Exception):
    pass


def _load(path: str) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        p = builtin_path(path) or p
    if not p.is_file():
        raise _Usage(f"no such config file: {path}")
    return load_config(p)


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = _replace_seed(cfg, args.seed)
    if args.no_monitor:
        cfg = cfg.with_monitor(False)
    report = run_scenario(cfg)
    out = Path(args.out)
    report.write(out)
    if args.events:
        report.events.write(args.events)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _replace_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(cfg, seed=seed)


def _cmd_montecarlo(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = _replace_seed(cfg, args.seed)
    rows = run_montecarlo(cfg, args.n, trials=args.trials, workers=args.workers)
    text = entropy_table_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(entropy_table_text(rows) + "\n")
    return EXIT_OK


def _cmd_msdnd(args) -> int:
    cfg = _load(args.config)
    topo = validate_config(cfg)
    cid = args.channel or focus_channel(cfg, topo)
    if cid is None or cid not in {c.id for c in topo.channels}:
        raise ConfigError(f"unknown channel {cid!r}")
    ch = topo.channel(cid)
    enabled = cfg.monitor.enabled and not args.no_monitor
    model = msdnd_from_simulation(topo, enabled, ch, cfg.invariants, cfg.monitor.domain)
    result = msdnd_evaluate(model, args.observer or observer_domain(topo, ch))
    print(result.line())
    return EXIT_OK


def _cmd_entropy(args) -> int:
    if any(n < 0 for n in args.n):
        raise _Usage("decoy counts must be >= 0")
    rows = [EntropyRow.analytic(n) for n in args.n]
    if args.out:
        Path(args.out).write_text(entropy_table_csv(rows))
    print(entropy_table_text(rows))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args.config)
    topo = validate_config(cfg)
    print(f"ok: {len(topo.plant_entities())} plant entities, {len(topo.plant_links())} links, "
          f"{len(topo.channels)} channels, {len(cfg.attacks)} attacks")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridmon", description="Hybrid-monitor smart-grid CPS simulator.")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    r = sub.add_parser("run", help="run a scenario; writes report.txt, report.csv, entropy.csv, events.jsonl")
    r.add_argument("config", help="scenario file (or a builtin name, e.g. s1_ransomware)")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--events", help="also write the event log to this path")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--no-monitor", action="store_true", help="disable the hybrid monitor")
    r.set_defaults(func=_cmd_run)

    m = sub.add_parser("montecarlo", help="single-epoch attack games vs the closed form")
    m.add_argument("config")
    m.add_argument("--n", type=int, nargs="+", required=True, help="decoy counts")
    m.add_argument("--trials", type=int, help="trials per n (default: config trials)")
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--seed", type=int)
    m.add_argument("--out", help="write the CSV table here")
    m.set_defaults(func=_cmd_montecarlo)

    d = sub.add_parser("msdnd", help="MSDND verdict for a channel")
    d.add_argument("config")
    d.add_argument("--no-monitor", action="store_true")
    d.add_argument("--channel", help="channel id (default: the config's focus channel)")
    d.add_argument("--observer", help="observer domain (default: the receiver's domain)")
    d.set_defaults(func=_cmd_msdnd)

    e = sub.add_parser("entropy", help="closed-form entropy table")
    e.add_argument("--n", type=int, nargs="+", required=True)
    e.add_argument("--out", help="write the CSV table here")
    e.set_defaults(func=_cmd_entropy)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"hybridmon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"hybridmon: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
