"""Command-line front end.

    skipsim run demo.cfg --out out --store store --threads 0
    skipsim replay demo.cfg --override Malicious=0.0
    skipsim cache-list
    skipsim cache-verify

Exit codes: 0 success, 1 config error, 2 cache corruption or missing snapshot.
``run`` regenerates a corrupted snapshot (with a warning); ``replay`` and
``cache-verify`` report it and exit 2.
Diagnostics go to stderr; reports go only to files under ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, parse_config, serialize_config
from .engine import RunResult, SnapshotMissing, replay, run
from .evaluators import report_csv, report_json
from .snapshot import LogCorruption, SnapshotStore

log = logging.getLogger("skipgraph_sim.cli")

EXIT_OK, EXIT_CONFIG, EXIT_CACHE = 0, 1, 2


def _override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected K=V, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skipsim", description="Skip Graph overlay simulator")
    p.add_argument("--store", default="./store", help="snapshot root (default ./store)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_run_flags(sp):
        sp.add_argument("config", type=Path)
        sp.add_argument("--out", type=Path, default=Path("./out"), help="report directory (default ./out)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes, 0 = one per CPU")
        sp.add_argument("--store", default=argparse.SUPPRESS, help="snapshot root (default ./store)")
        return sp

    with_run_flags(sub.add_parser("run", help="simulate a config, reusing (or repairing) cached snapshots"))
    rp = with_run_flags(sub.add_parser("replay", help="replay cached snapshots under overridden parameters"))
    rp.add_argument("--override", type=_override, action="append", default=[], metavar="K=V")
    sub.add_parser("cache-list", help="list cached snapshot keys")
    sub.add_parser("cache-verify", help="check every cached snapshot against its manifest")
    return p


def write_reports(result: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    extra = {
        "config": serialize_config(result.config),
        "cache_key": result.config.cache_key.digest(),
        "events_hash": [{"topology_index": o.index, "sha256": o.events_hash} for o in result.outcomes],
    }
    (out / "report.csv").write_bytes(report_csv(result.reports).encode("utf-8"))
    (out / "report.json").write_bytes(report_json(result.reports, extra).encode("utf-8"))
    log.info("reports written to %s", out)


def _load_config(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    result = run(config, args.store, args.threads)
    write_reports(result, args.out)
    return EXIT_OK


def _cmd_replay(args) -> int:
    config = _load_config(args.config)
    result = replay(config, dict(args.override), args.store, args.threads)
    write_reports(result, args.out)
    return EXIT_OK


def _cmd_cache_list(args) -> int:
    store = SnapshotStore(args.store)
    for d, key_text in store.entries():
        fields = " ".join(key_text.split())
        count = sum(1 for p in d.iterdir() if p.is_dir() and (p / "manifest.txt").is_file())
        print(f"{d.name}\t{count}\t{fields}")
    return EXIT_OK


def _cmd_cache_verify(args) -> int:
    problems = SnapshotStore(args.store).verify_all()
    for line in problems:
        log.error("%s", line)
    if problems:
        return EXIT_CACHE
    log.info("store %s: all snapshots intact", args.store)
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "replay": _cmd_replay,
    "cache-list": _cmd_cache_list,
    "cache-verify": _cmd_cache_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (LogCorruption, SnapshotMissing) as exc:
        log.error("cache error: %s", exc)
        return EXIT_CACHE


if __name__ == "__main__":
    sys.exit(main())
