"""Command line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
3 not found.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .bench import ScenarioConfig, reports_to_csv, sweep, write_reports
from .chain import NetworkModel
from .config import CliConfig
from .contract import pack_key
from .errors import BridgeChainError, ConfigError, InvalidScenario, MixedAxes, NotFound
from .ingest import DamageLevel, DamageScenario, dataset_filename, synthesize_dataset
from .runner import run_pipeline
from .store import load_run

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_NOT_FOUND = 0, 1, 2, 3


class _UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- generate ---------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.sensors < 2:
        raise _UsageError(f"--sensors must be >= 2, got {args.sensors}")
    if args.samples < 64:
        raise _UsageError(f"--samples must be >= 64, got {args.samples}")
    if args.files < 1:
        raise _UsageError("--files must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = DamageScenario.for_level(args.level, args.sensors)
    blobs = synthesize_dataset(scenario, args.files, args.sensors, args.samples, args.seed,
                               bridge_id=args.bridge, sample_rate_hz=args.rate)
    files = []
    for i, blob in enumerate(blobs):
        name = dataset_filename(args.bridge, args.level, args.seed, i)
        (out / name).write_bytes(blob)
        files.append({"name": name, "bytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest()})
    manifest = {
        "bridge_id": args.bridge,
        "level": scenario.level.value,
        "severity": scenario.severity,
        "affected_sensors": sorted(scenario.affected_sensors),
        "sensors": args.sensors,
        "samples_per_file": args.samples,
        "sample_rate_hz": args.rate,
        "seed": args.seed,
        "files": files,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out / "manifest.json").write_text(text, encoding="utf-8")
    _print_json({"manifest": str(out / "manifest.json"), "files": len(files),
                 "manifest_sha256": hashlib.sha256(text.encode()).hexdigest()})
    return EXIT_OK


# -- run --------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = CliConfig.load(args.config)
    run_pipeline(cfg, out_dir=args.out or cfg.out_dir)
    return EXIT_OK


# -- query ------------------------------------------------------------------

def _block_json(block, lib: int) -> dict:
    d = json.loads(block.log_line())
    d["irreversible"] = block.height <= lib
    return d


def cmd_query(args) -> int:
    chain, runtime = load_run(args.dir)
    if args.kind == "account":
        acct = chain.get_account(args.key)
        _print_json({"name": acct.name, "created_at": acct.created_at})
    elif args.kind == "block":
        key = int(args.key) if args.key.isdigit() else args.key
        _print_json(_block_json(chain.get_block(key), chain.lib_height))
    elif args.kind == "transaction":
        tx, block, final = chain.get_transaction(args.key)
        d = tx.to_dict()
        try:
            d["payload"] = json.loads(tx.payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            pass
        _print_json({"transaction": d, "block_height": block.height, "block_id": block.id,
                     "irreversible": final})
    else:
        table = runtime.contract(args.key).table
        if args.primary_key is not None:
            rows = [table.find(args.primary_key).row]
        elif args.epoch is not None:
            rows = table.epoch_rows(args.epoch)
            if args.group is not None:
                rows = [table.find(pack_key(args.epoch, args.group)).row]
        else:
            rows = list(table.rows())
        _print_json({"contract": args.key, "count": len(rows), "rows": [r.to_dict() for r in rows]})
    return EXIT_OK


# -- bench ------------------------------------------------------------------

def cmd_bench(args) -> int:
    axes = {"producers": args.nodes, "sensors": args.sensors}
    given = {k: v for k, v in axes.items() if v is not None}
    if len(given) != 1:
        raise _UsageError("give exactly one of --nodes or --sensors")
    axis, values = next(iter(given.items()))
    if not values:
        raise _UsageError(f"--{'nodes' if axis == 'producers' else 'sensors'} list is empty")
    if len(set(values)) < 2:
        raise _UsageError("a sweep needs at least two distinct values")
    base = ScenarioConfig(
        files_per_epoch=args.files,
        epochs=args.epochs,
        with_ni=not args.without_ni,
        seed=args.seed,
        samples_per_file=args.samples,
        network=NetworkModel(args.delay_ms, args.bandwidth),
    )
    try:
        cfgs = [dataclasses.replace(base, **{axis: v}) for v in values]
    except InvalidScenario as exc:
        raise _UsageError(str(exc)) from exc
    result = sweep(cfgs)
    if args.out:
        write_reports(result.reports, args.out)
    sys.stdout.write(reports_to_csv(result.reports))
    print(json.dumps({"axis": result.axis, "latency_increasing": result.latency_increasing,
                      "confirmed_nondecreasing": result.confirmed_nondecreasing}, sort_keys=True),
          file=sys.stderr)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridgechain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic sensor CSVs and a manifest")
    g.add_argument("--level", choices=[lvl.value for lvl in DamageLevel], default="H")
    g.add_argument("--files", type=int, default=10)
    g.add_argument("--sensors", type=int, default=51)
    g.add_argument("--samples", type=int, default=256)
    g.add_argument("--rate", type=int, default=256)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--bridge", default="b01")
    g.add_argument("--out", default="data")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="calibrate, then monitor epochs on the simulated chain")
    r.add_argument("config", help="JSON config file")
    r.add_argument("--out", help="output directory (overrides out_dir)")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("query", help="read a persisted run")
    q.add_argument("kind", choices=["account", "transaction", "block", "table"])
    q.add_argument("key")
    q.add_argument("--dir", default="run_out")
    q.add_argument("--epoch", type=int)
    q.add_argument("--group", type=int)
    q.add_argument("--primary-key", type=int)
    q.set_defaults(func=cmd_query)

    b = sub.add_parser("bench", help="sweep producers or sensors and emit CSV")
    b.add_argument("--nodes", type=_int_list)
    b.add_argument("--sensors", type=_int_list)
    b.add_argument("--files", type=int, default=4)
    b.add_argument("--epochs", type=int, default=3)
    b.add_argument("--samples", type=int, default=256)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--delay-ms", type=float, default=5.0)
    b.add_argument("--bandwidth", type=float, default=100e6)
    b.add_argument("--without-ni", action="store_true")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (_UsageError, ConfigError, MixedAxes) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotFound as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except BridgeChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
