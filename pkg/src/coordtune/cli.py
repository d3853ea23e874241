"""``coordtune`` command line: tune, eval, sweep-table, channel-stats.

Exit status: 0 success, 1 search failure, 2 invalid input or configuration,
3 joint-search budget exceeded, 4 rerun from a manifest did not reproduce it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .channel import channel_from_json, channel_to_json
from .channel import preset as channel_preset
from .config import CampaignConfig, ConfigError, load_config, load_document, merge_document, parse_override, set_path
from .grid import AXIS_ORDER, INITIAL_VALUES, jsonable
from .harness import channel_stats, compare_outputs, find_sweep_reports, load_manifest, run_campaign
from .objective import SystemConfig, evaluate
from .report import render_table7
from .tuner import BudgetExceeded, SearchError

EXIT_OK, EXIT_SEARCH, EXIT_INPUT, EXIT_BUDGET, EXIT_MISMATCH = 0, 1, 2, 3, 4


def _err(msg: str) -> None:
    print(f"coordtune: error: {msg}", file=sys.stderr)


def _split_overrides(extra: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Unknown ``--a.b=value`` arguments are config overrides; anything else is an error."""
    out = []
    for item in extra:
        if item.startswith("--") and "=" in item:
            out.append(item[2:])
        else:
            parser.error(f"unrecognized argument {item!r}")
    return out


def _read_json_arg(text: str, what: str) -> dict:
    path = Path(text)
    if not text.lstrip().startswith("{") and path.exists():
        return load_document(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: {exc.msg} at column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{what}: expected a JSON object")
    return doc


# --------------------------------------------------------------------------- tune


def cmd_tune(args, overrides: list[str]) -> int:
    try:
        if args.manifest:
            manifest = load_manifest(args.manifest)
            doc = merge_document(manifest["config"], cli=overrides + list(args.set))
            cfg = CampaignConfig.from_dict(doc, args.method, args.system)
            if args.output_dir is None:
                args.output_dir = str(Path(args.manifest).parent / "rerun")
        else:
            manifest = None
            cfg = load_config(args.config, overrides + list(args.set), methods=args.method, systems=args.system)
        cfg = cfg.restricted(args.max_steps, args.output_dir)
        if args.seed is not None:
            cfg = replace(cfg, search=replace(cfg.search, base_seed=args.seed))
        if args.workers is not None:
            cfg = replace(cfg, search=replace(cfg.search, workers=args.workers))
    except (ConfigError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT

    try:
        result = run_campaign(cfg, log=lambda msg: print(msg, file=sys.stderr))
    except BudgetExceeded as exc:
        _err(f"{exc}; joint search refused (raise search.joint_cap or use a smaller grid)")
        return EXIT_BUDGET
    except SearchError as exc:
        _err(str(exc))
        return EXIT_SEARCH

    print(f"wrote {result.output_dir}")
    if manifest is not None:
        if manifest["config_hash"] != result.manifest["config_hash"]:
            print("config differs from the manifest; outputs not compared", file=sys.stderr)
            return EXIT_OK
        bad = compare_outputs(manifest["outputs"], result.manifest["outputs"])
        total = len(manifest["outputs"])
        if bad:
            _err(f"{len(bad)} of {total} outputs differ from the manifest: {bad}")
            return EXIT_MISMATCH
        print(f"reproduced {total}/{total} hashed outputs")
    return EXIT_OK


# --------------------------------------------------------------------------- eval


def _system_from_args(args, overrides: list[str]) -> SystemConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.system in cfg.systems:
            base = cfg.systems[args.system].to_json()
        else:
            base = {"channel": channel_to_json(channel_preset(args.system))}
    else:
        base = {"channel": channel_to_json(channel_preset(args.system))}
    doc = merge_document(base, environ={}, cli=overrides)
    try:
        return SystemConfig.from_json(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from None


def cmd_eval(args, overrides: list[str]) -> int:
    try:
        point = dict(INITIAL_VALUES)
        if args.point:
            given = _read_json_arg(args.point, "--point")
            unknown = set(given) - set(AXIS_ORDER)
            if unknown:
                raise ConfigError(f"--point: unknown hyperparameters {sorted(unknown)}; known: {list(AXIS_ORDER)}")
            point.update(given)
        for item in args.param:
            path, value = parse_override(item)
            if len(path) != 1 or path[0] not in AXIS_ORDER:
                raise ConfigError(f"--param: unknown hyperparameter {'.'.join(path)!r}; known: {list(AXIS_ORDER)}")
            point[path[0]] = value
        system = _system_from_args(args, overrides + list(args.set))
        if args.seed is not None:
            system = replace(system, base_seed=args.seed)
        point = {k: point[k] for k in AXIS_ORDER}
        result = evaluate(point, system, args.trace_dir)
    except (ConfigError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    doc = result.to_json(timing=True)
    doc["point"] = {k: jsonable(v) for k, v in point.items()}
    doc["system"] = system.to_json()
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------- sweep-table


def cmd_sweep_table(args, overrides: list[str]) -> int:
    if overrides:
        _err(f"sweep-table takes no overrides, got {overrides}")
        return EXIT_INPUT
    try:
        runs = find_sweep_reports(args.run_dir)
        if args.system:
            runs = [r for r in runs if r[0] in args.system]
        md, table_csv = render_table7(runs, step=args.step)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    prefix = Path(args.out) if args.out else Path(args.run_dir) / "table7"
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.md").write_text(md, encoding="utf-8")
    Path(f"{prefix}.csv").write_text(table_csv, encoding="utf-8")
    print(md, end="")
    return EXIT_OK


# --------------------------------------------------------------------------- channel-stats


def cmd_channel_stats(args, overrides: list[str]) -> int:
    try:
        doc = channel_to_json(channel_preset(args.channel))
        for item in overrides + list(args.set):
            path, value = parse_override(item)
            set_path(doc, path, value)
        if doc.get("kind") == "awgn" and "es_n0_db" in doc:
            doc.pop("noise_variance", None)
        model = channel_from_json(doc)
        out_dir = args.out or f"channel_stats_{args.channel}"
        res = channel_stats(model, args.n, args.seed, out_dir, args.bins)
    except (ConfigError, ValueError, TypeError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(f"channel: {model.kind}")
    print(f"n: {res['n']}")
    if model.kind == "fso":
        print(f"mean: {res['mean']:.6f}")
        print(f"scintillation_index: {res['scintillation_index']:.6f} (analytic {res['scintillation_index_analytic']:.6f})")
        print(f"ks_statistic: {res['ks_statistic']:.6f} (p = {res['ks_pvalue']:.3g})")
    else:
        if model.kind == "fiber":
            print(f"sigma2_ase: {res['sigma2_ase']:.6e} W")
            print(f"sigma2_nlin: {res['sigma2_nlin']:.6e} W")
            print(f"snr_db: {res['snr_db']:.4f}")
        print(f"requested_variance: {res['requested_variance']:.6e}")
        print(f"empirical_variance: {res['empirical_variance']:.6e}")
        print(f"relative_error: {res['relative_error']:+.4%}")
    for m in res["moments"]:
        print(f"moment {m['k']}: empirical {m['empirical']:.6g} analytic {m['analytic']:.6g}")
    print(f"wrote {out_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coordtune",
        description="Grid-search tuning of an MLP symbol detector over FSO and fiber channels.",
        epilog="Config overrides: --section.key=value or -s section.key=value (CLI > COORDTUNE_* env > file).",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log every search step")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tune", help="run a search campaign")
    t.add_argument("--config", help="campaign JSON document")
    t.add_argument("--manifest", help="rerun the configuration recorded in a manifest and compare hashes")
    t.add_argument("--method", action="append", help="restrict to this method (repeatable)")
    t.add_argument("--system", action="append", help="restrict to this system (repeatable)")
    t.add_argument("--max-steps", type=int, help="steps per method (default 1)")
    t.add_argument("--seed", type=int, help="search base seed")
    t.add_argument("--workers", type=int, help="threads per sweep")
    t.add_argument("--output-dir", help="campaign directory")
    t.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    t.set_defaults(func=cmd_tune)

    e = sub.add_parser("eval", help="train and score one hyperparameter point")
    e.add_argument("--system", default="fso", help="preset name or a system of --config (default fso)")
    e.add_argument("--config", help="campaign JSON to take the system from")
    e.add_argument("--point", help="JSON object or file; missing axes take the initial values")
    e.add_argument("-p", "--param", action="append", default=[], metavar="AXIS=VALUE", help="hyperparameter override")
    e.add_argument("--seed", type=int, help="base seed")
    e.add_argument("--trace-dir", help="write the loss trace here")
    e.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE", help="system override")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep-table", help="render the per-axis table from existing reports")
    w.add_argument("run_dir", help="campaign directory")
    w.add_argument("--step", type=int, default=1)
    w.add_argument("--system", action="append")
    w.add_argument("--out", help="output prefix (default <run_dir>/table7)")
    w.set_defaults(func=cmd_sweep_table)

    c = sub.add_parser("channel-stats", help="sampler diagnostics for a channel")
    c.add_argument("--channel", choices=("fso", "fiber", "awgn"), default="fso")
    c.add_argument("-n", type=int, default=10**6, help="samples (>= 1000)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--bins", type=int, default=100)
    c.add_argument("--out", help="output directory (default channel_stats_<channel>)")
    c.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE", help="channel parameter override")
    c.set_defaults(func=cmd_channel_stats)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = _split_overrides(extra, parser)
    return args.func(args, overrides)


if __name__ == "__main__":
    sys.exit(main())
