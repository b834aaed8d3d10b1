"""Command-line surface: run backtests and ablation sweeps, render metric
reports, and validate data files.

Commands: ``backtest``, ``ablate``, ``report``, ``validate-data``. The run
config is one YAML file with nested sections (an annotated example ships in
``docs/``); endpoint credentials come from an environment variable, never
from flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import yaml

from . import metrics
from .backtest import (
    BacktestResult,
    ConfigError,
    config_from_mapping,
    load_data_bundle,
    read_equity_curve,
    run,
    write_bundle,
)
from .market_data import MarketDataError, load_filings, load_news, load_ohlcv

ABLATION_AXES = ("rs", "fip", "mn", "mtr")
REPORT_FORMATS = ("csv", "json", "markdown")
REPORT_CSV_HEADER = "name,cr_pct,sharpe,mdd_pct"


class CliError(RuntimeError):
    pass


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            mapping = yaml.safe_load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise CliError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(mapping, dict):
        raise CliError(f"config {path} must be a mapping")
    return mapping


def _run_from_mapping(mapping: dict, outdir: str | None) -> tuple[BacktestResult, str]:
    config = config_from_mapping(mapping)
    data = load_data_bundle(mapping)
    result = run(config, data)
    target = outdir or config.output_dir
    if not target:
        raise CliError("no output directory: set output_dir in the config or pass --out")
    write_bundle(result, target, mapping)
    return result, target


def cmd_backtest(args) -> int:
    mapping = _load_config_file(args.config)
    result, target = _run_from_mapping(mapping, args.out)
    print(
        f"{result.ticker}: {len(result.equity_curve)} trading days, "
        f"CR {result.summary.cr_pct:.2f}%, SR {result.summary.sharpe:.3f}, "
        f"MDD {result.summary.mdd_pct:.2f}% -> {target}"
    )
    return 0


def _variant_rows(axes: list[str]) -> list[tuple[str, dict]]:
    """One row per single-axis-off variant plus the full configuration."""
    rows = []
    for axis in axes:
        flags = {a: True for a in ABLATION_AXES}
        flags[axis] = False
        rows.append((f"no_{axis}", flags))
    rows.append(("full", {a: True for a in ABLATION_AXES}))
    return rows


def cmd_ablate(args) -> int:
    mapping = _load_config_file(args.config)
    axes = [a.strip() for a in args.axes.split(",")] if args.axes else list(ABLATION_AXES)
    for axis in axes:
        if axis not in ABLATION_AXES:
            raise CliError(f"unknown ablation axis {axis!r}; choose from {ABLATION_AXES}")
    outdir = args.out or mapping.get("output_dir")
    if not outdir:
        raise CliError("no output directory: set output_dir in the config or pass --out")
    data = load_data_bundle(mapping)
    rows = []
    for name, flags in _variant_rows(axes):
        variant_mapping = dict(mapping)
        variant_mapping["ablation"] = flags
        config = config_from_mapping(variant_mapping)
        result = run(config, data)
        bundle_dir = os.path.join(outdir, name)
        write_bundle(result, bundle_dir, variant_mapping)
        rows.append(
            {
                "name": name,
                **{a: flags[a] for a in ABLATION_AXES},
                "cr_pct": result.summary.cr_pct,
                "sharpe": result.summary.sharpe,
                "mdd_pct": result.summary.mdd_pct,
            }
        )
    text = _render_table(
        rows, ["name", *ABLATION_AXES, "cr_pct", "sharpe", "mdd_pct"], args.format
    )
    report_path = os.path.join(outdir, f"ablation_report.{_ext(args.format)}")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def cmd_report(args) -> int:
    rows = []
    for bundle_dir in args.bundles:
        summary_path = os.path.join(bundle_dir, "summary.json")
        try:
            with open(summary_path, encoding="utf-8") as fh:
                summary = json.load(fh)
            curve = read_equity_curve(bundle_dir)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read bundle {bundle_dir}: {exc}") from exc
        recomputed = metrics.summarize(curve)
        for key, fresh in (
            ("cr_pct", recomputed.cr_pct),
            ("sharpe", recomputed.sharpe),
            ("mdd_pct", recomputed.mdd_pct),
        ):
            stored = summary.get(key)
            if stored is None or abs(stored - fresh) > 1e-9 * max(1.0, abs(fresh)):
                raise CliError(
                    f"{bundle_dir}: summary.json {key}={stored!r} does not match "
                    f"the equity curve (recomputed {fresh!r})"
                )
        rows.append(
            {
                "name": os.path.basename(os.path.normpath(bundle_dir)),
                "cr_pct": recomputed.cr_pct,
                "sharpe": recomputed.sharpe,
                "mdd_pct": recomputed.mdd_pct,
            }
        )
    text = _render_table(rows, ["name", "cr_pct", "sharpe", "mdd_pct"], args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def cmd_validate_data(args) -> int:
    series = load_ohlcv(args.ohlcv)
    print(
        f"ohlcv: {args.ohlcv}: {len(series)} bars, "
        f"{series.dates[0].isoformat()}..{series.dates[-1].isoformat()}"
    )
    if args.news:
        items, skipped = load_news(args.news)
        print(f"news: {args.news}: {len(items)} records, {skipped} malformed line(s) skipped")
    if args.filings:
        docs, skipped = load_filings(args.filings)
        print(f"filings: {args.filings}: {len(docs)} records, {skipped} malformed line(s) skipped")
    return 0


def _ext(fmt: str) -> str:
    return {"csv": "csv", "json": "json", "markdown": "md"}[fmt]


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render_table(rows: list[dict], columns: list[str], fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_format_value(row[c]) for c in columns))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    # markdown
    def cell(row, c):
        value = row[c]
        if isinstance(value, bool):
            return "on" if value else "off"
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    lines = [
        "| " + " | ".join(columns) + " |",
        "| " + " | ".join("---" for _ in columns) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(cell(row, c) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rstrader",
        description="Risk-sensitive trading backtest engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bt = sub.add_parser("backtest", help="run one backtest from a config file")
    p_bt.add_argument("--config", required=True, help="YAML run config")
    p_bt.add_argument("--out", help="result bundle directory (overrides config output_dir)")
    p_bt.set_defaults(func=cmd_backtest)

    p_ab = sub.add_parser("ablate", help="run the full config plus single-axis-off variants")
    p_ab.add_argument("--config", required=True, help="YAML run config")
    p_ab.add_argument("--axes", help="comma-separated subset of rs,fip,mn,mtr (default: all)")
    p_ab.add_argument("--out", help="sweep output directory")
    p_ab.add_argument("--format", choices=REPORT_FORMATS, default="markdown")
    p_ab.set_defaults(func=cmd_ablate)

    p_rep = sub.add_parser("report", help="render CR/SR/MDD for result bundles")
    p_rep.add_argument("bundles", nargs="+", help="bundle directories")
    p_rep.add_argument("--format", choices=REPORT_FORMATS, default="markdown")
    p_rep.add_argument("--out", help="write the table to a file as well as stdout")
    p_rep.set_defaults(func=cmd_report)

    p_val = sub.add_parser("validate-data", help="parse and validate data files")
    p_val.add_argument("--ohlcv", required=True)
    p_val.add_argument("--news")
    p_val.add_argument("--filings")
    p_val.set_defaults(func=cmd_validate_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, MarketDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
