"""Command-line entrypoint orchestrating the pipeline.

Subcommands: train-target, train-surrogate, attack, ablation, sweep, report.
Every command reads an optional JSON config (--config) and applies flag
overrides on top; flags win. Exit code 0 means the pipeline completed —
attack failure rates are data, not errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import MISSING, fields
from pathlib import Path

from .config import ExperimentConfig
from .data import EvalSet, dataset_available
from .harness import ABLATION_VARIANTS
from .oracle import QueryLedger
from . import pipeline, report as report_mod

_LIST_FIELDS = {"fractions"}
_STR_PARSED_FIELDS = {"delta"}  # accepts fraction literals, config parses


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        default_txt = "" if f.default is MISSING else f" (default: {f.default})"
        if f.type == "bool" or isinstance(f.default, bool):
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif f.name in _LIST_FIELDS:
            parser.add_argument(flag, type=str, default=None, help="comma-separated" + default_txt)
        elif f.name in _STR_PARSED_FIELDS:
            parser.add_argument(flag, type=str, default=None, help="number or p/q" + default_txt)
        elif isinstance(f.default, int) and not isinstance(f.default, bool):
            parser.add_argument(flag, type=int, default=None, help=default_txt.strip(" ()"))
        elif isinstance(f.default, float):
            parser.add_argument(flag, type=float, default=None, help=default_txt.strip(" ()"))
        else:
            parser.add_argument(flag, type=str, default=None, help=default_txt.strip(" ()"))


def _build_config(args, parser, required=("dataset", "arch")) -> ExperimentConfig:
    overrides = {}
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            if f.name in _LIST_FIELDS and isinstance(value, str):
                value = [v for v in value.split(",") if v]
            overrides[f.name] = value
    mapping = {}
    if args.config:
        mapping = json.loads(Path(args.config).read_text())
    for name in required:
        if name not in overrides and name not in mapping:
            parser.error(f"--{name.replace('_', '-')} is required (flag or config file)")
    try:
        return ExperimentConfig.from_mapping(mapping, overrides)
    except (ValueError, TypeError) as e:
        parser.error(str(e))


def _check_data(cfg: ExperimentConfig) -> None:
    if not dataset_available(cfg.dataset):
        raise SystemExit(
            f"dataset {cfg.dataset!r} is not available (files missing under the "
            "data directory and download failed); set GSBA_DATA_DIR or fetch it first"
        )


def cmd_train_target(args, parser) -> int:
    cfg = _build_config(args, parser)
    _check_data(cfg)
    workdir = Path(cfg.output_dir)
    model = pipeline.ensure_target(cfg, workdir)
    acc = model.meta.get("test_accuracy")
    print(f"checkpoint: {pipeline.target_path(cfg, workdir)}")
    print(f"test accuracy: {acc:.4f}" if acc is not None else "test accuracy: n/a")
    return 0


def cmd_train_surrogate(args, parser) -> int:
    cfg = _build_config(args, parser)
    _check_data(cfg)
    workdir = Path(cfg.output_dir)
    target = pipeline.ensure_target(cfg, workdir)
    log_path = Path(workdir) / "training_log.ndjson"
    variant = args.variant
    bundle = pipeline.ensure_bundle(cfg, workdir, target, variant=variant, log_path=str(log_path))
    print(f"bundle: {pipeline.bundle_path(cfg, workdir, variant)}")
    print(f"queries used: {bundle.ledger.used} of {bundle.ledger.budget}")
    return 0


def cmd_attack(args, parser) -> int:
    cfg = _build_config(args, parser)
    _check_data(cfg)
    workdir = Path(cfg.output_dir)
    out = pipeline.claim_output_dir(workdir / f"attack_{cfg.setting}_{cfg.oracle_mode}", cfg.overwrite)
    rep = pipeline.gsba_report(cfg, workdir)
    report_mod.write_report(out, rep, name=f"gsba-{cfg.setting}")
    print(report_mod.summary_table({f"gsba-{cfg.setting}": rep}), end="")
    print(f"report: {out}")
    return 0


def cmd_ablation(args, parser) -> int:
    cfg = _build_config(args, parser)
    _check_data(cfg)
    workdir = Path(cfg.output_dir)
    out = pipeline.claim_output_dir(workdir / f"ablation_{cfg.setting}_{cfg.oracle_mode}", cfg.overwrite)
    reports = pipeline.ablation_reports(cfg, workdir)
    baseline = pipeline.baseline_report(
        cfg, workdir, bundle=None
    )
    reports = {"surrogate+pgd": baseline, **reports}
    report_mod.write_comparison(out, reports)
    print(report_mod.summary_table(reports), end="")
    print(f"report: {out}")
    return 0


def cmd_sweep(args, parser) -> int:
    cfg = _build_config(args, parser)
    _check_data(cfg)
    workdir = Path(cfg.output_dir)
    out = pipeline.claim_output_dir(workdir / f"sweep_{cfg.setting}_{cfg.oracle_mode}", cfg.overwrite)
    results = pipeline.sweep_reports(cfg, workdir)
    report_mod.write_sweep(out, results)
    for fraction, rep in results:
        report_mod.write_report(out / f"fraction_{fraction:g}", rep, name=f"budget x{fraction:g}")
    print("\n".join(f"fraction {f:g}: ASR {100 * r.asr:.1f}%" for f, r in results))
    print(f"report: {out}")
    return 0


def cmd_report(args, parser) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        parser.error(f"no such run directory: {run_dir}")
    rendered = report_mod.rerender(run_dir)
    for path in rendered:
        print(f"rendered: {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gsba", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    parsers = {}
    for name, fn in (
        ("train-target", cmd_train_target),
        ("train-surrogate", cmd_train_surrogate),
        ("attack", cmd_attack),
        ("ablation", cmd_ablation),
        ("sweep", cmd_sweep),
    ):
        p = sub.add_parser(name)
        _add_config_flags(p)
        p.set_defaults(fn=fn)
        parsers[name] = p
    parsers["train-surrogate"].add_argument(
        "--variant", choices=ABLATION_VARIANTS, default="+div", help="loss-term ablation variant"
    )

    p_report = sub.add_parser("report", help="re-render figures and tables for a finished run")
    p_report.add_argument("run_dir", type=str)
    p_report.set_defaults(fn=cmd_report)
    parsers["report"] = p_report

    args = parser.parse_args(argv)
    active = parsers[args.command]
    try:
        return args.fn(args, active)
    except pipeline.OutputExists as e:
        print(str(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
