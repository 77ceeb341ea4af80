"""Command line front end.

Subcommands::

    switchpred simulate <config>            closed-loop run, CSV + summary
    switchpred design   <config>            synthesis report + design.json
    switchpred margins  <config>            margin report (text + JSON)
    switchpred ablate   <config>            dwell-knowledge on/off comparison
    switchpred sweep    <config> --deltas   delay-mismatch sweep
    switchpred reproduce-paper [--seeds N]  bundled benchmark reproduction

Exit codes: 0 success, 2 configuration error, 3 reproduction golden-check
failure (reported, not raised).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, margins
from .design import synthesize
from .harness import ConfigError

CONFIG_ERROR = 2
GOLDEN_FAILURE = 3


def _out_dir(args, cfg) -> Path:
    if args.output is not None:
        out = Path(args.output)
    else:
        out = Path(cfg.get("output", {}).get("dir", "out")) if cfg else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    scenario = harness.scenario_from_config(cfg, Path(args.config).parent)
    out = _out_dir(args, cfg)
    summary = harness.run(scenario, out_dir=out)
    (out / f"{scenario.label}_summary.json").write_text(
        json.dumps(summary.to_json_dict(), indent=2))
    print(f"J = {summary.J:.6g}")
    print(f"terminal |X(T)| = {summary.terminal_state_norm:.6g} "
          f"(stable: {summary.stable})")
    if np.isfinite(summary.max_residual_bound_ratio):
        print(f"max residual/bound ratio = {summary.max_residual_bound_ratio:.6g}")
    print(f"trajectory: {summary.trajectory_path}")
    return 0


def _cmd_design(args) -> int:
    cfg = harness.load_config(args.config)
    spec, poles, q_list, norm = harness.design_from_config(cfg)
    design = synthesize(spec, poles, q_list, norm)
    out = _out_dir(args, cfg)
    design.to_json(out / "design.json")
    report = design.report()
    (out / "design.txt").write_text(report + "\n")
    print(report)
    return 0


def _cmd_margins(args) -> int:
    cfg = harness.load_config(args.config)
    spec = harness._plant_from_config(cfg)
    design = harness.resolve_design(cfg, spec, Path(args.config).parent)
    if design is None:
        raise ConfigError("margins needs a design section (parameters or file)")
    norm = design.norm_kind
    dwell = harness._dwell_from_config(cfg)
    msec = cfg.get("margins", {}) or {}
    eps_used = msec.get("eps_used", 0.0)
    eps_used = design.eps if eps_used == "design" else float(eps_used)
    raw_bar = msec.get("eps_bar_used")
    eps_bar_used = (design.eps_bar if raw_bar == "design"
                    else None if raw_bar is None else float(raw_bar))
    consts = margins.MarginConstants.from_design(design, spec.D, norm)
    report = margins.rate_pipeline(design, consts, eps_used,
                                   dwell.tau_d, dwell.tau_bar_d, eps_bar_used)
    out = _out_dir(args, cfg)
    report.to_json(out / "margins.json")
    text = report.report()
    (out / "margins.txt").write_text(text + "\n")
    print(text)
    return 0


def _cmd_ablate(args) -> int:
    cfg = harness.load_config(args.config)
    scenario = harness.scenario_from_config(cfg, Path(args.config).parent)
    out = _out_dir(args, cfg)
    with_dwell, without = harness.ablate_dwell(scenario, out_dir=out)
    payload = {"with_dwell": with_dwell.to_json_dict(),
               "without_dwell": without.to_json_dict()}
    (out / "ablation.json").write_text(json.dumps(payload, indent=2))
    print(f"J with dwell knowledge    = {with_dwell.J:.6g}")
    print(f"J without dwell knowledge = {without.J:.6g}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    scenario = harness.scenario_from_config(cfg, Path(args.config).parent)
    try:
        deltas = [float(tok) for tok in args.deltas.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad --deltas list: {exc}") from exc
    if not deltas:
        raise ConfigError("--deltas must list at least one perturbation")
    out = _out_dir(args, cfg)
    rows = harness.mismatch_sweep(scenario, deltas, out_dir=out)
    payload = []
    print(f"{'delta':>8s} {'delay_used':>11s} {'J':>12s} {'stable':>7s}")
    for row in rows:
        s = row["summary"]
        print(f"{row['delta']:8.3f} {row['delay_used']:11.6g} "
              f"{s.J:12.5g} {str(s.stable):>7s}")
        payload.append({"delta": row["delta"], "delay_used": row["delay_used"],
                        "snap_error": row["snap_error"],
                        "summary": s.to_json_dict()})
    (out / "sweep.json").write_text(json.dumps(payload, indent=2))
    return 0


def _cmd_reproduce(args) -> int:
    out = Path(args.output) if args.output is not None else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    report = harness.reproduce_paper(seeds=args.seeds, out_dir=out)
    print(report.text())
    return 0 if report.passed else GOLDEN_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchpred",
        description="Averaged predictor feedback for switched plants with input delay")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_config=True):
        sp = sub.add_parser(name)
        if needs_config:
            sp.add_argument("config", help="YAML configuration file")
        sp.add_argument("--output", "-o", default=None, help="output directory")
        sp.set_defaults(handler=fn)
        return sp

    add("simulate", _cmd_simulate)
    add("design", _cmd_design)
    add("margins", _cmd_margins)
    add("ablate", _cmd_ablate)
    sweep = add("sweep", _cmd_sweep)
    sweep.add_argument("--deltas", required=True,
                       help="comma/space separated relative delay perturbations; "
                            "use --deltas=-0.05,0,0.05 when the list starts "
                            "with a minus sign")
    repro = add("reproduce-paper", _cmd_reproduce, needs_config=False)
    repro.add_argument("--seeds", type=int, default=5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
