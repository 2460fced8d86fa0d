"""Command line entry point: ``gradesim <subcommand>``.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cohort import PRESETS, PopulationTargets, calibrate_population
from .config import ConfigError, parse_config
from .economics import CostParams, cost_sweep, crossover_ratio
from .ledger import read_ledger, unit_records
from .readers import calibrate_human_noise
from .rng import RngStream
from .scenario import CONFIG_FILE, ReportOptions, emit_reports, framework_rates, run_scenario, simulate_ledger
from .scoring import Threshold

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _rates_arg(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'p_second,p_arbitration', got {text!r}") from None
    return a, b


def _config_path(args) -> str:
    path = args.config_opt or args.config
    if not path:
        args.parser.error("a scenario config is required (positional or --config)")
    return path


def _load(args):
    cfg = parse_config(_config_path(args))
    return cfg.with_overrides(seed=args.seed, output_dir=args.out)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    manifest = run_scenario(cfg, threads=args.threads, fmt=args.format)
    print(f"wrote {len(manifest.files) + 1} files to {cfg.output_dir} ({manifest.config_digest})")
    return 0


def cmd_sweep_cost(args) -> int:
    cfg = _load(args)
    rates = framework_rates(unit_records(simulate_ledger(cfg, threads=args.threads)))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["framework,r,expected_cost"]
    for rep in cost_sweep(rates, cfg.costs, cfg.r_grid):
        lines += [f"{rep.framework.value},{r!r},{c!r}" for r, c in rep.sweep]
    (out / "costs.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    ir, sr = (rates.get(k) for k in ("AI_IR", "AI_SR"))
    if ir is not None and sr is not None:
        r_star = crossover_ratio(ir, sr, cfg.costs)
        print(f"crossover r* = {'none' if r_star is None else f'{r_star:.3f}'}")
    return 0


def cmd_calibrate(args) -> int:
    try:
        doc = json.loads(Path(args.targets).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read targets {args.targets}: {exc}") from exc
    rng = RngStream(args.seed)
    result = {}
    pop_doc = doc.get("population", "measure1-like")
    if isinstance(pop_doc, str):
        if pop_doc not in PRESETS:
            raise ConfigError(f"unknown preset {pop_doc!r}")
        spec = PRESETS[pop_doc]
    else:
        try:
            targets = PopulationTargets(**{k: tuple(v) if isinstance(v, list) else v for k, v in pop_doc.items()})
        except TypeError as exc:
            raise ConfigError(f"bad population targets: {exc}") from exc
        spec = calibrate_population(targets, rng)
        result["population"] = spec.to_dict()
    human = doc.get("human")
    if human is not None:
        params = calibrate_human_noise(float(human["target_arbitration_rate"]), spec,
                                       Threshold(int(human.get("delta", 0))), rng.child("human"))
        result["humans"] = {"error_rate": params.error_rate}
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_crossover(args) -> int:
    params = CostParams(c_first=args.c_first, c_second=args.c_second, c_ai=args.c_ai)
    r_star = crossover_ratio(args.ir, args.sr, params)
    print("none" if r_star is None else f"{r_star:.3f}")
    return 0


def cmd_analyze(args) -> int:
    ledger_path = Path(args.ledger)
    cfg_path = args.config_opt or (ledger_path.parent / CONFIG_FILE)
    if args.config_opt or Path(cfg_path).exists():
        options = ReportOptions.from_config(parse_config(cfg_path), args.format)
    else:
        options = ReportOptions(fmt=args.format)
    out = Path(args.out) if args.out else ledger_path.parent / "analysis"
    inventory = emit_reports(read_ledger(ledger_path), out, options)
    print(f"wrote {len(inventory)} reports to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", nargs="?", help="scenario JSON file")
        p.add_argument("--config", dest="config_opt", help="scenario JSON file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads; never changes outputs")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.set_defaults(func=fn, parser=p)
        return p

    scenario_cmd("simulate", cmd_simulate, "run a scenario and write ledger, reports and manifest")
    scenario_cmd("sweep-cost", cmd_sweep_cost, "cost per reading unit across arbitration price ratios")

    p = sub.add_parser("calibrate", help="calibrate population and human noise to targets")
    p.add_argument("targets", help="targets JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the calibrated parameters here")
    p.set_defaults(func=cmd_calibrate, parser=p)

    p = sub.add_parser("crossover", help="arbitration ratio where AI_IR and AI_SR cost the same")
    p.add_argument("--ir", type=_rates_arg, required=True, help="AI_IR rates 'p_second,p_arbitration'")
    p.add_argument("--sr", type=_rates_arg, required=True, help="AI_SR rates 'p_second,p_arbitration'")
    p.add_argument("--c-first", type=float, default=1.0)
    p.add_argument("--c-second", type=float, default=1.0)
    p.add_argument("--c-ai", type=float, default=0.0)
    p.set_defaults(func=cmd_crossover, parser=p)

    p = sub.add_parser("analyze", help="recompute reports from a stored ledger")
    p.add_argument("ledger", help="ledger.csv written by simulate")
    p.add_argument("--config", dest="config_opt", help="scenario JSON (default: scenario.json next to the ledger)")
    p.add_argument("--out", help="output directory (default: <ledger dir>/analysis)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_analyze, parser=p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"gradesim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every module error maps to one exit code
        print(f"gradesim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
