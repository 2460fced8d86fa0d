"""Scenario orchestration and report emission."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (ArmSummary, ecdf, framework_consistency_report, progression_rate, summarize_arms, welch_test,
                       worsenings_by_arm)
from .cohort import Arm, sample_cohort
from .config import ScenarioConfig
from .economics import DEFAULT_R_GRID, CostParams, cost_sweep
from .ledger import LedgerRow, UnitRecord, fmt_float, ledger_rows, unit_records, write_ledger
from .rng import RngStream
from .workflow import FrameworkKind, run_trial

SCHEMA_VERSION = 1
REPORT_COLUMNS = {
    "rates": ("framework", "n_units", "p_second_human", "p_arbitration", "p_first_disagreement",
              "p_second_human_patient", "p_arbitration_patient"),
    "costs": ("framework", "r", "expected_cost"),
    "summaries": ("method", "arm", "baseline", "week104", "worsening", "replication", "n", "baseline_mean",
                  "baseline_sd", "week104_mean", "week104_sd", "worsening_mean", "worsening_sd"),
    "tests": ("method", "replication", "t_statistic", "df", "p_value", "significant", "mean_difference", "alpha",
              "consistent_with_reference", "progression_treatment", "progression_control"),
    "ecdf": ("method", "arm", "worsening", "cumulative_fraction"),
    "histogram": ("method", "bin_left", "bin_right", "count"),
}
LEDGER_FILE = "ledger.csv"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "scenario.json"


@dataclass(frozen=True)
class ReportOptions:
    costs: CostParams = CostParams()
    r_grid: tuple[float, ...] = DEFAULT_R_GRID
    progression_threshold: float = 2.0
    histogram_bin_width: float = 1.0
    alpha: float = 0.05
    fmt: str = "csv"

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, fmt: str = "csv") -> ReportOptions:
        return cls(cfg.costs, cfg.r_grid, cfg.progression_threshold, cfg.histogram_bin_width, cfg.alpha, fmt)


@dataclass(frozen=True)
class RunManifest:
    config_digest: str
    seed: int
    tool_version: str
    files: dict
    wall_clock_seconds: float = 0.0
    frameworks: tuple[str, ...] = ()
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "frameworks": list(self.frameworks),
            "files": dict(sorted(self.files.items())),
            "wall_clock_seconds": self.wall_clock_seconds,
            **self.extra,
        }


def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return fmt_float(x)
    return str(x)


def _write_table(out_dir: Path, name: str, rows: list[tuple], fmt: str) -> Path:
    cols = REPORT_COLUMNS[name]
    if fmt == "json":
        path = out_dir / f"{name}.json"
        doc = {"schema_version": SCHEMA_VERSION, "columns": list(cols),
               "rows": [dict(zip(cols, (_cell(v) for v in row))) for row in rows]}
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        return path
    path = out_dir / f"{name}.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerows([_cell(v) for v in row] for row in rows)
    return path


@dataclass(frozen=True)
class _Keyed:
    """Record with a patient key unique across replications, for pooled statistics."""

    patient_id: tuple
    arm: Arm
    visit: str
    consensus: float


def _rates_rows(by_fw: dict[FrameworkKind, list[UnitRecord]]) -> list[tuple]:
    rows = []
    for fw, recs in by_fw.items():
        n = len(recs)
        per_patient: dict[tuple, list[bool]] = defaultdict(lambda: [False, False])
        for r in recs:
            flags = per_patient[(r.run_id, r.patient_id)]
            flags[0] |= r.used_second_human
            flags[1] |= r.used_arbitration
        n_pat = len(per_patient)
        rows.append((fw.value, n,
                     sum(r.used_second_human for r in recs) / n,
                     sum(r.used_arbitration for r in recs) / n,
                     sum(r.first_disagreement for r in recs) / n,
                     sum(f[0] for f in per_patient.values()) / n_pat,
                     sum(f[1] for f in per_patient.values()) / n_pat))
    return rows


def _by_framework(records: Sequence[UnitRecord]) -> dict[FrameworkKind, list[UnitRecord]]:
    by_fw: dict[FrameworkKind, list[UnitRecord]] = {}
    for r in records:
        by_fw.setdefault(r.framework, []).append(r)
    return by_fw


def framework_rates(records: Sequence[UnitRecord]) -> dict[FrameworkKind, tuple[float, float]]:
    """(p_second_human, p_arbitration) per framework, pooled over replications."""
    return {FrameworkKind(r[0]): (r[2], r[3]) for r in _rates_rows(_by_framework(records))}


def _summary_row(method: str, rep: str, s: ArmSummary) -> tuple:
    return (method, s.arm.value, s.cell("baseline"), s.cell("week104"), s.cell("worsening"), rep, s.n,
            s.baseline_mean, s.baseline_sd, s.week104_mean, s.week104_sd, s.worsening_mean, s.worsening_sd)


def emit_reports(ledger: Sequence[LedgerRow], out_dir, options: ReportOptions = ReportOptions()) -> dict:
    """Write every report derived from ``ledger``; returns ``{file name: digest}``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = unit_records(ledger)
    if not records:
        return {}
    by_fw = _by_framework(records)
    pooled_label = "pooled"
    labels = [str(run) for run in sorted({r.run_id for r in records})]
    if len(labels) > 1:
        labels.append(pooled_label)

    def keyed(recs):
        return [_Keyed((r.run_id, r.patient_id), r.arm, r.visit, r.consensus) for r in recs]

    summaries, tests = [], []
    for label in labels:
        per_fw = {}
        for fw, recs in by_fw.items():
            sel = recs if label == pooled_label else [r for r in recs if str(r.run_id) == label]
            summ = summarize_arms(keyed(sel))
            w = worsenings_by_arm(keyed(sel))
            per_fw[fw] = (welch_test(w[Arm.TREATMENT], w[Arm.CONTROL], options.alpha), summ, w)
            summaries += [_summary_row(fw.value, label, s) for s in summ]
        report = (framework_consistency_report({fw: v[:2] for fw, v in per_fw.items()})
                  if len(per_fw) > 1 else None)
        for fw, (res, _, w) in per_fw.items():
            ok = True if report is None else fw.value not in report.offenders
            tests.append((fw.value, label, res.t_statistic, res.degrees_of_freedom, res.p_value, res.significant,
                          res.mean_difference, res.alpha, ok,
                          progression_rate(w[Arm.TREATMENT], options.progression_threshold),
                          progression_rate(w[Arm.CONTROL], options.progression_threshold)))

    worsen = {fw: worsenings_by_arm(keyed(recs)) for fw, recs in by_fw.items()}
    ecdf_rows = []
    for fw, w in worsen.items():
        for arm_label, values in (("all", np.concatenate([w[Arm.TREATMENT], w[Arm.CONTROL]])),
                                  (Arm.TREATMENT.value, w[Arm.TREATMENT]), (Arm.CONTROL.value, w[Arm.CONTROL])):
            if values.size == 0:
                continue
            curve = ecdf(values)
            ecdf_rows += [(fw.value, arm_label, float(x), float(f)) for x, f in zip(curve.x, curve.cumulative)]

    all_w = np.concatenate([np.concatenate([w[Arm.TREATMENT], w[Arm.CONTROL]]) for w in worsen.values()])
    width = options.histogram_bin_width
    lo = math.floor(all_w.min() / width) * width
    n_bins = int(math.floor((all_w.max() - lo) / width)) + 1
    edges = lo + width * np.arange(n_bins + 1)
    hist_rows = []
    for fw, w in worsen.items():
        counts, _ = np.histogram(np.concatenate([w[Arm.TREATMENT], w[Arm.CONTROL]]), bins=edges)
        hist_rows += [(fw.value, float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]

    rates = framework_rates(records)
    n_units = {fw: len(recs) for fw, recs in by_fw.items()}
    costs_rows = [(rep.framework.value, r, c)
                  for rep in cost_sweep(rates, options.costs, options.r_grid, n_units) for r, c in rep.sweep]

    tables = {"rates": _rates_rows(by_fw), "costs": costs_rows, "summaries": summaries, "tests": tests,
              "ecdf": ecdf_rows, "histogram": hist_rows}
    inventory = {}
    for name, rows in tables.items():
        path = _write_table(out_dir, name, rows, options.fmt)
        inventory[path.name] = file_digest(path)
    return inventory


def simulate_ledger(cfg: ScenarioConfig, *, threads: int = 1) -> list[LedgerRow]:
    rows: list[LedgerRow] = []
    if not cfg.frameworks:
        return rows
    root = RngStream(cfg.seed)
    for rep in range(cfg.replications):
        rep_rng = root.child("replication", rep)
        cohort = sample_cohort(cfg.population, rep_rng.child("cohort"), workers=threads)
        for fw in cfg.frameworks:
            wcfg = cfg.workflow_config(fw)
            outcomes = run_trial(cohort, wcfg, rep_rng.child("reads"), workers=threads)
            rows += ledger_rows(outcomes, rep, wcfg.ai)
    return rows


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    path = Path(out_dir) / MANIFEST_FILE
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def run_scenario(cfg: ScenarioConfig, *, out_dir=None, threads: int = 1, fmt: str = "csv") -> RunManifest:
    """Simulate every configured framework and write ledger, reports and manifest."""
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    if cfg.frameworks:
        config_path = out / CONFIG_FILE
        # the output directory is where the run lives, not what it computes
        doc = {k: v for k, v in cfg.document.items() if k != "output_dir"}
        config_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        files[CONFIG_FILE] = file_digest(config_path)
        rows = simulate_ledger(cfg, threads=threads)
        files[LEDGER_FILE] = file_digest(write_ledger(rows, out / LEDGER_FILE))
        files.update(emit_reports(rows, out, ReportOptions.from_config(cfg, fmt)))
    manifest = RunManifest(cfg.digest(), cfg.seed, __version__, files, round(time.perf_counter() - start, 3),
                           tuple(f.value for f in cfg.frameworks))
    write_manifest(out, manifest)
    return manifest


def verify_manifest(out_dir) -> list[str]:
    """Names of files whose content no longer matches the manifest."""
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
    bad = []
    for name, digest in doc["files"].items():
        path = out_dir / name
        if not path.exists() or file_digest(path) != digest:
            bad.append(name)
    return bad
