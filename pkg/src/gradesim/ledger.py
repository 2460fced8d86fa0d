"""Readings ledger: one CSV row per read event plus one per consensus."""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from dataclasses import astuple, dataclass, fields
from pathlib import Path

from .cohort import Arm
from .readers import AIModelSpec
from .workflow import FrameworkKind, WorkflowOutcome

LEDGER_HEADER = ("run_id", "framework", "patient_id", "arm", "visit", "reader_role", "reader_kind", "total_score",
                 "missing", "used_second_human", "used_arbitration", "consensus")
CONSENSUS = "consensus"


class LedgerError(ValueError):
    pass


def fmt_float(x: float) -> str:
    """Shortest text that parses back to exactly ``x``."""
    return repr(float(x))


def _flag(b: bool) -> str:
    return "1" if b else "0"


@dataclass(frozen=True)
class LedgerRow:
    run_id: str
    framework: str
    patient_id: str
    arm: str
    visit: str
    reader_role: str
    reader_kind: str
    total_score: str
    missing: str
    used_second_human: str
    used_arbitration: str
    consensus: str


assert tuple(f.name for f in fields(LedgerRow)) == LEDGER_HEADER


@dataclass(frozen=True)
class UnitRecord:
    """Per patient-visit result recovered from the ledger's consensus rows."""

    run_id: int
    framework: FrameworkKind
    patient_id: int
    arm: Arm
    visit: str
    used_second_human: bool
    used_arbitration: bool
    ai_missing: bool
    consensus: float

    @property
    def first_disagreement(self) -> bool:
        if self.framework is FrameworkKind.HDR:
            return self.used_arbitration
        if self.framework is FrameworkKind.AI_IR:
            return self.ai_missing or self.used_arbitration
        return self.used_second_human


def ledger_rows(outcomes: Iterable[WorkflowOutcome], run_id: int = 0, ai: AIModelSpec | None = None) -> list[LedgerRow]:
    rows = []
    ai_kind = f"ai_{ai.kind.value}" if ai is not None else "ai"
    for o in outcomes:
        common = dict(run_id=str(run_id), framework=o.framework.value, patient_id=str(o.patient_id),
                      arm=Arm(o.arm).value if o.arm is not None else "", visit=o.visit,
                      used_second_human=_flag(o.used_second_human), used_arbitration=_flag(o.used_arbitration))
        for role, total in o.reads_taken:
            rows.append(LedgerRow(**common, reader_role=role, reader_kind=ai_kind if role == "ai" else "human",
                                  total_score="" if total is None else str(total),
                                  missing=_flag(total is None), consensus=""))
        rows.append(LedgerRow(**common, reader_role=CONSENSUS, reader_kind="", total_score="", missing="",
                              consensus=fmt_float(o.consensus)))
    return rows


def write_ledger(rows: Sequence[LedgerRow], path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_HEADER)
        w.writerows(astuple(r) for r in rows)
    return path


def read_ledger(path) -> list[LedgerRow]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != LEDGER_HEADER:
            raise LedgerError(f"{path}: unexpected ledger header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(LEDGER_HEADER):
                raise LedgerError(f"{path}:{lineno}: expected {len(LEDGER_HEADER)} fields, got {len(rec)}")
            rows.append(LedgerRow(*rec))
    return rows


def unit_records(rows: Iterable[LedgerRow]) -> list[UnitRecord]:
    missing_ai = set()
    out = []
    for r in rows:
        key = (r.run_id, r.framework, r.patient_id, r.visit)
        if r.reader_role == "ai" and r.missing == "1":
            missing_ai.add(key)
        elif r.reader_role == CONSENSUS:
            out.append((key, r))
    return [
        UnitRecord(int(r.run_id), FrameworkKind(r.framework), int(r.patient_id), Arm(r.arm), r.visit,
                   r.used_second_human == "1", r.used_arbitration == "1", key in missing_ai, float(r.consensus))
        for key, r in out
    ]
