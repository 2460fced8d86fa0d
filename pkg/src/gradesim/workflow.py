"""Reading frameworks as escalation state machines over one patient-visit.

HDR      two humans always read; a disagreement goes to an arbitrator.
AI_IR    the AI stands in for the second human and its score is pooled; an
         AI-human disagreement (or an unreadable case) goes to arbitration.
AI_SR    the AI only screens the first human; a disagreement (or an
         unreadable case) calls in a second human, and the AI score is never
         pooled.

Every reader draws from its own substream ``rng.child(patient, visit, role)``,
so the same human reads the same case identically under every framework.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cohort import Arm, PatientTruth
from .readers import AIModelSpec, HumanReaderParams, read_ai, read_human
from .rng import RngStream
from .scoring import (DisagreementRule, Percentile, PoolingPolicy, Threshold, is_disagreement, percentile_cut,
                      pool_consensus, total_score)

VISITS = ("baseline", "week104")
HUMAN_ROLES = ("human1", "human2", "arbitrator")


class EmptyInput(ValueError):
    pass


class FrameworkKind(str, enum.Enum):
    HDR = "HDR"
    AI_IR = "AI_IR"
    AI_SR = "AI_SR"


class MissingAIPolicy(str, enum.Enum):
    """What AI_IR does with an unreadable case.

    ``arbitrate``: the missing score counts as a disagreement and the
    arbitrator reads (first human + arbitrator = two humans).
    ``second_human``: a second human reads and the usual human-human
    escalation follows.
    """

    ARBITRATE = "arbitrate"
    SECOND_HUMAN = "second_human"


@dataclass(frozen=True)
class WorkflowConfig:
    framework: FrameworkKind
    disagreement: DisagreementRule = Threshold(0)
    pooling: PoolingPolicy = PoolingPolicy.MEAN_ALL
    ai: AIModelSpec | None = None
    humans: tuple[HumanReaderParams, ...] = field(default_factory=lambda: (HumanReaderParams(),) * 3)
    ir_missing: MissingAIPolicy = MissingAIPolicy.ARBITRATE

    def __post_init__(self):
        object.__setattr__(self, "framework", FrameworkKind(self.framework))
        object.__setattr__(self, "pooling", PoolingPolicy(self.pooling))
        object.__setattr__(self, "ir_missing", MissingAIPolicy(self.ir_missing))
        humans = tuple(self.humans)
        if len(humans) == 1:
            humans = humans * 3
        if len(humans) != 3:
            raise ValueError("human pool is (first, second, arbitrator)")
        object.__setattr__(self, "humans", humans)
        if self.framework is not FrameworkKind.HDR and self.ai is None:
            raise ValueError(f"{self.framework.value} needs an AI model")

    def human(self, role: str) -> HumanReaderParams:
        return self.humans[HUMAN_ROLES.index(role)]


@dataclass(frozen=True)
class WorkflowOutcome:
    patient_id: int
    visit: str
    framework: FrameworkKind
    reads_taken: tuple[tuple[str, int | None], ...]
    used_second_human: bool
    used_arbitration: bool
    ai_missing: bool
    first_disagreement: bool
    consensus: float
    arm: Arm | None = None

    def read(self, role: str) -> int | None:
        for r, t in self.reads_taken:
            if r == role:
                return t
        raise KeyError(role)

    def roles(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.reads_taken)


class _UnitReads:
    """Lazily computed, cached totals of every reader for one patient-visit."""

    def __init__(self, truth, cfg: WorkflowConfig, rng: RngStream):
        self.truth = np.asarray(truth, dtype=np.int8)
        self.cfg = cfg
        self.rng = rng
        self._cache: dict[str, int | None] = {}

    def __call__(self, role: str) -> int | None:
        if role not in self._cache:
            stream = self.rng.child(role)
            if role == "ai":
                reading = read_ai(self.truth, self.cfg.ai, stream)
                self._cache[role] = None if reading is None else total_score(reading)
            else:
                self._cache[role] = total_score(read_human(self.truth, self.cfg.human(role), stream))
        return self._cache[role]


Decide = Callable[[str, float, float], bool]


def _decider(rule: DisagreementRule, batch_context: dict[str, Sequence[float]] | None) -> Decide:
    if isinstance(rule, Threshold):
        return lambda stage, a, b: is_disagreement(a, b, rule)
    cuts = {stage: percentile_cut(vals, rule.q) for stage, vals in (batch_context or {}).items() if len(vals)}

    def decide(stage, a, b):
        if stage not in cuts:
            return is_disagreement(a, b, rule, (batch_context or {}).get(stage))
        gap = abs(a - b)
        return gap > 0 and gap >= cuts[stage]

    return decide


def _pool(cfg: WorkflowConfig, reads: list[tuple[str, int | None]]) -> float:
    pool = [(r, t) for r, t in reads if t is not None]
    arb = next((i for i, (r, _) in enumerate(pool) if r == "arbitrator"), None)
    return pool_consensus([t for _, t in pool], cfg.pooling, arb)


def _hdr(reads: _UnitReads, decide: Decide) -> dict:
    t1, t2 = reads("human1"), reads("human2")
    taken = [("human1", t1), ("human2", t2)]
    disagree = decide("first", t1, t2)
    if disagree:
        taken.append(("arbitrator", reads("arbitrator")))
    return dict(taken=taken, pooled=taken, second=True, arb=disagree, missing=False, first=disagree)


def _ai_ir(reads: _UnitReads, decide: Decide) -> dict:
    ai, t1 = reads("ai"), reads("human1")
    taken = [("ai", ai), ("human1", t1)]
    if ai is None and reads.cfg.ir_missing is MissingAIPolicy.SECOND_HUMAN:
        taken.append(("human2", reads("human2")))
        arb = decide("second", t1, taken[-1][1])
        if arb:
            taken.append(("arbitrator", reads("arbitrator")))
        return dict(taken=taken, pooled=taken, second=True, arb=arb, missing=True, first=True)
    disagree = ai is None or decide("first", ai, t1)
    if disagree:
        taken.append(("arbitrator", reads("arbitrator")))
    return dict(taken=taken, pooled=taken, second=False, arb=disagree, missing=ai is None, first=disagree)


def _ai_sr(reads: _UnitReads, decide: Decide) -> dict:
    ai, t1 = reads("ai"), reads("human1")
    taken = [("ai", ai), ("human1", t1)]
    trigger = ai is None or decide("first", ai, t1)
    arb = False
    if trigger:
        t2 = reads("human2")
        taken.append(("human2", t2))
        arb = decide("second", t1, t2)
        if arb:
            taken.append(("arbitrator", reads("arbitrator")))
    pooled = [(r, t) for r, t in taken if r != "ai"]
    return dict(taken=taken, pooled=pooled, second=trigger, arb=arb, missing=ai is None, first=trigger)


_RUNNERS = {FrameworkKind.HDR: _hdr, FrameworkKind.AI_IR: _ai_ir, FrameworkKind.AI_SR: _ai_sr}


def _outcome(reads: _UnitReads, decide: Decide, patient_id=0, visit="baseline", arm=None) -> WorkflowOutcome:
    cfg = reads.cfg
    r = _RUNNERS[cfg.framework](reads, decide)
    return WorkflowOutcome(
        patient_id=patient_id, visit=visit, framework=cfg.framework, reads_taken=tuple(r["taken"]),
        used_second_human=r["second"], used_arbitration=r["arb"], ai_missing=r["missing"],
        first_disagreement=r["first"], consensus=_pool(cfg, r["pooled"]), arm=arm,
    )


def _run_single(kind: FrameworkKind, truth, cfg: WorkflowConfig, rng: RngStream, batch_context=None, **ids):
    if cfg.framework is not kind:
        raise ValueError(f"config is for {cfg.framework.value}, not {kind.value}")
    return _outcome(_UnitReads(truth, cfg, rng), _decider(cfg.disagreement, batch_context), **ids)


def run_hdr(truth, cfg: WorkflowConfig, rng: RngStream, batch_context=None, **ids) -> WorkflowOutcome:
    """Human double read; ``rng`` is the patient-visit stream."""
    return _run_single(FrameworkKind.HDR, truth, cfg, rng, batch_context, **ids)


def run_ai_ir(truth, cfg: WorkflowConfig, rng: RngStream, batch_context=None, **ids) -> WorkflowOutcome:
    return _run_single(FrameworkKind.AI_IR, truth, cfg, rng, batch_context, **ids)


def run_ai_sr(truth, cfg: WorkflowConfig, rng: RngStream, batch_context=None, **ids) -> WorkflowOutcome:
    return _run_single(FrameworkKind.AI_SR, truth, cfg, rng, batch_context, **ids)


def run_unit(truth, cfg: WorkflowConfig, rng: RngStream, batch_context=None, **ids) -> WorkflowOutcome:
    return _run_single(cfg.framework, truth, cfg, rng, batch_context, **ids)


def _first_stage_gap(reads: _UnitReads) -> float | None:
    if reads.cfg.framework is FrameworkKind.HDR:
        return abs(reads("human1") - reads("human2"))
    ai = reads("ai")
    return None if ai is None else abs(ai - reads("human1"))


def _map_chunks(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return fn(items)
    chunks = [list(c) for c in np.array_split(np.arange(len(items)), min(workers, len(items)))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda idx: fn([items[i] for i in idx]), chunks)
    return [x for part in parts for x in part]


def run_trial(cohort: Sequence[PatientTruth], cfg: WorkflowConfig, rng: RngStream, *,
              workers: int = 1) -> list[WorkflowOutcome]:
    """Run ``cfg.framework`` on both visits of every patient.

    Outcomes are ordered by (patient id, visit) and do not depend on ``workers``.
    Under a percentile rule the first-stage and second-stage cut values are
    taken over the whole trial before any escalation is decided.
    """
    if not cohort:
        raise EmptyInput("cohort is empty")
    units = []
    for patient in sorted(cohort, key=lambda p: p.patient_id):
        for visit, truth in zip(VISITS, (patient.baseline, patient.week104)):
            units.append((patient, visit, _UnitReads(truth, cfg, rng.child(patient.patient_id, visit))))

    def finish(decide):
        return lambda chunk: [_outcome(r, decide, p.patient_id, v, p.arm) for p, v, r in chunk]

    if isinstance(cfg.disagreement, Threshold):
        return _map_chunks(finish(_decider(cfg.disagreement, None)), units, workers)

    gaps = _map_chunks(lambda chunk: [_first_stage_gap(r) for _, _, r in chunk], units, workers)
    context = {"first": [g for g in gaps if g is not None]}
    second: list[float] = []

    def probe(stage, a, b):
        if stage == "first":
            return first(stage, a, b)
        second.append(abs(a - b))
        return False

    first = _decider(cfg.disagreement, context)
    for _, _, r in units:
        _outcome(r, probe)
    context["second"] = second
    return _map_chunks(finish(_decider(cfg.disagreement, context)), units, workers)


def escalation_rates(outcomes: Sequence[WorkflowOutcome]) -> tuple[float, float]:
    """Fractions of reading units that needed a second human / an arbitrator."""
    if not outcomes:
        raise EmptyInput("no outcomes")
    n = len(outcomes)
    return (sum(o.used_second_human for o in outcomes) / n, sum(o.used_arbitration for o in outcomes) / n)


def first_disagreement_rate(outcomes: Sequence[WorkflowOutcome]) -> float:
    """Fraction of units whose first comparison failed (an unreadable AI case counts)."""
    if not outcomes:
        raise EmptyInput("no outcomes")
    return sum(o.first_disagreement for o in outcomes) / len(outcomes)


def patient_escalation_rates(outcomes: Sequence[WorkflowOutcome]) -> tuple[float, float]:
    """Like ``escalation_rates`` but per patient: any visit escalated counts."""
    if not outcomes:
        raise EmptyInput("no outcomes")
    second: dict[int, bool] = {}
    arb: dict[int, bool] = {}
    for o in outcomes:
        second[o.patient_id] = second.get(o.patient_id, False) or o.used_second_human
        arb[o.patient_id] = arb.get(o.patient_id, False) or o.used_arbitration
    n = len(second)
    return sum(second.values()) / n, sum(arb.values()) / n
