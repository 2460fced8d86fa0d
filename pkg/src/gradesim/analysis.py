"""Trial-level statistics on consensus scores."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .cohort import Arm
from .workflow import VISITS, EmptyInput


class MissingVisit(ValueError):
    def __init__(self, patient_ids):
        self.patient_ids = sorted(patient_ids)
        super().__init__(f"patients missing a visit consensus: {self.patient_ids}")


class InsufficientData(ValueError):
    pass


class UnsortedEdges(ValueError):
    pass


@dataclass(frozen=True)
class ArmSummary:
    arm: Arm
    n: int
    baseline_mean: float
    baseline_sd: float
    week104_mean: float
    week104_sd: float
    worsening_mean: float
    worsening_sd: float

    def cell(self, column: str, digits: int = 2) -> str:
        """Table cell in ``mean(SD)`` form."""
        mean, sd = getattr(self, f"{column}_mean"), getattr(self, f"{column}_sd")
        return f"{mean:.{digits}f}({sd:.{digits}f})"


def _mean_sd(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    mean = math.fsum(x) / x.size
    sd = math.sqrt(math.fsum((x - mean) ** 2) / (x.size - 1)) if x.size > 1 else float("nan")
    return mean, sd


def paired_visits(records: Iterable) -> dict[Arm, dict[int, tuple[float, float]]]:
    """Group consensus records into ``arm -> patient -> (baseline, week104)``.

    A record is anything with ``patient_id``, ``arm``, ``visit`` and ``consensus``.
    """
    visits: dict[int, dict[str, float]] = defaultdict(dict)
    arms: dict[int, Arm] = {}
    for rec in records:
        visits[rec.patient_id][rec.visit] = float(rec.consensus)
        arms[rec.patient_id] = Arm(rec.arm)
    missing = [pid for pid, v in visits.items() if set(v) != set(VISITS)]
    if missing:
        raise MissingVisit(missing)
    out: dict[Arm, dict[int, tuple[float, float]]] = {Arm.TREATMENT: {}, Arm.CONTROL: {}}
    for pid in sorted(visits):
        out[arms[pid]][pid] = (visits[pid]["baseline"], visits[pid]["week104"])
    return out


def worsenings_by_arm(records: Iterable) -> dict[Arm, np.ndarray]:
    return {arm: np.array([w - b for b, w in pts.values()]) for arm, pts in paired_visits(records).items()}


def summarize_arms(records: Iterable) -> list[ArmSummary]:
    grouped = paired_visits(records)
    out = []
    for arm in (Arm.TREATMENT, Arm.CONTROL):
        pts = grouped[arm]
        if not pts:
            raise EmptyInput(f"no patients in the {arm.value} arm")
        # sort by patient id so sums do not depend on record order
        pairs = np.array([pts[pid] for pid in sorted(pts)], dtype=float)
        base, week = pairs[:, 0], pairs[:, 1]
        out.append(ArmSummary(arm, len(pts), *_mean_sd(base), *_mean_sd(week), *_mean_sd(week - base)))
    return out


@dataclass(frozen=True)
class WelchResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    significant: bool
    alpha: float = 0.05
    mean_difference: float = 0.0


def welch_from_summary(mean_a: float, sd_a: float, n_a: int, mean_b: float, sd_b: float, n_b: int,
                       alpha: float = 0.05) -> WelchResult:
    """Two-sided Welch t-test from per-group mean, sample SD and size."""
    if n_a < 2 or n_b < 2:
        raise InsufficientData("each sample needs at least two observations")
    va, vb = sd_a**2 / n_a, sd_b**2 / n_b
    diff = mean_a - mean_b
    se2 = va + vb
    if se2 == 0:
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        df = float(n_a + n_b - 2)
        p = 1.0 if diff == 0 else 0.0
    else:
        t = diff / math.sqrt(se2)
        # normalised weights keep tiny variances from underflowing
        wa, wb = va / se2, vb / se2
        df = 1.0 / (wa**2 / (n_a - 1) + wb**2 / (n_b - 1))
        p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return WelchResult(float(t), float(df), p, p < alpha, alpha, float(diff))


def welch_test(sample_a: Sequence[float], sample_b: Sequence[float], alpha: float = 0.05) -> WelchResult:
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InsufficientData("each sample needs at least two observations")
    return welch_from_summary(*_mean_sd(a), a.size, *_mean_sd(b), b.size, alpha=alpha)


def arm_welch(records: Iterable, alpha: float = 0.05) -> WelchResult:
    """Treatment-minus-control Welch test on consensus worsening."""
    w = worsenings_by_arm(records)
    return welch_test(w[Arm.TREATMENT], w[Arm.CONTROL], alpha)


@dataclass(frozen=True)
class EcdfCurve:
    x: np.ndarray
    cumulative: np.ndarray
    n: int

    def __call__(self, value):
        """Fraction of observations <= ``value``."""
        idx = np.searchsorted(self.x, value, side="right")
        return np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)

    def below(self, value):
        """Fraction of observations strictly below ``value``."""
        idx = np.searchsorted(self.x, value, side="left")
        return np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)


def ecdf(values: Sequence[float]) -> EcdfCurve:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EmptyInput("ECDF of an empty sample")
    x, counts = np.unique(v, return_counts=True)
    return EcdfCurve(x, np.cumsum(counts) / v.size, int(v.size))


def worsening_histogram(values, bin_edges: Sequence[float]):
    """Counts per bin, left-closed right-open with the last bin closed.

    ``values`` is a sequence, or a mapping of framework -> sequence.
    """
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or (np.diff(edges) <= 0).any():
        raise UnsortedEdges("bin edges must be strictly increasing")
    if isinstance(values, Mapping):
        return {k: worsening_histogram(v, edges) for k, v in values.items()}
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return counts


def progression_rate(worsenings: Sequence[float], threshold: float = 2.0) -> float:
    w = np.asarray(worsenings, dtype=float)
    if w.size == 0:
        raise EmptyInput("progression rate of an empty sample")
    return float(np.mean(w >= threshold))


@dataclass(frozen=True)
class ConsistencyReport:
    consistent: bool
    reference: str
    significant: dict
    offenders: tuple
    deviations: dict = field(default_factory=dict)
    bias: dict = field(default_factory=dict)


def framework_consistency_report(results: Mapping, reference: str = "HDR", bias_tol: float = 0.25) -> ConsistencyReport:
    """Compare significance conclusions and arm means across frameworks.

    ``results`` maps framework -> (WelchResult, list[ArmSummary]). Deviations are
    framework minus reference, per arm and column. A framework is flagged as
    over- (under-) estimating when its baseline and week-104 means exceed (fall
    short of) the reference by more than ``bias_tol`` in every arm.
    """
    if len(results) < 2:
        raise ValueError("need at least two frameworks to compare")
    keys = {str(getattr(k, "value", k)): k for k in results}
    significant = {name: bool(results[k][0].significant) for name, k in keys.items()}
    if reference in keys:
        expected = significant[reference]
    else:
        votes = list(significant.values())
        expected = votes.count(True) > len(votes) / 2
    offenders = tuple(name for name, sig in significant.items() if sig != expected)

    deviations, bias = {}, {}
    if reference in keys:
        ref = {s.arm: s for s in results[keys[reference]][1]}
        for name, k in keys.items():
            if name == reference:
                continue
            dev = {}
            for s in results[k][1]:
                r = ref[s.arm]
                dev[s.arm.value] = {c: getattr(s, f"{c}_mean") - getattr(r, f"{c}_mean")
                                    for c in ("baseline", "week104", "worsening")}
            deviations[name] = dev
            levels = [d[c] for d in dev.values() for c in ("baseline", "week104")]
            bias[name] = ("overestimation" if min(levels) > bias_tol
                          else "underestimation" if max(levels) < -bias_tol else None)
    return ConsistencyReport(not offenders, reference, significant, offenders, deviations, bias)
