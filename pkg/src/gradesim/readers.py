"""Stochastic reader models.

Humans copy the true grade of each corner except with probability
``error_rate``, in which case the grade is redrawn from an error kernel. AI
readers draw every corner from a row of a 4x4 confusion matrix; a whole
patient-visit can also come back unreadable (``None``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream, as_generator
from .scoring import MAX_GRADE, N_CORNERS, Threshold

N_GRADES = MAX_GRADE + 1


class InvalidMatrix(ValueError):
    pass


class Unachievable(ValueError):
    pass


def validate_confusion(matrix, *, atol: float = 1e-9) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (N_GRADES, N_GRADES):
        raise InvalidMatrix(f"confusion matrix must be {N_GRADES}x{N_GRADES}, got {m.shape}")
    if (m < 0).any() or not np.isfinite(m).all():
        raise InvalidMatrix("confusion entries must be finite and non-negative")
    sums = m.sum(axis=1)
    if np.abs(sums - 1.0).max() > atol:
        raise InvalidMatrix(f"confusion rows must sum to 1, got {sums.tolist()}")
    return m


def balanced_accuracy(confusion) -> float:
    """Mean per-class recall, i.e. the mean of the diagonal."""
    return float(np.mean(np.diag(validate_confusion(confusion))))


def ordinal_confusion(recalls, decay: float = 2.0) -> np.ndarray:
    """Confusion matrix with the given per-class recalls.

    Off-diagonal mass is shared out by grade distance: each class one step
    nearer the truth gets ``decay`` times the mass of the next one out.
    """
    recalls = np.asarray(recalls, dtype=float)
    if recalls.shape != (N_GRADES,) or (recalls < 0).any() or (recalls > 1).any():
        raise InvalidMatrix("need one recall in [0, 1] per grade")
    grades = np.arange(N_GRADES)
    m = np.zeros((N_GRADES, N_GRADES))
    for i in grades:
        dist = np.abs(grades - i)
        w = np.where(dist > 0, decay ** -(dist - 1.0), 0.0)
        m[i] = (1.0 - recalls[i]) * w / w.sum()
        m[i, i] = recalls[i]
    return m


def adjacent_kernel() -> np.ndarray:
    """One-grade error kernel: +-1 split evenly, all mass inward at 0 and 3."""
    k = np.zeros((N_GRADES, N_GRADES))
    for i in range(N_GRADES):
        nbrs = [j for j in (i - 1, i + 1) if 0 <= j <= MAX_GRADE]
        k[i, nbrs] = 1.0 / len(nbrs)
    return k


def sample_rows(truth: np.ndarray, matrix: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw from ``matrix[truth]`` using uniforms ``u`` (same shape as truth)."""
    cdf = np.cumsum(matrix, axis=1)
    cdf[:, -1] = 1.0
    rows = cdf[truth]
    return (u[..., None] >= rows).sum(axis=-1).astype(np.int8)


@dataclass(frozen=True)
class HumanReaderParams:
    error_rate: float = 0.0
    kernel: np.ndarray = field(default_factory=adjacent_kernel, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("human error rate must lie in [0, 1]")
        object.__setattr__(self, "kernel", validate_confusion(self.kernel))

    def confusion(self) -> np.ndarray:
        eps = self.error_rate
        return (1.0 - eps) * np.eye(N_GRADES) + eps * self.kernel


def _perturb(truth: np.ndarray, eps: float, kernel: np.ndarray, u_err: np.ndarray, u_kernel: np.ndarray) -> np.ndarray:
    wrong = sample_rows(truth, kernel, u_kernel)
    return np.where(u_err < eps, wrong, truth).astype(np.int8)


def read_human(truth, params: HumanReaderParams, rng) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int8)
    g = as_generator(rng)
    u_err = g.random(N_CORNERS)
    u_kernel = g.random(N_CORNERS)
    return _perturb(truth, params.error_rate, params.kernel, u_err, u_kernel)


class AIKind(str, enum.Enum):
    TRAINED = "trained"
    RANDOM = "random"
    NAIVE = "naive"


# Per-class recalls averaging 0.65. Grades 0 and 3 are read almost perfectly
# and the rare grades 1-2 poorly; this keeps the trained model's AI_IR
# arbitration rate on the measure1-like preset near 60% (see
# tests/test_acceptance.py). A flat 0.65 diagonal would disagree with the
# first human on virtually every case.
DEFAULT_TRAINED_RECALLS = (0.999, 0.25, 0.36, 0.991)
# Share of patient-visits the trained pipeline could not grade: 1 - 282/361.
DEFAULT_MISSING_PROB = round(1 - 282 / 361, 2)
# Human corner error rate giving 48.92% double-read arbitration on the
# measure1-like preset: calibrate_human_noise(0.4892, PRESETS["measure1-like"]).
DEFAULT_HUMAN_ERROR_RATE = 0.0172


@dataclass(frozen=True)
class AIModelSpec:
    kind: AIKind = AIKind.TRAINED
    confusion: np.ndarray | None = field(default=None, compare=False)
    missing_prob: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AIKind(self.kind))
        if not 0.0 <= self.missing_prob <= 1.0:
            raise ValueError("missing_prob must lie in [0, 1]")
        if self.kind is AIKind.TRAINED:
            conf = ordinal_confusion(DEFAULT_TRAINED_RECALLS) if self.confusion is None else self.confusion
            object.__setattr__(self, "confusion", validate_confusion(conf))
        elif self.confusion is not None:
            raise ValueError(f"{self.kind.value} models have a fixed confusion matrix")

    @classmethod
    def trained(cls, confusion=None, missing_prob: float = DEFAULT_MISSING_PROB) -> AIModelSpec:
        return cls(AIKind.TRAINED, confusion, missing_prob)

    @classmethod
    def random(cls, missing_prob: float = 0.0) -> AIModelSpec:
        return cls(AIKind.RANDOM, None, missing_prob)

    @classmethod
    def naive(cls, missing_prob: float = 0.0) -> AIModelSpec:
        return cls(AIKind.NAIVE, None, missing_prob)

    def confusion_matrix(self) -> np.ndarray:
        if self.kind is AIKind.RANDOM:
            return np.full((N_GRADES, N_GRADES), 1.0 / N_GRADES)
        if self.kind is AIKind.NAIVE:
            m = np.zeros((N_GRADES, N_GRADES))
            m[:, 0] = 1.0
            return m
        return self.confusion

    def __eq__(self, other):
        if not isinstance(other, AIModelSpec):
            return NotImplemented
        return (self.kind, self.missing_prob) == (other.kind, other.missing_prob) and np.array_equal(
            self.confusion_matrix(), other.confusion_matrix())

    def __hash__(self):
        return hash((self.kind, self.missing_prob, self.confusion_matrix().tobytes()))


def read_ai(truth, spec: AIModelSpec, rng) -> np.ndarray | None:
    """One AI reading, or ``None`` when the whole patient-visit is unreadable."""
    truth = np.asarray(truth, dtype=np.int8)
    g = as_generator(rng)
    u_miss = g.random()
    u = g.random(N_CORNERS)
    if u_miss < spec.missing_prob:
        return None
    return sample_rows(truth, spec.confusion_matrix(), u)


def _visit_truths(cohort_spec, n_units: int, rng) -> np.ndarray:
    from .cohort import sample_cohort

    cohort = sample_cohort(cohort_spec.with_size((n_units + 1) // 2), RngStream(0) if rng is None else rng)
    rows = [v for p in cohort for v in (p.baseline, p.week104)]
    return np.asarray(rows[:n_units], dtype=np.int8)


def calibrate_human_noise(target_arbitration_rate: float, cohort, rule: Threshold = Threshold(0),
                          rng: RngStream | None = None, *, n_units: int = 10_000,
                          kernel=None, tol: float = 0.02, max_iter: int = 60) -> HumanReaderParams:
    """Find the corner error rate giving the target double-reader arbitration rate.

    Bisection on the error rate with a Monte-Carlo estimate of the rate of
    double-read disagreement. The same uniforms are reused at every step so the
    estimated rate moves smoothly with the error rate.
    """
    if not isinstance(rule, Threshold):
        raise ValueError("human noise calibration needs a threshold disagreement rule")
    if not 0.0 <= target_arbitration_rate < 1.0:
        raise ValueError("target rate must lie in [0, 1)")
    kernel = adjacent_kernel() if kernel is None else validate_confusion(kernel)
    rng = RngStream(0) if rng is None else rng
    truths = _visit_truths(cohort, n_units, rng.child("calibration-truth"))
    g = rng.child("calibration-reads").generator()
    u = g.random((4,) + truths.shape)

    def rate(eps: float) -> float:
        t1 = _perturb(truths, eps, kernel, u[0], u[1]).sum(axis=1, dtype=np.int64)
        t2 = _perturb(truths, eps, kernel, u[2], u[3]).sum(axis=1, dtype=np.int64)
        return float(np.mean(np.abs(t1 - t2) > rule.delta))

    # the rate rises with the error rate up to a peak, then falls as the
    # kernel becomes deterministic at the boundary grades; search the rising branch
    scan = np.linspace(0.0, 1.0, 41)
    rates = [rate(e) for e in scan]
    peak = int(np.argmax(rates))
    lo, hi = 0.0, float(scan[peak])
    r_lo, r_hi = rates[0], rates[peak]
    if r_lo >= target_arbitration_rate:
        if r_lo - target_arbitration_rate <= tol:
            return HumanReaderParams(lo, kernel)
        raise Unachievable(f"target {target_arbitration_rate:.4f} below the noise-free rate {r_lo:.4f}")
    if r_hi < target_arbitration_rate - tol:
        raise Unachievable(f"target {target_arbitration_rate:.4f} above the largest reachable rate {r_hi:.4f}")

    best = (abs(r_hi - target_arbitration_rate), hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        best = min(best, (abs(r - target_arbitration_rate), mid))
        if abs(r - target_arbitration_rate) < 1e-4 or hi - lo < 1e-7:
            break
        if r < target_arbitration_rate:
            lo = mid
        else:
            hi = mid
    err, eps = best
    if err > tol:
        raise Unachievable(f"closest rate misses the target by {err:.4f}")
    return HumanReaderParams(eps, kernel)
