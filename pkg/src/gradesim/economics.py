"""Per-reading cost accounting and the arbitration-price sweep.

Expected cost of one reading unit::

    c_first + p_second * c_second + p_arb * r * c_second + c_ai

where ``r`` is the arbitration price relative to a second read. AI reads are
free by default and never charged to the human-only framework.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

from .workflow import FrameworkKind

DEFAULT_R_GRID = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class CostParams:
    c_first: float = 1.0
    c_second: float = 1.0
    arbitration_ratio: float = 1.0
    c_ai: float = 0.0

    def __post_init__(self):
        if min(self.c_first, self.c_second, self.c_ai) < 0:
            raise ValueError("prices must be >= 0")
        if self.arbitration_ratio <= 0:
            raise ValueError("arbitration ratio must be > 0")


@dataclass(frozen=True)
class CostReport:
    framework: FrameworkKind
    p_second: float
    p_arb: float
    expected_cost_per_reading: float
    sweep: tuple[tuple[float, float], ...] = field(default=())
    n_units: int | None = None

    @property
    def trial_cost(self) -> float | None:
        return None if self.n_units is None else self.expected_cost_per_reading * self.n_units


def _check_rates(rates):
    p_second, p_arb = rates
    if not (0.0 <= p_second <= 1.0 and 0.0 <= p_arb <= 1.0):
        raise ValueError(f"rates must lie in [0, 1]: {rates}")
    return float(p_second), float(p_arb)


def expected_cost(rates: tuple[float, float], params: CostParams = CostParams(), *, with_ai: bool = True) -> float:
    p_second, p_arb = _check_rates(rates)
    cost = params.c_first + p_second * params.c_second + p_arb * params.arbitration_ratio * params.c_second
    return cost + (params.c_ai if with_ai else 0.0)


def cost_sweep(rates_by_framework: Mapping, params: CostParams = CostParams(),
               r_grid: Sequence[float] = DEFAULT_R_GRID, n_units: Mapping | None = None) -> list[CostReport]:
    if not len(r_grid) or min(r_grid) <= 0:
        raise ValueError("r_grid must be a non-empty list of positive ratios")
    reports = []
    for fw, rates in rates_by_framework.items():
        fw = FrameworkKind(fw)
        with_ai = fw is not FrameworkKind.HDR
        sweep = tuple((float(r), expected_cost(rates, replace(params, arbitration_ratio=r), with_ai=with_ai))
                      for r in r_grid)
        reports.append(CostReport(fw, *_check_rates(rates), expected_cost(rates, params, with_ai=with_ai), sweep,
                                  None if n_units is None else n_units.get(fw)))
    return reports


def crossover_ratio(rates_ir: tuple[float, float], rates_sr: tuple[float, float],
                    params: CostParams = CostParams()) -> float | None:
    """Arbitration ratio at which AI_IR and AI_SR cost the same, if any.

    Both costs are linear in ``r`` and the first-read and AI prices cancel.
    """
    s_ir, a_ir = _check_rates(rates_ir)
    s_sr, a_sr = _check_rates(rates_sr)
    slope = (a_ir - a_sr) * params.c_second
    if slope == 0:
        return None
    r = (s_sr - s_ir) * params.c_second / slope
    return r if r > 0 else None
