import pytest

from gradesim.economics import CostParams, cost_sweep, crossover_ratio, expected_cost
from gradesim.workflow import FrameworkKind

TABLE = {"HDR": (1.0, 0.4892), "AI_IR": (0.0, 0.5983), "AI_SR": (0.5983, 0.3917)}


def test_expected_cost_examples():
    assert expected_cost(TABLE["HDR"]) == pytest.approx(2.4892, abs=1e-12)
    assert expected_cost(TABLE["AI_IR"]) == pytest.approx(1.5983, abs=1e-12)
    assert expected_cost((0, 0), CostParams(c_first=1.7)) == 1.7
    assert expected_cost((0.5, 0.5), CostParams(c_ai=0.3)) == pytest.approx(2.3)
    assert expected_cost((0.5, 0.5), CostParams(c_ai=0.3), with_ai=False) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        expected_cost((1.2, 0))


def test_sweep_orders_frameworks():
    reports = {r.framework: r for r in cost_sweep(TABLE)}
    for i, r in enumerate((1.0, 2.0, 3.0, 4.0, 5.0)):
        hdr = reports[FrameworkKind.HDR].sweep[i][1]
        assert reports[FrameworkKind.AI_IR].sweep[i][1] < hdr
        assert reports[FrameworkKind.AI_SR].sweep[i][1] < hdr
    assert reports[FrameworkKind.AI_SR].sweep[-1][1] == pytest.approx(3.5568, abs=1e-9)
    # 1 + 5 * 0.5983
    assert reports[FrameworkKind.AI_IR].sweep[-1][1] == pytest.approx(3.9915, abs=1e-9)


def test_sweep_monotone_and_single_point():
    for rep in cost_sweep(TABLE, r_grid=[0.5, 1, 2, 7]):
        costs = [c for _, c in rep.sweep]
        assert costs == sorted(costs)
    single = cost_sweep(TABLE, r_grid=[1.0])
    assert len(single) == 3 and all(len(r.sweep) == 1 for r in single)
    with pytest.raises(ValueError):
        cost_sweep(TABLE, r_grid=[])


def test_trial_cost():
    rep = cost_sweep({"AI_IR": (0.0, 0.5)}, n_units={FrameworkKind.AI_IR: 722})[0]
    assert rep.trial_cost == pytest.approx(1.5 * 722)


def test_crossover_examples():
    assert crossover_ratio(TABLE["AI_IR"], TABLE["AI_SR"]) == pytest.approx(0.5983 / (0.5983 - 0.3917))
    assert crossover_ratio((0.1, 0.2), (0.1, 0.2)) is None
    assert crossover_ratio((0, 0.5), (0.5, 0.25)) == pytest.approx(2.0)
    # solution on the wrong side of zero
    assert crossover_ratio((0.5, 0.5), (0.0, 0.25)) is None


def test_single_crossing():
    r_star = crossover_ratio(TABLE["AI_IR"], TABLE["AI_SR"])
    for r in (1.0, 2.0, 2.8, 2.9, 4.0, 5.0):
        p = CostParams(arbitration_ratio=r)
        ir, sr, hdr = (expected_cost(TABLE[k], p) for k in ("AI_IR", "AI_SR", "HDR"))
        if r < r_star:
            assert ir < sr < hdr
        else:
            assert sr < ir


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_price_scaling(lam):
    base = CostParams(c_first=1.0, c_second=1.2, arbitration_ratio=2.0, c_ai=0.1)
    scaled = CostParams(lam * 1.0, lam * 1.2, 2.0, lam * 0.1)
    assert expected_cost(TABLE["AI_SR"], scaled) == pytest.approx(lam * expected_cost(TABLE["AI_SR"], base))
    assert crossover_ratio(TABLE["AI_IR"], TABLE["AI_SR"], scaled) == pytest.approx(
        crossover_ratio(TABLE["AI_IR"], TABLE["AI_SR"], base))


def test_cost_params_validation():
    with pytest.raises(ValueError):
        CostParams(c_first=-1)
    with pytest.raises(ValueError):
        CostParams(arbitration_ratio=0)
