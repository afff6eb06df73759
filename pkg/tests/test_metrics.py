import pytest

from meshroute import metrics as M
from meshroute.metrics import DeliveryRecord, LossLedger
from meshroute.traffic import DropCause


def rec(seq, departed, arrived):
    return DeliveryRecord("F", seq, departed, arrived, 1)


def test_mean_delay():
    assert M.mean_delay([rec(0, 0, 5000)]) == 5000
    assert M.mean_delay([rec(i, 0, d) for i, d in enumerate((1000, 2000, 3000))]) == 2000
    assert M.mean_delay([]) is None


def test_mean_delay_of_merged_sets_is_weighted():
    a = [rec(i, 0, 1000 * i) for i in range(1, 8)]
    b = [rec(i, 0, 500 * i + 3) for i in range(1, 20)]
    merged = M.mean_delay(a + b)
    weighted = (len(a) * M.mean_delay(a) + len(b) * M.mean_delay(b)) / (len(a) + len(b))
    assert merged == pytest.approx(weighted)


def test_differential_and_ratio():
    assert M.delay_differential(10_000, 60_000) == -50_000
    assert M.delay_differential(7.0, 7.0) == 0
    assert M.delay_differential(3, 5) == -M.delay_differential(5, 3)
    assert M.delay_differential(None, 5) is None
    assert M.throughput_ratio(100, 100) == 1.0
    assert M.throughput_ratio(200, 100) == 2.0
    assert M.throughput_ratio(5, 0) is None


def test_cdf_steps():
    assert M.cdf([3, 1, 2]) == [(1, pytest.approx(1 / 3)), (2, pytest.approx(2 / 3)), (3, 1.0)]
    assert M.cdf([5, 5]) == [(5, 1.0)]
    with pytest.raises(ValueError):
        M.cdf([])


def test_cdf_median_of_1_to_100():
    steps = M.cdf(range(1, 101))
    assert M.cdf_eval(steps, 50) == 0.5
    assert M.cdf_eval(steps, 50.5) == 0.5
    assert M.cdf_eval(steps, 51) == 0.51
    lo, hi = M.quantile(steps, 0.5), M.quantile(steps, 0.51)
    assert (lo + hi) / 2 == 50.5
    assert M.cdf_eval(steps, 0) == 0.0


def test_loss_decomposition_sums_to_100():
    led = LossLedger("F", injected=200, delivered=150)
    for cause, n in ((DropCause.OVERFLOW, 20), (DropCause.RETRY, 10), (DropCause.LOOP, 5)):
        for _ in range(n):
            led.drop(cause)
    pct = M.loss_decomposition(led)
    assert pct == {"overflow": 10.0, "retry": 5.0, "loop": 2.5, "delivered": 75.0, "in_flight": 7.5}
    assert sum(pct.values()) == pytest.approx(100.0)
    clean = M.loss_decomposition(LossLedger("G", injected=4, delivered=4))
    assert clean["delivered"] == 100.0 and clean["retry"] == 0.0
    with pytest.raises(ValueError):
        M.loss_decomposition(LossLedger("H"))


def test_reordering():
    in_order = [rec(i, i, 10 + i) for i in range(5)]
    assert M.reordering_displacements(in_order) == [0] * 5
    swapped = [rec(0, 0, 20), rec(1, 1, 15), rec(2, 2, 30)]
    assert sorted(abs(d) for d in M.reordering_displacements(swapped)) == [0, 1, 1]
    assert M.reordering_cdf(in_order) == [(0, 1.0)]


def test_classify_load():
    assert M.classify_load(None) is None
    assert M.classify_load(99_999) == "low"
    assert M.classify_load(100_000) == "high"
