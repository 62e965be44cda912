import pytest
from hypothesis import given, settings, strategies as st

from photorack.models import (MEMORY_BER_TARGET, STUDIED_ADDED_LATENCIES_NS, IsoPerfInputs,
                              added_compute_increase, fec_evaluate, iso_performance,
                              latency_budget, power_total, serialization_ns)


def test_photonic_budget_at_four_meters():
    b = latency_budget(4)
    assert b.total_ns == 35.0
    assert (b.propagation_ns, b.oeo_ns, b.fec_ns) == (20.0, 15.0, 0.0)


def test_pcie_tree_budget():
    assert latency_budget(4, tech="pcie_gen5_tree").total_ns == 85.0


@pytest.mark.parametrize("d", range(11))
def test_photonic_slope(d):
    assert latency_budget(d + 1).total_ns - latency_budget(d).total_ns == 5.0


def test_extra_hops_pay_oeo_and_fec():
    assert latency_budget(4, 1).total_ns == 35.0 + 15.0 + 3.0


@given(st.floats(0, 100), st.integers(0, 5))
def test_more_hops_never_faster(d, h):
    for tech in ("photonic", "pcie_gen5_tree", "anton3_hop"):
        assert latency_budget(d, h + 1, tech).total_ns >= latency_budget(d, h, tech).total_ns


def test_anton_hop_and_serialization():
    assert latency_budget(4, tech="anton3_hop").total_ns == 90.0
    assert serialization_ns(200) == 10.0 and serialization_ns(400) == 5.0
    assert latency_budget(4, link_gbps=200).total_ns == 45.0


def test_latency_errors():
    with pytest.raises(ValueError):
        latency_budget(4, tech="smoke_signals")
    with pytest.raises(ValueError):
        latency_budget(-1)


def test_studied_latencies_are_reachable():
    assert 35.0 in STUDIED_ADDED_LATENCIES_NS and 85.0 in STUDIED_ADDED_LATENCIES_NS


def test_fec_squares_raw_rate():
    assert fec_evaluate(1e-6).flit_failure == 1e-12
    m = fec_evaluate(1e-9)
    assert m.meets_memory_target and m.target_ber == MEMORY_BER_TARGET
    assert not fec_evaluate(1e-6).meets_memory_target


@settings(max_examples=1000)
@given(st.floats(0, 1), st.floats(0, 1))
def test_fec_monotone(a, b):
    lo, hi = sorted((a, b))
    assert fec_evaluate(lo).flit_failure <= fec_evaluate(hi).flit_failure
    assert fec_evaluate(hi).flit_failure <= hi


def test_fec_rejects_bad_input():
    with pytest.raises(ValueError):
        fec_evaluate(1.5)
    with pytest.raises(ValueError):
        fec_evaluate(1e-6, bandwidth_loss_fraction=0.002)


def test_power_components():
    p = power_total(350, 2048, 6)
    assert p.laser_w == pytest.approx(350 * 2048 * 0.01 / 0.11)
    assert p.transceiver_w == pytest.approx(350 * 2048 * 25e9 * 2.92e-12)
    assert p.switch_w == 6000.0
    assert p.total_w <= 150e3


@given(st.integers(1, 400), st.integers(1, 4096), st.integers(0, 20))
def test_power_grows_with_counts(m, w, s):
    a, b = power_total(m, w, s), power_total(m + 1, w, s + 1)
    assert b.total_w > a.total_w


def test_iso_performance_reference():
    r = iso_performance()
    assert r["disaggregated"] == {"cpu": 145, "gpu": 553, "ddr4": 256, "nic": 128}
    assert (r["disaggregated_total"], r["baseline_total"]) == (1082, 1920)
    assert 0.43 <= r["reduction"] <= 0.44


def test_iso_rejects_bad_inputs():
    with pytest.raises(ValueError):
        IsoPerfInputs(memory_reduction=0.5)


def test_added_compute():
    assert added_compute_increase(128) == pytest.approx(128 / 1920)
