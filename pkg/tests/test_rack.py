import numpy as np
import pytest
from hypothesis import given, strategies as st

from photorack.optics import SwitchSpec
from photorack.rack import (ChipSpec, FabricCapacityError, InfeasiblePacking, McmSpec,
                            build_awgr_fabric, build_wss_fabric, direct_path_matrix,
                            local_wavelength_map, pack_mcms, shared_switches, wss_all_to_all)

EXPECTED_PACKING = {"cpu": (14, 10), "gpu": (3, 171), "nic": (203, 3), "hbm": (4, 128), "ddr4": (27, 38)}


def brute_direct_counts(plan):
    """Pure-python count of wavelengths from each MCM that land on each other MCM."""
    owner = {}
    for a in plan.attachments:
        owner[(a.switch, a.port)] = a.mcm
    counts = {}
    radix = plan.switch.radix
    for a in plan.attachments:
        for w in a.wavelengths:
            dst = owner.get((a.switch, (a.port + w) % radix))
            if dst is not None and dst != a.mcm:
                counts[(a.mcm, dst)] = counts.get((a.mcm, dst), 0) + 1
    return counts


def test_reference_packing(case_a):
    table, _ = case_a
    assert {r.chip_type: (r.chips_per_mcm, r.mcm_count) for r in table.rows} == EXPECTED_PACKING
    assert table.total_mcms == 350


def test_gpu_only_packing():
    t = pack_mcms([ChipSpec("gpu", 1886.7, 512)])
    assert (t.row("gpu").chips_per_mcm, t.row("gpu").mcm_count) == (3, 171)


def test_infeasible_chip_named():
    with pytest.raises(InfeasiblePacking) as e:
        pack_mcms([ChipSpec("cpu", 10.0, 4), ChipSpec("gpu", 6400.1, 4)])
    assert e.value.chip_type == "gpu"


@given(st.floats(0.5, 6400.0), st.integers(1, 5000), st.one_of(st.none(), st.integers(1, 100)))
def test_packing_respects_escape(escape, count, cap):
    mcm = McmSpec()
    row = pack_mcms([ChipSpec("x", escape, count)], mcm, {"x": cap} if cap else None).row("x")
    assert row.chips_per_mcm * escape <= mcm.escape_gbytes_per_s * (1 + 1e-9)
    assert row.chips_per_mcm * row.mcm_count >= count
    assert (row.chips_per_mcm) * (row.mcm_count - 1) < count
    if cap:
        assert row.chips_per_mcm <= cap


def test_controller_overhead_shrinks_escape():
    assert McmSpec(controller_overhead=0.1).escape_gbytes_per_s == pytest.approx(5760.0)


def test_case_a_matches_brute_force(case_a):
    _, plan = case_a
    assert plan.switch_count == 6
    m = direct_path_matrix(plan)
    brute = brute_direct_counts(plan)
    n = plan.mcm_count
    for i in range(n):
        for j in range(n):
            if i != j:
                assert m.counts[i, j] == brute.get((i, j), 0)
    assert (m.min(), m.max()) == (5, 6)
    assert m.min() * m.gbps_per_wavelength == 125.0


def test_case_a_wiring(case_a):
    _, plan = case_a
    plan.port_owner()   # raises on a doubly used port
    assert all(plan.attached_wavelengths(j) == 1992 for j in range(plan.mcm_count))
    assert plan.reserve_wavelengths == 56
    counts = direct_path_matrix(plan).counts
    assert np.array_equal(counts, counts.T)


def test_awgr_fabric_rejects_too_many_mcms():
    awgr = SwitchSpec("cascaded_awgr", 8, 8, 25.0, 15.0, -35.0)
    with pytest.raises(FabricCapacityError):
        build_awgr_fabric(9, awgr)


def test_case_b_brute_force(case_b):
    _, plan = case_b
    switches = {j: set() for j in range(plan.mcm_count)}
    for a in plan.attachments:
        switches[a.mcm].add(a.switch)
    assert all(len(s) == 8 for s in switches.values())
    assert plan.unconnected_ports() <= 16
    shared = shared_switches(plan)
    low = min(len(switches[i] & switches[j]) for i in range(350) for j in range(350) if i != j)
    assert low == shared[~np.eye(350, dtype=bool)].min()
    # 8 + 8 attachments among 11 switches must overlap in at least 5
    assert low >= 8 + 8 - plan.switch_count


def test_case_b_direct_bandwidth_at_least_three_switches(case_b):
    _, plan = case_b
    m = direct_path_matrix(plan)
    assert m.min() >= 3 * 256
    assert m.min() * m.gbps_per_wavelength >= 19200


def test_case_b_static_configuration_is_clean(case_b):
    _, plan = case_b
    configs = wss_all_to_all(plan)
    assert all(c.is_conflict_free() for c in configs.values())
    assert all(g.shortfall == 0 for c in configs.values() for g in c.grants)
    dests = local_wavelength_map(plan, configs)
    shared = shared_switches(plan)
    # every pair that shares a switch gets at least one configured wavelength
    reach = np.zeros_like(shared)
    for j, d in enumerate(dests):
        np.add.at(reach[j], d[d >= 0], 1)
    assert ((reach > 0) == (shared > 0)).all()


def test_wss_fabric_too_few_mcms():
    wss = SwitchSpec("wave_selective", 8, 8, 25.0, 10.0, -35.0)
    with pytest.raises(FabricCapacityError):
        build_wss_fabric(4, wss)


def test_two_mcm_wss_gives_full_escape():
    wss = SwitchSpec("wave_selective", 2, 64, 25.0, 10.0, -35.0)
    plan = build_wss_fabric(2, wss, McmSpec(), switch_count=32, start_stride=0)
    m = direct_path_matrix(plan)
    assert m.min() == 2048


def test_awgr_local_map_agrees_with_matrix(case_a):
    _, plan = case_a
    counts = direct_path_matrix(plan).counts
    for j, d in enumerate(local_wavelength_map(plan)):
        got = np.bincount(d[d >= 0], minlength=plan.mcm_count)
        assert np.array_equal(got, counts[j])
