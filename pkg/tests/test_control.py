import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from photorack.control import (BYTE_PER_WAVELENGTH, ONE_HOT, ControlPlane, FlowReleaseError,
                               KnowledgeBase, LocalState, WavelengthMap, encode_occupancy,
                               piggyback_update, select_route)


def ring_map(n=8, copies=1):
    """Every MCM has ``copies`` wavelengths to each other MCM, AWGR style."""
    dests = []
    for m in range(n):
        d = [(m + w) % n for w in range(n)] * copies
        dests.append(np.array([-1 if x == m else x for x in d]))
    return WavelengthMap(dests)


def check_path(wmap, src, dst, path):
    node = src
    for hop_node, lam in path.hops:
        assert hop_node == node
        node = int(wmap.dests[hop_node][lam])
    assert node == dst


def test_direct_wavelengths_first():
    wmap = ring_map()
    state = LocalState(1, wmap)
    a = select_route(state, 3, 25.0, KnowledgeBase(1), np.random.default_rng(0))
    assert len(a.direct) == 1 and not a.indirect
    assert not state.is_free(a.direct[0])


def test_busy_peer_is_skipped_and_idle_peer_relays():
    wmap = ring_map()
    cp = ControlPlane(wmap)
    # MCM 7 is busy towards 3 and MCM 1 has heard about it
    cp.states[7].claim(wmap.lambdas_to(7, 3))
    piggyback_update(cp.kbs[1], 7, encode_occupancy(cp.states[7]), 0.0)
    a = select_route(cp.states[1], 3, 50.0, cp.kbs[1], np.random.default_rng(0), relays=[6, 7])
    assert len(a.direct) == 1
    assert [p.mid for p in a.indirect] == [6]
    assert not a.saturated


def test_saturates_when_relays_run_out():
    wmap = ring_map()
    state = LocalState(1, wmap)
    a = select_route(state, 3, 100.0, KnowledgeBase(1), np.random.default_rng(0), relays=[5, 6])
    assert a.paths == 3 and a.saturated


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 14), st.integers(0, 2**32 - 1))
def test_direct_first_ordering(need, seed):
    wmap = ring_map(8, copies=2)
    state = LocalState(0, wmap)
    a = select_route(state, 1, need * 25.0, KnowledgeBase(0), np.random.default_rng(seed))
    assert len(a.direct) == min(need, 2)
    assert len(a.indirect) == need - len(a.direct)
    for p in a.indirect:
        check_path(wmap, 0, 1, p)
        assert wmap.dests[0][p.src_lambda] == p.mid


def test_valiant_choice_is_uniform():
    wmap = ring_map()
    rng = np.random.default_rng(12345)
    counts = dict.fromkeys(range(2, 8), 0)
    for _ in range(10000):
        a = select_route(LocalState(0, wmap), 1, 25.0, KnowledgeBase(0), rng, use_direct=False)
        counts[a.indirect[0].mid] += 1
    assert chisquare(list(counts.values())).pvalue > 0.01


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), st.integers(1, 6)), max_size=12),
       st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_stale_views_resolve_or_requeue(background, seed, hop_limit):
    wmap = ring_map(8, copies=2)
    cp = ControlPlane(wmap, hop_limit=hop_limit)
    rng = np.random.default_rng(seed)
    active = []
    # no broadcasts, so every knowledge base still believes the rack is idle
    for fid, (s, d, k) in enumerate(background):
        if s == d:
            continue
        before = cp.requeue_events
        a = cp.route(fid, s, d, 25.0 * k, rng)
        active.append(a)
        for p in a.indirect:
            check_path(wmap, s, d, p)
            assert p.hop_count <= hop_limit
        assert a.granted_gbps <= 25.0 * k
        if cp.requeue_events > before:
            assert a.saturated
    assert cp.audit(active) == 0
    for a in active:
        cp.release(a)
    assert all((s.slots == 0).all() for s in cp.states)


def stale_setup(hop_limit=4):
    """MCM 1 relays towards 3 via 6 or 5; it wrongly thinks 5 is busy and 6 idle."""
    wmap = ring_map()
    cp = ControlPlane(wmap, hop_limit=hop_limit)
    rng = np.random.default_rng(3)
    lam = wmap.lambdas_to(5, 3)
    cp.states[5].claim(lam)
    piggyback_update(cp.kbs[1], 5, encode_occupancy(cp.states[5]), 0.0)
    cp.states[5].free(lam)
    blocker = cp.route(0, 6, 3, 25.0, rng)
    a = cp.route(1, 1, 3, 50.0, rng, relays=[5, 6])
    return wmap, cp, blocker, a


def test_stale_entry_triggers_fallback():
    wmap, cp, blocker, a = stale_setup()
    assert cp.fallback_events == 1
    assert len(a.indirect) == 1
    assert [n for n, _ in a.indirect[0].hops] == [1, 6, 5]
    check_path(wmap, 1, 3, a.indirect[0])
    assert cp.audit([blocker, a]) == 0


def test_hop_limit_forces_requeue():
    _, cp, blocker, a = stale_setup(hop_limit=2)
    assert a.indirect == [] and a.saturated
    assert cp.requeue_events == 1
    assert cp.audit([blocker, a]) == 0
    assert (cp.states[5].slots == 0).all()


def test_extend_keeps_existing_paths():
    wmap = ring_map()
    cp = ControlPlane(wmap)
    rng = np.random.default_rng(0)
    a = cp.route(0, 0, 1, 25.0, rng)
    first = a.direct
    cp.extend(a, 50.0, rng)
    assert a.direct[:1] == first and a.paths == 3
    assert cp.audit([a]) == 0


def test_release_twice_is_an_error():
    wmap = ring_map()
    cp = ControlPlane(wmap)
    a = cp.route(0, 0, 1, 75.0, np.random.default_rng(0))
    cp.release(a)
    with pytest.raises(FlowReleaseError):
        cp.release(a)


def test_piggyback_keeps_newest():
    wmap = ring_map()
    s = LocalState(2, wmap)
    kb = KnowledgeBase(0)
    old = encode_occupancy(s)
    s.claim([1])
    new = encode_occupancy(s)
    assert piggyback_update(kb, 2, new, 1.0)
    assert not piggyback_update(kb, 2, old, 2.0)
    assert kb.version_of(2) == new.version
    assert 2 not in set(kb.believed_free(2, 3, wmap).tolist())


def test_occupancy_vector_encodings():
    wmap = WavelengthMap([np.arange(2048) % 2 + 1, np.zeros(2048, dtype=int), np.zeros(2048, dtype=int)])
    s = LocalState(0, wmap, capacity=3)
    s.claim([0, 5])
    s.claim([5])
    one = encode_occupancy(s, ONE_HOT)
    byte = encode_occupancy(s, BYTE_PER_WAVELENGTH)
    assert len(one.packed()) == 256 and len(byte.packed()) == 2048
    assert one.busy().sum() == 2
    assert byte.busy(3).sum() == 0 and byte.data[5] == 2
    with pytest.raises(ValueError):
        one.data[0] = 0


def test_broadcast_only_sends_changed_state():
    wmap = ring_map()
    cp = ControlPlane(wmap)
    assert cp.broadcast(0.0) == 0
    cp.route(0, 0, 1, 25.0, np.random.default_rng(0))
    assert cp.broadcast(1e-3) == 1
    assert cp.broadcast(2e-3) == 0
    assert cp.kbs[5].version_of(0) == cp.states[0].version


def test_same_seed_same_routes():
    def routes(seed):
        cp = ControlPlane(ring_map(8, 2))
        rng = np.random.default_rng(seed)
        return [cp.route(i, i % 8, (i + 3) % 8, 100.0, rng).hop_list() for i in range(16)]
    assert routes(9) == routes(9)


def test_capacity_enforced():
    s = LocalState(0, ring_map())
    s.claim([1])
    with pytest.raises(RuntimeError):
        s.claim([1])
