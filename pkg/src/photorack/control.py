"""Distributed per-source routing over a wavelength-routed fabric.

Each MCM owns the transmit wavelengths leaving its package and knows their
state exactly. What it knows about other MCMs comes only from occupancy
vectors they piggyback on traffic, which may be stale. A source fills a
demand with free direct wavelengths first and only then splits the rest over
intermediates picked uniformly at random among those that look usable. An
intermediate that finds its onward wavelength busy reroutes through a second
intermediate of its own, up to a hop limit.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Collection, Optional, Sequence

import numpy as np

ONE_HOT = "one_hot"
BYTE_PER_WAVELENGTH = "byte_per_wavelength"
OCCUPANCY_MODES = (ONE_HOT, BYTE_PER_WAVELENGTH)
DEFAULT_HOP_LIMIT = 4


class FlowReleaseError(RuntimeError):
    pass


class WavelengthMap:
    """Static topology: destination MCM of every local transmit wavelength.

    ``dests[m][i]`` is where local wavelength ``i`` of MCM ``m`` lands, or -1.
    Every node knows this map; it is fixed by the wiring.
    """

    def __init__(self, dests: Sequence[np.ndarray]):
        self.dests = [np.asarray(d, dtype=np.int64) for d in dests]
        self.n = len(self.dests)
        self._lam_to = []
        for d in self.dests:
            order = np.argsort(d, kind="stable")
            keys = d[order]
            bounds = np.searchsorted(keys, np.arange(-1, self.n + 1))
            self._lam_to.append({int(k): order[bounds[k + 1]:bounds[k + 2]]
                                 for k in range(self.n) if bounds[k + 2] > bounds[k + 1]})

    @classmethod
    def from_plan(cls, plan, wss_configs=None) -> "WavelengthMap":
        from .rack import local_wavelength_map
        return cls(local_wavelength_map(plan, wss_configs))

    def lambdas_to(self, src: int, dst: int) -> np.ndarray:
        return self._lam_to[src].get(dst, _EMPTY)

    def direct_count(self, src: int, dst: int) -> int:
        return len(self.lambdas_to(src, dst))


_EMPTY = np.zeros(0, dtype=np.int64)


class LocalState:
    """Authoritative transmit state of one MCM: flows per local wavelength."""

    def __init__(self, owner: int, wmap: WavelengthMap, capacity: int = 1):
        self.owner = owner
        self.wmap = wmap
        self.slots = np.zeros(len(wmap.dests[owner]), dtype=np.uint8)
        self.capacity = capacity
        self.version = 0

    def busy(self) -> np.ndarray:
        return self.slots >= self.capacity

    def free_to(self, dst: int) -> np.ndarray:
        lams = self.wmap.lambdas_to(self.owner, dst)
        return lams[self.slots[lams] < self.capacity]

    def is_free(self, lam: int) -> bool:
        return self.slots[lam] < self.capacity

    def claim(self, lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=np.int64))
        if lams.size == 0:
            return
        if (self.slots[lams] >= self.capacity).any() or len(np.unique(lams)) != lams.size:
            raise RuntimeError(f"MCM {self.owner}: wavelength over capacity")
        self.slots[lams] += 1
        self.version += 1

    def free(self, lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=np.int64))
        if lams.size == 0:
            return
        if (self.slots[lams] == 0).any():
            raise FlowReleaseError(f"MCM {self.owner}: releasing an idle wavelength")
        self.slots[lams] -= 1
        self.version += 1


@dataclass(frozen=True)
class OccupancyVector:
    owner: int
    mode: str
    data: np.ndarray       # per local wavelength: busy bit or flow-slot count
    version: int

    @property
    def nbits(self) -> int:
        return len(self.data) * (1 if self.mode == ONE_HOT else 8)

    def packed(self) -> bytes:
        if self.mode == ONE_HOT:
            return np.packbits(self.data.astype(bool)).tobytes()
        return self.data.astype(np.uint8).tobytes()

    def busy(self, capacity: int = 1) -> np.ndarray:
        return self.data >= (1 if self.mode == ONE_HOT else capacity)


def encode_occupancy(state: LocalState, mode: str = ONE_HOT) -> OccupancyVector:
    """Snapshot a source's wavelength usage, stamped with its state version.

    The version advances on every claim or release, so a newer snapshot
    always carries a larger version than an older one.
    """
    if mode == ONE_HOT:
        data = (state.slots > 0).astype(np.uint8)
    elif mode == BYTE_PER_WAVELENGTH:
        data = state.slots.copy()
    else:
        raise ValueError(f"unknown occupancy mode {mode!r}")
    data.flags.writeable = False
    return OccupancyVector(state.owner, mode, data, state.version)


@dataclass
class KbEntry:
    vector: OccupancyVector
    received_at: float


class KnowledgeBase:
    """One MCM's (possibly stale) view of its peers' wavelength usage.

    A peer with no entry yet is assumed idle, which is how every node
    starts. Entries are trusted regardless of age.
    """

    def __init__(self, owner: int):
        self.owner = owner
        self.entries = {}

    def version_of(self, peer: int) -> int:
        e = self.entries.get(peer)
        return -1 if e is None else e.vector.version

    def believed_free(self, peer: int, dst: int, wmap: WavelengthMap,
                      capacity: int = 1) -> np.ndarray:
        lams = wmap.lambdas_to(peer, dst)
        e = self.entries.get(peer)
        if e is None or lams.size == 0:
            return lams
        return lams[~e.vector.busy(capacity)[lams]]


def piggyback_update(kb: KnowledgeBase, sender: int, vector: OccupancyVector, now: float) -> bool:
    """Store ``vector`` if it is newer than what ``kb`` holds for ``sender``."""
    if vector.version <= kb.version_of(sender):
        return False
    kb.entries[sender] = KbEntry(vector, now)
    return True


@dataclass(frozen=True)
class IndirectPath:
    """Hops ``((src, lam), (mid, lam), ...)``; the last hop lands on the destination."""
    hops: tuple

    @property
    def mid(self) -> int:
        return self.hops[1][0]

    @property
    def src_lambda(self) -> int:
        return self.hops[0][1]

    @property
    def mid_lambda(self) -> int:
        return self.hops[1][1]

    @property
    def hop_count(self) -> int:
        return len(self.hops)


@dataclass
class FlowAssignment:
    flow_id: int
    src: int
    dst: int
    demand_gbps: float
    direct: tuple = ()
    indirect: list = field(default_factory=list)
    gbps_per_wavelength: float = 25.0
    saturated: bool = False
    active: bool = True

    @property
    def paths(self) -> int:
        return len(self.direct) + len(self.indirect)

    @property
    def granted_gbps(self) -> float:
        return self.gbps_per_wavelength * self.paths

    @property
    def delivered_gbps(self) -> float:
        return min(self.demand_gbps, self.granted_gbps)

    @property
    def indirect_gbps(self) -> float:
        """Share of the delivered rate carried on indirect paths (direct fills first)."""
        direct = self.gbps_per_wavelength * len(self.direct)
        return max(0.0, self.delivered_gbps - direct)

    @property
    def max_hops(self) -> int:
        hops = [p.hop_count for p in self.indirect]
        if self.direct:
            hops.append(1)
        return max(hops, default=0)

    def hop_list(self) -> list:
        return [1] * len(self.direct) + [p.hop_count for p in self.indirect]


def wavelengths_needed(demand_gbps: float, gbps_per_wavelength: float) -> int:
    return max(1, math.ceil(demand_gbps / gbps_per_wavelength - 1e-9))


def select_route(state: LocalState, dst: int, demand_gbps: float, kb: KnowledgeBase,
                 rng: np.random.Generator, *, flow_id: int = 0,
                 gbps_per_wavelength: float = 25.0, relays: Optional[Collection[int]] = None,
                 use_direct: bool = True) -> FlowAssignment:
    """Pick wavelengths for a new flow from ``state.owner`` to ``dst``.

    Only the source's own state and its knowledge base are consulted. Free
    direct wavelengths are taken first. Each remaining wavelength becomes an
    indirect path through an intermediate chosen uniformly at random among
    MCMs that have a free local wavelength from the source and, per the
    knowledge base, a free wavelength on to ``dst``. ``relays`` restricts the
    eligible intermediates. The chosen source wavelengths are claimed.
    """
    src = state.owner
    if src == dst:
        raise ValueError("source and destination must differ")
    if demand_gbps <= 0:
        raise ValueError("demand must be positive")
    wmap = state.wmap
    need = wavelengths_needed(demand_gbps, gbps_per_wavelength)
    direct = state.free_to(dst)[:need] if use_direct else _EMPTY
    remaining = need - len(direct)
    indirect = []
    if remaining > 0:
        free_mask = state.slots < state.capacity
        dests = wmap.dests[src]
        eligible = np.zeros(wmap.n, dtype=bool)
        if relays is None:
            eligible[:] = True
        else:
            eligible[list(relays)] = True
        eligible[[src, dst]] = False
        src_free = {}
        mid_free = {}
        for m in np.nonzero(eligible)[0]:
            lams = wmap.lambdas_to(src, m)
            lams = lams[free_mask[lams]]
            if lams.size == 0:
                continue
            onward = kb.believed_free(m, dst, wmap, state.capacity)
            if onward.size == 0:
                continue
            src_free[int(m)] = list(lams)
            mid_free[int(m)] = list(onward)
        candidates = sorted(src_free)
        while remaining > 0 and candidates:
            pick = int(rng.integers(len(candidates)))
            m = candidates[pick]
            path = IndirectPath(((src, int(src_free[m].pop(0))), (m, int(mid_free[m].pop(0)))))
            indirect.append(path)
            remaining -= 1
            if not src_free[m] or not mid_free[m]:
                candidates.pop(pick)
    state.claim(np.concatenate([direct, [p.src_lambda for p in indirect]]).astype(np.int64))
    return FlowAssignment(flow_id, src, dst, demand_gbps, tuple(int(x) for x in direct),
                          indirect, gbps_per_wavelength, saturated=remaining > 0)


class HopLimitExceeded(RuntimeError):
    pass


def fallback_at_intermediate(mid_state: LocalState, dst: int, kb_mid: KnowledgeBase,
                             rng: np.random.Generator, states: Sequence[LocalState],
                             kbs: Sequence[KnowledgeBase], hops_so_far: int,
                             hop_limit: int = DEFAULT_HOP_LIMIT,
                             relays: Optional[Collection[int]] = None,
                             on_stale: Optional[Callable] = None) -> tuple:
    """Carry one wavelength of traffic from ``mid_state.owner`` on to ``dst``.

    The intermediate reruns routing for a single wavelength with its own
    state and knowledge. Returns the hops taken from this node onward.
    Raises ``HopLimitExceeded`` (after releasing anything it claimed) when
    the path would need more than ``hop_limit`` links in total.
    """
    node = mid_state.owner
    if hops_so_far + 1 > hop_limit:
        raise HopLimitExceeded(f"no route from {node} to {dst} within {hop_limit} hops")
    one = select_route(mid_state, dst, 1.0, kb_mid, rng, relays=relays)
    if one.direct:
        return ((node, one.direct[0]),)
    if not one.indirect:
        raise HopLimitExceeded(f"{node} has no usable route to {dst}")
    path = one.indirect[0]
    try:
        if hops_so_far + 2 > hop_limit:
            raise HopLimitExceeded(f"no route from {node} to {dst} within {hop_limit} hops")
        tail = forward(states, kbs, path.mid, dst, path.mid_lambda, rng,
                       hops_so_far + 1, hop_limit, relays, on_stale)
    except HopLimitExceeded:
        mid_state.free(path.src_lambda)
        raise
    return ((node, path.src_lambda),) + tail


def forward(states, kbs, node: int, dst: int, believed_lambda: int, rng,
            hops_so_far: int, hop_limit: int = DEFAULT_HOP_LIMIT, relays=None,
            on_stale=None) -> tuple:
    """Claim the onward hop at an intermediate, falling back when it is busy.

    ``hops_so_far`` counts links already traversed to reach ``node``.
    """
    state = states[node]
    if state.is_free(believed_lambda):
        state.claim(believed_lambda)
        return ((node, int(believed_lambda)),)
    if on_stale is not None:
        on_stale(node)
    return fallback_at_intermediate(state, dst, kbs[node], rng, states, kbs,
                                    hops_so_far, hop_limit, relays, on_stale)


def release_flow(assignment: FlowAssignment, states: Sequence[LocalState]):
    """Free every wavelength held by ``assignment`` at every node on its paths."""
    if not assignment.active:
        raise FlowReleaseError(f"flow {assignment.flow_id} already released")
    states[assignment.src].free(list(assignment.direct))
    for path in assignment.indirect:
        for node, lam in path.hops:
            states[node].free(lam)
    assignment.active = False


class ControlPlane:
    """All MCM controllers of one rack, driven by a single-threaded caller."""

    def __init__(self, wmap: WavelengthMap, gbps_per_wavelength: float = 25.0,
                 hop_limit: int = DEFAULT_HOP_LIMIT, mode: str = ONE_HOT,
                 capacity: int = 1, trace: Optional[Callable] = None):
        self.wmap = wmap
        self.gbps_per_wavelength = gbps_per_wavelength
        self.hop_limit = hop_limit
        self.mode = mode
        self.states = [LocalState(m, wmap, capacity) for m in range(wmap.n)]
        self.kbs = [KnowledgeBase(m) for m in range(wmap.n)]
        self._sent_version = [0] * wmap.n
        self.fallback_events = 0
        self.requeue_events = 0
        self.trace = trace

    def _log(self, now, src, dst, decision, hops):
        if self.trace is not None:
            self.trace({"time": now, "src": src, "dst": dst, "decision": decision, "hops": hops})

    def route(self, flow_id: int, src: int, dst: int, demand_gbps: float, rng,
              now: float = 0.0, relays=None, use_direct: bool = True) -> FlowAssignment:
        """Select paths at the source and establish them hop by hop.

        Indirect paths that cannot be completed within the hop limit are
        dropped from the assignment (counted as re-queue events).
        """
        a = select_route(self.states[src], dst, demand_gbps, self.kbs[src], rng,
                         flow_id=flow_id, gbps_per_wavelength=self.gbps_per_wavelength,
                         relays=relays, use_direct=use_direct)
        return self._establish(a, rng, now, relays)

    def extend(self, a: FlowAssignment, extra_gbps: float, rng, now: float = 0.0,
               relays=None, use_direct: bool = True) -> FlowAssignment:
        """Add paths to an active flow; existing paths are never touched."""
        more = select_route(self.states[a.src], a.dst, extra_gbps, self.kbs[a.src], rng,
                            flow_id=a.flow_id, gbps_per_wavelength=self.gbps_per_wavelength,
                            relays=relays, use_direct=use_direct)
        more = self._establish(more, rng, now, relays)
        a.direct = a.direct + more.direct
        a.indirect = a.indirect + more.indirect
        a.saturated = more.saturated
        return a

    def _establish(self, a: FlowAssignment, rng, now, relays) -> FlowAssignment:
        if a.direct:
            self._log(now, a.src, a.dst, "direct", 1)
        kept = []

        def stale(node):
            self.fallback_events += 1
            self._log(now, node, a.dst, "fallback", None)

        for path in a.indirect:
            try:
                tail = forward(self.states, self.kbs, path.mid, a.dst, path.mid_lambda, rng,
                               1, self.hop_limit, relays, stale)
            except HopLimitExceeded:
                self.states[a.src].free(path.src_lambda)
                self.requeue_events += 1
                a.saturated = True
                self._log(now, a.src, a.dst, "requeue", None)
                continue
            full = IndirectPath((path.hops[0],) + tail)
            kept.append(full)
            self._log(now, a.src, a.dst, f"indirect_via_{path.mid}", full.hop_count)
        a.indirect = kept
        return a

    def release(self, a: FlowAssignment):
        release_flow(a, self.states)

    def broadcast(self, now: float) -> int:
        """Every MCM whose state changed since its last broadcast shares its vector."""
        sent = 0
        for m, state in enumerate(self.states):
            if state.version == self._sent_version[m]:
                continue
            vec = encode_occupancy(state, self.mode)
            for kb in self.kbs:
                if kb.owner != m:
                    piggyback_update(kb, m, vec, now)
            self._sent_version[m] = state.version
            sent += 1
        return sent

    def audit(self, assignments) -> int:
        """Recount wavelength use from the active assignments; return violations."""
        expected = [np.zeros_like(s.slots, dtype=np.int64) for s in self.states]
        for a in assignments:
            if not a.active:
                continue
            for lam in a.direct:
                expected[a.src][lam] += 1
            for path in a.indirect:
                for node, lam in path.hops:
                    expected[node][lam] += 1
        violations = 0
        for s, exp in zip(self.states, expected):
            violations += int((exp > s.capacity).sum())
            violations += int((exp != s.slots).sum())
        return violations
