"""MCM packing and the two fabric constructions (parallel AWGRs, parallel WSSs)."""

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .optics import SwitchSpec, awgr_wavelength_for, wss_configure

CHIP_TYPES = ("cpu", "gpu", "nic", "hbm", "ddr4")
AWGR_FABRIC = "awgr_case_a"
WSS_FABRIC = "wss_case_b"


class InfeasiblePacking(ValueError):
    def __init__(self, chip_type: str, chip_escape: float, mcm_escape: float):
        self.chip_type = chip_type
        super().__init__(
            f"{chip_type}: chip escape {chip_escape:g} GBps exceeds MCM escape {mcm_escape:g} GBps")


class FabricCapacityError(ValueError):
    pass


@dataclass(frozen=True)
class ChipSpec:
    chip_type: str
    escape_gbytes_per_s: float
    count_per_rack: int

    def __post_init__(self):
        if self.escape_gbytes_per_s <= 0 or self.count_per_rack <= 0:
            raise ValueError(f"{self.chip_type}: escape and count must be positive")


@dataclass(frozen=True)
class McmSpec:
    fibers: int = 32
    wavelengths_per_fiber: int = 64
    gbps_per_wavelength: float = 25.0
    controller_overhead: float = 0.0

    @property
    def wavelengths(self) -> int:
        return self.fibers * self.wavelengths_per_fiber

    @property
    def escape_gbytes_per_s(self) -> float:
        """Usable escape after the controller's reserved share."""
        raw = self.wavelengths * self.gbps_per_wavelength / 8
        return raw * (1.0 - self.controller_overhead)

    @classmethod
    def from_dict(cls, d: Mapping) -> "McmSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class PackingRow:
    chip_type: str
    chips_per_mcm: int
    mcm_count: int


@dataclass(frozen=True)
class PackingTable:
    rows: tuple

    @property
    def total_mcms(self) -> int:
        return sum(r.mcm_count for r in self.rows)

    def row(self, chip_type: str) -> PackingRow:
        for r in self.rows:
            if r.chip_type == chip_type:
                return r
        raise KeyError(chip_type)

    def mcm_types(self) -> list:
        """Chip type of every MCM index, types laid out in table order."""
        out = []
        for r in self.rows:
            out.extend([r.chip_type] * r.mcm_count)
        return out

    def to_dict(self) -> dict:
        return {
            "rows": [{"chip_type": r.chip_type, "chips_per_mcm": r.chips_per_mcm,
                      "mcm_count": r.mcm_count} for r in self.rows],
            "total_mcms": self.total_mcms,
        }


def pack_mcms(chips: Iterable[ChipSpec], mcm: McmSpec = McmSpec(),
              caps: Union[Mapping[str, int], None] = None) -> PackingTable:
    """Give every chip the same escape bandwidth it has in the baseline rack.

    Chips of one type share an MCM; the count per MCM is limited by the MCM
    escape bandwidth and by an optional per-type cap.
    """
    caps = caps or {}
    budget = mcm.escape_gbytes_per_s
    rows = []
    for chip in chips:
        # tolerate float noise such as 6400/25.6 landing just under 250
        per = math.floor(budget / chip.escape_gbytes_per_s + 1e-9)
        if per < 1:
            raise InfeasiblePacking(chip.chip_type, chip.escape_gbytes_per_s, budget)
        cap = caps.get(chip.chip_type)
        if cap is not None:
            per = min(per, cap)
        rows.append(PackingRow(chip.chip_type, per, math.ceil(chip.count_per_rack / per)))
    return PackingTable(tuple(rows))


@dataclass(frozen=True)
class Attachment:
    """One MCM fiber group plugged into one switch port."""
    mcm: int
    switch: int
    port: int
    fibers: int
    wavelengths: tuple   # switch wavelength indices carried on this port


@dataclass
class TopologyPlan:
    fabric: str
    switch: SwitchSpec
    switch_count: int
    mcm_count: int
    attachments: list
    mcm_types: Union[list, None] = None
    reserve_wavelengths: int = 0
    _by_mcm: dict = field(default=None, init=False, repr=False)

    @property
    def port_assignment(self) -> dict:
        """(mcm, fiber_group) -> (switch, port); groups are numbered per MCM."""
        out = {}
        for mcm, atts in self.by_mcm().items():
            for group, a in enumerate(atts):
                out[(mcm, group)] = (a.switch, a.port)
        return out

    @property
    def wavelengths_per_attachment(self) -> dict:
        return {(a.mcm, a.switch): len(a.wavelengths) for a in self.attachments}

    def by_mcm(self) -> dict:
        if self._by_mcm is None:
            grouped = {m: [] for m in range(self.mcm_count)}
            for a in self.attachments:
                grouped[a.mcm].append(a)
            for atts in grouped.values():
                atts.sort(key=lambda a: a.switch)
            self._by_mcm = grouped
        return self._by_mcm

    def port_owner(self) -> np.ndarray:
        """``owner[switch, port]`` -> attached MCM, or -1 for an unconnected port."""
        owner = np.full((self.switch_count, self.switch.radix), -1, dtype=np.int64)
        for a in self.attachments:
            if owner[a.switch, a.port] != -1:
                raise ValueError(f"switch {a.switch} port {a.port} used twice")
            owner[a.switch, a.port] = a.mcm
        return owner

    def unconnected_ports(self) -> int:
        return self.switch_count * self.switch.radix - len(self.attachments)

    def attached_wavelengths(self, mcm: int) -> int:
        return sum(len(a.wavelengths) for a in self.by_mcm()[mcm])

    def to_dict(self) -> dict:
        per_mcm = [self.attached_wavelengths(m) for m in range(self.mcm_count)]
        return {
            "fabric": self.fabric,
            "switch": {"kind": self.switch.kind, "radix": self.switch.radix,
                       "wavelengths_per_port": self.switch.wavelengths_per_port},
            "switch_count": self.switch_count,
            "mcm_count": self.mcm_count,
            "unconnected_ports": self.unconnected_ports(),
            "reserve_wavelengths_per_mcm": self.reserve_wavelengths,
            "attached_wavelengths_per_mcm": {"min": min(per_mcm, default=0),
                                             "max": max(per_mcm, default=0)},
            "attachments": [{"mcm": a.mcm, "switch": a.switch, "port": a.port,
                             "fibers": a.fibers, "wavelengths": len(a.wavelengths)}
                            for a in self.attachments],
        }


def _ring_order(src: int, n: int):
    """Other MCMs ordered by ring distance, alternating +d / -d."""
    for d in range(1, n // 2 + 1):
        yield (src + d) % n
        if (src - d) % n != (src + d) % n:
            yield (src - d) % n


def build_awgr_fabric(mcm_count: int, awgr: SwitchSpec, mcm: McmSpec = McmSpec(),
                      port_stride: int = 59, mcm_types=None) -> TopologyPlan:
    """Parallel AWGRs with staggered ports (case A).

    Fibers are bundled into groups just large enough to fill one AWGR port;
    each full group feeds one AWGR. The leftover fibers plus one group's
    overflow wavelengths feed one extra AWGR, where they are aimed at the
    nearest MCMs on the ring (both directions, so the pair counts stay
    symmetric). Overflow wavelengths of the remaining groups are held in reserve.
    """
    radix = awgr.radix
    if mcm_count > radix:
        raise FabricCapacityError(f"{mcm_count} MCMs exceed AWGR radix {radix}")
    per_port = min(awgr.wavelengths_per_port, radix)
    wpf = mcm.wavelengths_per_fiber
    group = math.ceil(per_port / wpf)
    full = mcm.fibers // group
    if full < 1:
        raise FabricCapacityError("an MCM cannot fill a single AWGR port")
    leftover_fibers = mcm.fibers - full * group
    overflow = group * wpf - per_port
    extra = min(per_port, leftover_fibers * wpf + overflow)
    switch_count = full + (1 if extra > 0 else 0)
    reserve = mcm.wavelengths - full * per_port - extra

    ports = np.array([[(j + s * port_stride) % radix for s in range(switch_count)]
                      for j in range(mcm_count)], dtype=np.int64)
    full_set = tuple(range(per_port))
    attachments = []
    for j in range(mcm_count):
        for s in range(full):
            attachments.append(Attachment(j, s, int(ports[j, s]), group, full_set))
        if extra:
            s = full
            chosen = []
            for dst in _ring_order(j, mcm_count):
                if len(chosen) == extra:
                    break
                chosen.append(awgr_wavelength_for(radix, int(ports[j, s]), int(ports[dst, s])))
            if len(chosen) < extra:
                taken = set(chosen)
                chosen += [w for w in range(radix) if w not in taken][:extra - len(chosen)]
            attachments.append(Attachment(j, s, int(ports[j, s]), leftover_fibers,
                                          tuple(sorted(chosen))))
    return TopologyPlan(AWGR_FABRIC, awgr, switch_count, mcm_count, attachments,
                        mcm_types, reserve)


def build_wss_fabric(mcm_count: int, wss: SwitchSpec, mcm: McmSpec = McmSpec(),
                     switch_count: int = 11, start_stride: int = 32,
                     mcm_types=None) -> TopologyPlan:
    """Parallel wave-selective switches (case B).

    Switch ``I`` serves the ``radix`` consecutive MCMs starting at
    ``(start_stride * I) mod mcm_count``. An MCM already holding its full
    share of attachments leaves later switches' ports unconnected.
    """
    if mcm_count < wss.radix:
        raise FabricCapacityError(f"{mcm_count} MCMs is below the switch radix {wss.radix}")
    wpp = wss.wavelengths_per_port
    per_mcm = mcm.wavelengths // wpp
    fibers = math.ceil(wpp / mcm.wavelengths_per_fiber)
    held = [0] * mcm_count
    attachments = []
    lambdas = tuple(range(wpp))
    for sw in range(switch_count):
        start = (start_stride * sw) % mcm_count
        for port in range(wss.radix):
            j = (start + port) % mcm_count
            if held[j] < per_mcm:
                held[j] += 1
                attachments.append(Attachment(j, sw, port, fibers, lambdas))
    reserve = mcm.wavelengths - per_mcm * wpp
    return TopologyPlan(WSS_FABRIC, wss, switch_count, mcm_count, attachments,
                        mcm_types, reserve)


@dataclass
class DirectPathMatrix:
    """Direct (single-hop) wavelengths per ordered MCM pair; diagonal is zero."""
    counts: np.ndarray
    gbps_per_wavelength: float

    @property
    def gbps(self) -> np.ndarray:
        return self.counts * self.gbps_per_wavelength

    def _off_diagonal(self) -> np.ndarray:
        n = len(self.counts)
        return self.counts[~np.eye(n, dtype=bool)]

    def min(self) -> Union[int, None]:
        vals = self._off_diagonal()
        return int(vals.min()) if vals.size else None

    def max(self) -> Union[int, None]:
        vals = self._off_diagonal()
        return int(vals.max()) if vals.size else None

    def mean(self) -> Union[float, None]:
        vals = self._off_diagonal()
        return float(vals.mean()) if vals.size else None

    def pair_count(self, src_types, dst_types, mcm_types) -> np.ndarray:
        """Direct counts for every (src, dst) pair whose types match."""
        types = np.asarray(mcm_types)
        src = np.isin(types, list(src_types))
        dst = np.isin(types, list(dst_types))
        block = self.counts[np.ix_(src, dst)]
        same = np.ix_(np.nonzero(src)[0], np.nonzero(dst)[0])
        mask = same[0] != same[1]
        return block[mask]


def shared_switches(plan: TopologyPlan) -> np.ndarray:
    """Number of switches each ordered MCM pair is jointly attached to."""
    onehot = np.zeros((plan.mcm_count, plan.switch_count), dtype=np.int64)
    for a in plan.attachments:
        onehot[a.mcm, a.switch] = 1
    shared = onehot @ onehot.T
    np.fill_diagonal(shared, 0)
    return shared


def direct_path_matrix(plan: TopologyPlan) -> DirectPathMatrix:
    n = plan.mcm_count
    gbps = plan.switch.gbps_per_wavelength or 0.0
    if plan.fabric == WSS_FABRIC:
        # every shared switch can be configured to give the pair a full port
        counts = shared_switches(plan) * plan.switch.wavelengths_per_port
        return DirectPathMatrix(counts, gbps)

    radix = plan.switch.radix
    s_count = plan.switch_count
    carried = np.zeros((n, s_count, radix), dtype=bool)
    ports = np.full((n, s_count), -1, dtype=np.int64)
    for a in plan.attachments:
        carried[a.mcm, a.switch, list(a.wavelengths)] = True
        ports[a.mcm, a.switch] = a.port
    attached = ports >= 0
    w = (ports[None, :, :] - ports[:, None, :]) % radix
    hit = carried[np.arange(n)[:, None, None], np.arange(s_count)[None, None, :], w]
    hit &= attached[:, None, :] & attached[None, :, :]
    counts = hit.sum(axis=2)
    np.fill_diagonal(counts, 0)
    return DirectPathMatrix(counts, gbps)


def wss_all_to_all(plan: TopologyPlan) -> dict:
    """Static all-to-all configuration of every switch in a case-B plan.

    Demands are issued shift by shift so that greedy first-fit lands on the
    cyclic (conflict-free, shortfall-free) assignment.
    """
    configs = {}
    owner = plan.port_owner()
    for sw in range(plan.switch_count):
        used = [p for p in range(plan.switch.radix) if owner[sw, p] >= 0]
        k = len(used)
        if k < 2:
            configs[sw] = wss_configure([], plan.switch.wavelengths_per_port)
            continue
        share, spare = divmod(plan.switch.wavelengths_per_port, k - 1)
        demands = []
        for shift in range(1, k):
            for i, p in enumerate(used):
                demands.append((p, used[(i + shift) % k], share + (1 if shift <= spare else 0)))
        configs[sw] = wss_configure(demands, plan.switch.wavelengths_per_port, plan.switch.radix)
    return configs


def local_wavelength_map(plan: TopologyPlan, wss_configs: Union[dict, None] = None) -> list:
    """For each MCM, the destination MCM of every local transmit wavelength (-1 if none).

    Local wavelengths are numbered attachment by attachment in switch order.
    """
    owner = plan.port_owner()
    radix = plan.switch.radix
    if plan.fabric == WSS_FABRIC and wss_configs is None:
        wss_configs = wss_all_to_all(plan)
    out = []
    for j in range(plan.mcm_count):
        dests = []
        for a in plan.by_mcm()[j]:
            if plan.fabric == WSS_FABRIC:
                routes = wss_configs[a.switch].routes.get(a.port, {})
                for w in a.wavelengths:
                    o = routes.get(w)
                    dests.append(-1 if o is None else int(owner[a.switch, o]))
            else:
                for w in a.wavelengths:
                    d = int(owner[a.switch, (a.port + w) % radix])
                    dests.append(-1 if d == j else d)
        out.append(np.array(dests, dtype=np.int64))
    return out
