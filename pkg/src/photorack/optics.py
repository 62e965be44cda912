"""Wavelengths, link technologies and the three optical switch families.

AWGRs are modelled by the cyclic routing rule ``out = (in + w) mod n``: for a
fixed input every wavelength lands on a different output, and every output
receives each input on a different wavelength. A cascaded AWGR is built from
small AWGR stages whose composition keeps that Latin-square property.
"""

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

SWITCH_KINDS = ("cascaded_awgr", "spatial", "wave_selective")
DEFAULT_FIBER_LOSS_DB_PER_M = 0.0002


@dataclass(frozen=True)
class Wavelength:
    index: int
    rate_gbps: float = 25.0

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"wavelength index must be >= 0, got {self.index}")
        if self.rate_gbps <= 0:
            raise ValueError("rate_gbps must be positive")


@dataclass(frozen=True)
class LinkTech:
    name: str
    gbps_total: float
    energy_pj_per_bit: float
    channels: int
    gbps_per_channel: float
    links_for_2tbps_escape: int
    watts_for_2tbps_escape: float

    def __post_init__(self):
        if self.channels * self.gbps_per_channel != self.gbps_total:
            raise ValueError(f"{self.name}: {self.channels} x {self.gbps_per_channel} != {self.gbps_total}")
        for value in (self.gbps_total, self.energy_pj_per_bit, self.channels,
                      self.gbps_per_channel, self.links_for_2tbps_escape, self.watts_for_2tbps_escape):
            if value <= 0:
                raise ValueError(f"{self.name}: all link fields must be positive")


# WDM link technologies. TeraPHY energy is an upper bound (< 1 pJ/bit), stored as 1.0.
LINK_CATALOG = {
    "ethernet_100g": LinkTech("ethernet_100g", 100, 30, 4, 25, 160, 480),
    "ethernet_400g": LinkTech("ethernet_400g", 400, 30, 4, 100, 40, 197),
    "teraphy_768g": LinkTech("teraphy_768g", 768, 1.0, 24, 32, 21, 14.4),
    "dwdm_1t": LinkTech("dwdm_1t", 1024, 0.45, 64, 16, 16, 7.2),
    "dwdm_2t": LinkTech("dwdm_2t", 2048, 0.3, 128, 16, 8, 4.8),
}


@dataclass(frozen=True)
class SwitchSpec:
    kind: str
    radix: int
    wavelengths_per_port: int
    gbps_per_wavelength: Union[float, None]
    insertion_loss_db: float
    crosstalk_db: float
    reconfig_time_s: float = 0.0

    def __post_init__(self):
        if self.kind not in SWITCH_KINDS:
            raise ValueError(f"unknown switch kind {self.kind!r}")
        if self.radix < 2:
            raise ValueError("radix must be >= 2")
        if self.wavelengths_per_port < 1:
            raise ValueError("wavelengths_per_port must be >= 1")
        if self.gbps_per_wavelength is not None and self.gbps_per_wavelength <= 0:
            raise ValueError("gbps_per_wavelength must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


# Demonstrated high-radix switches (the MRR entry is the 128x128 projection).
SWITCH_CATALOG = {
    "mzi": SwitchSpec("spatial", 32, 1, 439.0, 12.8, -26.6),
    "mems": SwitchSpec("spatial", 240, 1, None, 9.8, -70.0),
    "microring": SwitchSpec("wave_selective", 128, 128, 42.0, 10.0, -35.0),
    "cascaded_awgr": SwitchSpec("cascaded_awgr", 370, 370, 25.0, 15.0, -35.0),
}

# Configurations used for the rack study: every switch carries 25 Gbps per wavelength.
STUDY_SWITCHES = {
    "cascaded_awgr": SwitchSpec("cascaded_awgr", 370, 370, 25.0, 15.0, -35.0, 0.0),
    "spatial": SwitchSpec("spatial", 240, 240, 25.0, 9.8, -70.0, 1e-3),
    "wave_selective": SwitchSpec("wave_selective", 256, 256, 25.0, 10.0, -35.0, 1e-3),
}


def _check_index(name: str, value: int, n: int):
    if not 0 <= value < n:
        raise ValueError(f"{name}={value} out of range [0, {n})")


def awgr_route(n: int, input_port: int, wavelength: int) -> int:
    """Output port reached by ``wavelength`` entering ``input_port`` of an n x n AWGR."""
    _check_index("input_port", input_port, n)
    _check_index("wavelength", wavelength, n)
    return (input_port + wavelength) % n


def awgr_wavelength_for(n: int, input_port: int, output_port: int) -> int:
    """The unique wavelength connecting ``input_port`` to ``output_port``."""
    _check_index("input_port", input_port, n)
    _check_index("output_port", output_port, n)
    return (output_port - input_port) % n


def awgr_table(n: int) -> np.ndarray:
    """Full routing table ``table[input, wavelength] -> output``."""
    idx = np.arange(n)
    return (idx[:, None] + idx[None, :]) % n


def is_latin_square(table: np.ndarray, ports: Union[int, None] = None) -> bool:
    """Check the AWGR all-to-all property on the first ``ports`` ports.

    Rows are input ports, columns wavelengths, entries output ports. Every
    input must reach each usable output on exactly one wavelength, and each
    usable output must see distinct wavelengths from distinct inputs.
    """
    table = np.asarray(table)
    n_in, n_w = table.shape
    ports = n_in if ports is None else ports
    sub = table[:ports]
    usable = sub < ports
    for row, mask in zip(sub, usable):
        outs = row[mask]
        if len(outs) != ports or len(np.unique(outs)) != ports:
            return False
    # per output, arriving wavelengths must be pairwise distinct
    ins, ws = np.nonzero(usable)
    outs = sub[ins, ws]
    order = np.lexsort((ws, outs))
    outs, ws = outs[order], ws[order]
    dup = (outs[1:] == outs[:-1]) & (ws[1:] == ws[:-1])
    counts = np.bincount(outs, minlength=ports)
    return not dup.any() and bool((counts == ports).all())


@dataclass(frozen=True)
class CascadedAwgr:
    """A KMN x KMN wavelength router made of small AWGR stages.

    Input port ``p`` decomposes as ``p = g*M*N + f*M + a``: DC-switch input
    ``g``, front AWGR ``f`` (there are N of them), front input ``a``.
    Wavelength ``w`` decomposes as ``w = band*M*N + u1*M + u0``.

    * front M x M AWGR ``f`` routes on the fine index ``u0`` to output ``b``;
    * front output ``b`` of AWGR ``f`` is wired to input ``f`` of rear AWGR ``b``;
    * rear N x N AWGR ``b`` routes on its coarse channel ``(u + M-1-b) // M``,
      i.e. its passband grid is offset by ``M-1-b`` fine channels, which
      makes the two stages add with carry;
    * the K x K DC stage steers wavelength band ``band`` from DC input ``g``
      to AWGR copy ``(g + band) mod K``.
    """

    k: int
    m: int
    n_rear: int
    effective_ports: int
    interconnect: tuple = field(repr=False)

    @property
    def nominal_ports(self) -> int:
        return self.k * self.m * self.n_rear

    def route(self, input_port: int, wavelength: int) -> int:
        nominal = self.nominal_ports
        _check_index("input_port", input_port, self.effective_ports)
        _check_index("wavelength", wavelength, nominal)
        m, n = self.m, self.n_rear
        mn = m * n
        g, x = divmod(input_port, mn)
        f, a = divmod(x, m)
        band, u = divmod(wavelength, mn)
        b = awgr_route(m, a, u % m)
        rear, rear_in = self.interconnect[f][b]
        channel = ((u + m - 1 - rear) // m) % n
        c = awgr_route(n, rear_in, channel)
        copy = awgr_route(self.k, g, band)
        return copy * mn + c * m + rear

    def wavelength_for(self, input_port: int, output_port: int) -> int:
        _check_index("output_port", output_port, self.effective_ports)
        for w in range(self.nominal_ports):
            if self.route(input_port, w) == output_port:
                return w
        raise AssertionError("cascade is not all-to-all")  # unreachable for a valid build

    def table(self) -> np.ndarray:
        """Routing table over effective inputs x all nominal wavelengths."""
        return _cascade_table(self)


def _cascade_table(c: CascadedAwgr) -> np.ndarray:
    m, n = c.m, c.n_rear
    mn = m * n
    p = np.arange(c.effective_ports)[:, None]
    w = np.arange(c.nominal_ports)[None, :]
    g, x = np.divmod(p, mn)
    f, a = np.divmod(x, m)
    band, u = np.divmod(w, mn)
    b = (a + u % m) % m
    wiring = np.array(c.interconnect)            # [f, b] -> (rear, rear_in)
    rear = wiring[f, b, 0]
    rear_in = wiring[f, b, 1]
    channel = ((u + m - 1 - rear) // m) % n
    out = (g + band) % c.k * mn + (rear_in + channel) % n * m + rear
    return out


def build_cascaded_awgr(k: int, m: int, n_rear: int,
                        effective_ports: Union[int, None] = None) -> CascadedAwgr:
    """Compose front, rear and DC stages into one large AWGR.

    ``effective_ports`` truncates the usable port count; the highest-indexed
    ports are the ones dropped.
    """
    if min(k, m, n_rear) < 1:
        raise ValueError("k, m, n_rear must all be >= 1")
    nominal = k * m * n_rear
    if effective_ports is None:
        effective_ports = nominal
    if not 1 <= effective_ports <= nominal:
        raise ValueError(f"effective_ports must be in [1, {nominal}]")
    # round-robin: output b of front AWGR f -> input f of rear AWGR b
    interconnect = tuple(tuple((b, f) for b in range(m)) for f in range(n_rear))
    return CascadedAwgr(k, m, n_rear, effective_ports, interconnect)


@dataclass
class WssGrant:
    input_port: int
    output_port: int
    requested: int
    wavelengths: list

    @property
    def granted(self) -> int:
        return len(self.wavelengths)

    @property
    def shortfall(self) -> int:
        return self.requested - self.granted


@dataclass
class WssConfig:
    wavelengths_per_port: int
    routes: dict = field(default_factory=dict)   # input -> {wavelength: output}
    grants: list = field(default_factory=list)

    def is_conflict_free(self) -> bool:
        seen = set()
        for inp, table in self.routes.items():
            for w, out in table.items():
                if not 0 <= w < self.wavelengths_per_port or (out, w) in seen:
                    return False
                seen.add((out, w))
        return True


def wss_configure(demands: Iterable[Sequence[int]], wavelengths_per_port: int = 256,
                  radix: Union[int, None] = None) -> WssConfig:
    """Greedy first-fit wavelength assignment for a wave-selective switch.

    Demands are ``(input_port, output_port, wavelength_count)`` handled in
    order; each takes the lowest wavelengths free at both its input and its
    output. Shortfalls are recorded on the grant rather than raised.
    """
    config = WssConfig(wavelengths_per_port)
    all_lambdas = (1 << wavelengths_per_port) - 1
    in_mask, out_mask = {}, {}   # bit w set = wavelength w taken
    for inp, out, count in demands:
        if radix is not None:
            _check_index("input_port", inp, radix)
            _check_index("output_port", out, radix)
        free = all_lambdas & ~(in_mask.get(inp, 0) | out_mask.get(out, 0))
        picked = []
        while free and len(picked) < count:
            low = free & -free
            picked.append(low.bit_length() - 1)
            free ^= low
        taken = sum(1 << w for w in picked)
        in_mask[inp] = in_mask.get(inp, 0) | taken
        out_mask[out] = out_mask.get(out, 0) | taken
        routes = config.routes.setdefault(inp, {})
        for w in picked:
            routes[w] = out
        config.grants.append(WssGrant(inp, out, count, picked))
    return config


def path_loss(segments: Iterable[Union[SwitchSpec, float]],
              fiber_loss_db_per_m: float = DEFAULT_FIBER_LOSS_DB_PER_M) -> float:
    """Insertion loss of a path given as switch hops and fiber lengths in metres."""
    total = 0.0
    for seg in segments:
        if isinstance(seg, SwitchSpec):
            total += seg.insertion_loss_db
        else:
            if seg < 0:
                raise ValueError("fiber length must be nonnegative")
            total += seg * fiber_loss_db_per_m
    return total
