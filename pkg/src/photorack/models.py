"""Closed-form side models: latency budgets, FEC, power and iso-performance."""

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Union

from .defaults import REFERENCE_DEFAULTS

# Memory systems need an end-to-end BER below this with SEC-DED protection.
MEMORY_BER_TARGET = 1e-18
# Added latency values studied for application slowdown (ns).
STUDIED_ADDED_LATENCIES_NS = (25.0, 30.0, 35.0, 85.0)

LATENCY_TECHS = ("photonic", "pcie_gen5_tree", "anton3_hop")
_LAT = REFERENCE_DEFAULTS["latency"]
_FEC = REFERENCE_DEFAULTS["fec"]
_PWR = REFERENCE_DEFAULTS["power"]


@dataclass(frozen=True)
class LatencyBudget:
    propagation_ns: float = 0.0
    oeo_ns: float = 0.0
    fec_ns: float = 0.0
    serialization_ns: float = 0.0
    switch_hop_ns: float = 0.0
    hops: int = 0

    @property
    def total_ns(self) -> float:
        return (self.propagation_ns + self.oeo_ns + self.fec_ns
                + self.serialization_ns + self.switch_hop_ns * self.hops)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total_ns"] = self.total_ns
        return d


def serialization_ns(link_gbps: float) -> float:
    """Flit serialization delay: 10 ns at 200 Gbps, 5 ns from 400 Gbps up."""
    return 10.0 if link_gbps < 400 else 5.0


def latency_budget(distance_m: float, hops_extra: int = 0, tech: str = "photonic",
                   params: Union[Mapping, None] = None,
                   link_gbps: Union[float, None] = None) -> LatencyBudget:
    """Added one-way latency between two MCMs.

    ``photonic`` is one OEO conversion plus fiber propagation; every extra
    (indirect) hop pays another OEO conversion and FEC pass. ``pcie_gen5_tree``
    adds a four-hop electronic tree on top of the photonic base.
    ``anton3_hop`` counts ``max(1, hops_extra)`` switch hops. Serialization
    is only included when ``link_gbps`` is given.
    """
    p = {**_LAT, **(params or {})}
    if distance_m < 0:
        raise ValueError("distance must be nonnegative")
    ser = serialization_ns(link_gbps) if link_gbps else 0.0
    prop = p["ns_per_m"] * distance_m
    if tech == "photonic":
        return LatencyBudget(propagation_ns=prop, oeo_ns=p["oeo_ns"] * (1 + hops_extra),
                             fec_ns=p["fec_ns"] * hops_extra, serialization_ns=ser)
    if tech == "pcie_gen5_tree":
        return LatencyBudget(propagation_ns=prop, oeo_ns=p["oeo_ns"], serialization_ns=ser,
                             switch_hop_ns=p["pcie_hop_ns"], hops=p["pcie_hops"] + hops_extra)
    if tech == "anton3_hop":
        return LatencyBudget(serialization_ns=ser, switch_hop_ns=p["anton3_hop_ns"],
                             hops=max(1, hops_extra))
    raise ValueError(f"unknown latency tech {tech!r}; expected one of {LATENCY_TECHS}")


@dataclass(frozen=True)
class FecModel:
    raw_ber: float
    flit_failure: float
    latency_ns: float
    bandwidth_loss_fraction: float
    target_ber: float
    post_crc_fit: str = "negligible"

    @property
    def meets_memory_target(self) -> bool:
        return self.flit_failure <= self.target_ber

    def to_dict(self) -> dict:
        d = asdict(self)
        d["meets_memory_target"] = self.meets_memory_target
        return d


def fec_evaluate(raw_flit_ber: float, latency_ns: float = _FEC["latency_ns"],
                 target_ber: float = _FEC["target_ber"],
                 bandwidth_loss_fraction: float = _FEC["bandwidth_loss_fraction"]) -> FecModel:
    # single bursts are corrected, so a flit fails only with two bursts
    if not 0.0 <= raw_flit_ber <= 1.0:
        raise ValueError("raw flit BER must lie in [0, 1]")
    if not bandwidth_loss_fraction < 0.001:
        raise ValueError("FEC bandwidth loss must stay below 0.1%")
    return FecModel(raw_flit_ber, raw_flit_ber * raw_flit_ber, latency_ns,
                    bandwidth_loss_fraction, target_ber)


@dataclass(frozen=True)
class PowerModel:
    laser_count: int
    mcm_count: int
    wavelengths_per_mcm: int
    switch_count: int
    laser_optical_dbm: float = _PWR["laser_dbm"]
    laser_wpe: float = _PWR["laser_wpe"]
    modulator_pj_per_bit: float = _PWR["modulator_pj_per_bit"]
    receiver_pj_per_bit: float = _PWR["receiver_pj_per_bit"]
    gbps_per_wavelength: float = 25.0
    switch_w_max: float = _PWR["switch_w_max"]

    @property
    def laser_w(self) -> float:
        optical_w = 10 ** (self.laser_optical_dbm / 10) * 1e-3
        return self.laser_count * optical_w / self.laser_wpe

    @property
    def transceiver_w(self) -> float:
        pj = self.modulator_pj_per_bit + self.receiver_pj_per_bit
        return self.mcm_count * self.wavelengths_per_mcm * pj * 1e-12 * self.gbps_per_wavelength * 1e9

    @property
    def switch_w(self) -> float:
        return self.switch_count * self.switch_w_max

    @property
    def total_w(self) -> float:
        return self.laser_w + self.transceiver_w + self.switch_w

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(laser_w=self.laser_w, transceiver_w=self.transceiver_w,
                 switch_w=self.switch_w, total_w=self.total_w)
        return d


def power_total(mcm_count: int, wavelengths_per_mcm: int, switch_count: int,
                laser_count: Union[int, None] = None, **params) -> PowerModel:
    """Rack photonics power with every component always on.

    One laser line per escape wavelength unless ``laser_count`` is given.
    """
    if min(mcm_count, wavelengths_per_mcm) <= 0 or switch_count < 0:
        raise ValueError("counts must be positive")
    if laser_count is None:
        laser_count = mcm_count * wavelengths_per_mcm
    return PowerModel(laser_count, mcm_count, wavelengths_per_mcm, switch_count, **params)


@dataclass(frozen=True)
class IsoPerfInputs:
    baseline: Mapping = field(default_factory=lambda: dict(REFERENCE_DEFAULTS["iso"]["baseline"]))
    cpu_overhead: float = 0.13
    gpu_overhead: float = 0.08
    memory_reduction: float = 4.0
    nic_reduction: float = 2.0

    def __post_init__(self):
        if self.memory_reduction < 1 or self.nic_reduction < 1:
            raise ValueError("reductions must be >= 1")
        if self.cpu_overhead < 0 or self.gpu_overhead < 0:
            raise ValueError("overheads must be >= 0")


def iso_performance(inputs: IsoPerfInputs = IsoPerfInputs()) -> dict:
    """Module counts of a disaggregated rack matching baseline throughput.

    Compute chips grow by the slowdown overhead; memory modules and NICs
    shrink by the pooling factors.
    """
    b = inputs.baseline
    counts = {
        "cpu": math.ceil(b["cpu"] * (1 + inputs.cpu_overhead) - 1e-9),
        "gpu": math.ceil(b["gpu"] * (1 + inputs.gpu_overhead) - 1e-9),
        "ddr4": math.ceil(b["ddr4"] / inputs.memory_reduction - 1e-9),
        "nic": math.ceil(b["nic"] / inputs.nic_reduction - 1e-9),
    }
    baseline_total = sum(b[k] for k in counts)
    total = sum(counts.values())
    return {
        "baseline": dict(b),
        "baseline_total": baseline_total,
        "disaggregated": counts,
        "disaggregated_total": total,
        "reduction": 1.0 - total / baseline_total,
    }


def added_compute_increase(extra_chips: int, baseline: Union[Mapping, None] = None) -> float:
    """Fractional chip increase from adding compute chips to an unchanged rack."""
    baseline = baseline or REFERENCE_DEFAULTS["iso"]["baseline"]
    return extra_chips / sum(baseline.values())
