"""Deterministic flow-level discrete-event simulation of a photonic rack."""

import csv
import hashlib
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .control import ControlPlane, WavelengthMap
from .defaults import REFERENCE_DEFAULTS
from .models import latency_budget
from .rack import DirectPathMatrix, TopologyPlan

FLOW_CLASSES = {
    "cpu_mem": ("cpu", "ddr4"),
    "nic_mem": ("nic", "ddr4"),
    "gpu_hbm": ("gpu", "hbm"),
    "gpu_gpu": ("gpu", "gpu"),
    "hbm_hbm": ("hbm", "hbm"),
}

ARRIVAL, RETRY, COMPLETION, BROADCAST = "arrival", "retry", "completion", "broadcast"


@dataclass(frozen=True)
class FlowSpec:
    src: int
    dst: int
    demand_gbps: float
    arrival_s: float
    duration_s: float
    flow_class: str

    def __post_init__(self):
        if self.demand_gbps <= 0:
            raise ValueError("flow demand must be positive")
        if self.duration_s <= 0:
            raise ValueError("flow duration must be positive")
        if self.flow_class not in FLOW_CLASSES:
            raise ValueError(f"unknown flow class {self.flow_class!r}")


@dataclass
class ClassProfile:
    """Demand distribution of one traffic class, given as percentile anchors.

    Between anchors the quantile function is interpolated linearly in
    log-demand; below the first anchor it falls linearly to zero and above
    the last anchor demand is capped at the last value.
    """
    src_type: str
    dst_type: str
    percentiles: Mapping[float, float]
    arrival_rate_per_s: float = 0.0
    mean_duration_s: float = 1e-3
    relay_types: Optional[tuple] = None
    use_direct: bool = True

    def __post_init__(self):
        self.percentiles = {float(q): float(v) for q, v in sorted(self.percentiles.items())}
        values = list(self.percentiles.values())
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("percentile values must be nondecreasing")
        if any(not 0 < q <= 1 for q in self.percentiles) or any(v < 0 for v in values):
            raise ValueError("percentiles must lie in (0, 1] with nonnegative values")

    def cdf(self, x: float) -> float:
        """P(demand <= x) under the interpolated distribution."""
        anchors = list(self.percentiles.items())
        at_or_below = [q for q, v in anchors if v <= x]
        if at_or_below:
            lo = max(at_or_below)
            above = [(q, v) for q, v in anchors if v > x]
            if not above:
                return lo
            q_hi, v_hi = above[0]
            v_lo = self.percentiles[lo]
            if v_lo <= 0:
                return lo
            frac = (math.log(x) - math.log(v_lo)) / (math.log(v_hi) - math.log(v_lo))
            return lo + (q_hi - lo) * frac
        q0, v0 = anchors[0]
        return q0 * x / v0

    def quantile(self, u: float) -> float:
        anchors = list(self.percentiles.items())
        q0, v0 = anchors[0]
        if u <= q0:
            return v0 * u / q0
        for (q_lo, v_lo), (q_hi, v_hi) in zip(anchors, anchors[1:]):
            if u <= q_hi:
                if v_lo <= 0 or v_hi == v_lo:
                    return v_hi if v_lo <= 0 else v_lo
                frac = (u - q_lo) / (q_hi - q_lo)
                return math.exp(math.log(v_lo) + frac * (math.log(v_hi) - math.log(v_lo)))
        return anchors[-1][1]

    def to_dict(self) -> dict:
        return {"src": self.src_type, "dst": self.dst_type,
                "percentiles": dict(self.percentiles),
                "arrival_rate_per_s": self.arrival_rate_per_s,
                "mean_duration_s": self.mean_duration_s,
                "relay_types": list(self.relay_types) if self.relay_types else None,
                "use_direct": self.use_direct}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassProfile":
        relays = d.get("relay_types")
        return cls(d["src"], d["dst"], d.get("percentiles", {1.0: 0.0}),
                   d.get("arrival_rate_per_s", 0.0), d.get("mean_duration_s", 1e-3),
                   tuple(relays) if relays else None, d.get("use_direct", True))


@dataclass(frozen=True)
class GpuHbmBudget:
    """Per-GPU bandwidth bookkeeping for HBM traffic, in GBps.

    The HBM stream is carried as a reservation against the indirect
    capacity each GPU has through the HBM MCMs; it is not simulated per
    wavelength. Headroom is what remains for other uses.
    """
    hbm_demand_per_gpu: float
    indirect_capacity_per_gpu: float
    gpu_gpu_per_mcm: float

    @property
    def headroom(self) -> float:
        return self.indirect_capacity_per_gpu - self.hbm_demand_per_gpu

    def residual(self, delivered_gpu_gpu_per_mcm: float) -> float:
        return self.headroom - delivered_gpu_gpu_per_mcm

    def to_dict(self) -> dict:
        return {"hbm_demand_per_gpu": self.hbm_demand_per_gpu,
                "indirect_capacity_per_gpu": self.indirect_capacity_per_gpu,
                "gpu_gpu_per_mcm": self.gpu_gpu_per_mcm,
                "headroom_per_gpu": self.headroom}


@dataclass
class TrafficProfile:
    classes: dict = field(default_factory=dict)
    flows: list = field(default_factory=list)
    gpu_budget: Optional[GpuHbmBudget] = None

    def policy(self, flow_class: str):
        cp = self.classes.get(flow_class)
        if cp is None:
            return None, True
        return cp.relay_types, cp.use_direct

    def to_dict(self) -> dict:
        return {
            "classes": {k: v.to_dict() for k, v in sorted(self.classes.items())},
            "flows": [[f.src, f.dst, f.demand_gbps, f.arrival_s,
                       f.duration_s if math.isfinite(f.duration_s) else "inf", f.flow_class]
                      for f in self.flows],
            "gpu_budget": self.gpu_budget.to_dict() if self.gpu_budget else None,
        }

    @classmethod
    def from_config(cls, traffic: Mapping) -> "TrafficProfile":
        classes = {name: ClassProfile.from_dict(d) for name, d in traffic.get("classes", {}).items()}
        for name, cp in classes.items():
            if name in FLOW_CLASSES and FLOW_CLASSES[name] != (cp.src_type, cp.dst_type):
                raise ValueError(f"class {name} must run {FLOW_CLASSES[name]}")
        return cls(classes)


def worst_case_gpu_traffic(plan: TopologyPlan, hbm_chips: int = 512,
                           gpus_per_mcm: int = 3, nvlinks: int = 12,
                           nvlink_gbytes: float = 25.0, hbm_gbytes_per_gpu: float = 1555.2,
                           direct_gbps: Optional[float] = None) -> TrafficProfile:
    """Every GPU MCM talks at full NVLink rate to another GPU MCM.

    GPU MCMs are paired in a ring. Since every GPU is busy, GPU-GPU traffic
    may only relay through HBM MCMs and does not use the direct GPU-GPU
    wavelengths. HBM traffic is reserved against the per-GPU indirect
    capacity ``direct_gbps * hbm_chips / 8``.
    """
    if plan.mcm_types is None:
        raise ValueError("plan has no MCM chip types")
    gpus = [m for m, t in enumerate(plan.mcm_types) if t == "gpu"]
    if len(gpus) < 2:
        raise ValueError("need at least two GPU MCMs")
    if direct_gbps is None:
        from .rack import direct_path_matrix
        direct_gbps = float(direct_path_matrix(plan).min() * plan.switch.gbps_per_wavelength)
    per_mcm_gbytes = gpus_per_mcm * nvlinks * nvlink_gbytes
    flows = [FlowSpec(g, gpus[(i + 1) % len(gpus)], per_mcm_gbytes * 8, 0.0, math.inf, "gpu_gpu")
             for i, g in enumerate(gpus)]
    classes = {"gpu_gpu": ClassProfile("gpu", "gpu", {1.0: per_mcm_gbytes * 8},
                                       relay_types=("hbm",), use_direct=False)}
    budget = GpuHbmBudget(hbm_gbytes_per_gpu, direct_gbps * hbm_chips / 8, per_mcm_gbytes)
    return TrafficProfile(classes, flows, budget)


def percentile_feasibility(matrix: DirectPathMatrix, profile: TrafficProfile, mcm_types) -> dict:
    """Probability that the guaranteed direct bandwidth covers each class's demand."""
    out = {}
    for name, cp in sorted(profile.classes.items()):
        counts = matrix.pair_count([cp.src_type], [cp.dst_type], mcm_types)
        direct = float(counts.min() * matrix.gbps_per_wavelength) if counts.size else 0.0
        out[name] = {"direct_gbps": direct, "p_direct_suffices": cp.cdf(direct)}
    return out


@dataclass
class SimReport:
    seed: int
    horizon_s: float
    config_digest: str
    classes: dict
    indirect_fraction: float
    fallback_events: int
    requeue_events: int
    latency_histogram_ns: dict
    blocked_time_fraction: float
    capacity_violations: int
    flow_count: int
    per_source_delivered_gbps: dict
    gpu_budget: Optional[dict] = None

    @property
    def offered_gbps(self) -> float:
        return sum(c["offered_gbps"] for c in self.classes.values())

    @property
    def delivered_gbps(self) -> float:
        return sum(c["delivered_gbps"] for c in self.classes.values())

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon_s": self.horizon_s,
            "config_digest": self.config_digest,
            "offered_gbps": self.offered_gbps,
            "delivered_gbps": self.delivered_gbps,
            "classes": self.classes,
            "indirect_fraction": self.indirect_fraction,
            "fallback_events": self.fallback_events,
            "requeue_events": self.requeue_events,
            "latency_histogram_ns": self.latency_histogram_ns,
            "blocked_time_fraction": self.blocked_time_fraction,
            "capacity_violations": self.capacity_violations,
            "flow_count": self.flow_count,
            "per_source_delivered_gbps": self.per_source_delivered_gbps,
            "gpu_budget": self.gpu_budget,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "flows", "offered_gbps", "delivered_gbps", "indirect_gbps"])
        for name, c in sorted(self.classes.items()):
            w.writerow([name, c["flows"], c["offered_gbps"], c["delivered_gbps"], c["indirect_gbps"]])
        return buf.getvalue()


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


@dataclass
class _Flow:
    spec: FlowSpec
    assignment: object = None
    since: float = 0.0
    delivered_gbit: float = 0.0
    indirect_gbit: float = 0.0
    blocked_s: float = 0.0
    done: bool = False


class Simulator:
    """Event loop over arrivals, completions, retries and state broadcasts.

    Events are ordered by (time, sequence number), so identical inputs
    replay identically.
    """

    def __init__(self, plan: TopologyPlan, profile: TrafficProfile, seed: int,
                 horizon_s: float, control: Optional[Mapping] = None,
                 latency: Optional[Mapping] = None, audit: bool = False,
                 trace=None, wss_configs=None, wmap: Optional[WavelengthMap] = None,
                 config_digest: Optional[str] = None):
        if horizon_s <= 0:
            raise ValueError("horizon must be positive")
        self.plan = plan
        self.profile = profile
        self.seed = seed
        self.horizon = horizon_s
        self.ctl = {**REFERENCE_DEFAULTS["control"], **(control or {})}
        self.lat = {**REFERENCE_DEFAULTS["latency"], **(latency or {})}
        self.audit_each = audit
        self.trace = trace
        traffic_ss, route_ss = np.random.SeedSequence(seed).spawn(2)
        self.traffic_rng = np.random.default_rng(traffic_ss)
        self.route_rng = np.random.default_rng(route_ss)
        self.wmap = wmap or WavelengthMap.from_plan(plan, wss_configs)
        self.cp = ControlPlane(self.wmap, plan.switch.gbps_per_wavelength or 25.0,
                               self.ctl["hop_limit"], self.ctl["occupancy_mode"], trace=trace)
        self.config_digest = config_digest or _digest(
            {"plan": [plan.fabric, plan.switch_count, plan.mcm_count],
             "profile": profile.to_dict(), "control": self.ctl, "latency": self.lat})
        self._events = []
        self._seq = 0
        self.flows = []
        self.violations = 0
        # reconfigurable fabrics only carry traffic once the switches are set
        self.start = plan.switch.reconfig_time_s if plan.fabric == "wss_case_b" else 0.0

    def _push(self, t, kind, payload=None):
        heapq.heappush(self._events, (t, self._seq, kind, payload))
        self._seq += 1

    def _generate(self):
        specs = list(self.profile.flows)
        types = self.plan.mcm_types or []
        for name in sorted(self.profile.classes):
            cp = self.profile.classes[name]
            if cp.arrival_rate_per_s <= 0:
                continue
            srcs = [m for m, t in enumerate(types) if t == cp.src_type]
            dsts = [m for m, t in enumerate(types) if t == cp.dst_type]
            if not srcs or not dsts or (len(dsts) == 1 and dsts == srcs):
                continue
            t = 0.0
            while True:
                t += self.traffic_rng.exponential(1.0 / cp.arrival_rate_per_s)
                if t >= self.horizon:
                    break
                src = srcs[self.traffic_rng.integers(len(srcs))]
                dst = src
                while dst == src:
                    dst = dsts[self.traffic_rng.integers(len(dsts))]
                demand = cp.quantile(self.traffic_rng.random())
                duration = self.traffic_rng.exponential(cp.mean_duration_s)
                if demand <= 0 or duration <= 0:
                    continue
                specs.append(FlowSpec(int(src), int(dst), demand, t, duration, name))
        return specs

    def _settle(self, f: _Flow, now: float):
        """Account a flow's rate from ``f.since`` up to ``now``."""
        dt = max(0.0, min(now, self.horizon) - f.since)
        a = f.assignment
        if a is not None and dt > 0:
            f.delivered_gbit += a.delivered_gbps * dt
            f.indirect_gbit += a.indirect_gbps * dt
            if a.saturated or a.delivered_gbps < f.spec.demand_gbps:
                f.blocked_s += dt
        f.since = max(f.since, min(now, self.horizon))

    def _audit(self):
        self.violations += self.cp.audit(f.assignment for f in self.flows
                                         if f.assignment is not None and not f.done)

    def run(self) -> SimReport:
        for spec in self._generate():
            self._push(max(spec.arrival_s, self.start), ARRIVAL, spec)
        if self.ctl["piggyback_period_s"] > 0:
            self._push(self.start, BROADCAST)
        retry = self.ctl["retry_delay_s"]
        while self._events:
            t, _, kind, payload = heapq.heappop(self._events)
            if t >= self.horizon:
                break
            mutated = False
            if kind == ARRIVAL:
                f = _Flow(payload, since=t)
                f.flow_id = len(self.flows)
                self.flows.append(f)
                relays, use_direct = self._policy(payload)
                f.assignment = self.cp.route(f.flow_id, payload.src, payload.dst,
                                             payload.demand_gbps, self.route_rng, t,
                                             relays, use_direct)
                mutated = True
                if f.assignment.saturated and retry > 0:
                    self._push(t + retry, RETRY, f)
                end = payload.arrival_s + payload.duration_s
                if end < self.horizon:
                    self._push(max(end, t), COMPLETION, f)
            elif kind == RETRY:
                f = payload
                if not f.done:
                    self._settle(f, t)
                    a = f.assignment
                    missing = f.spec.demand_gbps - a.granted_gbps
                    if missing > 1e-9:
                        relays, use_direct = self._policy(f.spec)
                        self.cp.extend(a, missing, self.route_rng, t, relays, use_direct)
                        mutated = True
                        if a.saturated:
                            self._push(t + retry, RETRY, f)
            elif kind == COMPLETION:
                f = payload
                self._settle(f, t)
                self.cp.release(f.assignment)
                f.done = True
                mutated = True
            elif kind == BROADCAST:
                self.cp.broadcast(t)
                self._push(t + self.ctl["piggyback_period_s"], BROADCAST)
            if mutated and self.audit_each:
                self._audit()
        for f in self.flows:
            if not f.done:
                self._settle(f, self.horizon)
        if not self.audit_each:
            self._audit()
        return self._report()

    def _policy(self, spec: FlowSpec):
        relay_types, use_direct = self.profile.policy(spec.flow_class)
        relays = None
        if relay_types:
            relays = [m for m, t in enumerate(self.plan.mcm_types or []) if t in relay_types]
        return relays, use_direct

    def _report(self) -> SimReport:
        classes = {}
        per_source = {}
        hist = {}
        total_flow_s = 0.0
        blocked_s = 0.0
        delivered_total = 0.0
        indirect_total = 0.0
        for f in self.flows:
            spec = f.spec
            c = classes.setdefault(spec.flow_class, {"flows": 0, "offered_gbps": 0.0,
                                                    "delivered_gbps": 0.0, "indirect_gbps": 0.0})
            active_s = min(spec.arrival_s + spec.duration_s, self.horizon) - max(spec.arrival_s, 0.0)
            c["flows"] += 1
            c["offered_gbps"] += spec.demand_gbps * active_s / self.horizon
            c["delivered_gbps"] += f.delivered_gbit / self.horizon
            c["indirect_gbps"] += f.indirect_gbit / self.horizon
            per_source[str(spec.src)] = per_source.get(str(spec.src), 0.0) + f.delivered_gbit / self.horizon
            delivered_total += f.delivered_gbit
            indirect_total += f.indirect_gbit
            total_flow_s += active_s
            blocked_s += f.blocked_s
            hops = f.assignment.max_hops
            key = "blocked" if hops == 0 else _fmt(latency_budget(
                self.lat["distance_m"], hops - 1, "photonic", self.lat).total_ns)
            hist[key] = hist.get(key, 0) + 1
        for c in classes.values():
            for k in ("offered_gbps", "delivered_gbps", "indirect_gbps"):
                c[k] = _round(c[k])
        gpu = None
        if self.profile.gpu_budget is not None:
            b = self.profile.gpu_budget
            gpu_srcs = {f.spec.src for f in self.flows if f.spec.flow_class == "gpu_gpu"}
            per_mcm = [per_source.get(str(s), 0.0) / 8 for s in sorted(gpu_srcs)]
            worst = min(per_mcm) if per_mcm else 0.0
            gpu = {**b.to_dict(),
                   "delivered_gpu_gpu_per_mcm_min": _round(worst),
                   "delivered_gpu_gpu_per_mcm_max": _round(max(per_mcm, default=0.0)),
                   "residual_headroom_per_gpu": _round(b.residual(max(per_mcm, default=0.0)))}
        return SimReport(
            seed=self.seed,
            horizon_s=self.horizon,
            config_digest=self.config_digest,
            classes=dict(sorted(classes.items())),
            indirect_fraction=_round(indirect_total / delivered_total) if delivered_total else 0.0,
            fallback_events=self.cp.fallback_events,
            requeue_events=self.cp.requeue_events,
            latency_histogram_ns=dict(sorted(hist.items())),
            blocked_time_fraction=_round(blocked_s / total_flow_s) if total_flow_s else 0.0,
            capacity_violations=self.violations,
            flow_count=len(self.flows),
            per_source_delivered_gbps={k: _round(v) for k, v in sorted(per_source.items(), key=lambda kv: int(kv[0]))},
            gpu_budget=gpu,
        )


def _round(x: float) -> float:
    return round(x, 9)


def _fmt(ns: float) -> str:
    return f"{ns:g}"


def run(plan: TopologyPlan, profile: TrafficProfile, seed: int, horizon: float, **kwargs) -> SimReport:
    return Simulator(plan, profile, seed, horizon, **kwargs).run()
