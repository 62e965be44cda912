"""Batch command line front-end.

Exit codes: 0 success, 1 internal error, 2 infeasible configuration.
"""

import csv
import io
import json
import sys
from pathlib import Path

import click

from . import config as cfgmod
from .models import (IsoPerfInputs, added_compute_increase, fec_evaluate, iso_performance,
                     latency_budget, power_total, LATENCY_TECHS)
from .rack import FabricCapacityError, InfeasiblePacking, direct_path_matrix, shared_switches, WSS_FABRIC
from .sim import TrafficProfile, run, worst_case_gpu_traffic

EXIT_INFEASIBLE = 2


class _Ctx:
    def __init__(self, config_path, out, fmt):
        self.config_path = config_path
        self.out = Path(out) if out else None
        self.fmt = fmt
        self._cfg = None

    @property
    def cfg(self) -> dict:
        if self._cfg is None:
            self._cfg = cfgmod.load_config(self.config_path)
        return self._cfg

    def emit(self, name: str, report: dict, rows=None, summary: str = ""):
        """Print the summary and write ``<out>/<name>.<fmt>`` when an output dir is set."""
        click.echo(summary.rstrip("\n"))
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        if self.fmt == "json":
            text = json.dumps(report, sort_keys=True, indent=2) + "\n"
        else:
            text = _csv(rows if rows is not None else _flatten(report))
        (self.out / f"{name}.{self.fmt}").write_text(text)


def _flatten(d, prefix=""):
    rows = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows.extend(_flatten(v, key + "."))
        elif isinstance(v, list):
            rows.append((key, json.dumps(v)))
        else:
            rows.append((key, v))
    return [("key", "value")] + [r for r in rows if r != ("key", "value")]


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except InfeasiblePacking as e:
            click.echo(f"infeasible packing: {e}", err=True)
            ctx.exit(EXIT_INFEASIBLE)
        except (FabricCapacityError, ValueError, KeyError, FileNotFoundError) as e:
            click.echo(f"infeasible configuration: {e}", err=True)
            ctx.exit(EXIT_INFEASIBLE)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except Exception as e:  # noqa: BLE001
            click.echo(f"internal error: {type(e).__name__}: {e}", err=True)
            ctx.exit(1)


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML overrides merged onto the reference parameters.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Directory for report files.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.pass_context
def main(ctx, config_path, out, fmt):
    """Photonic disaggregated rack toolkit."""
    ctx.obj = _Ctx(config_path, out, fmt)


fabric_option = click.option("--fabric", type=click.Choice(cfgmod.FABRICS), default=None,
                             help="Overrides fabric.choice from the config.")


@main.command()
@click.pass_obj
def pack(obj):
    """Chips per MCM and MCM count per chip type."""
    table = cfgmod.pack_from_config(obj.cfg)
    lines = [f"{'type':6} {'per_mcm':>8} {'mcms':>6}"]
    lines += [f"{r.chip_type:6} {r.chips_per_mcm:>8} {r.mcm_count:>6}" for r in table.rows]
    lines.append(f"{'total':6} {'':>8} {table.total_mcms:>6}")
    rows = [("chip_type", "chips_per_mcm", "mcm_count")]
    rows += [(r.chip_type, r.chips_per_mcm, r.mcm_count) for r in table.rows]
    obj.emit("pack", table.to_dict(), rows, "\n".join(lines))


@main.command("direct-bw")
@fabric_option
@click.pass_obj
def direct_bw(obj, fabric):
    """Guaranteed direct bandwidth between MCM pairs."""
    _, plan = cfgmod.build_plan(obj.cfg, fabric)
    m = direct_path_matrix(plan)
    g = m.gbps_per_wavelength
    report = {
        "fabric": plan.fabric,
        "switch_count": plan.switch_count,
        "mcm_count": plan.mcm_count,
        "min_wavelengths": m.min(),
        "max_wavelengths": m.max(),
        "mean_wavelengths": m.mean(),
        "min_gbps": None if m.min() is None else m.min() * g,
        "max_gbps": None if m.max() is None else m.max() * g,
        "mean_gbps": None if m.mean() is None else m.mean() * g,
        "unconnected_ports": plan.unconnected_ports(),
        "reserve_wavelengths_per_mcm": plan.reserve_wavelengths,
    }
    if plan.fabric == WSS_FABRIC and plan.mcm_count > 1:
        shared = shared_switches(plan)
        off = shared[~_eye(plan.mcm_count)]
        report["min_shared_switches"] = int(off.min())
        report["max_shared_switches"] = int(off.max())
    summary = (f"{plan.fabric}: {plan.switch_count} switches, {plan.mcm_count} MCMs\n"
               f"direct min {report['min_gbps']} Gbps, max {report['max_gbps']} Gbps, "
               f"mean {report['mean_gbps']:.1f} Gbps" if report["mean_gbps"] is not None
               else f"{plan.fabric}: fewer than two MCMs")
    obj.emit("direct_bw", report, summary=summary)


def _eye(n):
    import numpy as np
    return np.eye(n, dtype=bool)


@main.command()
@click.option("--seed", type=int, default=None, help="Defaults to sim.seed from the config.")
@fabric_option
@click.option("--traffic", type=click.Choice(["default", "worst-gpu"]), default="default")
@click.option("--horizon", type=float, default=None, help="Simulated seconds.")
@click.option("--audit/--no-audit", default=None, help="Recount wavelength use after every event.")
@click.option("--trace", is_flag=True, help="Write per-routing-decision trace lines (JSONL).")
@click.pass_obj
def simulate(obj, seed, fabric, traffic, horizon, audit, trace):
    """Run the flow-level simulation and write the report."""
    cfg = obj.cfg
    seed = cfg["sim"]["seed"] if seed is None else seed
    horizon = cfg["sim"]["horizon_s"] if horizon is None else horizon
    audit = cfg["sim"]["audit"] if audit is None else audit
    table, plan = cfgmod.build_plan(cfg, fabric)
    if traffic == "worst-gpu":
        hbm = cfg["rack"]["chips"].get("hbm", {}).get("count", 0)
        gpu = table.row("gpu")
        profile = worst_case_gpu_traffic(plan, hbm_chips=hbm, gpus_per_mcm=gpu.chips_per_mcm,
                                         hbm_gbytes_per_gpu=cfg["rack"]["chips"]["hbm"]["escape_gbytes_per_s"])
    else:
        profile = TrafficProfile.from_config(cfg["traffic"])
    records = [] if trace else None
    digest = cfgmod.config_digest({"config": cfg, "fabric": plan.fabric, "traffic": traffic,
                                   "horizon_s": horizon})
    report = run(plan, profile, seed, horizon, control=cfg["control"], latency=cfg["latency"],
                 audit=audit, trace=records.append if trace else None, config_digest=digest)
    d = report.to_dict()
    lines = [f"seed {seed}  horizon {horizon:g} s  flows {report.flow_count}",
             f"offered {report.offered_gbps:.3f} Gbps  delivered {report.delivered_gbps:.3f} Gbps  "
             f"indirect fraction {report.indirect_fraction:.4f}",
             f"fallbacks {report.fallback_events}  requeues {report.requeue_events}  "
             f"capacity violations {report.capacity_violations}"]
    if report.gpu_budget:
        b = report.gpu_budget
        lines.append(f"GPU-GPU per MCM {b['delivered_gpu_gpu_per_mcm_min']:g} GBps  "
                     f"residual headroom per GPU {b['residual_headroom_per_gpu']:g} GBps")
    lines.append(f"report digest {report.digest()}")
    rows = [("class", "flows", "offered_gbps", "delivered_gbps", "indirect_gbps")]
    rows += [(k, c["flows"], c["offered_gbps"], c["delivered_gbps"], c["indirect_gbps"])
             for k, c in d["classes"].items()]
    obj.emit("simulate", d, rows, "\n".join(lines))
    if trace and obj.out is not None:
        with open(obj.out / "trace.jsonl", "w") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


@main.command()
@fabric_option
@click.pass_obj
def power(obj, fabric):
    """Rack photonics power with every component on."""
    cfg = obj.cfg
    table, plan = cfgmod.build_plan(cfg, fabric)
    mcm = cfg["mcm"]
    p = power_total(table.total_mcms, mcm["fibers"] * mcm["wavelengths_per_fiber"],
                    plan.switch_count, gbps_per_wavelength=mcm["gbps_per_wavelength"],
                    laser_optical_dbm=cfg["power"]["laser_dbm"], laser_wpe=cfg["power"]["laser_wpe"],
                    modulator_pj_per_bit=cfg["power"]["modulator_pj_per_bit"],
                    receiver_pj_per_bit=cfg["power"]["receiver_pj_per_bit"],
                    switch_w_max=cfg["power"]["switch_w_max"])
    summary = (f"lasers {p.laser_w / 1e3:.2f} kW  modulators+receivers {p.transceiver_w / 1e3:.2f} kW  "
               f"switches {p.switch_w / 1e3:.2f} kW\ntotal {p.total_w / 1e3:.2f} kW")
    obj.emit("power", p.to_dict(), summary=summary)


@main.command()
@click.option("--tech", type=click.Choice(LATENCY_TECHS), default="photonic")
@click.option("--distance", type=float, default=None, help="Meters; defaults to latency.distance_m.")
@click.option("--hops-extra", type=int, default=0, help="Indirect hops beyond the first.")
@click.option("--link-gbps", type=float, default=None, help="Include flit serialization at this rate.")
@click.pass_obj
def latency(obj, tech, distance, hops_extra, link_gbps):
    """Added one-way latency between two MCMs."""
    p = obj.cfg["latency"]
    distance = p["distance_m"] if distance is None else distance
    b = latency_budget(distance, hops_extra, tech, p, link_gbps)
    report = {"tech": tech, "distance_m": distance, "hops_extra": hops_extra, **b.to_dict()}
    obj.emit("latency", report, summary=f"{tech} at {distance:g} m: {b.total_ns:g} ns")


@main.command()
@click.pass_obj
def iso(obj):
    """Module counts for iso-performance with a non-disaggregated rack."""
    c = obj.cfg["iso"]
    inputs = IsoPerfInputs(dict(c["baseline"]), c["cpu_overhead"], c["gpu_overhead"],
                           c["memory_reduction"], c["nic_reduction"])
    report = iso_performance(inputs)
    report["added_compute_chips"] = c["extra_compute_chips"]
    report["added_compute_increase"] = added_compute_increase(c["extra_compute_chips"], c["baseline"])
    summary = (f"disaggregated {report['disaggregated_total']} vs baseline {report['baseline_total']} "
               f"modules ({report['reduction'] * 100:.2f}% fewer)")
    obj.emit("iso", report, summary=summary)


@main.command()
@click.option("--raw-ber", type=float, default=1e-6, help="Raw flit error probability.")
@click.pass_obj
def fec(obj, raw_ber):
    """Post-FEC flit failure probability against the memory BER target."""
    f = obj.cfg["fec"]
    m = fec_evaluate(raw_ber, f["latency_ns"], f["target_ber"], f["bandwidth_loss_fraction"])
    ok = "meets" if m.meets_memory_target else "misses"
    obj.emit("fec", m.to_dict(), summary=f"raw {raw_ber:g} -> {m.flit_failure:g} ({ok} {m.target_ber:g})")


@main.command("config")
@click.pass_obj
def show_config(obj):
    """Print the effective (defaults-merged) configuration as YAML."""
    text = cfgmod.dump_config(obj.cfg)
    click.echo(text.rstrip("\n"))
    if obj.out is not None:
        obj.out.mkdir(parents=True, exist_ok=True)
        (obj.out / "config.yaml").write_text(text)


if __name__ == "__main__":
    sys.exit(main())
