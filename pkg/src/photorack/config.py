"""YAML configuration: overrides merged onto the reference parameter set."""

import copy
import hashlib
import json
from pathlib import Path
from typing import Mapping, Optional, Union

import yaml

from .defaults import reference_defaults
from .optics import SwitchSpec
from .rack import (ChipSpec, McmSpec, PackingTable, TopologyPlan, build_awgr_fabric,
                   build_wss_fabric, pack_mcms)

FABRICS = ("awgr", "wss")
# free-form sections whose keys are not checked against the defaults
_OPEN_SECTIONS = {("traffic", "classes"), ("rack", "chips")}
_REPLACED = ("percentiles", "chips")


def deep_merge(base: dict, override: Mapping, path=()) -> dict:
    """Recursively overlay ``override`` on ``base``; unknown keys are an error.

    Percentile tables and the chip list are replaced whole, so anchors
    never mix and a config can describe a rack with fewer chip types.
    """
    out = copy.deepcopy(base)
    open_section = any(path[:len(p)] == p for p in _OPEN_SECTIONS)
    for key, value in override.items():
        here = path + (key,)
        if key not in out and not open_section:
            raise ValueError(f"unknown config key {'.'.join(map(str, here))}")
        if isinstance(value, Mapping) and isinstance(out.get(key), dict) and key not in _REPLACED:
            out[key] = deep_merge(out[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Union[str, Path, None] = None, overrides: Optional[Mapping] = None) -> dict:
    cfg = reference_defaults()
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text) or {}
        if not isinstance(loaded, Mapping):
            raise ValueError(f"{path}: top level must be a mapping")
        cfg = deep_merge(cfg, loaded)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg: Mapping):
    if cfg["fabric"]["choice"] not in FABRICS:
        raise ValueError(f"fabric.choice must be one of {FABRICS}")
    if cfg["control"]["hop_limit"] < 2:
        raise ValueError("control.hop_limit must allow at least one relay (>= 2)")
    if cfg["control"]["occupancy_mode"] not in ("one_hot", "byte"):
        raise ValueError("control.occupancy_mode must be one_hot or byte")
    if cfg["sim"]["horizon_s"] <= 0:
        raise ValueError("sim.horizon_s must be positive")


def dump_config(cfg: Mapping) -> str:
    # key order is kept: chip order fixes the MCM index layout
    return yaml.safe_dump(_plain(cfg), sort_keys=False)


def config_digest(cfg: Mapping) -> str:
    plain = _plain(cfg)
    if isinstance(plain.get("rack"), dict) and "chips" in plain["rack"]:
        plain["chip_order"] = list(plain["rack"]["chips"])
    blob = json.dumps(plain, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def chips_from_config(cfg: Mapping):
    chips, caps = [], {}
    for name, d in cfg["rack"]["chips"].items():
        chips.append(ChipSpec(name, float(d["escape_gbytes_per_s"]), int(d["count"])))
        if d.get("cap") is not None:
            caps[name] = int(d["cap"])
    return chips, caps


def pack_from_config(cfg: Mapping) -> PackingTable:
    chips, caps = chips_from_config(cfg)
    return pack_mcms(chips, McmSpec.from_dict(cfg["mcm"]), caps)


def build_plan(cfg: Mapping, fabric: Optional[str] = None) -> tuple:
    """Pack the rack and wire the chosen fabric; returns (packing, plan)."""
    fabric = fabric or cfg["fabric"]["choice"]
    if fabric not in FABRICS:
        raise ValueError(f"fabric must be one of {FABRICS}")
    table = pack_from_config(cfg)
    mcm = McmSpec.from_dict(cfg["mcm"])
    types = table.mcm_types()
    f = cfg["fabric"]
    if fabric == "awgr":
        plan = build_awgr_fabric(table.total_mcms, SwitchSpec.from_dict(cfg["switches"]["awgr"]),
                                 mcm, f["awgr_port_stride"], types)
    else:
        plan = build_wss_fabric(table.total_mcms, SwitchSpec.from_dict(cfg["switches"]["wss"]),
                                mcm, f["wss_count"], f["wss_start_stride"], types)
    return table, plan
