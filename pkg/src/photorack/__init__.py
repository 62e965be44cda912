"""Photonic disaggregated rack toolkit."""

from .config import build_plan, load_config
from .control import ControlPlane, WavelengthMap, select_route
from .defaults import REFERENCE_DEFAULTS, reference_defaults
from .models import fec_evaluate, iso_performance, latency_budget, power_total
from .optics import awgr_route, build_cascaded_awgr, is_latin_square, wss_configure
from .rack import (InfeasiblePacking, build_awgr_fabric, build_wss_fabric, direct_path_matrix,
                   pack_mcms)
from .sim import TrafficProfile, percentile_feasibility, run, worst_case_gpu_traffic

__version__ = "0.1.0"
