"""Reference parameter set for the photonic disaggregated rack.

Everything the models, builders and simulator need lives in one nested
dictionary so a YAML config can override any single value. ``REFERENCE_DEFAULTS``
holds the reference rack values; ``reference_defaults()`` returns a fresh
deep copy so callers may mutate it freely.
"""

import copy

DEFAULTS_VERSION = 1

# Escape bandwidth per chip, GBps.
#   cpu:  8x DDR4-3200 (204.8) + 4 PCIe Gen4 x16 to GPUs (4*31.5) + 4 NICs at 200 Gbps (4*25)
#   gpu:  HBM (1555.2) + 12 NVLink3 at 25 GBps + one PCIe Gen4 link (31.5)
#   nic:  PCIe Gen4 host side
#   hbm:  one A100 HBM stack set
#   ddr4: DDR4-3200 module, 8 bytes wide
CPU_ESCAPE = 204.8 + 4 * 31.5 + 4 * 25.0
GPU_ESCAPE = 1555.2 + 12 * 25.0 + 31.5

REFERENCE_DEFAULTS = {
    "version": DEFAULTS_VERSION,
    "rack": {
        "chips": {
            "cpu": {"escape_gbytes_per_s": CPU_ESCAPE, "count": 128},
            "gpu": {"escape_gbytes_per_s": GPU_ESCAPE, "count": 512},
            "nic": {"escape_gbytes_per_s": 31.5, "count": 512},
            "hbm": {"escape_gbytes_per_s": 1555.2, "count": 512},
            "ddr4": {"escape_gbytes_per_s": 25.6, "count": 1024, "cap": 27},
        },
    },
    "mcm": {
        "fibers": 32,
        "wavelengths_per_fiber": 64,
        "gbps_per_wavelength": 25.0,
        "controller_overhead": 0.0,
    },
    "switches": {
        "awgr": {
            "kind": "cascaded_awgr",
            "radix": 370,
            "wavelengths_per_port": 370,
            "gbps_per_wavelength": 25.0,
            "insertion_loss_db": 15.0,
            "crosstalk_db": -35.0,
            "reconfig_time_s": 0.0,
        },
        "wss": {
            "kind": "wave_selective",
            "radix": 256,
            "wavelengths_per_port": 256,
            "gbps_per_wavelength": 25.0,
            "insertion_loss_db": 10.0,
            "crosstalk_db": -35.0,
            "reconfig_time_s": 1e-3,
        },
    },
    "fabric": {
        "choice": "awgr",
        "awgr_port_stride": 59,
        "wss_count": 11,
        "wss_start_stride": 32,
    },
    "cascade": {"k": 3, "m": 12, "n_rear": 11, "effective_ports": 370},
    "optics": {"fiber_loss_db_per_m": 0.0002},
    "control": {
        "piggyback_period_s": 1e-3,
        "hop_limit": 4,
        "occupancy_mode": "one_hot",
        "retry_delay_s": 1e-3,
    },
    "latency": {
        "distance_m": 4.0,
        "oeo_ns": 15.0,
        "ns_per_m": 5.0,
        "fec_ns": 3.0,
        # 35 ns base + 4 * 12.5 = 85 ns end to end for a PCIe Gen5 switch tree
        "pcie_hops": 4,
        "pcie_hop_ns": 12.5,
        "anton3_hop_ns": 90.0,
    },
    "fec": {
        "target_ber": 1e-18,
        "latency_ns": 3.0,
        "bandwidth_loss_fraction": 0.0005,
    },
    "power": {
        "laser_dbm": 10.0,
        "laser_wpe": 0.11,
        "modulator_pj_per_bit": 0.8,
        "receiver_pj_per_bit": 2.12,
        "switch_w_max": 1000.0,
    },
    "iso": {
        "baseline": {"cpu": 128, "gpu": 512, "ddr4": 1024, "nic": 256},
        "cpu_overhead": 0.13,
        "gpu_overhead": 0.08,
        "memory_reduction": 4.0,
        "nic_reduction": 2.0,
        "extra_compute_chips": 128,
    },
    "traffic": {
        "classes": {
            # Percentile anchors in Gbps. P75 from production profiling
            # (0.46 GB/s memory bandwidth, 1.25% of a 200 Gbps NIC).
            "cpu_mem": {
                "src": "cpu",
                "dst": "ddr4",
                "percentiles": {0.75: 3.68, 0.97: 25.0, 0.995: 125.0},
                "arrival_rate_per_s": 2000.0,
                "mean_duration_s": 5e-3,
            },
            "nic_mem": {
                "src": "nic",
                "dst": "ddr4",
                "percentiles": {0.75: 2.5, 0.97: 25.0, 0.999: 125.0},
                "arrival_rate_per_s": 500.0,
                "mean_duration_s": 5e-3,
            },
        },
    },
    "sim": {"seed": 1, "horizon_s": 0.05, "audit": False},
}


def reference_defaults() -> dict:
    return copy.deepcopy(REFERENCE_DEFAULTS)
