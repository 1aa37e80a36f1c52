"""Desk-scale simulator and service for searching out an emergency caller by
the uplink signal strength of their phone.

The package splits into a world/signal layer (world, propagation, uplink), the
measurement units and calculation server (sme, lcs), the session orchestrator
and wire protocol (orchestrator, protocol, service), and the experiment
harness with its CLI (harness, cli, report).
"""

from .harness import (BatchSpec, MetricsSummary, TrialRecord, approach_replay,
                      resolve_scenario, run_batch, run_trial, summarize)
from .lcs import (ContourMap, PositionEstimate, SearchBoundary, area_ratio,
                  derive_boundary, estimate_position, interpolate_idw,
                  plan_building_search, plan_floor_search)
from .orchestrator import SearchOutcome, SessionRunner, run_knock_baseline, run_session
from .propagation import RfParams, ShadowingField, path_loss_db, received_power_dbm
from .protocol import (Message, SessionRegistry, decode, decode_stream, encode,
                       transport)
from .scenarios import (BUILTIN, make_freespace, make_minimal, make_office,
                        make_testbed, randomize_target)
from .service import LcsService
from .sme import BearingProfile, MeasurementReport, SmeState, directional_sweep, step
from .uplink import ChannelConfig, RssiSample, synthesize_rssi
from .world import (Building, Floor, Pose, Scenario, load_scenario,
                    load_scenario_file, scenario_from_dict, scenario_to_dict,
                    serialize_scenario)

__version__ = "0.1.0"

__all__ = [
    "BatchSpec", "MetricsSummary", "TrialRecord", "approach_replay",
    "resolve_scenario", "run_batch", "run_trial", "summarize",
    "ContourMap", "PositionEstimate", "SearchBoundary", "area_ratio",
    "derive_boundary", "estimate_position", "interpolate_idw",
    "plan_building_search", "plan_floor_search",
    "SearchOutcome", "SessionRunner", "run_knock_baseline", "run_session",
    "RfParams", "ShadowingField", "path_loss_db", "received_power_dbm",
    "Message", "SessionRegistry", "decode", "decode_stream", "encode",
    "transport",
    "BUILTIN", "make_freespace", "make_minimal", "make_office", "make_testbed",
    "randomize_target",
    "LcsService",
    "BearingProfile", "MeasurementReport", "SmeState", "directional_sweep",
    "step",
    "ChannelConfig", "RssiSample", "synthesize_rssi",
    "Building", "Floor", "Pose", "Scenario", "load_scenario",
    "load_scenario_file", "scenario_from_dict", "scenario_to_dict",
    "serialize_scenario",
    "__version__",
]
