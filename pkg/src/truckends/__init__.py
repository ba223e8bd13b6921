"""Freight trip-end identification from heavy-truck GPS trajectories."""

from .chains import (
    Trip,
    TripChain,
    TravelNetwork,
    build_travel_network,
    dbscan_cluster,
    extract_trips,
    pattern_of,
    pattern_stats,
    split_chains,
)
from .identify import (
    CircuityCalibration,
    Subtrajectory,
    TripEnd,
    accuracy,
    calibrate_circuity_order,
    filter_trip_ends,
    identify_trip_ends,
    is_circuitous,
    ssi,
    thakur_baseline,
)
from .ingest import CityBoundary, GpsRecord, Trajectory, clean_trajectory, clip_to_city, haversine, parse_gps_csv
from .loubar import LorenzCurve, ThresholdLadder, derive_ladder, lorenz, loubar_fstar
from .pipeline import PipelineConfig, run_pipeline
from .roadnet import (
    Path,
    Poi,
    RestrictedArea,
    RoadGraph,
    Router,
    apply_restrictions,
    distance_to_nearest_road,
    k_shortest_paths,
    load_graph,
    shortest_path,
    snap_to_node,
)
from .stops import SpeedHistogram, Stop, derive_speed_threshold, detect_stops, interval_speeds
from .synth import GroundTruth, SynthScenario, generate_scenario, score_against_truth
from .zones import ZoneGrid, hotspot_grid, od_matrix

__version__ = "0.1.0"
