"""Deterministic link-level simulator for multiuser air-ground uplinks.

Synthesizes geometry-based time-varying channel matrices on a curved Earth,
runs pilot-based channel estimation under carrier-frequency-offset errors,
applies ZF and ordered MMSE-SIC detection with imperfect channel knowledge,
and reports outage probability versus time elapsed since estimation.
"""

from .detection import (
    MmseKernel,
    OutageSet,
    OutageStats,
    ZfDetector,
    mmse_kernel,
    outage_probability,
    vms_outage_set,
    zf_detector,
    zf_outage_set,
    zf_rates,
)
from .errors import ConfigurationError, DomainError, SingularMatrixError
from .estimation import (
    CfoCompensation,
    EstimatedChannel,
    PilotMatrix,
    estimate_td,
    estimate_zc,
    precompensate,
    zc_pilots,
)
from .geometry import (
    DEFAULT_GROUND_HEIGHT_M,
    DEFAULT_MAP_RADIUS_M,
    EARTH_RADIUS_M,
    GS_ALTITUDE_M,
    SCENARIOS,
    AircraftState,
    GroundReflection,
    ReflectorMap,
    ScenarioSpec,
    advance,
    advance_states,
    gs_antenna_position,
    is_reflecting,
    sample_reflector_map,
    sample_scenario,
    specular_point,
    specular_points,
    to_cartesian,
)
from .harness import (
    DEFAULT_ELAPSED_GRID_S,
    DEFAULT_ETA_SWEEP,
    Report,
    TrialConfig,
    TrialRecord,
    aggregate,
    run_experiment,
    run_trial,
    trial_seed,
)
from .propagation import (
    ArrayGeometry,
    ChannelMatrix,
    ChannelPaths,
    LmpConfig,
    Mpc,
    PointReflector,
    SystemParams,
    World,
    advance_world,
    array_elements,
    build_channel_paths,
    cfo_vector,
    channel_matrix,
    evaluate_paths,
    export_channel_trace,
    fresnel_vertical,
    fspl_amplitude,
    make_world,
    path_components,
    path_rate,
    sample_lmp_reflectors,
    slow_gains,
)

__version__ = "0.1.0"
