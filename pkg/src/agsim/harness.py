"""Monte Carlo orchestration.

One trial draws a world (reflecting-ground map, aircraft placement, lateral
reflectors, pilot noise) from its own seeded generator, runs the configured
estimators once per CFO-accuracy value, then scores every configured detector
on the aged true channel at each elapsed-time point.  The same world and the
same pilot-noise block serve every (estimator, detector, eta) cell of a trial,
so curve comparisons are paired.  Trials are independent work units and the
aggregation is a deterministic fold, so reports do not depend on worker count
or scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detection import OutageStats, vms_outage_set, wilson_interval, zf_detector, \
    zf_outage_set, zf_rates
from .errors import ConfigurationError
from .estimation import estimate_td, estimate_zc, precompensate, zc_pilots
from .geometry import DEFAULT_GROUND_HEIGHT_M, DEFAULT_MAP_RADIUS_M, GS_ALTITUDE_M, \
    ScenarioSpec, sample_reflector_map, sample_scenario
from .propagation import LmpConfig, SystemParams, build_channel_paths, cfo_vector, \
    evaluate_paths, make_world, sample_lmp_reflectors

DEFAULT_ELAPSED_GRID_S = (0.006, 0.06, 0.24, 0.6, 1.14, 2.12, 3.62)
DEFAULT_ETA_SWEEP = (1.0, 0.99, 0.98, 0.97, 0.96, 0.95, 0.94, 0.93, 0.92,
                     0.91, 0.9, 0.85, 0.8)

#: cell key: (estimator, detector, eta, elapsed seconds)
CellKey = tuple[str, str, float, float]


@dataclass(frozen=True)
class TrialConfig:
    """Experiment definition shared by every trial."""

    scenario: ScenarioSpec
    k: int
    params: SystemParams = field(default_factory=SystemParams)
    estimators: tuple[str, ...] = ("TD", "ZC")
    detectors: tuple[str, ...] = ("ZF", "VMS")
    eta_values: tuple[float, ...] = DEFAULT_ETA_SWEEP
    elapsed_grid_s: tuple[float, ...] = DEFAULT_ELAPSED_GRID_S
    trials: int = 2000
    master_seed: int = 0
    map_coverage: float = 0.5
    map_radius_m: float = DEFAULT_MAP_RADIUS_M
    lmp: LmpConfig = field(default_factory=LmpConfig)
    gs_altitude_m: float = GS_ALTITUDE_M
    ground_height_msl: float = DEFAULT_GROUND_HEIGHT_M

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.k > self.params.n_antennas:
            raise ConfigurationError("more users than antennas")
        if list(self.elapsed_grid_s) != sorted(self.elapsed_grid_s):
            raise ConfigurationError("elapsed grid must be sorted ascending")
        bad = set(self.estimators) - {"TD", "ZC"}
        if bad or not self.estimators:
            raise ConfigurationError(f"unknown estimators {sorted(bad)}")
        bad = set(self.detectors) - {"ZF", "VMS"}
        if bad or not self.detectors:
            raise ConfigurationError(f"unknown detectors {sorted(bad)}")


@dataclass(frozen=True)
class TrialRecord:
    """Outage-set sizes of one trial, per (estimator, detector, eta, elapsed)."""

    trial_index: int
    counts: dict[CellKey, int]


@dataclass(frozen=True)
class Report:
    """Aggregated outage curves: one OutageStats per cell."""

    cells: dict[CellKey, OutageStats]
    k: int
    trials: int


_MASK64 = (1 << 64) - 1


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Per-trial seed: SplitMix64 finalizer of (master XOR index).

    The finalizer is a bijection, so distinct trial indices always map to
    distinct seeds for a fixed master.
    """
    z = (master_seed ^ trial_index) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _pilot_length(estimator: str, k: int) -> int:
    return k if estimator == "TD" else k + 1


def run_trial(config: TrialConfig, trial_index: int) -> TrialRecord:
    """Simulate one world and score every configured cell on it."""
    params = config.params
    k = config.k
    tau = k + 1
    ts = params.symbol_duration_s
    rng = np.random.default_rng(trial_seed(config.master_seed, trial_index))

    refl_map = sample_reflector_map(config.map_coverage, rng, config.map_radius_m)
    states = sample_scenario(config.scenario, k, rng)
    reflectors = sample_lmp_reflectors(config.scenario, config.lmp, rng,
                                       config.ground_height_msl)
    unit_noise = (rng.standard_normal((params.n_antennas, tau))
                  + 1j * rng.standard_normal((params.n_antennas, tau))) / np.sqrt(2.0)

    world0 = make_world(params, states, refl_map, reflectors,
                        config.gs_altitude_m, config.ground_height_msl)
    cfo = cfo_vector(world0)
    paths = build_channel_paths(world0)

    def source(n: int):
        return evaluate_paths(paths, n)

    # True channels at every evaluation index, shared across eta and detectors.
    eval_indices = sorted({_pilot_length(est, k) + round(t_e / ts)
                           for est in config.estimators
                           for t_e in config.elapsed_grid_s})
    true_at = {n: evaluate_paths(paths, n) for n in eval_indices}

    pilots = zc_pilots(k) if "ZC" in config.estimators else None
    counts: dict[CellKey, int] = {}
    for eta in config.eta_values:
        comp = precompensate(cfo, eta)
        estimates = {}
        if "TD" in config.estimators:
            estimates["TD"] = estimate_td(source, comp, params,
                                          unit_noise=unit_noise[:, :k])
        if "ZC" in config.estimators:
            estimates["ZC"] = estimate_zc(source, pilots, comp, params,
                                          unit_noise=unit_noise)
        for est_name, est in estimates.items():
            zf = zf_detector(est) if "ZF" in config.detectors else None
            for t_e in config.elapsed_grid_s:
                n_eval = _pilot_length(est_name, k) + round(t_e / ts)
                h_true = true_at[n_eval]
                for det_name in config.detectors:
                    if det_name == "ZF":
                        rates = zf_rates(zf, h_true, params)
                        outage = zf_outage_set(rates, params.guaranteed_rate)
                    else:
                        outage = vms_outage_set(est, h_true, cfo, n_eval, params)
                    counts[(est_name, det_name, eta, t_e)] = len(outage)
    return TrialRecord(trial_index, counts)


def aggregate(records: list[TrialRecord], k: int) -> Report:
    """Fold per-trial outage counts into P_out with Wilson intervals."""
    if not records:
        raise ConfigurationError("no trial records to aggregate")
    ordered = sorted(records, key=lambda r: r.trial_index)
    totals: dict[CellKey, int] = {}
    for rec in ordered:
        for key, count in rec.counts.items():
            totals[key] = totals.get(key, 0) + count
    trials = len(ordered)
    cells = {}
    for key, successes in totals.items():
        n = k * trials
        lo, hi = wilson_interval(successes, n)
        cells[key] = OutageStats(successes / n, lo, hi, n)
    return Report(cells, k, trials)


def _trial_task(args: tuple[TrialConfig, int]) -> TrialRecord:
    return run_trial(*args)


def run_experiment(config: TrialConfig, workers: int = 1) -> Report:
    """Run all trials (optionally in parallel) and aggregate.

    The report is bit-identical for any worker count: trials are seeded by
    index and the fold is order-independent integer summation.
    """
    if workers <= 1:
        records = [run_trial(config, i) for i in range(config.trials)]
    else:
        chunk = max(1, config.trials // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial_task,
                                    [(config, i) for i in range(config.trials)],
                                    chunksize=chunk))
    return aggregate(records, config.k)
