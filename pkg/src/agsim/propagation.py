"""Per-element, per-aircraft channel synthesis.

Each channel entry is the sum of a line-of-sight path, an optional specular
ground reflection (present only when the reflection point falls on reflecting
ground), and weak lateral point reflectors near the GS.  Path gains follow the
free-space law and phases follow exact per-element path lengths, both frozen
at the world's epoch; the time evolution multiplies every path by
exp(j 2 pi nu n) with nu the path's Doppler (cycles/sample) at the epoch, so
a channel ages through the beating of paths with different Dopplers and the
factorization H_n = Hbar Lambda_n is exact for single-path users.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .geometry import (
    DEFAULT_GROUND_HEIGHT_M,
    EARTH_RADIUS_M,
    GS_ALTITUDE_M,
    AircraftState,
    ReflectorMap,
    ScenarioSpec,
    advance,
    advance_states,
    gs_antenna_position,
    is_reflecting,
    specular_points,
    to_cartesian,
)

SPEED_OF_LIGHT = 299792458.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class SystemParams:
    """Link and array constants.

    tx_power / noise_power are watts (defaults 41 dBm and -107 dBm per
    antenna); n_antennas must be a perfect square (uniform planar array);
    guaranteed_rate is the per-user rate requirement in bits/s/Hz.
    """

    carrier_frequency_hz: float = 987e6
    symbol_duration_s: float = 120e-6
    tx_power_w: float = dbm_to_watts(41.0)
    noise_power_w: float = dbm_to_watts(-107.0)
    n_antennas: int = 64
    guaranteed_rate: float = 2.0
    # medium dry ground; the Brewster angle (~14 deg) keeps the steep
    # terminal-area reflections strong and the shallow long-range band weaker
    ground_eps_r: float = 15.0
    ground_sigma_sm: float = 1e-3

    def __post_init__(self):
        if min(self.carrier_frequency_hz, self.symbol_duration_s,
               self.tx_power_w, self.guaranteed_rate) <= 0:
            raise DomainError("system parameters must be positive")
        if self.noise_power_w < 0:
            raise DomainError("noise power must be nonnegative")
        side = math.isqrt(self.n_antennas)
        if side * side != self.n_antennas:
            raise DomainError(f"n_antennas={self.n_antennas} is not a perfect square")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz


@dataclass(frozen=True)
class ArrayGeometry:
    """Element displacements from the GS reference point (the array centroid)."""

    element_offsets: np.ndarray  # (M, 3)


def array_elements(params: SystemParams) -> ArrayGeometry:
    """sqrt(M) x sqrt(M) half-wavelength grid in the local horizontal plane."""
    side = math.isqrt(params.n_antennas)
    pitch = params.wavelength_m / 2.0
    idx = np.arange(side) - (side - 1) / 2.0
    gx, gy = np.meshgrid(idx * pitch, idx * pitch, indexing="ij")
    offsets = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(params.n_antennas)])
    return ArrayGeometry(offsets)


def fspl_amplitude(distance_m, wavelength_m: float):
    """Free-space field gain lambda / (4 pi d)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise DomainError("free-space gain needs a positive distance")
    return wavelength_m / (4.0 * math.pi * d)


def fresnel_vertical(grazing_rad: float, eps_r: float, sigma_sm: float,
                     wavelength_m: float) -> complex:
    """Vertical-polarization ground reflection coefficient.

    rho_v = (e' sin(psi) - sqrt(e' - cos^2 psi)) / (e' sin(psi) + sqrt(e' - cos^2 psi))
    with complex permittivity e' = eps_r - j 60 sigma lambda.
    """
    eps = eps_r - 1j * 60.0 * sigma_sm * wavelength_m
    s = math.sin(grazing_rad)
    root = np.sqrt(eps - math.cos(grazing_rad) ** 2)
    return complex((eps * s - root) / (eps * s + root))


def path_rate(path_length_fn, t_s: float, step_s: float = 1.2e-5) -> float:
    """Central finite-difference rate of change of a path length [m/s].

    Default step is one tenth of the 120 us symbol duration.
    """
    return (path_length_fn(t_s + step_s) - path_length_fn(t_s - step_s)) / (2.0 * step_s)


# ---------------------------------------------------------------------------
# Lateral point reflectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LmpConfig:
    """Stochastic model of the lateral reflectors near the GS.

    These are stand-in defaults (the measured per-site statistics are not
    public): Poisson count, uniform placement in a disk around the GS, heights
    up to 50 m, relative gains kept below the -20 dB significance level.
    A reflector contributes only while the aircraft is within its visibility
    radius; the lateral scatterers are a terminal-area phenomenon and distant
    aircraft sit outside their scatter lobes.
    """

    mean_count: float = 5.0
    disk_radius_m: float = 800.0
    height_range_m: tuple[float, float] = (0.0, 50.0)
    gain_range_db: tuple[float, float] = (-45.0, -25.0)
    visibility_radius_m: float | None = 15e3


@dataclass(frozen=True)
class PointReflector:
    """One lateral reflector: position near the GS and power draw vs the LOS.

    visibility_radius_m of None means always visible.
    """

    position: np.ndarray
    gain_db_rel_los: float
    visibility_radius_m: float | None = None


def sample_lmp_reflectors(scenario: ScenarioSpec, config: LmpConfig,
                          rng: np.random.Generator,
                          ground_height_msl: float = DEFAULT_GROUND_HEIGHT_M,
                          ) -> list[PointReflector]:
    """Draw the lateral reflector set for one trial (deterministic per seed).

    Reflector heights are above the local ground plane.
    """
    count = int(rng.poisson(config.mean_count))
    reflectors = []
    for _ in range(count):
        r = config.disk_radius_m * math.sqrt(rng.uniform(0.0, 1.0))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        h = rng.uniform(*config.height_range_m)
        pos = to_cartesian(r, theta, ground_height_msl + h)
        gain = rng.uniform(*config.gain_range_db)
        reflectors.append(PointReflector(pos, gain, config.visibility_radius_m))
    return reflectors


# ---------------------------------------------------------------------------
# World container and channel synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class World:
    """Everything the channel depends on, with aircraft states at one instant."""

    params: SystemParams
    aircraft: tuple[AircraftState, ...]
    gs_position: np.ndarray
    element_offsets: np.ndarray          # (M, 3)
    reflector_map: ReflectorMap
    lmp_positions: np.ndarray            # (L, 3)
    lmp_field_gains: np.ndarray          # (L,) linear field gain vs LOS
    lmp_visibility_m: np.ndarray         # (L,) visibility radius, inf = always
    ground_height_msl: float = DEFAULT_GROUND_HEIGHT_M

    @property
    def element_positions(self) -> np.ndarray:
        return self.gs_position[None, :] + self.element_offsets

    @property
    def ground_radius_m(self) -> float:
        return EARTH_RADIUS_M + self.ground_height_msl


def make_world(params: SystemParams, aircraft: list[AircraftState],
               reflector_map: ReflectorMap,
               reflectors: list[PointReflector] | None = None,
               gs_altitude_m: float = GS_ALTITUDE_M,
               ground_height_msl: float = DEFAULT_GROUND_HEIGHT_M) -> World:
    reflectors = reflectors or []
    if reflectors:
        lmp_pos = np.array([r.position for r in reflectors])
        lmp_gain = np.array([10.0 ** (r.gain_db_rel_los / 20.0) for r in reflectors])
        lmp_vis = np.array([math.inf if r.visibility_radius_m is None
                            else r.visibility_radius_m for r in reflectors])
    else:
        lmp_pos = np.empty((0, 3))
        lmp_gain = np.empty(0)
        lmp_vis = np.empty(0)
    return World(params, tuple(aircraft), gs_antenna_position(gs_altitude_m),
                 array_elements(params).element_offsets, reflector_map,
                 lmp_pos, lmp_gain, lmp_vis, ground_height_msl)


def advance_world(world: World, t_s: float) -> World:
    """World with every aircraft advanced from its current state by t seconds."""
    if t_s == 0.0:
        return world
    pos = np.array([s.position for s in world.aircraft])
    vel = np.array([s.velocity for s in world.aircraft])
    new_pos, new_vel = advance_states(pos, vel, t_s)
    aircraft = tuple(AircraftState(new_pos[i], new_vel[i], s.aircraft_id)
                     for i, s in enumerate(world.aircraft))
    return replace(world, aircraft=aircraft)


@dataclass(frozen=True)
class ChannelMatrix:
    """M x K complex channel gains at one discrete time index."""

    entries: np.ndarray
    time_index: int


def _check_above_horizon(ac: np.ndarray, gs: np.ndarray) -> None:
    """Reject geometries where a direct GS-aircraft segment cuts the Earth."""
    seg = ac - gs[None, :]
    t_star = -(seg @ gs) / np.einsum("ki,ki->k", seg, seg)
    closest = gs[None, :] + t_star[:, None] * seg
    r2 = np.einsum("ki,ki->k", closest, closest)
    interior = (t_star > 0.0) & (t_star < 1.0)
    if np.any(interior & (r2 < EARTH_RADIUS_M**2)):
        raise DomainError("aircraft below the radio horizon of the GS")


@dataclass(frozen=True)
class ChannelPaths:
    """Frozen multipath decomposition of a world at its epoch.

    base[p] holds path p's per-element complex gain amp * exp(-j 2 pi d / lambda)
    (exact per-element path lengths), doppler[p] its phase advance per sample,
    and owner[p] the aircraft it belongs to.  The channel at index n is the
    per-user sum of base[p] * exp(j 2 pi doppler[p] n).
    """

    base: np.ndarray      # (P, M) complex
    doppler: np.ndarray   # (P,) cycles per sample
    owner: np.ndarray     # (P,) aircraft index
    k: int
    m: int


def build_channel_paths(world: World) -> ChannelPaths:
    """Decompose the world into LOS / ground-specular / lateral paths.

    Per-path Dopplers are finite-difference path-length rates at the array
    reference point, shared by all elements of a path; the ground-specular
    rate recomputes the reflection point at each probe time.
    """
    params = world.params
    lam, ts = params.wavelength_m, params.symbol_duration_s
    step = ts / 10.0
    elements = world.element_positions                      # (M, 3)
    gs = world.gs_position
    ac = np.array([s.position for s in world.aircraft])     # (K, 3)
    vel = np.array([s.velocity for s in world.aircraft])    # (K, 3)
    k = ac.shape[0]
    _check_above_horizon(ac, gs)
    ahead, _ = advance_states(ac, vel, step)
    behind, _ = advance_states(ac, vel, -step)

    bases = []
    dopplers = []
    owners = []

    # line of sight (always present)
    diff = ac[:, None, :] - elements[None, :, :]            # (K, M, 3)
    d_los = np.sqrt(np.einsum("kmi,kmi->km", diff, diff))   # (K, M)
    rate = (np.linalg.norm(ahead - gs, axis=1)
            - np.linalg.norm(behind - gs, axis=1)) / (2.0 * step)
    bases.append(fspl_amplitude(d_los, lam) * np.exp(-2j * math.pi * d_los / lam))
    dopplers.append(-rate / lam * ts)
    owners.append(np.arange(k))

    # ground specular reflection where the reflection point is reflecting
    ground_r = world.ground_radius_m
    exists, spec_pts, grazing = specular_points(ac, gs, ground_r)
    for i in range(k):
        if not exists[i] or not is_reflecting(world.reflector_map, spec_pts[i]):
            continue
        rho = fresnel_vertical(float(grazing[i]), params.ground_eps_r,
                               params.ground_sigma_sm, lam)
        d_tot = (np.linalg.norm(ac[i] - spec_pts[i])
                 + np.linalg.norm(elements - spec_pts[i][None, :], axis=1))  # (M,)
        bases.append((rho * fspl_amplitude(d_tot, lam)
                      * np.exp(-2j * math.pi * d_tot / lam))[None, :])
        dopplers.append(np.array([
            -_gmp_rate(ahead[i], behind[i], gs, step, ground_r) / lam * ts]))
        owners.append(np.array([i]))

    # lateral point reflectors, bistatic gain anchored to the AC-to-reflector
    # leg (the fixed reflector-to-GS leg is folded into the drawn gain), so
    # the drawn value is the power relative to the LOS in the far-range limit
    # and close-in aircraft see the reflector attenuated by (d_LOS / d1)^2.
    if world.lmp_positions.shape[0]:
        d_up = np.linalg.norm(ac[:, None, :] - world.lmp_positions[None, :, :],
                              axis=2)                                      # (K, L)
        a_lmp = world.lmp_field_gains[None, :] * fspl_amplitude(d_up, lam)
        visible = d_up <= world.lmp_visibility_m[None, :]
        d_down = np.linalg.norm(world.lmp_positions[:, None, :]
                                - elements[None, :, :], axis=2)            # (L, M)
        rate_up = (np.linalg.norm(ahead[:, None, :] - world.lmp_positions[None, :, :], axis=2)
                   - np.linalg.norm(behind[:, None, :] - world.lmp_positions[None, :, :], axis=2)
                   ) / (2.0 * step)                                        # (K, L)
        for i, l in zip(*np.nonzero(visible)):
            d_tot = d_up[i, l] + d_down[l]                                 # (M,)
            bases.append((a_lmp[i, l] * np.exp(-2j * math.pi * d_tot / lam))[None, :])
            dopplers.append(np.array([-rate_up[i, l] / lam * ts]))
            owners.append(np.array([i]))

    return ChannelPaths(np.concatenate([np.atleast_2d(b) for b in bases]),
                        np.concatenate(dopplers),
                        np.concatenate(owners).astype(int),
                        k, params.n_antennas)


def _gmp_rate(pos_ahead: np.ndarray, pos_behind: np.ndarray, gs: np.ndarray,
              step: float, ground_radius_m: float) -> float:
    """Finite-difference rate of the reflected path length [m/s]."""
    def total(pos):
        ok, pts, _ = specular_points(pos[None, :], gs, ground_radius_m)
        if not ok[0]:
            return math.nan
        return float(np.linalg.norm(pos - pts[0]) + np.linalg.norm(pts[0] - gs))
    return (total(pos_ahead) - total(pos_behind)) / (2.0 * step)


def evaluate_paths(paths: ChannelPaths, n: int) -> ChannelMatrix:
    """Channel matrix at time index n from a frozen path decomposition."""
    rotation = np.exp(2j * math.pi * paths.doppler * n)
    contrib = paths.base * rotation[:, None]                # (P, M)
    h_t = np.zeros((paths.k, paths.m), dtype=complex)
    np.add.at(h_t, paths.owner, contrib)
    return ChannelMatrix(h_t.T.copy(), n)


def channel_matrix(world: World, n: int) -> ChannelMatrix:
    """Synthesize H_n: per-element path sums with per-path linear phase drift.

    Entry (m, k) is sum over paths of
    amp * exp(-j 2 pi d_mk / lambda) * exp(j 2 pi nu n), with exact per-element
    path lengths d_mk frozen at the world's epoch and per-path Dopplers nu
    from the epoch's geometry; the ground reflection enters only when it
    exists and its reflection point lies on reflecting ground.
    """
    return evaluate_paths(build_channel_paths(world), n)


# ---------------------------------------------------------------------------
# Per-path introspection, CFO, slow gains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mpc:
    """One multipath component seen at the array reference point."""

    kind: str                 # "LOS" | "GMP" | "LMP"
    amplitude: complex        # field gain, includes rho_v / relative gain
    path_length_m: float      # reference-element path length
    doppler_cps: float        # cycles per sample


def _los_length_fn(state: AircraftState, gs: np.ndarray):
    def fn(t):
        return float(np.linalg.norm(advance(state, t).position - gs))
    return fn


def _gmp_length_fn(state: AircraftState, gs: np.ndarray, ground_radius_m: float):
    def fn(t):
        pos = advance(state, t).position
        ok, pts, _ = specular_points(pos[None, :], gs, ground_radius_m)
        if not ok[0]:
            return math.nan
        return float(np.linalg.norm(pos - pts[0]) + np.linalg.norm(pts[0] - gs))
    return fn


def path_components(world: World, aircraft_index: int) -> list[Mpc]:
    """LOS/GMP/LMP components for one aircraft at the world's instant.

    Dopplers come from finite-difference path-length rates at the array
    reference point (sign convention: an approaching aircraft has positive
    Doppler), expressed in cycles per sample.
    """
    params = world.params
    lam, ts = params.wavelength_m, params.symbol_duration_s
    state = world.aircraft[aircraft_index]
    gs = world.gs_position
    step = ts / 10.0

    comps = []
    los_fn = _los_length_fn(state, gs)
    d0 = los_fn(0.0)
    nu = -path_rate(los_fn, 0.0, step) / lam * ts
    comps.append(Mpc("LOS", complex(fspl_amplitude(d0, lam)), d0, nu))

    ok, pts, grazing = specular_points(state.position[None, :], gs,
                                       world.ground_radius_m)
    if ok[0] and is_reflecting(world.reflector_map, pts[0]):
        rho = fresnel_vertical(float(grazing[0]), params.ground_eps_r,
                               params.ground_sigma_sm, lam)
        gmp_fn = _gmp_length_fn(state, gs, world.ground_radius_m)
        dg = gmp_fn(0.0)
        nug = -path_rate(gmp_fn, 0.0, step) / lam * ts
        comps.append(Mpc("GMP", rho * float(fspl_amplitude(dg, lam)), dg, nug))

    for pos, gain, vis in zip(world.lmp_positions, world.lmp_field_gains,
                              world.lmp_visibility_m):
        def lmp_fn(t, pos=pos):
            return float(np.linalg.norm(advance(state, t).position - pos))
        d_up = lmp_fn(0.0)
        if d_up > vis:
            continue
        d_tot = d_up + float(np.linalg.norm(pos - gs))
        nul = -path_rate(lmp_fn, 0.0, step) / lam * ts
        comps.append(Mpc("LMP", gain * float(fspl_amplitude(d_up, lam)), d_tot, nul))

    return comps


def cfo_vector(world: World) -> np.ndarray:
    """Per-aircraft carrier frequency offset, cycles per sample.

    The offset each transmitter must pre-compensate is its LOS Doppler,
    taken as the finite-difference rate of the reference-element path length
    (step = one tenth of a symbol), negated so approaching is positive.
    """
    params = world.params
    lam, ts = params.wavelength_m, params.symbol_duration_s
    step = ts / 10.0
    pos = np.array([s.position for s in world.aircraft])
    vel = np.array([s.velocity for s in world.aircraft])
    ahead, _ = advance_states(pos, vel, step)
    behind, _ = advance_states(pos, vel, -step)
    d_ahead = np.linalg.norm(ahead - world.gs_position[None, :], axis=1)
    d_behind = np.linalg.norm(behind - world.gs_position[None, :], axis=1)
    rate = (d_ahead - d_behind) / (2.0 * step)
    return -rate / lam * ts


def slow_gains(h: ChannelMatrix, cfo: np.ndarray) -> np.ndarray:
    """Strip the per-user CFO rotation: H_n diag(exp(-j 2 pi df_k n))."""
    phase = np.exp(-2j * math.pi * cfo * h.time_index)
    return h.entries * phase[None, :]


def export_channel_trace(channel_source, time_indices, path) -> None:
    """Debug dump of channel entries as CSV rows n,m,k,re,im (6 sig. digits)."""
    with open(path, "w", newline="") as fh:
        fh.write("n,m,k,re,im\n")
        for n in time_indices:
            h = channel_source(n).entries
            m_count, k_count = h.shape
            for m in range(m_count):
                for k in range(k_count):
                    v = h[m, k]
                    fh.write(f"{n},{m},{k},{v.real:.6g},{v.imag:.6g}\n")
