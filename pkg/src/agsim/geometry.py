"""Curved-Earth world model: station/aircraft placement, motion, ground reflections.

Coordinate frame: Earth-centered Cartesian with the z-axis through the ground
station's surface point, so the GS sits at (0, 0, R_E + h_gs) and the local
horizontal plane at the GS is spanned by x and y.  All lengths in meters,
angles in radians, speeds in m/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

EARTH_RADIUS_M = 6371e3
GS_ALTITUDE_M = 500.0

#: Elevation of the local ground plane around the station (the regional
#: airport site sits at altitude; the 500 m MSL antenna stands on a ~30 m
#: mast above it).  Ground reflections happen on this surface.
DEFAULT_GROUND_HEIGHT_M = 470.0

# Rejection-sampling budget for one scenario draw.
MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class ScenarioSpec:
    """Flight-phase parameters: ranges of GS distance and altitude, fixed speed.

    Distances are along-surface (great-circle) distances from the GS surface
    point; altitudes are above MSL; min_separation is the 3-D spacing enforced
    between any two aircraft at placement time.
    """

    name: str
    ground_distance_range_m: tuple[float, float]
    speed_ms: float
    altitude_range_m: tuple[float, float]
    min_separation_m: float

    def __post_init__(self):
        lo, hi = self.ground_distance_range_m
        alo, ahi = self.altitude_range_m
        if not (0 < lo <= hi and 0 < alo <= ahi):
            raise ConfigurationError(f"scenario {self.name}: empty or non-positive range")
        if self.speed_ms < 0 or self.min_separation_m <= 0:
            raise ConfigurationError(f"scenario {self.name}: bad speed or separation")


#: Takeoff & landing, climb & descent, enroute cruise.
SCENARIOS: dict[str, ScenarioSpec] = {
    "TL": ScenarioSpec("TL", (500.0, 7.3e3), 88.0, (530.0, 815.0), 1e3),
    "CD": ScenarioSpec("CD", (20e3, 80e3), 171.0, (3e3, 9e3), 10e3),
    "EC": ScenarioSpec("EC", (80e3, 250e3), 214.0, (8e3, 10.4e3), 10e3),
}


@dataclass(frozen=True)
class AircraftState:
    """Position/velocity snapshot of one aircraft.

    velocity is tangent to the local sphere (constant-altitude motion);
    aircraft_id is the 0-based user index.
    """

    position: np.ndarray
    velocity: np.ndarray
    aircraft_id: int

    @property
    def altitude_m(self) -> float:
        return float(np.linalg.norm(self.position)) - EARTH_RADIUS_M

    @property
    def speed_ms(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass(frozen=True)
class GroundReflection:
    """Specular ground-reflection point between an aircraft and the GS."""

    exists: bool
    point: np.ndarray | None = None
    grazing_angle_rad: float = 0.0


def gs_surface_point() -> np.ndarray:
    return np.array([0.0, 0.0, EARTH_RADIUS_M])


def gs_antenna_position(gs_altitude_m: float = GS_ALTITUDE_M) -> np.ndarray:
    return np.array([0.0, 0.0, EARTH_RADIUS_M + gs_altitude_m])


def to_cartesian(ground_distance_m: float, bearing_rad: float, altitude_m: float,
                 max_distance_m: float | None = None) -> np.ndarray:
    """Place a point at a given surface distance, bearing, and altitude.

    The point ends up at geocentric radius R_E + altitude and central angle
    ground_distance / R_E away from the GS surface point, in the direction
    selected by bearing (measured from the +x axis).
    """
    if ground_distance_m < 0 or altitude_m < 0:
        raise DomainError("ground_distance and altitude must be nonnegative")
    if max_distance_m is not None and ground_distance_m > max_distance_m:
        raise DomainError(f"ground distance {ground_distance_m} m outside "
                          f"the {max_distance_m} m cell")
    if ground_distance_m > math.pi * EARTH_RADIUS_M:
        raise DomainError("ground distance exceeds half the Earth circumference")
    phi = ground_distance_m / EARTH_RADIUS_M
    r = EARTH_RADIUS_M + altitude_m
    sin_phi = math.sin(phi)
    return np.array([r * sin_phi * math.cos(bearing_rad),
                     r * sin_phi * math.sin(bearing_rad),
                     r * math.cos(phi)])


def _local_horizontal(position: np.ndarray, azimuth_rad: float) -> np.ndarray:
    """Unit vector tangent to the sphere at `position` with the given azimuth."""
    up = position / np.linalg.norm(position)
    # Local east/north; the pole singularity cannot occur (GS is the +z pole
    # and aircraft are placed at ground distance > 0).
    east = np.cross([0.0, 0.0, 1.0], up)
    east_norm = np.linalg.norm(east)
    if east_norm < 1e-12:
        east = np.array([1.0, 0.0, 0.0])
    else:
        east = east / east_norm
    north = np.cross(up, east)
    return math.cos(azimuth_rad) * east + math.sin(azimuth_rad) * north


def sample_scenario(spec: ScenarioSpec, k: int, rng: np.random.Generator) -> list[AircraftState]:
    """Draw K aircraft states: positions in the scenario ranges, pairwise
    3-D separation >= spec.min_separation, horizontal velocities of magnitude
    spec.speed with uniform random azimuth.

    Raises ConfigurationError when rejection sampling cannot pack K aircraft
    within the retry budget.
    """
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    dlo, dhi = spec.ground_distance_range_m
    alo, ahi = spec.altitude_range_m
    placed: list[np.ndarray] = []
    attempts = 0
    while len(placed) < k:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise ConfigurationError(
                f"could not place {k} aircraft with separation "
                f"{spec.min_separation_m} m in scenario {spec.name}")
        attempts += 1
        # uniform over the annulus area, so nearby aircraft are as rare as a
        # uniformly populated cell makes them
        distance = math.sqrt(rng.uniform(dlo * dlo, dhi * dhi))
        pos = to_cartesian(distance,
                           rng.uniform(0.0, 2.0 * math.pi),
                           rng.uniform(alo, ahi))
        if all(np.linalg.norm(pos - q) >= spec.min_separation_m for q in placed):
            placed.append(pos)
    states = []
    for i, pos in enumerate(placed):
        heading = _local_horizontal(pos, rng.uniform(0.0, 2.0 * math.pi))
        states.append(AircraftState(pos, spec.speed_ms * heading, i))
    return states


def advance(state: AircraftState, dt_s: float) -> AircraftState:
    """Move an aircraft along its constant-altitude great circle for dt seconds.

    Position and velocity are rotated about the axis position x velocity, so
    speed and geocentric radius are preserved exactly and advances compose.
    """
    if dt_s == 0.0 or state.speed_ms == 0.0:
        return state
    pos, vel = advance_states(state.position[None, :], state.velocity[None, :], dt_s)
    return AircraftState(pos[0], vel[0], state.aircraft_id)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product for (N, 3) arrays (avoids np.cross overhead)."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def advance_states(positions: np.ndarray, velocities: np.ndarray,
                   dt_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Great-circle advance of a batch of (position, velocity) rows."""
    radius = np.linalg.norm(positions, axis=1)
    speed = np.linalg.norm(velocities, axis=1)
    moving = speed > 0.0
    axis = _cross(positions, velocities)
    axis_norm = np.linalg.norm(axis, axis=1)
    axis = axis / np.where(moving, axis_norm, 1.0)[:, None]
    angle = np.where(moving, speed * dt_s / radius, 0.0)
    c, s = np.cos(angle)[:, None], np.sin(angle)[:, None]
    dot_p = np.sum(axis * positions, axis=1)[:, None]
    dot_v = np.sum(axis * velocities, axis=1)[:, None]
    new_pos = positions * c + _cross(axis, positions) * s + axis * dot_p * (1.0 - c)
    new_vel = velocities * c + _cross(axis, velocities) * s + axis * dot_v * (1.0 - c)
    return new_pos, new_vel


# ---------------------------------------------------------------------------
# Specular ground reflection
# ---------------------------------------------------------------------------

_BISECTION_STEPS = 32  # bracket <= 0.04 rad -> root to ~1e-11 rad


def specular_points(ac_positions: np.ndarray, gs_position: np.ndarray,
                    ground_radius_m: float = EARTH_RADIUS_M,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Specular reflection points on the reflecting sphere for a batch of aircraft.

    Solves the equal-grazing-angle condition in each aircraft's great-circle
    plane by bisection on the central angle (bracket (0, angle(GS, AC)) always
    contains exactly one root; fixed iteration count keeps it deterministic).
    The bisected residual compares sines cross-multiplied by the positive path
    lengths, which has the same sign as the grazing-angle difference.

    Parameters
    ----------
    ac_positions : (K, 3) aircraft positions
    gs_position  : (3,) GS antenna position
    ground_radius_m : radius of the reflecting surface (Earth radius plus the
        local ground elevation)

    Returns
    -------
    exists  : (K,) bool — reflection geometrically valid (grazing angle > 0)
    points  : (K, 3) surface points (valid where exists)
    grazing : (K,) grazing angles at the reflection point [rad]
    """
    ac = np.atleast_2d(np.asarray(ac_positions, dtype=float))
    kk = ac.shape[0]
    r_g = float(np.linalg.norm(gs_position))
    e1 = gs_position / r_g

    a1 = ac @ e1
    perp = ac - np.outer(a1, e1)
    perp_norm = np.linalg.norm(perp, axis=1)
    overhead = perp_norm < 1e-9  # aircraft on the GS radial: reflect at nadir
    safe_norm = np.where(overhead, 1.0, perp_norm)
    e2 = perp / safe_norm[:, None]
    a2 = perp_norm

    r_e = ground_radius_m
    ac_sq = a1 * a1 + a2 * a2
    gs_sq = r_g * r_g

    def sign_residual(cos_o, sin_o):
        radial_gs = r_g * cos_o - r_e
        dist_gs_sq = gs_sq + r_e * r_e - 2.0 * r_g * r_e * cos_o
        proj_ac = a1 * cos_o + a2 * sin_o
        radial_ac = proj_ac - r_e
        dist_ac_sq = ac_sq + r_e * r_e - 2.0 * r_e * proj_ac
        return radial_gs * np.sqrt(dist_ac_sq) - radial_ac * np.sqrt(dist_gs_sq)

    omega_max = np.arctan2(a2, a1)
    lo = np.full(kk, 1e-12)
    hi = np.maximum(omega_max - 1e-12, 2e-12)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        f_mid = sign_residual(np.cos(mid), np.sin(mid))
        take_hi = f_mid > 0.0  # residual decreases from + at omega=0 to - at omega_max
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)

    omega = np.where(overhead, 0.0, 0.5 * (lo + hi))
    cos_o, sin_o = np.cos(omega), np.sin(omega)
    radial_gs = r_g * cos_o - r_e
    dist_gs = np.sqrt(gs_sq + r_e * r_e - 2.0 * r_g * r_e * cos_o)
    grazing = np.arcsin(np.minimum(1.0, np.maximum(-1.0, radial_gs / dist_gs)))
    grazing = np.where(overhead, 0.5 * math.pi, grazing)

    points = (r_e * cos_o)[:, None] * e1 + (r_e * sin_o)[:, None] * e2
    exists = grazing > 0.0
    return exists, points, grazing


def specular_point(ac_position: np.ndarray, gs_position: np.ndarray,
                   ground_radius_m: float = EARTH_RADIUS_M) -> GroundReflection:
    """Single-aircraft wrapper around specular_points."""
    exists, points, grazing = specular_points(ac_position[None, :], gs_position,
                                              ground_radius_m)
    if not exists[0]:
        return GroundReflection(False)
    return GroundReflection(True, points[0], float(grazing[0]))


# ---------------------------------------------------------------------------
# Random reflecting-area map
# ---------------------------------------------------------------------------

#: The reflecting/non-reflecting patchwork models the surveyed surroundings of
#: a regional-airport GS.  With the ground plane at the local terrain height,
#: every flight phase's specular points land within a few kilometres of the
#: station, so this radius covers them all.
DEFAULT_MAP_RADIUS_M = 3e3

_COVERAGE_PROBES = 20_000
_MAX_PATCHES = 20_000


@dataclass(frozen=True)
class ReflectorMap:
    """Seed-derived boolean field of reflecting ground patches around the GS.

    Patches are disks in the local tangent plane at the GS surface point;
    coverage within the mapped radius approximates coverage_target.
    """

    coverage_target: float
    radius_m: float
    centers: np.ndarray  # (P, 2) local tangent coordinates
    radii: np.ndarray    # (P,)
    achieved_coverage: float = field(default=0.0)


def _to_local_xy(surface_points: np.ndarray) -> np.ndarray:
    """Project surface points to the tangent plane at the GS surface point.

    Orthographic x/y projection; distortion is O((d/R_E)^2), negligible at the
    few-kilometre scale of the map.
    """
    pts = np.atleast_2d(surface_points)
    unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return unit[:, :2] * EARTH_RADIUS_M


def sample_reflector_map(coverage: float, rng: np.random.Generator,
                         radius_m: float = DEFAULT_MAP_RADIUS_M) -> ReflectorMap:
    """Draw a patch field whose empirical coverage is within ±0.02 of target.

    Disks with radii ~U[250, 1000] m are added (overlaps allowed) until the
    probe-measured coverage reaches the target; near the target, radii shrink
    to U[100, 250] m so a single patch cannot overshoot the tolerance.
    """
    if not 0.0 <= coverage <= 1.0:
        raise DomainError("coverage must be in [0, 1]")
    if coverage == 0.0 or coverage == 1.0:
        return ReflectorMap(coverage, radius_m,
                            np.empty((0, 2)), np.empty(0), coverage)

    # Fixed probe set, drawn up front so construction stays deterministic.
    probe_r = radius_m * np.sqrt(rng.uniform(0.0, 1.0, _COVERAGE_PROBES))
    probe_t = rng.uniform(0.0, 2.0 * math.pi, _COVERAGE_PROBES)
    px = probe_r * np.cos(probe_t)
    py = probe_r * np.sin(probe_t)
    covered = np.zeros(_COVERAGE_PROBES, dtype=bool)

    def add_patches(count, r_lo, r_hi):
        r = rng.uniform(r_lo, r_hi, count)
        c_r = radius_m * np.sqrt(rng.uniform(0.0, 1.0, count))
        c_t = rng.uniform(0.0, 2.0 * math.pi, count)
        cx, cy = c_r * np.cos(c_t), c_r * np.sin(c_t)
        hit = (px[:, None] - cx) ** 2 + (py[:, None] - cy) ** 2 <= r * r
        covered[:] |= hit.any(axis=1)
        centers.extend(zip(cx, cy))
        radii.extend(r)
        return float(covered.mean())

    centers: list[tuple[float, float]] = []
    radii: list[float] = []
    # Boolean disk model: reaching coverage c costs about -ln(1-c) times the
    # map area in patch area.  Seed half of that in one batch, then add single
    # patches whose radius is capped so one patch can never overshoot the
    # remaining gap (area fraction (r/R)^2 <= gap), keeping the final coverage
    # inside the +/-0.02 tolerance.
    mean_patch_area = math.pi * 437_500.0  # E[pi r^2] for r ~ U[250, 1000] m
    target_area = -math.log1p(-min(coverage, 0.95)) * math.pi * radius_m**2
    bulk = max(0, int(0.5 * target_area / mean_patch_area))
    frac = add_patches(bulk, 250.0, 1000.0) if bulk else 0.0
    while frac < coverage and len(radii) < _MAX_PATCHES:
        gap = coverage - frac
        r_hi = min(1000.0, radius_m * math.sqrt(gap))
        r_hi = max(r_hi, 80.0)
        r_lo = max(60.0, 0.4 * r_hi)
        frac = add_patches(1, r_lo, r_hi)

    return ReflectorMap(coverage, radius_m,
                        np.array(centers), np.array(radii), frac)


def is_reflecting(refl_map: ReflectorMap, surface_point: np.ndarray) -> bool:
    """Whether a surface point falls on reflecting ground.

    Pure and deterministic for a given map. Points beyond the mapped radius
    are non-reflective.
    """
    xy = _to_local_xy(surface_point)[0]
    if float(np.hypot(xy[0], xy[1])) > refl_map.radius_m:
        return False
    if refl_map.coverage_target == 1.0:
        return True
    if refl_map.coverage_target == 0.0 or refl_map.radii.size == 0:
        return False
    d2 = np.sum((refl_map.centers - xy) ** 2, axis=1)
    return bool(np.any(d2 <= refl_map.radii ** 2))
