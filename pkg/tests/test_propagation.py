"""Channel synthesis: array, path gains, Doppler, CFO, slow gains."""

import math

import numpy as np
import pytest

from agsim import (
    AircraftState,
    DomainError,
    LmpConfig,
    SCENARIOS,
    SystemParams,
    advance_world,
    array_elements,
    build_channel_paths,
    cfo_vector,
    channel_matrix,
    evaluate_paths,
    export_channel_trace,
    fresnel_vertical,
    fspl_amplitude,
    gs_antenna_position,
    make_world,
    path_components,
    path_rate,
    sample_lmp_reflectors,
    sample_reflector_map,
    sample_scenario,
    slow_gains,
    to_cartesian,
)
from conftest import los_only_world, sampled_world, static_state


class TestArrayElements:
    def test_single_element_at_origin(self):
        geo = array_elements(SystemParams(n_antennas=1))
        assert np.allclose(geo.element_offsets, 0.0)

    def test_two_by_two_pitch(self):
        geo = array_elements(SystemParams(n_antennas=4))
        offs = geo.element_offsets
        assert offs.shape == (4, 3)
        # lambda = 299792458 / 987e6 = 0.303741 m, half-wavelength pitch
        pitch = np.linalg.norm(offs[0] - offs[1])
        assert pitch == pytest.approx(0.15187, abs=1e-5)
        assert np.allclose(offs.mean(axis=0), 0.0, atol=1e-12)

    def test_default_grid_extent(self):
        params = SystemParams()
        offs = array_elements(params).element_offsets
        extent = offs[:, 0].max() - offs[:, 0].min()
        assert extent == pytest.approx(7 * params.wavelength_m / 2, rel=1e-12)
        assert np.all(offs[:, 2] == 0.0)

    def test_non_square_count_rejected(self):
        with pytest.raises(DomainError):
            SystemParams(n_antennas=48)


class TestFsplAmplitude:
    def test_unity_gain_distance(self, params):
        lam = params.wavelength_m
        assert fspl_amplitude(lam / (4 * math.pi), lam) == pytest.approx(1.0, rel=1e-12)

    def test_cell_edge(self, params):
        amp = fspl_amplitude(250e3, params.wavelength_m)
        assert amp == pytest.approx(9.668e-8, rel=1e-4)
        assert 20 * math.log10(amp) == pytest.approx(-140.3, abs=0.05)

    def test_short_range(self, params):
        amp = fspl_amplitude(7.3e3, params.wavelength_m)
        assert amp == pytest.approx(3.311e-6, rel=1e-4)
        assert 20 * math.log10(amp) == pytest.approx(-109.6, abs=0.05)

    def test_nonpositive_distance_rejected(self, params):
        with pytest.raises(DomainError):
            fspl_amplitude(0.0, params.wavelength_m)


class TestFresnelVertical:
    def test_grazing_limit(self, params):
        rho = fresnel_vertical(1e-8, 3.0, 0.0, params.wavelength_m)
        assert rho == pytest.approx(-1.0, abs=1e-4)

    def test_normal_incidence(self, params):
        rho = fresnel_vertical(math.pi / 2, 3.0, 0.0, params.wavelength_m)
        expected = (3 - math.sqrt(3)) / (3 + math.sqrt(3))  # 0.26795
        assert rho == pytest.approx(expected, rel=1e-12)

    def test_brewster_null(self, params):
        # sin^2(psi) = 1/(eps+1) = 1/4 at eps=3
        rho = fresnel_vertical(math.radians(30.0), 3.0, 0.0, params.wavelength_m)
        assert abs(rho) < 1e-12

    def test_magnitude_bounded_by_one(self, params):
        for eps in (3.0, 15.0, 30.0, 81.0):
            for sigma in (0.0, 1e-4, 1e-3, 1e-2, 5.0):
                for psi in np.linspace(1e-6, math.pi / 2, 50):
                    assert abs(fresnel_vertical(psi, eps, sigma,
                                                params.wavelength_m)) <= 1.0 + 1e-12


class TestPathRate:
    def test_stationary(self):
        assert path_rate(lambda t: 1234.5, 0.0) == 0.0

    def test_radial_recession(self):
        gs = gs_antenna_position()
        p0 = to_cartesian(150e3, 0.2, 9e3)
        u = (p0 - gs) / np.linalg.norm(p0 - gs)

        def dist(t):
            return float(np.linalg.norm(p0 + 214.0 * u * t - gs))

        assert path_rate(dist, 0.0) == pytest.approx(214.0, abs=1e-3)

    def test_tangential_at_closest_approach(self):
        def dist(t):
            return math.hypot(5e3, 214.0 * t)

        assert abs(path_rate(dist, 0.0)) < 1e-3


class TestLmpSampling:
    def test_zero_mean_gives_empty(self):
        out = sample_lmp_reflectors(SCENARIOS["EC"], LmpConfig(mean_count=0.0),
                                    np.random.default_rng(0))
        assert out == []

    def test_gain_support(self):
        rng = np.random.default_rng(1)
        cfg = LmpConfig()
        drawn = []
        while len(drawn) < 10_000:
            drawn.extend(sample_lmp_reflectors(SCENARIOS["TL"], cfg, rng))
        for r in drawn:
            assert r.gain_db_rel_los <= -20.0
            assert cfg.gain_range_db[0] <= r.gain_db_rel_los <= cfg.gain_range_db[1]

    def test_positions_in_disk_and_height_range(self):
        rng = np.random.default_rng(2)
        cfg = LmpConfig(mean_count=30.0)
        ground = 470.0
        for r in sample_lmp_reflectors(SCENARIOS["TL"], cfg, rng, ground):
            radius = np.linalg.norm(r.position)
            assert ground <= radius - 6371e3 <= ground + 50.0 + 1e-6
            horiz = math.hypot(r.position[0], r.position[1])
            assert horiz <= cfg.disk_radius_m + 1.0

    def test_determinism(self):
        a = sample_lmp_reflectors(SCENARIOS["CD"], LmpConfig(), np.random.default_rng(9))
        b = sample_lmp_reflectors(SCENARIOS["CD"], LmpConfig(), np.random.default_rng(9))
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(x.position, y.position)
            assert x.gain_db_rel_los == y.gain_db_rel_los


class TestChannelMatrix:
    def test_los_only_magnitudes(self, params):
        states = sample_scenario(SCENARIOS["EC"], 1, np.random.default_rng(3))
        world = los_only_world(params, states)
        h = channel_matrix(world, 0)
        d = np.linalg.norm(states[0].position[None, :] - world.element_positions,
                           axis=1)
        assert np.allclose(np.abs(h.entries[:, 0]),
                           params.wavelength_m / (4 * math.pi * d), rtol=1e-12)

    def test_static_world_time_invariant(self, params):
        world = los_only_world(params, [static_state(to_cartesian(50e3, 0.4, 5e3))])
        h0 = channel_matrix(world, 0)
        h9 = channel_matrix(world, 9)
        assert np.array_equal(h0.entries, h9.entries)

    def test_single_path_slow_gain_factorization(self, params):
        # one path: H_n = H_0 exp(j 2 pi nu n) exactly
        states = sample_scenario(SCENARIOS["EC"], 1, np.random.default_rng(11))
        world = los_only_world(params, states)
        paths = build_channel_paths(world)
        nu = paths.doppler[0]
        h0 = evaluate_paths(paths, 0).entries[:, 0]
        for n in (1, 10, 100):
            hn = evaluate_paths(paths, n).entries[:, 0]
            resid = hn * np.exp(-2j * math.pi * nu * n) - h0
            assert np.max(np.abs(resid)) <= 1e-6 * np.max(np.abs(h0))

    def test_below_horizon_rejected(self, params):
        world = los_only_world(params, [static_state(to_cartesian(150e3, 0.0, 10.0))])
        with pytest.raises(DomainError):
            channel_matrix(world, 0)

    def test_deterministic(self):
        a = channel_matrix(sampled_world("TL", 4, 5), 3)
        b = channel_matrix(sampled_world("TL", 4, 5), 3)
        assert np.array_equal(a.entries, b.entries)

    def test_gmp_presence_follows_map(self, params):
        # same aircraft, full vs empty map: the difference is the reflection
        states = sample_scenario(SCENARIOS["TL"], 2, np.random.default_rng(21))
        bare = make_world(params, states, sample_reflector_map(0.0, np.random.default_rng(0)))
        full = make_world(params, states, sample_reflector_map(1.0, np.random.default_rng(0)))
        h_bare = channel_matrix(bare, 0).entries
        h_full = channel_matrix(full, 0).entries
        assert not np.allclose(h_bare, h_full)
        assert len(build_channel_paths(bare).doppler) == 2
        assert len(build_channel_paths(full).doppler) == 4


class TestPathComponents:
    def test_kinds_and_los_amplitude(self, params):
        world = sampled_world("TL", 3, 31, coverage=1.0)
        comps = path_components(world, 0)
        assert comps[0].kind == "LOS"
        d = np.linalg.norm(world.aircraft[0].position - world.gs_position)
        assert abs(comps[0].amplitude) == pytest.approx(
            params.wavelength_m / (4 * math.pi * d), rel=1e-9)
        assert any(c.kind == "GMP" for c in comps)

    def test_doppler_bound(self):
        # per-path Doppler never exceeds speed / wavelength
        count = 0
        for seed in range(40):
            for name in ("TL", "CD", "EC"):
                world = sampled_world(name, 2, seed, coverage=1.0)
                spec = SCENARIOS[name]
                bound = spec.speed_ms / world.params.wavelength_m + 1e-3
                for k in range(2):
                    for c in path_components(world, k):
                        count += 1
                        assert abs(c.doppler_cps / world.params.symbol_duration_s) <= bound
        assert count > 500

    def test_matches_channel_paths(self, params):
        world = sampled_world("CD", 2, 13, coverage=1.0)
        paths = build_channel_paths(world)
        comps = path_components(world, 0)
        mine = sorted(paths.doppler[paths.owner == 0])
        theirs = sorted(c.doppler_cps for c in comps)
        assert np.allclose(mine, theirs, atol=1e-15)


class TestCfoVector:
    def test_static_zero(self, params):
        world = los_only_world(params, [static_state(to_cartesian(100e3, 0.1, 9e3))])
        assert np.allclose(cfo_vector(world), 0.0)

    def test_ec_head_on_maximum(self, params):
        # head-on at the EC far edge, lowest altitude: the largest offset the
        # scenario geometry allows
        pos = to_cartesian(250e3, 0.0, 8e3)
        up = pos / np.linalg.norm(pos)
        east = np.cross([0.0, 0.0, 1.0], up)
        east /= np.linalg.norm(east)
        north = np.cross(up, east)
        best = None
        gs = gs_antenna_position()
        for direction in (north, -north):
            state = AircraftState(pos, 214.0 * direction, 0)
            world = los_only_world(params, [state])
            value = cfo_vector(world)[0]
            if best is None or value > best:
                best = value
        hz = best / params.symbol_duration_s
        assert hz == pytest.approx(704.5, abs=1.0)
        # cycles/sample consistency of the unit conversion
        assert best == pytest.approx(hz * 120e-6, rel=1e-12)

    def test_sign_convention_approaching_positive(self, params):
        pos = to_cartesian(100e3, 0.0, 9e3)
        up = pos / np.linalg.norm(pos)
        east = np.cross([0.0, 0.0, 1.0], up)
        east /= np.linalg.norm(east)
        north = np.cross(up, east)
        toward = AircraftState(pos, 214.0 * (north if north[0] < 0 else -north), 0)
        world = los_only_world(params, [toward])
        d0 = np.linalg.norm(pos - world.gs_position)
        moved = advance_world(world, 1.0)
        d1 = np.linalg.norm(moved.aircraft[0].position - world.gs_position)
        assert (d1 < d0) == (cfo_vector(world)[0] > 0)


class TestSlowGains:
    def test_n_zero_identity(self, params):
        world = sampled_world("EC", 3, 17)
        h = channel_matrix(world, 0)
        cfo = cfo_vector(world)
        assert np.array_equal(slow_gains(h, cfo), h.entries)

    def test_single_path_constant(self, params):
        states = sample_scenario(SCENARIOS["EC"], 2, np.random.default_rng(19))
        world = los_only_world(params, states)
        cfo = cfo_vector(world)
        g0 = slow_gains(channel_matrix(world, 0), cfo)
        gn = slow_gains(channel_matrix(world, 400), cfo)
        assert np.max(np.abs(gn - g0)) <= 1e-9 * np.max(np.abs(g0))

    def test_zero_cfo_identity(self, params):
        world = sampled_world("TL", 2, 23)
        h = channel_matrix(world, 7)
        assert np.array_equal(slow_gains(h, np.zeros(2)), h.entries)

    def test_ec_slow_gain_drift_bounded(self, params):
        # the mechanism behind "nearly constant for at least 500 ms":
        # enroute channels keep H_n Lambda_n^H within 5% of H_0
        ts = params.symbol_duration_s
        for seed in range(5):
            world = sampled_world("EC", 4, seed)
            cfo = cfo_vector(world)
            from agsim import build_channel_paths, evaluate_paths
            paths = build_channel_paths(world)
            h0 = slow_gains(evaluate_paths(paths, 0), cfo)
            n = round(0.5 / ts)
            hn = slow_gains(evaluate_paths(paths, n), cfo)
            drift = np.linalg.norm(hn - h0) / np.linalg.norm(h0)
            assert drift <= 0.05


def test_trace_export(tmp_path, params):
    world = los_only_world(params, [static_state(to_cartesian(10e3, 0.0, 1e3))])
    out = tmp_path / "trace.csv"
    export_channel_trace(lambda n: channel_matrix(world, n), [0, 1], out)
    lines = out.read_text().splitlines()
    assert lines[0] == "n,m,k,re,im"
    assert len(lines) == 1 + 2 * params.n_antennas
    n, m, k, re, im = lines[1].split(",")
    assert (n, m, k) == ("0", "0", "0")
    float(re), float(im)
