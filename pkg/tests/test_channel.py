"""Channel model tests: phase-alignment optimality against a random-search
oracle, Monte-Carlo moment checks against the closed-form path loss, and
the documented desk examples."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ris_mac import channel as chan
from ris_mac.scenario import build_population, build_ris_inventory, default_scenario

from conftest import random_link, small_scenario


class TestEffectiveGain:
    def test_aligned_unit_case(self):
        phases = chan.PhaseConfig(theta=np.zeros(1))
        got = chan.effective_gain(1.0, np.ones(1), np.ones(1), phases)
        assert got == pytest.approx(2.0)

    def test_length_mismatch_rejected(self):
        phases = chan.PhaseConfig(theta=np.zeros(2))
        with pytest.raises(ValueError):
            chan.effective_gain(1.0, np.ones(3), np.ones(3), phases)

    def test_random_phases_never_beat_triangle_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r, h, g = random_link(rng, 6)
            bound = chan.aligned_gain_magnitude(r, h, g)
            theta = chan.PhaseConfig(theta=rng.uniform(0, 2 * np.pi, 6))
            assert abs(chan.effective_gain(r, h, g, theta)) <= bound + 1e-12


class TestAlignPhases:
    def test_already_aligned_all_ones(self):
        got = chan.align_phases(1.0, np.ones(3), np.ones(3))
        assert np.allclose(got.theta, 0.0)

    def test_documented_two_element_case(self):
        # arg r = pi/2, arg h = (0, pi), arg g = (pi/4, 0)
        r = 1j
        h = np.array([1.0, -1.0])
        g = np.array([np.exp(1j * np.pi / 4), 1.0])
        got = chan.align_phases(r, h, g)
        assert got.theta == pytest.approx([np.pi / 4, 3 * np.pi / 2])

    def test_zero_magnitude_element_pins_phase_to_zero(self):
        got = chan.align_phases(1j, np.array([0.0, 1.0]), np.array([1.0, 1j]))
        assert got.theta[0] == 0.0

    def test_achieves_triangle_equality(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            r, h, g = random_link(rng, 8)
            theta = chan.align_phases(r, h, g)
            gain = abs(chan.effective_gain(r, h, g, theta))
            assert gain == pytest.approx(chan.aligned_gain_magnitude(r, h, g), rel=1e-12)

    def test_beats_random_search_oracle(self):
        # 100 draws, 1000 random phase vectors each
        rng = np.random.default_rng(2)
        for _ in range(100):
            r, h, g = random_link(rng, 5)
            aligned = abs(chan.effective_gain(r, h, g, chan.align_phases(r, h, g)))
            thetas = rng.uniform(0, 2 * np.pi, size=(1000, 5))
            gains = np.abs(r + (h * g) @ np.exp(1j * thetas.T))
            assert aligned >= gains.max() - 1e-12

    def test_monotone_in_elements(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            r, h, g = random_link(rng, 7)
            full = chan.aligned_gain_magnitude(r, h, g)
            fewer = chan.aligned_gain_magnitude(r, h[:-1], g[:-1])
            assert full >= fewer


class TestSnrAndRate:
    def test_unit_case(self):
        phases = chan.PhaseConfig(theta=np.zeros(1))
        got = chan.snr(1.0, np.zeros(1), np.zeros(1), phases, 1.0, 1.0)
        assert got == pytest.approx(1.0)

    def test_linear_in_power(self):
        rng = np.random.default_rng(4)
        r, h, g = random_link(rng, 4)
        phases = chan.align_phases(r, h, g)
        one = chan.snr(r, h, g, phases, 1.0, 1e-3)
        two = chan.snr(r, h, g, phases, 2.0, 1e-3)
        assert two == pytest.approx(2.0 * one, rel=1e-12)

    def test_rejects_nonpositive_power_or_noise(self):
        phases = chan.PhaseConfig(theta=np.zeros(1))
        with pytest.raises(ValueError):
            chan.snr(1.0, np.ones(1), np.ones(1), phases, 0.0, 1.0)
        with pytest.raises(ValueError):
            chan.snr(1.0, np.ones(1), np.ones(1), phases, 1.0, -1.0)

    def test_four_element_desk_instance(self):
        # hand computation: r = 0.3 - 0.4j, h_n g_n products summed at the
        # given phases, |gain|^2 * 2.0 / 0.5
        r = 0.3 - 0.4j
        h = np.array([1.0 + 0.0j, 0.5j, -0.25, 0.1 - 0.2j])
        g = np.array([0.2 - 0.1j, 0.4, 1.0j, -0.3 + 0.5j])
        theta = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
        gain = (
            r
            + (1.0 + 0.0j) * np.exp(1j * 0.0) * (0.2 - 0.1j)
            + (0.5j) * np.exp(1j * np.pi / 2) * 0.4
            + (-0.25) * np.exp(1j * np.pi) * (1.0j)
            + (0.1 - 0.2j) * np.exp(1j * 3 * np.pi / 2) * (-0.3 + 0.5j)
        )
        want = abs(gain) ** 2 * 2.0 / 0.5
        got = chan.snr(r, h, g, chan.PhaseConfig(theta=theta), 2.0, 0.5)
        assert got == pytest.approx(want, rel=1e-12)

    def test_rate_anchor_points(self):
        assert chan.rate_bps(0.0, 10e6) == 0.0
        assert chan.rate_bps(1.0, 10e6) == pytest.approx(1e7)
        assert chan.rate_bps(3.0, 10e6) == pytest.approx(2e7)

    @given(c=st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=30, deadline=None)
    def test_snr_scale_covariance(self, c):
        rng = np.random.default_rng(5)
        r, h, g = random_link(rng, 4)
        base = chan.aligned_snr(r, h, g, 1.0, 1.0)
        scaled = chan.aligned_snr(c * r, c * h, g, 1.0, 1.0)
        assert scaled == pytest.approx(c**2 * base, rel=1e-9)


class TestDrawChannels:
    def test_deterministic_per_seed(self):
        s = small_scenario()
        a = chan.draw_channels(s, 42)
        b = chan.draw_channels(s, 42)
        assert np.array_equal(a.g, b.g)
        assert np.array_equal(a.h, b.h)
        assert np.array_equal(a.r, b.r)
        c = chan.draw_channels(s, 43)
        assert not np.array_equal(a.r, c.r)

    def test_degenerate_geometry_rejected(self):
        s = small_scenario()
        pop = build_population(
            2, (1, 1, 0), positions=[s.bs_position, (10.0, 10.0, 0.0)]
        )
        bad = type(s)(
            population=pop, radio=s.radio, dcf=s.dcf, ris=s.ris,
            compute=s.compute, seed=1, area_side_m=100.0,
            bs_position=s.bs_position,
        )
        with pytest.raises(chan.DegenerateGeometryError):
            chan.draw_channels(bad, 1)

    def test_direct_link_moment_matches_pathloss_law(self):
        # 1e5 i.i.d. draws of the Rayleigh direct link at one position;
        # E|r|^2 must sit within 2% of the closed-form path loss
        n = 100_000
        pos = (25.0, 25.0, 0.0)
        pop = build_population(n, (0, 1, 0), positions=[pos] * n)
        scen = default_scenario(total_users=4, seed=1)
        scen = type(scen)(
            population=pop, radio=scen.radio, dcf=scen.dcf,
            ris=build_ris_inventory(1, 1, scen.radio.num_subchannels),
            compute=scen.compute, seed=1, area_side_m=50.0,
            bs_position=scen.bs_position,
        )
        ch = chan.draw_channels(scen, 9)
        d = np.linalg.norm(np.asarray(pos) - np.asarray(scen.bs_position))
        want = 10 ** (scen.radio.pathloss_ref_db / 10) * d ** (-scen.radio.pathloss_exp_nlos)
        got = float(np.mean(np.abs(ch.r) ** 2))
        assert got == pytest.approx(want, rel=0.02)

    def test_reflect_link_moment_matches_pathloss_law(self):
        n = 100_000
        pos = (25.0, 25.0, 0.0)
        pop = build_population(n, (0, 1, 0), positions=[pos] * n)
        scen = default_scenario(total_users=4, seed=1)
        scen = type(scen)(
            population=pop, radio=scen.radio, dcf=scen.dcf,
            ris=build_ris_inventory(1, 1, scen.radio.num_subchannels),
            compute=scen.compute, seed=1, area_side_m=50.0,
            bs_position=scen.bs_position,
        )
        ch = chan.draw_channels(scen, 10)
        d = np.linalg.norm(np.asarray(pos) - np.asarray(scen.ris.positions[0]))
        want = 10 ** (scen.radio.pathloss_ref_db / 10) * d ** (-scen.radio.pathloss_exp_los)
        got = float(np.mean(np.abs(ch.g[:, 0, 0]) ** 2))
        assert got == pytest.approx(want, rel=0.02)

    def test_dump_replay_round_trip(self, tmp_path):
        s = small_scenario()
        ch = chan.draw_channels(s, 5)
        path = str(tmp_path / "channels.json")
        chan.dump_channels(ch, path)
        back = chan.replay_channels(path)
        assert np.allclose(back.g, ch.g)
        assert np.allclose(back.h, ch.h)
        assert np.allclose(back.r, ch.r)

    def test_quasi_static_repeat_snr(self):
        s = small_scenario()
        ch = chan.draw_channels(s, 6)
        phases = chan.align_phases(ch.r[0], ch.h[0, 0], ch.g[0, 0])
        one = chan.snr(ch.r[0], ch.h[0, 0], ch.g[0, 0], phases, 0.01, 1e-12)
        two = chan.snr(ch.r[0], ch.h[0, 0], ch.g[0, 0], phases, 0.01, 1e-12)
        assert one == two
