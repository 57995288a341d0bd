"""Scenario construction, classification, validation, and persistence."""

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ris_mac.scenario import (
    DcfParams,
    RadioParams,
    UserPopulation,
    advance_frame,
    build_population,
    classify_users,
    default_scenario,
    load_scenario,
    save_scenario,
    validate_scenario,
)


class TestClassify:
    def test_reference_population_split(self):
        # 200 users at 5:4:1 -> 100 static, 80 existing mobile, 20 new;
        # existing count 180, mobile total 100
        pop = build_population(200, (5, 4, 1))
        assert pop.num_existing == 180
        assert pop.num_new_mobile == 20
        static, mobile = classify_users(pop)
        assert len(static) == 100
        assert len(mobile) == 100

    def test_empty_population(self):
        pop = build_population(0)
        static, mobile = classify_users(pop)
        assert static == [] and mobile == []

    def test_explicit_flags(self):
        pop = UserPopulation(
            num_existing=3,
            num_new_mobile=2,
            mobility_flags=(1, 0, 1),
            positions=tuple((float(i), 0.0, 0.0) for i in range(5)),
        )
        static, mobile = classify_users(pop)
        assert static == [0, 2]
        assert mobile == [1, 3, 4]  # new users appended with fresh ids

    def test_flag_length_mismatch_rejected(self):
        pop = UserPopulation(2, 0, (1,), ((0.0, 0.0, 0.0),) * 2)
        with pytest.raises(ValueError):
            classify_users(pop)

    @given(
        flags=st.lists(st.integers(min_value=0, max_value=1), max_size=40),
        z=st.integers(min_value=0, max_value=10),
    )
    @settings(max_examples=50, deadline=None)
    def test_partition_property(self, flags, z):
        k = len(flags)
        pop = UserPopulation(
            num_existing=k,
            num_new_mobile=z,
            mobility_flags=tuple(flags),
            positions=tuple((1.0, 1.0, 0.0) for _ in range(k + z)),
        )
        static, mobile = classify_users(pop)
        assert sorted(static + mobile) == list(range(k + z))
        assert set(static).isdisjoint(mobile)
        assert len(static) == sum(flags)
        assert len(mobile) == k - sum(flags) + z


class TestValidation:
    def test_reference_scenario_is_clean(self):
        assert validate_scenario(default_scenario()).ok

    def test_zero_subchannels_flagged(self):
        s = default_scenario()
        s = dataclasses.replace(s, radio=dataclasses.replace(s.radio, num_subchannels=0))
        report = validate_scenario(s)
        assert not report.ok
        assert any("num_subchannels" in v for v in report.violations)

    def test_window_ordering_flagged(self):
        s = default_scenario()
        s = dataclasses.replace(
            s, dcf=dataclasses.replace(s.dcf, w_min=64, w_max=32, max_backoff_stage=1)
        )
        report = validate_scenario(s)
        assert any("w_min" in v for v in report.violations)

    def test_position_outside_area_flagged(self):
        pop = build_population(2, (1, 1, 0), positions=[(10.0, 10.0, 0.0), (99.0, 0.0, 0.0)])
        s = dataclasses.replace(default_scenario(total_users=2), population=pop)
        report = validate_scenario(s)
        assert any("outside" in v for v in report.violations)

    def test_report_stringifies(self):
        assert str(validate_scenario(default_scenario())) == "scenario valid"


class TestPersistence:
    def test_positions_deterministic_per_seed(self):
        a = build_population(20, seed=5)
        b = build_population(20, seed=5)
        assert a.positions == b.positions
        c = build_population(20, seed=6)
        assert a.positions != c.positions

    def test_round_trip(self, tmp_path):
        s = default_scenario(total_users=12, seed=4)
        path = str(tmp_path / "scenario.json")
        save_scenario(s, path)
        back = load_scenario(path)
        assert back == s

    def test_seed_override(self, tmp_path):
        s = default_scenario(total_users=12, seed=4)
        path = str(tmp_path / "scenario.json")
        save_scenario(s, path)
        back = load_scenario(path, seed_override=77)
        assert back.seed == 77

    def test_dbm_conversions(self):
        r = RadioParams(noise_power_dbm=-94.0, tx_power_mobile_dbm=10.0)
        assert r.noise_w == pytest.approx(10 ** (-9.4) * 1e-3)
        assert r.tx_power_mobile_w == pytest.approx(0.01)
        assert r.subchannel_bw_hz == pytest.approx(10e6)

    def test_dcf_window_defaults_consistent(self):
        d = DcfParams()
        assert d.w_max == d.w_min * 2**d.max_backoff_stage


class TestFrameAdvance:
    def test_new_users_fold_into_existing(self):
        pop = build_population(20, (5, 4, 1), seed=2)
        nxt = advance_frame(pop, 50.0, seed=3)
        assert nxt.num_existing == pop.num_total
        assert nxt.num_new_mobile == pop.num_new_mobile
        assert nxt.mobility_flags[: pop.num_existing] == pop.mobility_flags
        assert all(u == 0 for u in nxt.mobility_flags[pop.num_existing:])

    def test_budget_provisioning_tracks_static_count(self):
        s50 = default_scenario(total_users=50)
        s200 = default_scenario(total_users=200)
        per_user_50 = s50.radio.p_max_w / 25
        per_user_200 = s200.radio.p_max_w / 100
        assert per_user_50 == pytest.approx(per_user_200, rel=1e-9)
        assert per_user_200 == pytest.approx(s200.radio.tx_power_mobile_w, rel=1e-9)
