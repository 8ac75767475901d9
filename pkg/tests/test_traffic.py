from ipaddress import IPv4Address

import numpy as np
import pytest

from upflab.gtpu import inner_ue_address
from upflab.traffic import (
    ANOMALY,
    CONSTANT_RATE,
    MULTIMEDIA,
    MULTIMEDIA_PROFILES,
    FlowSpec,
    TrafficError,
    load_profiles,
    profile_from_table,
    schedule,
    sensor_flow,
)

UE = IPv4Address("10.60.0.1")


def anomaly_spec(rate=200.0, duration=30.0, multiplier=10.0, on_ms=50.0, off_ms=50.0):
    return FlowSpec(
        traffic_class=ANOMALY,
        ue=UE,
        teid=7,
        qfi=9,
        rate_pps=rate,
        mean_size_bytes=900,
        duration_s=duration,
        burst_on_ms=on_ms,
        burst_off_ms=off_ms,
        burst_multiplier=multiplier,
    )


class TestProfiles:
    def test_tiktok_row(self):
        spec = profile_from_table("TikTok", ue=UE, teid=1, qfi=9)
        assert spec.duration_s == 63.9
        assert spec.rate_pps == 638.0
        assert spec.mean_size_bytes == 974

    def test_wikipedia_row(self):
        spec = profile_from_table("Wikipedia", ue=UE, teid=1, qfi=9)
        assert spec.duration_s == 77.4
        assert spec.rate_pps == 62.3
        assert spec.mean_size_bytes == 883

    def test_unknown_app(self):
        with pytest.raises(TrafficError) as e:
            profile_from_table("Netflix", ue=UE, teid=1, qfi=9)
        assert "TikTok" in str(e.value)  # error lists valid names

    def test_all_nine_apps_present(self):
        assert sorted(MULTIMEDIA_PROFILES) == [
            "Facebook",
            "Instagram",
            "LinkedIn",
            "PS Now",
            "Spotify",
            "TikTok",
            "Twitter",
            "Wikipedia",
            "YouTube",
        ]

    def test_load_from_delimited_file(self, tmp_path):
        path = tmp_path / "profiles.csv"
        path.write_text("app,duration_s,pps,mean_bytes\nMyApp,10.0,100.0,500\n")
        table = load_profiles(path)
        spec = profile_from_table("MyApp", ue=UE, teid=1, qfi=9, profiles=table)
        assert spec.rate_pps == 100.0
        assert spec.mean_size_bytes == 500

    def test_load_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("app,duration_s\nMyApp,10.0\n")
        with pytest.raises(TrafficError):
            load_profiles(path)


class TestSensorFlow:
    def test_deterministic_count_and_gap(self):
        sched = schedule(sensor_flow(UE, 1, 1, rate_pps=10, duration_s=6), seed=0)
        assert len(sched) == 60
        gaps = np.diff(sched.arrival_ns)
        assert np.all(gaps == 10**8)

    def test_zero_rate_rejected(self):
        with pytest.raises(TrafficError):
            sensor_flow(UE, 1, 1, rate_pps=0, duration_s=6)

    def test_single_teid_and_ue(self):
        sched = schedule(sensor_flow(UE, 42, 1, rate_pps=50, duration_s=1), seed=1)
        teids = set()
        ues = set()
        for _, pkt in sched.packets():
            teids.add(int(pkt.teid))
            ues.add(inner_ue_address(pkt, "uplink"))
        assert teids == {42}
        assert ues == {UE}


class TestSchedule:
    def test_cbr_exact_gaps(self):
        spec = FlowSpec(CONSTANT_RATE, UE, 2, 9, 100.0, 900, 1.0)
        sched = schedule(spec, seed=0)
        assert len(sched) == 100
        assert np.all(np.diff(sched.arrival_ns) == 10**7)

    def test_determinism(self):
        for cls_spec in (
            FlowSpec(CONSTANT_RATE, UE, 2, 9, 100.0, 900, 2.0),
            profile_from_table("TikTok", ue=UE, teid=3, qfi=9),
            anomaly_spec(),
        ):
            a = schedule(cls_spec, seed=123)
            b = schedule(cls_spec, seed=123)
            assert np.array_equal(a.arrival_ns, b.arrival_ns)
            assert np.array_equal(a.size_bytes, b.size_bytes)
            c = schedule(cls_spec, seed=124)
            assert not (
                np.array_equal(a.arrival_ns, c.arrival_ns)
                and np.array_equal(a.size_bytes, c.size_bytes)
            ) or cls_spec.traffic_class == CONSTANT_RATE

    def test_anomaly_burstiness(self):
        # peak-to-mean packet rate over 10 ms windows stays above 2
        for seed in range(20):
            sched = schedule(anomaly_spec(), seed=seed)
            win = 10**7  # 10 ms
            horizon = int(30.0 * 1e9)
            counts = np.bincount(
                (sched.arrival_ns // win).astype(np.int64), minlength=horizon // win
            )
            ratio = counts.max() / counts.mean()
            assert ratio > 2.0, f"seed {seed}: peak-to-mean {ratio:.2f}"

    def test_realized_rate_within_5pct(self):
        specs = [
            sensor_flow(UE, 1, 1, 100.0, 12.0),
            FlowSpec(CONSTANT_RATE, UE, 2, 9, 333.0, 700, 12.0),
            profile_from_table("Spotify", ue=UE, teid=3, qfi=9),
            anomaly_spec(rate=500.0, duration=12.0),
        ]
        for spec in specs:
            for seed in range(20):
                sched = schedule(spec, seed=seed)
                realized = len(sched) / spec.duration_s
                assert abs(realized - spec.rate_pps) / spec.rate_pps < 0.05

    def test_sizes_within_ethernet_bounds(self):
        for spec in (profile_from_table("YouTube", ue=UE, teid=1, qfi=9), anomaly_spec()):
            for seed in range(5):
                sched = schedule(spec, seed=seed)
                assert sched.size_bytes.min() >= 64
                assert sched.size_bytes.max() <= 1500

    def test_arrivals_non_decreasing(self):
        for seed in range(5):
            sched = schedule(anomaly_spec(), seed=seed)
            assert np.all(np.diff(sched.arrival_ns) >= 0)

    def test_arrivals_within_duration(self):
        for seed in range(5):
            sched = schedule(anomaly_spec(duration=5.0), seed=seed)
            assert sched.arrival_ns.max() <= 5.0 * 1e9


class TestFlowSpecValidation:
    def test_size_bounds(self):
        with pytest.raises(TrafficError):
            FlowSpec(CONSTANT_RATE, UE, 1, 1, 100.0, 63, 1.0)
        with pytest.raises(TrafficError):
            FlowSpec(CONSTANT_RATE, UE, 1, 1, 100.0, 1501, 1.0)

    def test_multimedia_needs_app(self):
        with pytest.raises(TrafficError):
            FlowSpec(MULTIMEDIA, UE, 1, 1, 100.0, 900, 1.0)

    def test_unknown_class(self):
        with pytest.raises(TrafficError):
            FlowSpec("Bursty", UE, 1, 1, 100.0, 900, 1.0)
