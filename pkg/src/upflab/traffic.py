"""Per-flow packet schedules for the four traffic classes.

Flow classes:

  * ``Baseline``       fixed-rate, fixed-size echo probes (the sensor)
  * ``Constant-Rate``  CBR at the requested rate and mean size
  * ``Multimedia``     replay of a multimedia application profile
  * ``Anomaly``        two-state on/off bursts with exponential dwells

Schedules are pure functions of (spec, seed): identical inputs give
byte-identical arrival/size arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from typing import Iterator, Mapping

import numpy as np

from upflab.gtpu import GtpuPacket, Qfi, Teid, build_inner_ipv4

__all__ = [
    "BASELINE",
    "ANOMALY",
    "CONSTANT_RATE",
    "MULTIMEDIA",
    "TRAFFIC_CLASSES",
    "MULTIMEDIA_PROFILES",
    "PROFILES_VERSION",
    "AppProfile",
    "FlowSpec",
    "PacketSchedule",
    "TrafficError",
    "profile_from_table",
    "load_profiles",
    "sensor_flow",
    "schedule",
]

BASELINE = "Baseline"
ANOMALY = "Anomaly"
CONSTANT_RATE = "Constant-Rate"
MULTIMEDIA = "Multimedia"
TRAFFIC_CLASSES = (BASELINE, ANOMALY, CONSTANT_RATE, MULTIMEDIA)

# Fixed echo-probe datagram size for Baseline sensor flows.
SENSOR_PACKET_BYTES = 98

# Size dispersion for generated multimedia/anomaly packet sizes:
# lognormal with coefficient of variation 0.3, clipped to Ethernet bounds.
SIZE_CV = 0.3
MIN_PACKET_BYTES = 64
MAX_PACKET_BYTES = 1500

# Remote (N6-side) endpoint used for generated inner datagrams.
REMOTE_ADDR = IPv4Address("8.8.8.8")


class TrafficError(ValueError):
    """Invalid flow specification or unknown profile."""


@dataclass(frozen=True)
class AppProfile:
    """One replayed multimedia application trace."""

    app: str
    duration_s: float
    packets_k: float
    data_mib: float
    avg_mbps: float
    rate_pps: float
    mean_size_bytes: float


PROFILES_VERSION = "multimedia-profiles-v1"

# Replayed multimedia application profiles (duration s, packets k,
# data MiB, average Mb/s, packets/s, mean packet bytes).
MULTIMEDIA_PROFILES: Mapping[str, AppProfile] = {
    p.app: p
    for p in (
        AppProfile("Facebook", 43.8, 13.2, 14.7, 2.8, 300.5, 1171),
        AppProfile("Instagram", 66.1, 27.1, 30.9, 3.9, 410.8, 1193),
        AppProfile("LinkedIn", 70.1, 12.5, 11.1, 1.3, 178.1, 929),
        AppProfile("PS Now", 59.4, 17.5, 15.1, 2.1, 294.2, 906),
        AppProfile("Spotify", 146.3, 34.9, 28.1, 1.6, 238.8, 842),
        AppProfile("TikTok", 63.9, 40.7, 37.8, 5.0, 638.0, 974),
        AppProfile("Twitter", 68.9, 13.0, 12.0, 1.5, 188.4, 967),
        AppProfile("Wikipedia", 77.4, 4.8, 4.1, 0.4, 62.3, 883),
        AppProfile("YouTube", 63.4, 14.2, 16.6, 2.2, 224.0, 1226),
    )
}


@dataclass(frozen=True)
class FlowSpec:
    """Traffic description for one PDU session."""

    traffic_class: str
    ue: IPv4Address
    teid: Teid
    qfi: Qfi
    rate_pps: float
    mean_size_bytes: float
    duration_s: float
    app: str | None = None
    burst_on_ms: float = 50.0
    burst_off_ms: float = 50.0
    burst_multiplier: float = 10.0

    def __post_init__(self):
        if self.traffic_class not in TRAFFIC_CLASSES:
            raise TrafficError(
                f"unknown traffic class {self.traffic_class!r}; "
                f"expected one of {TRAFFIC_CLASSES}"
            )
        object.__setattr__(self, "ue", IPv4Address(self.ue))
        object.__setattr__(self, "teid", Teid(self.teid))
        object.__setattr__(self, "qfi", Qfi(self.qfi))
        if not self.rate_pps > 0:
            raise TrafficError(f"rate_pps must be positive, got {self.rate_pps}")
        if not MIN_PACKET_BYTES <= self.mean_size_bytes <= MAX_PACKET_BYTES:
            raise TrafficError(
                f"mean_size_bytes {self.mean_size_bytes} outside "
                f"[{MIN_PACKET_BYTES}, {MAX_PACKET_BYTES}]"
            )
        if not self.duration_s > 0:
            raise TrafficError(f"duration_s must be positive, got {self.duration_s}")
        if self.traffic_class == MULTIMEDIA:
            if self.app is None:
                raise TrafficError("Multimedia flows must name an application profile")
        if self.traffic_class == ANOMALY:
            if self.burst_on_ms <= 0 or self.burst_off_ms <= 0:
                raise TrafficError("burst on/off mean durations must be positive")
            if self.burst_multiplier < 1:
                raise TrafficError("burst_multiplier must be >= 1")


@dataclass(frozen=True, eq=False)
class PacketSchedule:
    """Arrival times and sizes for one flow, ready for the data path.

    ``arrival_ns`` is non-decreasing; every materialized packet carries
    the flow's TEID, QFI and UE address.
    """

    flow: FlowSpec
    arrival_ns: np.ndarray
    size_bytes: np.ndarray

    def __post_init__(self):
        if len(self.arrival_ns) != len(self.size_bytes):
            raise TrafficError("arrival and size arrays must align")
        if len(self.arrival_ns) and np.any(np.diff(self.arrival_ns) < 0):
            raise TrafficError("arrival times must be non-decreasing")
        self.arrival_ns.setflags(write=False)
        self.size_bytes.setflags(write=False)

    def __len__(self) -> int:
        return len(self.arrival_ns)

    def packets(self) -> Iterator[tuple[int, GtpuPacket]]:
        """Materialize (arrival_ns, GtpuPacket) pairs, uplink direction."""
        ue, remote = self.flow.ue, REMOTE_ADDR
        teid, qfi = self.flow.teid, self.flow.qfi
        for t, size in zip(self.arrival_ns, self.size_bytes):
            inner = build_inner_ipv4(ue, remote, int(size), protocol=17)
            yield int(t), GtpuPacket(teid=teid, qfi=qfi, inner=inner)


def profile_from_table(
    app: str,
    *,
    ue,
    teid,
    qfi,
    profiles: Mapping[str, AppProfile] | None = None,
) -> FlowSpec:
    """FlowSpec for a multimedia replay, rates and sizes from the profile table."""
    table = MULTIMEDIA_PROFILES if profiles is None else profiles
    if app not in table:
        raise TrafficError(
            f"unknown application {app!r}; valid names: {sorted(table)}"
        )
    prof = table[app]
    return FlowSpec(
        traffic_class=MULTIMEDIA,
        ue=ue,
        teid=teid,
        qfi=qfi,
        rate_pps=prof.rate_pps,
        mean_size_bytes=prof.mean_size_bytes,
        duration_s=prof.duration_s,
        app=app,
    )


def load_profiles(path) -> dict[str, AppProfile]:
    """Read profiles from delimited text with columns app,duration_s,pps,mean_bytes."""
    out: dict[str, AppProfile] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"app", "duration_s", "pps", "mean_bytes"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise TrafficError(
                f"profile file needs columns {sorted(required)}, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            app = row["app"]
            out[app] = AppProfile(
                app=app,
                duration_s=float(row["duration_s"]),
                packets_k=float(row.get("packets_k", 0) or 0),
                data_mib=float(row.get("data_mib", 0) or 0),
                avg_mbps=float(row.get("avg_mbps", 0) or 0),
                rate_pps=float(row["pps"]),
                mean_size_bytes=float(row["mean_bytes"]),
            )
    return out


def sensor_flow(ue, teid, qfi, rate_pps: float, duration_s: float) -> FlowSpec:
    """Fixed-rate echo-probe flow used as the latency sensor."""
    return FlowSpec(
        traffic_class=BASELINE,
        ue=ue,
        teid=teid,
        qfi=qfi,
        rate_pps=rate_pps,
        mean_size_bytes=SENSOR_PACKET_BYTES,
        duration_s=duration_s,
    )


def _packet_count(rate_pps: float, duration_s: float) -> int:
    # floor(rate * duration) with a guard against float representation
    # error for products that are mathematically integral
    return int(math.floor(rate_pps * duration_s + 1e-9))


def _deterministic_arrivals(rate_pps: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=np.float64)
    return np.rint(k * (1e9 / rate_pps)).astype(np.int64)


def _lognormal_sizes(rng: np.random.Generator, mean: float, n: int) -> np.ndarray:
    sigma2 = math.log(1.0 + SIZE_CV**2)
    mu = math.log(mean) - sigma2 / 2.0
    raw = rng.lognormal(mean=mu, sigma=math.sqrt(sigma2), size=n)
    return np.clip(np.rint(raw), MIN_PACKET_BYTES, MAX_PACKET_BYTES).astype(np.int64)


def _anomaly_arrivals(spec: FlowSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """Bursty arrivals with an exact total count.

    An on/off dwell sequence (exponential, seeded) defines a piecewise
    constant intensity: `burst_multiplier` times the quiet rate while
    on. The quiet rate is set so the long-run mean equals ``rate_pps``,
    and exactly ``n`` arrivals are placed by inverting the cumulative
    intensity at sorted uniforms, which keeps the realized mean rate at
    the spec value while preserving burst structure.
    """
    on_s = spec.burst_on_ms / 1e3
    off_s = spec.burst_off_ms / 1e3
    m = spec.burst_multiplier
    pi_on = on_s / (on_s + off_s)
    quiet_rate = spec.rate_pps / (pi_on * m + (1.0 - pi_on))

    t_knots = [0.0]
    lam_knots = [0.0]
    state_on = bool(rng.random() < pi_on)
    t = 0.0
    while t < spec.duration_s:
        dwell = rng.exponential(on_s if state_on else off_s)
        dwell = min(dwell, spec.duration_s - t)
        rate = quiet_rate * (m if state_on else 1.0)
        t += dwell
        t_knots.append(t)
        lam_knots.append(lam_knots[-1] + dwell * rate)
        state_on = not state_on
    u = np.sort(rng.random(n)) * lam_knots[-1]
    times_s = np.interp(u, np.asarray(lam_knots), np.asarray(t_knots))
    return np.rint(times_s * 1e9).astype(np.int64)


def schedule(spec: FlowSpec, seed) -> PacketSchedule:
    """Generate the packet schedule for one flow.

    Baseline and Constant-Rate flows are fully deterministic; Multimedia
    keeps deterministic arrivals (fixed replay timing) with seeded
    lognormal sizes; Anomaly draws a seeded on/off burst process.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = _packet_count(spec.rate_pps, spec.duration_s)
    cls = spec.traffic_class
    if cls in (BASELINE, CONSTANT_RATE):
        arrivals = _deterministic_arrivals(spec.rate_pps, n)
        sizes = np.full(n, int(round(spec.mean_size_bytes)), dtype=np.int64)
    elif cls == MULTIMEDIA:
        arrivals = _deterministic_arrivals(spec.rate_pps, n)
        sizes = _lognormal_sizes(rng, spec.mean_size_bytes, n)
    else:  # ANOMALY
        arrivals = _anomaly_arrivals(spec, rng, n)
        sizes = _lognormal_sizes(rng, spec.mean_size_bytes, n)
    return PacketSchedule(flow=spec, arrival_ns=arrivals, size_bytes=sizes)
