"""Deterministic discrete-event model of a CPU-pinned UPF data path.

All flows share one decapsulation server (or ``core_count`` identical
servers): N3 arrival -> queue -> decapsulation service -> netif_rx-style
handoff toward N6. Per-packet service cost is a size-proportional term
with seeded lognormal jitter on top of a fixed floor. The simulation is
a pure function of (config, schedules, seed); timestamps are integer
nanoseconds throughout.

Trace hooks mirror the probe's two attachment points: ``gtp_entry``
fires when decapsulation begins (or at enqueue, if the config says so)
and ``netif_rx`` at service completion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from upflab import _kernels
from upflab.traffic import PacketSchedule

__all__ = [
    "DatapathConfig",
    "TelemetrySeries",
    "TraceEvent",
    "SimulationConfigError",
    "GTP_ENTRY",
    "NETIF_RX",
    "decap_service_time",
    "strict_priority_order",
    "run",
    "dump_events",
]

GTP_ENTRY = "gtp_entry"
NETIF_RX = "netif_rx"

DISCIPLINES = ("fifo", "priority")
TIMER_MODES = ("service_start", "enqueue")


class SimulationConfigError(ValueError):
    """Invalid data-path configuration or schedule/horizon mismatch."""


@dataclass(frozen=True)
class DatapathConfig:
    """Shared decapsulation-stage parameters.

    ``probe_timer`` selects where the gtp_entry hook timestamps packets:
    at service start (default, matching the decapsulation handler entry)
    or at enqueue, which folds queueing delay into the probe's reading.
    """

    base_decap_cost_ns: float = 800.0
    per_byte_cost_ns: float = 0.5
    jitter_sigma: float = 0.35
    discipline: str = "fifo"
    qfi_rank: Mapping[int, int] | None = None
    core_count: int = 1
    window_ms: float = 1000.0
    probe_timer: str = "service_start"

    def __post_init__(self):
        if self.base_decap_cost_ns < 0 or self.per_byte_cost_ns < 0:
            raise SimulationConfigError("service costs must be non-negative")
        if self.jitter_sigma < 0:
            raise SimulationConfigError("jitter_sigma must be non-negative")
        if self.discipline not in DISCIPLINES:
            raise SimulationConfigError(
                f"discipline {self.discipline!r} not in {DISCIPLINES}"
            )
        if self.core_count < 1:
            raise SimulationConfigError("core_count must be >= 1")
        if not self.window_ms > 0:
            raise SimulationConfigError("window_ms must be positive")
        if self.probe_timer not in TIMER_MODES:
            raise SimulationConfigError(
                f"probe_timer {self.probe_timer!r} not in {TIMER_MODES}"
            )
        if self.qfi_rank is not None:
            ranks = {int(k): int(v) for k, v in self.qfi_rank.items()}
            if any(v < 0 for v in ranks.values()):
                raise SimulationConfigError("priority ranks must be non-negative")
            object.__setattr__(self, "qfi_rank", ranks)


@dataclass(frozen=True, eq=False)
class TelemetrySeries:
    """Contiguous telemetry windows aligned to simulation time zero.

    ``cpu_pct`` is the busy-time fraction of the window times 100 (so it
    tops out at ``100 * core_count``); ``pps`` is the completion rate.
    The final window may be shorter than ``window_ns`` and its values
    are normalized by its actual duration.
    """

    window_start_ns: np.ndarray
    cpu_pct: np.ndarray
    pps: np.ndarray
    window_ns: int
    end_ns: int

    def __len__(self) -> int:
        return len(self.window_start_ns)

    def window_index(self, t_ns: int) -> int:
        """Index of the window containing ``t_ns`` (left-closed).

        ``t_ns == end_ns`` maps to the final window so the last
        completion of a run always joins.
        """
        if t_ns < 0 or t_ns > self.end_ns:
            raise ValueError(f"time {t_ns} outside telemetry range [0, {self.end_ns}]")
        return min(int(t_ns // self.window_ns), len(self.window_start_ns) - 1)


class TraceEvent(NamedTuple):
    handle: int
    hook: str
    timestamp_ns: int
    ue: object  # IPv4Address
    teid: int
    qfi: int
    traffic_class: str


def decap_service_time(
    config: DatapathConfig, size_bytes: int, rng: np.random.Generator
) -> int:
    """One seeded service-time draw in ns.

    Cost is ``base + per_byte * size`` with lognormal jitter multiplying
    the size-proportional term, so the draw never dips below the base
    floor and sigma=0 gives the deterministic cost exactly.
    """
    if not 64 <= size_bytes <= 1500:
        raise SimulationConfigError(f"size {size_bytes} outside [64, 1500]")
    byte_cost = config.per_byte_cost_ns * size_bytes
    if config.jitter_sigma > 0:
        byte_cost *= np.exp(config.jitter_sigma * rng.standard_normal())
    # ns resolution: jittered term rounds half-even, base rounds up so
    # the result never dips below the floor
    return int(np.ceil(config.base_decap_cost_ns) + np.rint(byte_cost))


def strict_priority_order(qfi_a: int, qfi_b: int, rank_map: Mapping[int, int]) -> int:
    """Compare two QFIs under a rank map (negative: a first, 0: tie).

    QFIs absent from the map rank below every mapped one; rank ties are
    broken downstream by arrival time and then flow identity.
    """
    return _rank_of(qfi_a, rank_map) - _rank_of(qfi_b, rank_map)


def _rank_of(qfi: int, rank_map: Mapping[int, int]) -> int:
    default = max(rank_map.values(), default=-1) + 1
    return rank_map.get(int(qfi), default)


def _service_times(
    config: DatapathConfig, schedules: Sequence[PacketSchedule], seed
) -> list[np.ndarray]:
    """Per-flow service arrays, each from its own seeded jitter stream.

    Per-flow streams keep one flow's draws independent of every other
    flow's schedule, which is what makes load monotonicity testable.
    """
    out = []
    for f_idx, sched in enumerate(schedules):
        sizes = sched.size_bytes.astype(np.float64)
        byte_cost = config.per_byte_cost_ns * sizes
        if config.jitter_sigma > 0:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), f_idx]))
            z = rng.standard_normal(len(sizes))
            byte_cost = byte_cost * np.exp(config.jitter_sigma * z)
        svc = np.rint(byte_cost) + np.ceil(config.base_decap_cost_ns)
        out.append(svc.astype(np.int64))
    return out


def run(
    config: DatapathConfig,
    schedules: Sequence[PacketSchedule],
    horizon_ns: int,
    seed,
) -> tuple[Iterator[TraceEvent], TelemetrySeries]:
    """Simulate the shared data path over all schedules.

    Returns the trace-event stream (lazily yielded in timestamp order,
    gtp_entry before netif_rx at ties) and the telemetry series. Both
    are fully determined by (config, schedules, seed).
    """
    if not schedules:
        raise SimulationConfigError("need at least one schedule")
    for sched in schedules:
        if len(sched) and int(sched.arrival_ns.max()) > horizon_ns:
            raise SimulationConfigError(
                f"flow teid={int(sched.flow.teid)} has arrivals beyond the "
                f"{horizon_ns} ns horizon"
            )

    arrival = np.concatenate([s.arrival_ns for s in schedules])
    size = np.concatenate([s.size_bytes for s in schedules])
    flow_idx = np.concatenate(
        [np.full(len(s), i, dtype=np.int64) for i, s in enumerate(schedules)]
    )
    seq = np.concatenate([np.arange(len(s), dtype=np.int64) for s in schedules])
    service = np.concatenate(_service_times(config, schedules, seed))

    order = np.lexsort((seq, flow_idx, arrival))
    arrival, size, flow_idx, seq, service = (
        arrival[order],
        size[order],
        flow_idx[order],
        seq[order],
        service[order],
    )

    if config.discipline == "priority":
        rank_map = config.qfi_rank or {}
        flow_rank = np.array(
            [_rank_of(s.flow.qfi, rank_map) for s in schedules], dtype=np.int64
        )
        rank = flow_rank[flow_idx]
        n_ranks = int(rank.max()) + 1 if len(rank) else 1
    else:
        rank = np.zeros(len(arrival), dtype=np.int64)
        n_ranks = 1

    start, completion = _kernels.queue_sim(
        arrival, service, rank, n_ranks, config.core_count
    )

    window_ns = int(round(config.window_ms * 1e6))
    end_ns = max(int(horizon_ns), int(completion.max()) if len(completion) else 0)
    n_windows = max(1, -(-end_ns // window_ns))
    busy = _kernels.window_busy(start, completion, window_ns, n_windows)

    starts = np.arange(n_windows, dtype=np.int64) * window_ns
    durations = np.full(n_windows, window_ns, dtype=np.int64)
    durations[-1] = end_ns - starts[-1]
    cpu_pct = busy / durations * 100.0
    done_idx = np.minimum(completion // window_ns, n_windows - 1)
    pps = np.bincount(done_idx, minlength=n_windows) / (durations / 1e9)
    telemetry = TelemetrySeries(
        window_start_ns=starts,
        cpu_pct=cpu_pct,
        pps=pps,
        window_ns=window_ns,
        end_ns=end_ns,
    )

    entry_ts = arrival if config.probe_timer == "enqueue" else start

    def events() -> Iterator[TraceEvent]:
        n = len(arrival)
        ts = np.concatenate([entry_ts, completion])
        kind = np.concatenate(
            [np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)]
        )
        handle = np.concatenate([np.arange(n), np.arange(n)])
        emit = np.lexsort((handle, kind, ts))
        flows = [s.flow for s in schedules]
        for e in emit:
            h = int(handle[e])
            flow = flows[flow_idx[h]]
            yield TraceEvent(
                handle=h,
                hook=NETIF_RX if kind[e] else GTP_ENTRY,
                timestamp_ns=int(ts[e]),
                ue=flow.ue,
                teid=int(flow.teid),
                qfi=int(flow.qfi),
                traffic_class=flow.traffic_class,
            )

    return events(), telemetry


EVENT_DUMP_COLUMNS = ("handle", "hook", "timestamp_ns", "ue", "teid", "qfi", "class")


def dump_events(events: Iterable[TraceEvent], path) -> int:
    """Write the event stream as delimited text; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_DUMP_COLUMNS)
        for ev in events:
            writer.writerow(
                [
                    ev.handle,
                    ev.hook,
                    ev.timestamp_ns,
                    str(ev.ue),
                    ev.teid,
                    ev.qfi,
                    ev.traffic_class,
                ]
            )
            n += 1
    return n
