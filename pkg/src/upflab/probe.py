"""Two-hook per-packet latency probe.

Mirrors the kernel-probe design: on entry to the decapsulation stage a
packet whose inner UE address is in the target set gets its timestamp
and address stored in per-packet maps keyed by handle; when the same
handle reaches the netif_rx-style hook, the probe emits the elapsed
time and clears both entries. Packets for other UEs pass untouched.

:func:`attach` drives the hooks from a data-path event stream and joins
each emission with the flow registry and the telemetry window covering
its emit time, producing fully tagged samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from ipaddress import IPv4Address
from typing import Iterable, Iterator, Mapping, NamedTuple

from upflab.datapath import GTP_ENTRY, TelemetrySeries, TraceEvent
from upflab.gtpu import GtpuPacket, Qfi, Teid, build_inner_ipv4, inner_ue_address
from upflab.traffic import REMOTE_ADDR

__all__ = [
    "Probe",
    "ProbeError",
    "DuplicateHandleError",
    "ClockOrderError",
    "TelemetryJoinError",
    "Emission",
    "LatencySample",
    "FlowInfo",
    "attach",
]


class ProbeError(RuntimeError):
    """Probe state violation; signals a simulator bug, not traffic."""


class DuplicateHandleError(ProbeError):
    """A handle hit gtp_entry twice without an intervening netif_rx."""


class ClockOrderError(ProbeError):
    """netif_rx timestamp precedes the stored gtp_entry timestamp."""


class TelemetryJoinError(RuntimeError):
    """Sample emit time not covered by any telemetry window."""


class Emission(NamedTuple):
    """What the probe prints per matched packet: address and elapsed ns."""

    emit_time_ns: int
    ue: IPv4Address
    decap_latency_ns: int


class LatencySample(NamedTuple):
    """One emission joined with flow identity and telemetry context."""

    emit_time_ns: int
    ue: IPv4Address
    teid: Teid
    qfi: Qfi
    traffic_class: str
    decap_latency_ns: int
    cpu_pct: float
    pkt_rate_pps: float


class FlowInfo(NamedTuple):
    """Registry entry: what simulate knows about one UE's session."""

    teid: Teid
    qfi: Qfi
    traffic_class: str


@dataclass
class Probe:
    """Per-packet state maps plus the target-UE filter.

    ``start_map`` and ``ip_map`` always hold the same key set; both are
    empty whenever no matched packet is between the two hooks.
    """

    targets: frozenset[IPv4Address]
    start_map: dict[int, int] = field(default_factory=dict)
    ip_map: dict[int, IPv4Address] = field(default_factory=dict)

    def __post_init__(self):
        self.targets = frozenset(IPv4Address(t) for t in self.targets)

    def on_gtp_entry(
        self, handle: int, ts_ns: int, packet: GtpuPacket, direction: str = "uplink"
    ) -> None:
        """Entry hook: record (timestamp, UE address) for matching packets."""
        if handle in self.start_map:
            raise DuplicateHandleError(
                f"handle {handle} re-entered gtp hook while in flight"
            )
        ue = inner_ue_address(packet, direction)
        if ue in self.targets:
            self.start_map[handle] = ts_ns
            self.ip_map[handle] = ue

    def on_netif_rx(self, handle: int, ts_ns: int) -> Emission | None:
        """Exit hook: emit elapsed time and clear state for known handles."""
        start = self.start_map.get(handle)
        if start is None:
            return None
        if ts_ns < start:
            raise ClockOrderError(
                f"handle {handle}: netif_rx at {ts_ns} before gtp_entry at {start}"
            )
        ue = self.ip_map[handle]
        del self.start_map[handle]
        del self.ip_map[handle]
        return Emission(emit_time_ns=ts_ns, ue=ue, decap_latency_ns=ts_ns - start)

    @property
    def in_flight(self) -> int:
        return len(self.start_map)


def attach(
    probe: Probe,
    events: Iterable[TraceEvent],
    registry: Mapping[IPv4Address, FlowInfo],
    telemetry: TelemetrySeries,
    direction: str = "uplink",
) -> Iterator[LatencySample]:
    """Drive the probe from an event stream, yielding tagged samples.

    Output order equals emission order. Each sample joins the telemetry
    window containing its emit time (left-closed windows) and the
    registry entry for its UE address.
    """
    registry = {IPv4Address(k): v for k, v in registry.items()}
    prototypes: dict[IPv4Address, GtpuPacket] = {}
    for ue, info in registry.items():
        # one inner datagram per flow is enough: the entry hook only
        # reads addresses, never sizes
        src, dst = (ue, REMOTE_ADDR) if direction == "uplink" else (REMOTE_ADDR, ue)
        inner = build_inner_ipv4(src, dst, 64, protocol=17)
        prototypes[ue] = GtpuPacket(teid=info.teid, qfi=info.qfi, inner=inner)

    for ev in events:
        if ev.hook == GTP_ENTRY:
            packet = prototypes.get(ev.ue)
            if packet is None:
                # unknown flow: per-event packet, filter still applies
                src, dst = (
                    (ev.ue, REMOTE_ADDR) if direction == "uplink" else (REMOTE_ADDR, ev.ue)
                )
                packet = GtpuPacket(
                    teid=Teid(ev.teid),
                    qfi=Qfi(ev.qfi),
                    inner=build_inner_ipv4(src, dst, 64, protocol=17),
                )
            probe.on_gtp_entry(ev.handle, ev.timestamp_ns, packet, direction)
        else:
            emission = probe.on_netif_rx(ev.handle, ev.timestamp_ns)
            if emission is None:
                continue
            info = registry.get(emission.ue)
            if info is None:
                raise TelemetryJoinError(
                    f"emitted UE {emission.ue} missing from the flow registry"
                )
            try:
                w = telemetry.window_index(emission.emit_time_ns)
            except ValueError as exc:
                raise TelemetryJoinError(str(exc)) from exc
            yield LatencySample(
                emit_time_ns=emission.emit_time_ns,
                ue=emission.ue,
                teid=info.teid,
                qfi=info.qfi,
                traffic_class=info.traffic_class,
                decap_latency_ns=emission.decap_latency_ns,
                cpu_pct=float(telemetry.cpu_pct[w]),
                pkt_rate_pps=float(telemetry.pps[w]),
            )
