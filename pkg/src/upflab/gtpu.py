"""GTP-U v1 user-plane packet model, encoder and parser.

Covers exactly the slice of the wire format the lab needs: G-PDU
messages carrying a TEID, an optional PDU-session-container extension
header with the 6-bit QFI, and an inner IPv4 datagram. Outer transport
(N3 UDP/IP endpoints and ports) is carried as context metadata only and
is deliberately excluded from packet equality -- the bit-exact layer is
the GTP-U header plus inner datagram, and ``decode(encode(p)) == p``
holds for every valid packet.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from ipaddress import IPv4Address

__all__ = [
    "UeAddress",
    "Teid",
    "Qfi",
    "GtpuPacket",
    "GtpuError",
    "MalformedInnerError",
    "DecodeError",
    "encode",
    "decode",
    "inner_ue_address",
    "build_inner_ipv4",
]

# GTP-U on N3 runs over UDP port 2152.
GTPU_PORT = 2152

_GPDU = 0xFF
_EXT_PDU_SESSION = 0x85
_FIXED_HEADER_LEN = 8
_OPT_FIELDS_LEN = 4  # seq(2) + n-pdu(1) + next-ext(1)
_EXT_LEN = 4  # len(1) + container(2) + next-ext(1)
_MIN_INNER = 20  # one IPv4 header

UeAddress = IPv4Address


class GtpuError(ValueError):
    """Base for packet construction and parse failures."""


class MalformedInnerError(GtpuError):
    """Inner payload is not a usable IPv4 datagram."""


class DecodeError(GtpuError):
    """Wire bytes rejected; ``field`` names the offending header field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Teid(int):
    """32-bit tunnel endpoint identifier."""

    def __new__(cls, value) -> "Teid":
        v = int(value)
        if not 0 <= v <= 0xFFFFFFFF:
            raise GtpuError(f"TEID {v} outside 32-bit range")
        return super().__new__(cls, v)


class Qfi(int):
    """6-bit QoS flow identifier (0..63)."""

    def __new__(cls, value) -> "Qfi":
        v = int(value)
        if not 0 <= v <= 63:
            raise GtpuError(f"QFI {v} outside 6-bit range 0..63")
        return super().__new__(cls, v)


_ZERO_ADDR = IPv4Address("0.0.0.0")


@dataclass(frozen=True)
class GtpuPacket:
    """One G-PDU: TEID, optional QFI, inner IPv4 datagram.

    ``outer_*`` fields describe the N3 transport the packet rode in on;
    they are annotations for the simulator, never serialized, and do not
    take part in equality.
    """

    teid: Teid
    inner: bytes
    qfi: Qfi | None = None
    outer_src: IPv4Address = field(default=_ZERO_ADDR, compare=False)
    outer_dst: IPv4Address = field(default=_ZERO_ADDR, compare=False)
    outer_ports: tuple[int, int] = field(default=(GTPU_PORT, GTPU_PORT), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "teid", Teid(self.teid))
        if self.qfi is not None:
            object.__setattr__(self, "qfi", Qfi(self.qfi))
        inner = bytes(self.inner)
        object.__setattr__(self, "inner", inner)
        if len(inner) < _MIN_INNER:
            raise MalformedInnerError(
                f"inner datagram is {len(inner)} bytes, minimum is {_MIN_INNER}"
            )
        if not isinstance(self.outer_src, IPv4Address):
            object.__setattr__(self, "outer_src", IPv4Address(self.outer_src))
        if not isinstance(self.outer_dst, IPv4Address):
            object.__setattr__(self, "outer_dst", IPv4Address(self.outer_dst))
        sp, dp = self.outer_ports
        if not (0 <= int(sp) <= 0xFFFF and 0 <= int(dp) <= 0xFFFF):
            raise GtpuError(f"outer ports {self.outer_ports} outside 16-bit range")
        object.__setattr__(self, "outer_ports", (int(sp), int(dp)))


def encode(p: GtpuPacket) -> bytes:
    """Serialize to GTP-U v1 G-PDU bytes.

    Flags octet carries version=1, PT=1 and E=1 iff a QFI rides along;
    the QFI travels in a minimal PDU-session-container extension header.
    """
    has_ext = p.qfi is not None
    flags = 0x30 | (0x04 if has_ext else 0x00)
    payload_len = len(p.inner) + (_OPT_FIELDS_LEN + _EXT_LEN if has_ext else 0)
    if payload_len > 0xFFFF:
        raise GtpuError(f"payload length {payload_len} exceeds 16-bit length field")
    head = struct.pack("!BBHI", flags, _GPDU, payload_len, p.teid)
    if not has_ext:
        return head + p.inner
    # seq + n-pdu zeroed, next extension = PDU session container;
    # container is DL PDU SESSION INFORMATION with just the QFI set.
    opt = struct.pack("!HBB", 0, 0, _EXT_PDU_SESSION)
    ext = struct.pack("!BBBB", _EXT_LEN // 4, 0x00, int(p.qfi), 0x00)
    return head + opt + ext + p.inner


def decode(data: bytes) -> GtpuPacket:
    """Parse G-PDU bytes produced by :func:`encode` (or equivalent).

    Accepts packets without extension headers (``qfi=None``) and
    tolerates S/PN flags by skipping the optional field block; sequence
    and N-PDU numbers are not modeled. Outer transport metadata is not
    on the wire, so decoded packets carry the defaults.
    """
    if len(data) < _FIXED_HEADER_LEN:
        raise DecodeError("header", f"need {_FIXED_HEADER_LEN} bytes, got {len(data)}")
    flags, msg_type, payload_len, teid = struct.unpack("!BBHI", data[:8])
    version = flags >> 5
    if version != 1:
        raise DecodeError("version", f"GTP version {version}, only v1 supported")
    if not flags & 0x10:
        raise DecodeError("protocol_type", "PT=0 (GTP') is not GTP-U")
    if msg_type != _GPDU:
        raise DecodeError(
            "message_type", f"0x{msg_type:02x} is not a G-PDU (0x{_GPDU:02x})"
        )
    if payload_len != len(data) - _FIXED_HEADER_LEN:
        raise DecodeError(
            "length",
            f"header says {payload_len} payload bytes, "
            f"{len(data) - _FIXED_HEADER_LEN} present",
        )
    offset = _FIXED_HEADER_LEN
    qfi: Qfi | None = None
    if flags & 0x07:  # any of E/S/PN -> optional field block present
        if len(data) < offset + _OPT_FIELDS_LEN:
            raise DecodeError("optional_fields", "truncated seq/n-pdu/next-ext block")
        next_ext = data[offset + 3]
        offset += _OPT_FIELDS_LEN
        while next_ext != 0x00:
            if next_ext != _EXT_PDU_SESSION:
                raise DecodeError(
                    "extension_type",
                    f"0x{next_ext:02x} unsupported (only PDU session container)",
                )
            if len(data) < offset + _EXT_LEN:
                raise DecodeError("extension", "truncated PDU session container")
            ext_words = data[offset]
            if ext_words != _EXT_LEN // 4:
                raise DecodeError(
                    "extension_length", f"{ext_words} words, expected {_EXT_LEN // 4}"
                )
            qfi = Qfi(data[offset + 2] & 0x3F)
            next_ext = data[offset + 3]
            offset += _EXT_LEN
    inner = data[offset:]
    if len(inner) < _MIN_INNER:
        raise DecodeError("inner", f"{len(inner)} bytes after headers, need {_MIN_INNER}")
    return GtpuPacket(teid=Teid(teid), qfi=qfi, inner=inner)


def inner_ue_address(p: GtpuPacket, direction: str) -> IPv4Address:
    """UE-side address of the inner datagram.

    Uplink traffic is sourced by the UE, downlink is destined to it, so
    ``uplink`` reads the inner source field and ``downlink`` the inner
    destination field.
    """
    if direction not in ("uplink", "downlink"):
        raise ValueError(f"direction must be 'uplink' or 'downlink', got {direction!r}")
    inner = p.inner
    if inner[0] >> 4 != 4:
        raise MalformedInnerError(f"inner version nibble {inner[0] >> 4}, expected 4")
    off = 12 if direction == "uplink" else 16
    return IPv4Address(inner[off : off + 4])


def build_inner_ipv4(
    src: IPv4Address, dst: IPv4Address, total_length: int, protocol: int = 17
) -> bytes:
    """Minimal well-formed IPv4 datagram of ``total_length`` bytes.

    Header checksum is computed; the payload is zero filled. Used by the
    traffic generator, where only addresses and size matter downstream.
    """
    if total_length < _MIN_INNER:
        raise MalformedInnerError(f"total_length {total_length} below {_MIN_INNER}")
    if total_length > 0xFFFF:
        raise MalformedInnerError(f"total_length {total_length} exceeds IPv4 maximum")
    header = bytearray(
        struct.pack(
            "!BBHHHBBH4s4s",
            0x45,
            0,
            total_length,
            0,
            0,
            64,
            protocol,
            0,
            IPv4Address(src).packed,
            IPv4Address(dst).packed,
        )
    )
    csum = 0
    for i in range(0, 20, 2):
        csum += (header[i] << 8) | header[i + 1]
    csum = (csum & 0xFFFF) + (csum >> 16)
    csum = (csum & 0xFFFF) + (csum >> 16)
    struct.pack_into("!H", header, 10, ~csum & 0xFFFF)
    return bytes(header) + b"\x00" * (total_length - 20)
