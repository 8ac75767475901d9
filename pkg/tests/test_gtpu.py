import random
import struct
from ipaddress import IPv4Address

import pytest

from upflab.gtpu import (
    DecodeError,
    GtpuError,
    GtpuPacket,
    MalformedInnerError,
    Qfi,
    Teid,
    build_inner_ipv4,
    decode,
    encode,
    inner_ue_address,
)


def random_packet(rng: random.Random) -> GtpuPacket:
    size = rng.randint(20, 1500)
    inner = build_inner_ipv4(
        IPv4Address(rng.getrandbits(32)),
        IPv4Address(rng.getrandbits(32)),
        size,
        protocol=rng.choice([1, 6, 17]),
    )
    qfi = Qfi(rng.randint(0, 63)) if rng.random() < 0.7 else None
    return GtpuPacket(teid=Teid(rng.getrandbits(32)), qfi=qfi, inner=inner)


def hand_encoded_reference() -> tuple[bytes, GtpuPacket]:
    """Spec'd-by-hand byte layout for teid=1, qfi=9, minimal inner.

    Built field by field with struct, independently of encode().
    """
    inner = build_inner_ipv4(IPv4Address("10.60.0.1"), IPv4Address("8.8.8.8"), 20, 1)
    assert len(inner) == 20
    flags = 0x34  # version 1, PT=1, E=1
    wire = struct.pack("!BBHI", flags, 0xFF, 4 + 4 + 20, 1)
    wire += struct.pack("!HBB", 0, 0, 0x85)  # seq, n-pdu, next-ext
    wire += bytes([0x01, 0x00, 0x09, 0x00])  # 1 word, DL container, QFI 9, no more
    wire += inner
    return wire, GtpuPacket(teid=Teid(1), qfi=Qfi(9), inner=inner)


class TestRoundTrip:
    def test_without_qfi(self):
        rng = random.Random(7)
        for _ in range(200):
            p = random_packet(rng)
            if p.qfi is not None:
                p = GtpuPacket(teid=p.teid, qfi=None, inner=p.inner)
            assert decode(encode(p)) == p

    def test_randomized(self):
        rng = random.Random(11)
        for _ in range(500):
            p = random_packet(rng)
            assert decode(encode(p)) == p

    def test_outer_metadata_not_serialized(self):
        rng = random.Random(3)
        p = random_packet(rng)
        q = GtpuPacket(
            teid=p.teid,
            qfi=p.qfi,
            inner=p.inner,
            outer_src=IPv4Address("192.168.0.1"),
            outer_dst=IPv4Address("192.168.0.2"),
            outer_ports=(1000, 2152),
        )
        assert encode(q) == encode(p)
        assert decode(encode(q)) == q  # outer fields excluded from equality

    def test_encoded_length(self):
        rng = random.Random(5)
        for _ in range(100):
            p = random_packet(rng)
            expect = 8 + len(p.inner) + (8 if p.qfi is not None else 0)
            assert len(encode(p)) == expect


class TestHandEncoding:
    def test_encode_matches_reference_bytes(self):
        wire, p = hand_encoded_reference()
        got = encode(p)
        assert got == wire
        assert got[0] & 0x04  # E bit
        assert got[1] == 0xFF
        assert got[4:8] == b"\x00\x00\x00\x01"
        assert got[11] == 0x85

    def test_decode_reference_bytes(self):
        wire, p = hand_encoded_reference()
        got = decode(wire)
        assert got.teid == 1
        assert got.qfi == 9
        assert got == p


class TestValidation:
    def test_qfi_range(self):
        with pytest.raises(GtpuError):
            Qfi(64)
        with pytest.raises(GtpuError):
            Qfi(-1)
        with pytest.raises(GtpuError):
            GtpuPacket(teid=Teid(1), qfi=64, inner=bytes(20))

    def test_teid_range(self):
        with pytest.raises(GtpuError):
            Teid(1 << 32)
        assert Teid(0xFFFFFFFF) == 0xFFFFFFFF

    def test_short_inner_rejected(self):
        with pytest.raises(MalformedInnerError):
            GtpuPacket(teid=Teid(1), inner=bytes(19))


class TestDecodeErrors:
    def test_truncated_header(self):
        with pytest.raises(DecodeError) as e:
            decode(bytes(7))
        assert e.value.field == "header"

    def test_bad_message_type(self):
        wire = struct.pack("!BBHI", 0x30, 0x01, 20, 1) + bytes(20)
        with pytest.raises(DecodeError) as e:
            decode(wire)
        assert e.value.field == "message_type"

    def test_length_mismatch(self):
        wire = struct.pack("!BBHI", 0x30, 0xFF, 25, 1) + bytes(20)
        with pytest.raises(DecodeError) as e:
            decode(wire)
        assert e.value.field == "length"

    def test_unknown_extension(self):
        wire = struct.pack("!BBHI", 0x34, 0xFF, 4 + 4 + 20, 1)
        wire += struct.pack("!HBB", 0, 0, 0xC0)
        wire += bytes([0x01, 0x00, 0x09, 0x00]) + bytes(20)
        with pytest.raises(DecodeError) as e:
            decode(wire)
        assert e.value.field == "extension_type"

    def test_bad_version(self):
        wire = struct.pack("!BBHI", 0x50, 0xFF, 20, 1) + bytes(20)
        with pytest.raises(DecodeError) as e:
            decode(wire)
        assert e.value.field == "version"


class TestInnerUeAddress:
    def test_uplink_reads_source(self):
        inner = build_inner_ipv4(IPv4Address("10.60.0.1"), IPv4Address("8.8.8.8"), 84, 1)
        p = GtpuPacket(teid=Teid(9), inner=inner)
        assert inner_ue_address(p, "uplink") == IPv4Address("10.60.0.1")

    def test_downlink_reads_destination(self):
        inner = build_inner_ipv4(IPv4Address("10.60.0.1"), IPv4Address("8.8.8.8"), 84, 1)
        p = GtpuPacket(teid=Teid(9), inner=inner)
        assert inner_ue_address(p, "downlink") == IPv4Address("8.8.8.8")

    def test_matches_offset_oracle(self):
        rng = random.Random(13)
        for _ in range(200):
            p = random_packet(rng)
            # independent read at the raw IPv4 header offsets
            assert inner_ue_address(p, "uplink") == IPv4Address(p.inner[12:16])
            assert inner_ue_address(p, "downlink") == IPv4Address(p.inner[16:20])

    def test_bad_direction(self):
        p = GtpuPacket(teid=Teid(1), inner=build_inner_ipv4("10.0.0.1", "8.8.8.8", 20))
        with pytest.raises(ValueError):
            inner_ue_address(p, "sideways")

    def test_non_ipv4_inner(self):
        p = GtpuPacket(teid=Teid(1), inner=b"\x60" + bytes(19))
        with pytest.raises(MalformedInnerError):
            inner_ue_address(p, "uplink")


def test_inner_checksum_valid():
    inner = build_inner_ipv4(IPv4Address("10.60.0.1"), IPv4Address("8.8.8.8"), 40)
    total = 0
    for i in range(0, 20, 2):
        total += struct.unpack_from("!H", inner, i)[0]
    total = (total & 0xFFFF) + (total >> 16)
    total = (total & 0xFFFF) + (total >> 16)
    assert total == 0xFFFF
