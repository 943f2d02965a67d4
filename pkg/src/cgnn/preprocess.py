"""Turn captured Ethernet frames into per-session packet vectors.

A session is the bidirectional stream of packets sharing one 5-tuple
(both directions map onto the same key). Each packet is cleaned before
use: the Ethernet header is removed, the IP source and destination
addresses are zeroed, the UDP header is padded with zeros to the 20-byte
TCP header length, and packets with no transport payload are discarded.
The surviving bytes are cut or zero-padded to a fixed length p.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DecodeError
from .pcap import PcapRecord

ETHERNET_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800

PROTO_TCP = 6
PROTO_UDP = 17

UDP_HEADER_LEN = 8
TCP_HEADER_LEN = 20
# zeros appended to a UDP header so both transports occupy 20 bytes
UDP_PAD = b"\x00" * (TCP_HEADER_LEN - UDP_HEADER_LEN)

DNS_PORT = 53

DEFAULT_FEATURE_LEN = 1500


@dataclass(frozen=True, order=True)
class FiveTuple:
    """Canonical bidirectional flow key: the two endpoints are ordered so
    that both directions of a conversation hash to the same value."""

    ip_a: bytes
    port_a: int
    ip_b: bytes
    port_b: int
    protocol: int

    @classmethod
    def canonical(cls, src_ip: bytes, src_port: int, dst_ip: bytes,
                  dst_port: int, protocol: int) -> "FiveTuple":
        if (src_ip, src_port) <= (dst_ip, dst_port):
            return cls(src_ip, src_port, dst_ip, dst_port, protocol)
        return cls(dst_ip, dst_port, src_ip, src_port, protocol)

    def __str__(self) -> str:
        name = {PROTO_TCP: "tcp", PROTO_UDP: "udp"}.get(
            self.protocol, str(self.protocol))
        return (f"{_dotted(self.ip_a)}:{self.port_a}-"
                f"{_dotted(self.ip_b)}:{self.port_b}/{name}")


def _dotted(ip: bytes) -> str:
    return ".".join(str(b) for b in ip)


@dataclass
class DecodedPacket:
    """One IPv4/TCP-or-UDP frame split into the pieces cleaning needs."""

    five_tuple: FiveTuple
    ip_header: bytes
    transport: bytes  # whole segment (TCP) or datagram (UDP)
    payload_offset: int  # transport bytes before the payload starts

    @property
    def payload(self) -> bytes:
        return self.transport[self.payload_offset:]


def decode_frame(frame: bytes) -> DecodedPacket | None:
    """Decode one Ethernet frame down to its transport payload.

    Returns None for frames that cannot belong to any session (non-IPv4,
    non-TCP/UDP, later IP fragments). Raises DecodeError when a frame
    claims to be IPv4/TCP/UDP but its headers do not add up.
    """
    if len(frame) < ETHERNET_HEADER_LEN:
        raise DecodeError("frame shorter than the Ethernet header")
    ethertype = int.from_bytes(frame[12:14], "big")
    if ethertype != ETHERTYPE_IPV4:
        return None

    datagram = frame[ETHERNET_HEADER_LEN:]
    if len(datagram) < 20:
        raise DecodeError("IPv4 header cut short")
    version = datagram[0] >> 4
    if version != 4:
        raise DecodeError(f"IP version {version} under an IPv4 ethertype")
    ihl = datagram[0] & 0x0F
    if ihl < 5:
        raise DecodeError(f"IPv4 header length field {ihl} below minimum 5")
    header_len = ihl * 4
    if len(datagram) < header_len:
        raise DecodeError("IPv4 options cut short")
    total_length = int.from_bytes(datagram[2:4], "big")
    if total_length < header_len:
        raise DecodeError("IPv4 total length smaller than its header")
    # Ethernet pads short frames with trailer bytes; the IP total length
    # is the real datagram end. A capture cut by the snaplen can also
    # leave fewer bytes than total_length claims, so never read past it.
    datagram = datagram[:min(total_length, len(datagram))]

    frag = int.from_bytes(datagram[6:8], "big")
    if frag & 0x1FFF:  # non-leading fragment: no transport header to read
        return None

    protocol = datagram[9]
    if protocol not in (PROTO_TCP, PROTO_UDP):
        return None
    transport = datagram[header_len:]

    if protocol == PROTO_TCP:
        if len(transport) < TCP_HEADER_LEN:
            raise DecodeError("TCP header cut short")
        data_offset = (transport[12] >> 4) * 4
        if data_offset < TCP_HEADER_LEN:
            raise DecodeError("TCP data offset below minimum")
        if len(transport) < data_offset:
            raise DecodeError("TCP options cut short")
        payload_offset = data_offset
    else:
        if len(transport) < UDP_HEADER_LEN:
            raise DecodeError("UDP header cut short")
        payload_offset = UDP_HEADER_LEN

    src_port = int.from_bytes(transport[0:2], "big")
    dst_port = int.from_bytes(transport[2:4], "big")
    key = FiveTuple.canonical(datagram[12:16], src_port,
                              datagram[16:20], dst_port, protocol)
    return DecodedPacket(
        five_tuple=key,
        ip_header=datagram[:header_len],
        transport=transport,
        payload_offset=payload_offset,
    )


def clean_bytes(packet: DecodedPacket) -> bytes | None:
    """Apply the cleaning rules to one decoded packet.

    Returns [IP header, addresses zeroed] ++ [20-byte transport header
    region: TCP header as-is, or UDP header plus 12 zeros] ++ [payload],
    or None when the packet carries no payload and is discarded. TCP
    options are not stripped; they simply follow the 20-byte region.
    """
    if not packet.payload:
        return None
    header = bytearray(packet.ip_header)
    header[12:20] = b"\x00" * 8  # anonymize source and destination
    if packet.payload_offset == UDP_HEADER_LEN:
        transport = (packet.transport[:UDP_HEADER_LEN] + UDP_PAD
                     + packet.payload)
    else:
        transport = packet.transport
    return bytes(header) + transport


def vectorize(data: bytes, p: int) -> np.ndarray:
    """Fix a byte string to exactly p entries: keep the first p bytes,
    zero-pad when shorter. Returns a uint8 vector of shape (p,)."""
    if p <= 0:
        raise ValueError(f"feature length must be positive, got {p}")
    out = np.zeros(p, dtype=np.uint8)
    head = np.frombuffer(data[:p], dtype=np.uint8)
    out[:head.size] = head
    return out


@dataclass
class CleanPacket:
    """One cleaned packet as a fixed-length feature vector."""

    data: np.ndarray  # (p,) uint8
    original_payload_len: int

    @property
    def p(self) -> int:
        return self.data.shape[0]


def clean_packet(record: PcapRecord | bytes,
                 p: int = DEFAULT_FEATURE_LEN) -> CleanPacket | None:
    """Clean one captured frame and fix it to p feature bytes.

    Returns None when the packet is discarded (no transport payload) or
    is not an IPv4 TCP/UDP frame at all; raises DecodeError when headers
    are malformed.
    """
    frame = record.data if isinstance(record, PcapRecord) else record
    packet = decode_frame(frame)
    if packet is None:
        return None
    cleaned = clean_bytes(packet)
    if cleaned is None:
        return None
    return CleanPacket(data=vectorize(cleaned, p),
                       original_payload_len=len(packet.payload))


@dataclass
class SessionSplit:
    """Records grouped by canonical 5-tuple, plus skip counters."""

    sessions: dict[FiveTuple, list[PcapRecord]] = field(default_factory=dict)
    skipped: int = 0  # non-IPv4, non-TCP/UDP, fragments, malformed
    dropped_dns: int = 0

    @property
    def packet_count(self) -> int:
        return sum(len(records) for records in self.sessions.values())


def split_sessions(records: Iterable[PcapRecord], *,
                   drop_dns: bool = False) -> SessionSplit:
    """Group records into bidirectional sessions, preserving file order.

    Frames that cannot join a session (non-IPv4, non-TCP/UDP, fragments,
    malformed headers) are counted as skipped rather than raising. With
    drop_dns, packets on port 53 are excluded as protocol chatter.
    """
    split = SessionSplit()
    for record in records:
        try:
            packet = decode_frame(record.data)
        except DecodeError:
            split.skipped += 1
            continue
        if packet is None:
            split.skipped += 1
            continue
        key = packet.five_tuple
        if drop_dns and DNS_PORT in (key.port_a, key.port_b):
            split.dropped_dns += 1
            continue
        split.sessions.setdefault(key, []).append(record)
    return split


def standardize(features: np.ndarray) -> np.ndarray:
    """Map raw byte values into [0, 1] as float32."""
    return features.astype(np.float32) / np.float32(255.0)
