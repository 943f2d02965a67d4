"""Shared builders for hand-crafted frames and capture files.

Everything is constructed byte by byte so tests can state expected
outputs independently of the code under test.
"""

from __future__ import annotations

import struct

import numpy as np
import pytest

from cgnn.pcap import PcapRecord

IP_A = bytes([10, 0, 0, 1])
IP_B = bytes([10, 0, 0, 2])


def ethernet(payload: bytes, ethertype: int = 0x0800) -> bytes:
    return b"\xaa" * 6 + b"\xbb" * 6 + ethertype.to_bytes(2, "big") + payload


def ipv4(payload: bytes, protocol: int, src: bytes = IP_A,
         dst: bytes = IP_B, options: bytes = b"",
         frag: int = 0, total_length: int | None = None) -> bytes:
    assert len(options) % 4 == 0
    ihl = 5 + len(options) // 4
    if total_length is None:
        total_length = ihl * 4 + len(payload)
    header = struct.pack(">BBHHHBBH", (4 << 4) | ihl, 0, total_length,
                         0x1234, frag, 64, protocol, 0) + src + dst + options
    return header + payload


def tcp(payload: bytes, sport: int = 40000, dport: int = 80,
        flags: int = 0x18, options: bytes = b"") -> bytes:
    assert len(options) % 4 == 0
    doff = 5 + len(options) // 4
    header = struct.pack(">HHIIBBHHH", sport, dport, 1000, 2000,
                         doff << 4, flags, 8192, 0, 0)
    return header + options + payload


def udp(payload: bytes, sport: int = 40000, dport: int = 5353) -> bytes:
    return struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload


def tcp_frame(payload: bytes, *, sport: int = 40000, dport: int = 80,
              src: bytes = IP_A, dst: bytes = IP_B, flags: int = 0x18,
              tcp_options: bytes = b"", ip_options: bytes = b"",
              trailer: bytes = b"") -> bytes:
    """Ethernet/IPv4/TCP frame; trailer bytes sit past the IP length."""
    segment = tcp(payload, sport, dport, flags, tcp_options)
    return ethernet(ipv4(segment, 6, src, dst, ip_options)) + trailer


def udp_frame(payload: bytes, *, sport: int = 40000, dport: int = 5353,
              src: bytes = IP_A, dst: bytes = IP_B,
              trailer: bytes = b"") -> bytes:
    return ethernet(ipv4(udp(payload, sport, dport), 17, src, dst)) + trailer


def arp_frame() -> bytes:
    return ethernet(b"\x00\x01\x08\x00\x06\x04\x00\x01" + b"\x00" * 20,
                    ethertype=0x0806)


def pcap_bytes(frames: list[bytes], *, magic: int = 0xA1B2C3D4,
               big_endian: bool = False, snaplen: int = 65535) -> bytes:
    """Classic capture file holding the given frames, one second apart."""
    end = ">" if big_endian else "<"
    out = [struct.pack(end + "IHHiIII", magic, 2, 4, 0, 0, snaplen, 1)]
    for i, frame in enumerate(frames):
        out.append(struct.pack(end + "IIII", 1700000000 + i, i,
                               len(frame), len(frame)))
        out.append(frame)
    return b"".join(out)


def records_of(frames: list[bytes]) -> list[PcapRecord]:
    return [PcapRecord(ts_sec=1700000000 + i, ts_frac=i,
                       captured_len=len(f), original_len=len(f), data=f)
            for i, f in enumerate(frames)]


def random_graphs(rng: np.random.Generator, count: int, p: int,
                  num_classes: int = 2, max_n: int = 10) -> list:
    from cgnn.graph import ChainedGraph

    graphs = []
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        features = rng.integers(0, 256, size=(n, p)).astype(np.uint8)
        graphs.append(ChainedGraph(features=features,
                                   label=int(rng.integers(num_classes))))
    return graphs


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
