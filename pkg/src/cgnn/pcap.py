"""Classic pcap container format: a 24-byte global header, then per-packet
records of a 16-byte header plus raw frame bytes.

Layout: Global Header | Record Header | Frame | Record Header | Frame | ...
Byte order of every header field follows the file's magic value.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import BadMagic, UnsupportedLinkType

MAGIC_MICROS = 0xA1B2C3D4
MAGIC_NANOS = 0xA1B23C4D

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

LINKTYPE_ETHERNET = 1

DEFAULT_SNAPLEN = 65535


@dataclass(frozen=True)
class PcapRecord:
    """One captured frame: timestamp, lengths, and link-layer bytes."""

    ts_sec: int
    ts_frac: int  # micro- or nanoseconds, per the file magic
    captured_len: int
    original_len: int
    data: bytes


@dataclass
class PcapFile:
    """Parsed pcap container, retaining enough header state to re-serialize."""

    records: list[PcapRecord] = field(default_factory=list)
    snaplen: int = DEFAULT_SNAPLEN
    nanosecond: bool = False
    big_endian: bool = False
    truncated: bool = False  # set when the file ended mid-record

    def to_bytes(self) -> bytes:
        """Serialize back to classic pcap with the original byte order."""
        end = ">" if self.big_endian else "<"
        magic = MAGIC_NANOS if self.nanosecond else MAGIC_MICROS
        out = [struct.pack(end + "IHHiII I", magic, 2, 4, 0, 0, self.snaplen,
                           LINKTYPE_ETHERNET)]
        for rec in self.records:
            out.append(struct.pack(end + "IIII", rec.ts_sec, rec.ts_frac,
                                   rec.captured_len, rec.original_len))
            out.append(rec.data)
        return b"".join(out)


def parse_pcap(file_bytes: bytes) -> PcapFile:
    """Decode a classic pcap byte string into records, in file order.

    Raises BadMagic for unknown magic values and UnsupportedLinkType for
    non-Ethernet captures. A record header that claims more bytes than
    remain stops parsing; records decoded so far are returned with the
    ``truncated`` flag set.
    """
    if len(file_bytes) < GLOBAL_HEADER_LEN:
        raise BadMagic("file shorter than the 24-byte pcap global header")

    (raw_magic,) = struct.unpack_from("<I", file_bytes, 0)
    if raw_magic == MAGIC_MICROS:
        end, nanos, big = "<", False, False
    elif raw_magic == MAGIC_NANOS:
        end, nanos, big = "<", True, False
    else:
        (raw_magic_be,) = struct.unpack_from(">I", file_bytes, 0)
        if raw_magic_be == MAGIC_MICROS:
            end, nanos, big = ">", False, True
        elif raw_magic_be == MAGIC_NANOS:
            end, nanos, big = ">", True, True
        else:
            raise BadMagic(f"not a pcap file (magic 0x{raw_magic:08x})")

    _major, _minor, _zone, _sigfigs, snaplen, network = struct.unpack_from(
        end + "HHiIII", file_bytes, 4)
    if network != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"link type {network}, expected Ethernet (1)")

    pcap = PcapFile(snaplen=snaplen, nanosecond=nanos, big_endian=big)
    offset = GLOBAL_HEADER_LEN
    total = len(file_bytes)
    while offset < total:
        if offset + RECORD_HEADER_LEN > total:
            pcap.truncated = True
            break
        ts_sec, ts_frac, incl_len, orig_len = struct.unpack_from(
            end + "IIII", file_bytes, offset)
        offset += RECORD_HEADER_LEN
        # incl_len beyond the snaplen means the stream is desynced or corrupt
        if offset + incl_len > total or (snaplen and incl_len > snaplen):
            pcap.truncated = True
            break
        pcap.records.append(PcapRecord(
            ts_sec=ts_sec,
            ts_frac=ts_frac,
            captured_len=incl_len,
            original_len=orig_len,
            data=file_bytes[offset:offset + incl_len],
        ))
        offset += incl_len
    return pcap
