"""NetFlow v5 parsing and (utilization, active flows) sample aggregation.

Wire format: a 24-byte big-endian header followed by 1..30 fixed 48-byte
flow records.  Parsing is loss-free: re-encoding a parsed datagram
reproduces the input bytes (padding bytes are zero on valid exports).

Aggregation turns time-resolved flow records into periodic link samples:
per interval, the active-flow count is the number of records whose
lifetime overlaps it, and the utilization is the prorated octet volume
against the configured link capacity.
"""

from __future__ import annotations

import csv
import enum
import ipaddress
import logging
import math
import socket
import struct
from dataclasses import dataclass, field

from .errors import (
    BadCount,
    BadVersion,
    ClockInconsistent,
    InvalidConfig,
    MalformedRow,
    TruncatedDatagram,
)
from .simulator import LinkSample

__all__ = [
    "NetFlowV5Header",
    "NetFlowV5Record",
    "TimedFlow",
    "Direction",
    "IngestConfig",
    "parse_v5_datagram",
    "encode_v5_datagram",
    "parse_datagram_stream",
    "to_absolute_time",
    "resolve_record",
    "aggregate",
    "StreamingAggregator",
    "collect_udp",
    "read_samples_csv",
    "write_samples_csv",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

HEADER_STRUCT = struct.Struct("!HHIIIIBBH")
RECORD_STRUCT = struct.Struct("!IIIHHIIIIHHxBBBHHBBxx")
HEADER_LEN = HEADER_STRUCT.size    # 24
RECORD_LEN = RECORD_STRUCT.size    # 48
MAX_RECORDS = 30

CSV_HEADER = "timestamp,utilization_percent,active_flows"


@dataclass(frozen=True)
class NetFlowV5Header:
    version: int
    count: int
    sys_uptime: int        # milliseconds since router boot
    unix_secs: int
    unix_nsecs: int
    flow_sequence: int
    engine_type: int
    engine_id: int
    sampling_interval: int  # parsed, never applied implicitly


@dataclass(frozen=True)
class NetFlowV5Record:
    src_addr: ipaddress.IPv4Address
    dst_addr: ipaddress.IPv4Address
    next_hop: ipaddress.IPv4Address
    input_if: int
    output_if: int
    packets: int
    octets: int
    first: int             # router-uptime milliseconds
    last: int
    src_port: int
    dst_port: int
    tcp_flags: int
    protocol: int
    tos: int
    src_as: int
    dst_as: int
    src_mask: int
    dst_mask: int


def parse_v5_datagram(data: bytes):
    """Decode one datagram into (header, records).

    Raises BadVersion / BadCount / TruncatedDatagram; each error carries
    the byte offset where the problem was found.
    """
    if len(data) < 4:
        raise TruncatedDatagram(
            f"need at least 4 bytes for version and count, got {len(data)}", 0
        )
    version, count = struct.unpack("!HH", data[:4])
    if version != 5:
        raise BadVersion(f"expected NetFlow version 5, got {version}", 0)
    if not (1 <= count <= MAX_RECORDS):
        raise BadCount(f"record count {count} outside 1..{MAX_RECORDS}", 2)
    expected = HEADER_LEN + RECORD_LEN * count
    if len(data) != expected:
        raise TruncatedDatagram(
            f"datagram is {len(data)} bytes, header promises {expected}",
            min(len(data), expected),
        )
    h = HEADER_STRUCT.unpack(data[:HEADER_LEN])
    header = NetFlowV5Header(*h)
    records = []
    for i in range(count):
        off = HEADER_LEN + i * RECORD_LEN
        f = RECORD_STRUCT.unpack(data[off : off + RECORD_LEN])
        records.append(
            NetFlowV5Record(
                src_addr=ipaddress.IPv4Address(f[0]),
                dst_addr=ipaddress.IPv4Address(f[1]),
                next_hop=ipaddress.IPv4Address(f[2]),
                input_if=f[3],
                output_if=f[4],
                packets=f[5],
                octets=f[6],
                first=f[7],
                last=f[8],
                src_port=f[9],
                dst_port=f[10],
                tcp_flags=f[11],
                protocol=f[12],
                tos=f[13],
                src_as=f[14],
                dst_as=f[15],
                src_mask=f[16],
                dst_mask=f[17],
            )
        )
    return header, records


def encode_v5_datagram(header: NetFlowV5Header, records) -> bytes:
    """Inverse of parse_v5_datagram (padding bytes written as zero)."""
    parts = [
        HEADER_STRUCT.pack(
            header.version,
            header.count,
            header.sys_uptime,
            header.unix_secs,
            header.unix_nsecs,
            header.flow_sequence,
            header.engine_type,
            header.engine_id,
            header.sampling_interval,
        )
    ]
    for r in records:
        parts.append(
            RECORD_STRUCT.pack(
                int(r.src_addr),
                int(r.dst_addr),
                int(r.next_hop),
                r.input_if,
                r.output_if,
                r.packets,
                r.octets,
                r.first,
                r.last,
                r.src_port,
                r.dst_port,
                r.tcp_flags,
                r.protocol,
                r.tos,
                r.src_as,
                r.dst_as,
                r.src_mask,
                r.dst_mask,
            )
        )
    return b"".join(parts)


def parse_datagram_stream(data: bytes):
    """Parse a buffer of back-to-back datagrams (e.g. a capture file).

    Returns (datagrams, errors): datagrams as (header, records) pairs,
    errors as the parse exceptions hit.  After an error the rest of the
    buffer is skipped (the v5 format carries no resync marker).
    """
    datagrams, errors = [], []
    offset = 0
    while offset < len(data):
        chunk = data[offset:]
        if len(chunk) >= 4:
            version, count = struct.unpack("!HH", chunk[:4])
            if version == 5 and 1 <= count <= MAX_RECORDS:
                chunk = chunk[: HEADER_LEN + RECORD_LEN * count]
        try:
            datagrams.append(parse_v5_datagram(chunk))
        except (BadVersion, BadCount, TruncatedDatagram) as exc:
            exc.offset += offset
            errors.append(exc)
            break
        offset += len(chunk)
    return datagrams, errors


def to_absolute_time(header: NetFlowV5Header, record: NetFlowV5Record):
    """Map the record's uptime-relative first/last to epoch seconds."""
    boot_epoch = header.unix_secs + header.unix_nsecs * 1e-9 - header.sys_uptime / 1000.0
    first = boot_epoch + record.first / 1000.0
    last = boot_epoch + record.last / 1000.0
    if first < 0 or last < 0:
        raise ClockInconsistent(
            f"absolute flow times ({first:.3f}, {last:.3f}) are negative; "
            "header uptime exceeds its own epoch timestamp"
        )
    return first, last


@dataclass(frozen=True)
class TimedFlow:
    """A flow record resolved to absolute time, ready for aggregation."""

    first: float           # epoch seconds
    last: float
    octets: int
    input_if: int = 0
    output_if: int = 0


def resolve_record(header: NetFlowV5Header, record: NetFlowV5Record) -> TimedFlow:
    first, last = to_absolute_time(header, record)
    return TimedFlow(
        first=first,
        last=last,
        octets=record.octets,
        input_if=record.input_if,
        output_if=record.output_if,
    )


class Direction(enum.Enum):
    INPUT = "Input"
    OUTPUT = "Output"
    BOTH = "Both"


@dataclass(frozen=True)
class IngestConfig:
    link_capacity: float                  # bits/s
    interval: float = 1800.0              # seconds between samples
    interface_filter: frozenset | None = None
    direction: Direction = Direction.BOTH

    def __post_init__(self):
        if self.interval <= 0:
            raise InvalidConfig("interval must be > 0")
        if self.link_capacity <= 0:
            raise InvalidConfig("link_capacity must be > 0")


def _matches(flow: TimedFlow, config: IngestConfig) -> bool:
    if config.interface_filter is None:
        return True
    fil = config.interface_filter
    if config.direction is Direction.INPUT:
        return flow.input_if in fil
    if config.direction is Direction.OUTPUT:
        return flow.output_if in fil
    return flow.input_if in fil or flow.output_if in fil


def _intervals_of(flow: TimedFlow, width: float):
    k0 = int(math.floor(flow.first / width))
    k1 = int(math.floor(flow.last / width))
    return k0, k1


def _prorate(flow: TimedFlow, width: float):
    """Yield (interval index, octet share); shares sum to flow.octets exactly."""
    k0, k1 = _intervals_of(flow, width)
    span = flow.last - flow.first
    if span <= 0 or k0 == k1:
        yield k0, float(flow.octets)
        return
    assigned = 0.0
    for k in range(k0, k1):
        overlap = min(flow.last, (k + 1) * width) - max(flow.first, k * width)
        share = flow.octets * overlap / span
        assigned += share
        yield k, share
    yield k1, flow.octets - assigned  # remainder keeps the total exact


def aggregate(flows, config: IngestConfig) -> list:
    """Fold time-resolved flow records into periodic LinkSamples.

    One sample per interval over the contiguous covered range; a flow is
    active in every interval its [first, last] span overlaps.
    """
    octets = {}
    active = {}
    for flow in flows:
        if not _matches(flow, config):
            continue
        k0, k1 = _intervals_of(flow, config.interval)
        for k in range(k0, k1 + 1):
            active[k] = active.get(k, 0) + 1
        for k, share in _prorate(flow, config.interval):
            octets[k] = octets.get(k, 0.0) + share
    if not active:
        return []
    lo, hi = min(active), max(active)
    scale = 100.0 * 8.0 / (config.interval * config.link_capacity)
    return [
        LinkSample(
            timestamp=k * config.interval,
            utilization=octets.get(k, 0.0) * scale,
            active_flows=active.get(k, 0),
        )
        for k in range(lo, hi + 1)
    ]


class StreamingAggregator:
    """Single-consumer streaming variant of :func:`aggregate`.

    Intervals are emitted once the stream has advanced past them by the
    lateness allowance (whole intervals, default 1); records targeting an
    already-emitted interval are dropped and counted.
    """

    def __init__(self, config: IngestConfig, lateness_intervals: int = 1):
        self.config = config
        self.lateness_intervals = max(0, int(lateness_intervals))
        self._octets = {}
        self._active = {}
        self._emitted_through = None  # highest interval index already emitted
        self._max_start = None        # newest record-start interval seen
        self.dropped_late = 0

    def _emit(self, k: int) -> LinkSample:
        scale = 100.0 * 8.0 / (self.config.interval * self.config.link_capacity)
        return LinkSample(
            timestamp=k * self.config.interval,
            utilization=self._octets.pop(k, 0.0) * scale,
            active_flows=self._active.pop(k, 0),
        )

    def add(self, flow: TimedFlow) -> list:
        """Fold one record in; returns any samples that became final."""
        if not _matches(flow, self.config):
            return []
        k0, k1 = _intervals_of(flow, self.config.interval)
        if self._emitted_through is not None and k0 <= self._emitted_through:
            self.dropped_late += 1
            return []
        for k in range(k0, k1 + 1):
            self._active[k] = self._active.get(k, 0) + 1
        for k, share in _prorate(flow, self.config.interval):
            self._octets[k] = self._octets.get(k, 0.0) + share
        out = []
        self._max_start = k0 if self._max_start is None else max(self._max_start, k0)
        # an interval is final once the stream's record starts have moved
        # past it by the lateness allowance
        cutoff = self._max_start - self.lateness_intervals - 1
        start = min(self._active) if self._emitted_through is None else self._emitted_through + 1
        for k in range(start, cutoff + 1):
            out.append(self._emit(k))
            self._emitted_through = k
        return out

    def flush(self) -> list:
        """Emit every pending interval (end of stream)."""
        if not self._active:
            return []
        start = min(self._active) if self._emitted_through is None else self._emitted_through + 1
        end = max(self._active)
        out = [self._emit(k) for k in range(start, end + 1)]
        self._emitted_through = end
        return out


def collect_udp(host: str, port: int, *, max_datagrams=None, timeout=None):
    """Yield raw datagrams from a UDP socket until count/timeout runs out."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind((host, port))
    if timeout is not None:
        sock.settimeout(timeout)
    received = 0
    try:
        while max_datagrams is None or received < max_datagrams:
            try:
                data, _addr = sock.recvfrom(65535)
            except socket.timeout:
                return
            received += 1
            yield data
    finally:
        sock.close()


# --- shared CSV sample format -------------------------------------------


def write_samples_csv(samples, path) -> None:
    """Schema: `timestamp,utilization_percent,active_flows`, one row per
    sample; integer epoch-second timestamps, utilization with 6 fractional
    digits."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for s in samples:
            fh.write(f"{int(round(s.timestamp))},{s.utilization:.6f},{s.active_flows}\n")


def read_samples_csv(path) -> list:
    """Read the shared sample CSV; rows returned in timestamp order.

    Raises MalformedRow (with line number) on schema violations; merely
    out-of-order timestamps are warned about and sorted.
    """
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise MalformedRow("missing header line", 1)
        if [c.strip() for c in head] != CSV_HEADER.split(","):
            raise MalformedRow(f"bad header {','.join(head)!r}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"expected 3 fields, got {len(row)}", lineno)
            try:
                ts = int(row[0])
                util = float(row[1])
                flows = int(row[2])
            except ValueError as exc:
                raise MalformedRow(str(exc), lineno)
            if util < 0:
                raise MalformedRow(f"utilization {util} is negative", lineno)
            if flows < 0:
                raise MalformedRow(f"active_flows {flows} is negative", lineno)
            samples.append(LinkSample(float(ts), util, flows))
    if any(b.timestamp <= a.timestamp for a, b in zip(samples, samples[1:])):
        log.warning("non-monotonic timestamps in %s; sorting on read", path)
        samples.sort(key=lambda s: s.timestamp)
    return samples
