import ipaddress
import socket
import struct
import threading

import numpy as np
import pytest

from flowlink import netflow as nf
from flowlink.errors import (
    BadCount,
    BadVersion,
    ClockInconsistent,
    MalformedRow,
    TruncatedDatagram,
)
from flowlink.simulator import LinkSample


def make_header(count, sys_uptime=100000, unix_secs=1_600_000_000, unix_nsecs=0,
                flow_sequence=1, sampling_interval=0):
    return nf.NetFlowV5Header(
        version=5,
        count=count,
        sys_uptime=sys_uptime,
        unix_secs=unix_secs,
        unix_nsecs=unix_nsecs,
        flow_sequence=flow_sequence,
        engine_type=0,
        engine_id=0,
        sampling_interval=sampling_interval,
    )


def make_record(octets=1500, first=1000, last=2000, input_if=1, output_if=2, packets=3):
    return nf.NetFlowV5Record(
        src_addr=ipaddress.IPv4Address("10.0.0.1"),
        dst_addr=ipaddress.IPv4Address("192.168.1.2"),
        next_hop=ipaddress.IPv4Address("10.0.0.254"),
        input_if=input_if,
        output_if=output_if,
        packets=packets,
        octets=octets,
        first=first,
        last=last,
        src_port=40000,
        dst_port=80,
        tcp_flags=0x1B,
        protocol=6,
        tos=0,
        src_as=64500,
        dst_as=64501,
        src_mask=24,
        dst_mask=24,
    )


def random_datagram(rng):
    count = int(rng.integers(1, 31))
    header = make_header(
        count,
        sys_uptime=int(rng.integers(0, 2**31)),
        unix_secs=int(rng.integers(0, 2**31)),
        unix_nsecs=int(rng.integers(0, 10**9)),
        flow_sequence=int(rng.integers(0, 2**32)),
        sampling_interval=int(rng.integers(0, 2**16)),
    )
    records = []
    for _ in range(count):
        first = int(rng.integers(0, 2**31))
        records.append(
            nf.NetFlowV5Record(
                src_addr=ipaddress.IPv4Address(int(rng.integers(0, 2**32))),
                dst_addr=ipaddress.IPv4Address(int(rng.integers(0, 2**32))),
                next_hop=ipaddress.IPv4Address(int(rng.integers(0, 2**32))),
                input_if=int(rng.integers(0, 2**16)),
                output_if=int(rng.integers(0, 2**16)),
                packets=int(rng.integers(1, 2**20)),
                octets=int(rng.integers(1, 2**30)),
                first=first,
                last=first + int(rng.integers(0, 2**20)),
                src_port=int(rng.integers(0, 2**16)),
                dst_port=int(rng.integers(0, 2**16)),
                tcp_flags=int(rng.integers(0, 2**8)),
                protocol=int(rng.integers(0, 2**8)),
                tos=int(rng.integers(0, 2**8)),
                src_as=int(rng.integers(0, 2**16)),
                dst_as=int(rng.integers(0, 2**16)),
                src_mask=int(rng.integers(0, 33)),
                dst_mask=int(rng.integers(0, 33)),
            )
        )
    return header, records


class TestDatagramParsing:
    def test_hand_assembled_datagram(self):
        header = make_header(1)
        record = make_record(octets=1500, first=1000, last=2000)
        data = nf.encode_v5_datagram(header, [record])
        assert len(data) == 72
        h, recs = nf.parse_v5_datagram(data)
        assert h == header
        assert recs == [record]
        assert nf.encode_v5_datagram(h, recs) == data

    def test_count_zero_rejected(self):
        data = nf.encode_v5_datagram(make_header(1), [make_record()])
        bad = data[:2] + struct.pack("!H", 0) + data[4:24]
        with pytest.raises(BadCount) as exc:
            nf.parse_v5_datagram(bad)
        assert exc.value.offset == 2

    def test_v9_rejected(self):
        data = struct.pack("!HH", 9, 1) + bytes(20)
        with pytest.raises(BadVersion) as exc:
            nf.parse_v5_datagram(data)
        assert exc.value.offset == 0

    def test_length_mismatch_rejected(self):
        data = nf.encode_v5_datagram(make_header(2), [make_record(), make_record()])
        with pytest.raises(TruncatedDatagram):
            nf.parse_v5_datagram(data[:-10])
        with pytest.raises(TruncatedDatagram):
            nf.parse_v5_datagram(data + b"\x00")

    def test_round_trip_randomized(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            header, records = random_datagram(rng)
            data = nf.encode_v5_datagram(header, records)
            h, recs = nf.parse_v5_datagram(data)
            assert nf.encode_v5_datagram(h, recs) == data

    def test_stream_parsing_with_trailing_garbage(self):
        good = [nf.encode_v5_datagram(*random_datagram(np.random.default_rng(i)))
                for i in range(5)]
        blob = b"".join(good) + struct.pack("!HH", 9, 1) + bytes(20)
        datagrams, errors = nf.parse_datagram_stream(blob)
        assert len(datagrams) == 5
        assert len(errors) == 1
        assert isinstance(errors[0], BadVersion)
        assert errors[0].offset == len(b"".join(good))


class TestAbsoluteTime:
    def test_arithmetic(self):
        header = make_header(1, sys_uptime=5000, unix_secs=1_000_000, unix_nsecs=0)
        record = make_record(first=3000, last=4000)
        assert nf.to_absolute_time(header, record) == (999998.0, 999999.0)

    def test_zero_age_flow_maps_to_header_time(self):
        header = make_header(1, sys_uptime=5000, unix_secs=1_000_000)
        record = make_record(first=5000, last=5000)
        first, last = nf.to_absolute_time(header, record)
        assert first == last == 1_000_000.0

    def test_clock_inconsistent(self):
        header = make_header(1, sys_uptime=10_000_000, unix_secs=5)
        record = make_record(first=0, last=1)
        with pytest.raises(ClockInconsistent):
            nf.to_absolute_time(header, record)


CFG_1M = nf.IngestConfig(link_capacity=1e6, interval=30.0)


class TestAggregate:
    def test_single_interval_utilization(self):
        # 1875000 octets over one 30 s interval on a 1 Mbit/s link -> 50%
        flow = nf.TimedFlow(first=60.0, last=90.0 - 1e-9, octets=1_875_000)
        [sample] = nf.aggregate([flow], CFG_1M)
        assert sample.utilization == pytest.approx(50.0)
        assert sample.active_flows == 1
        assert sample.timestamp == 60.0

    def test_even_split_across_two_intervals(self):
        flow = nf.TimedFlow(first=30.0, last=90.0, octets=1000)
        samples = nf.aggregate([flow], CFG_1M)
        # overlaps [30,60), [60,90) evenly, plus the instant at 90
        assert [s.active_flows for s in samples] == [1, 1, 1]
        assert samples[0].utilization == pytest.approx(samples[1].utilization)

    def test_empty_stream(self):
        assert nf.aggregate([], CFG_1M) == []

    def test_zero_span_record_lands_in_containing_interval(self):
        flow = nf.TimedFlow(first=45.0, last=45.0, octets=300)
        [sample] = nf.aggregate([flow], CFG_1M)
        assert sample.timestamp == 30.0
        assert sample.utilization == pytest.approx(100 * 8 * 300 / (30 * 1e6))

    def test_interface_filter_direction(self):
        flows = [
            nf.TimedFlow(0.0, 10.0, 100, input_if=1, output_if=2),
            nf.TimedFlow(0.0, 10.0, 100, input_if=3, output_if=4),
        ]
        cfg_in = nf.IngestConfig(1e6, 30.0, frozenset({1}), nf.Direction.INPUT)
        cfg_out = nf.IngestConfig(1e6, 30.0, frozenset({2}), nf.Direction.OUTPUT)
        cfg_both = nf.IngestConfig(1e6, 30.0, frozenset({2, 3}), nf.Direction.BOTH)
        assert nf.aggregate(flows, cfg_in)[0].active_flows == 1
        assert nf.aggregate(flows, cfg_out)[0].active_flows == 1
        assert nf.aggregate(flows, cfg_both)[0].active_flows == 2

    def test_octet_conservation_randomized(self):
        rng = np.random.default_rng(23)
        for width in (7.0, 30.0, 1800.0):
            cfg = nf.IngestConfig(link_capacity=1e6, interval=width)
            flows = []
            for _ in range(200):
                first = float(rng.uniform(0, 10000))
                flows.append(
                    nf.TimedFlow(
                        first=first,
                        last=first + float(rng.uniform(0, 5000)),
                        octets=int(rng.integers(1, 10**7)),
                    )
                )
            samples = nf.aggregate(flows, cfg)
            total = sum(s.utilization * width * 1e6 / (100 * 8) for s in samples)
            assert total == pytest.approx(sum(f.octets for f in flows), rel=1e-9)

    def test_interval_refinement_consistency(self):
        rng = np.random.default_rng(31)
        flows = [
            nf.TimedFlow(float(rng.uniform(0, 1000)), float(rng.uniform(1000, 2000)),
                         int(rng.integers(1, 10**6)))
            for _ in range(50)
        ]
        coarse = nf.aggregate(flows, nf.IngestConfig(1e6, 100.0))
        fine = nf.aggregate(flows, nf.IngestConfig(1e6, 50.0))
        fine_by_k = {s.timestamp: s.utilization * 50.0 for s in fine}
        for s in coarse:
            merged = fine_by_k.get(s.timestamp, 0.0) + fine_by_k.get(s.timestamp + 50.0, 0.0)
            assert merged == pytest.approx(s.utilization * 100.0, rel=1e-9)

    def test_activity_monotone_in_interval_width(self):
        rng = np.random.default_rng(37)
        flows = [
            nf.TimedFlow(float(rng.uniform(0, 500)), float(rng.uniform(500, 900)),
                         int(rng.integers(1, 1000)))
            for _ in range(40)
        ]
        narrow = nf.aggregate(flows, nf.IngestConfig(1e6, 100.0))
        wide = nf.aggregate(flows, nf.IngestConfig(1e6, 300.0))
        # every wide interval contains three narrow ones; its count cannot be
        # smaller than any contained narrow count
        for w in wide:
            contained = [
                s.active_flows
                for s in narrow
                if w.timestamp <= s.timestamp < w.timestamp + 300.0
            ]
            assert contained and w.active_flows >= max(contained)


class TestStreamingAggregator:
    def test_matches_batch_on_ordered_stream(self):
        rng = np.random.default_rng(41)
        flows = sorted(
            (
                nf.TimedFlow(float(rng.uniform(0, 2000)),
                             float(rng.uniform(0, 100)) + float(rng.uniform(0, 2000)),
                             int(rng.integers(1, 1000)))
                for _ in range(100)
            ),
            key=lambda f: f.first,
        )
        flows = [nf.TimedFlow(f.first, max(f.first, f.last), f.octets) for f in flows]
        agg = nf.StreamingAggregator(nf.IngestConfig(1e6, 100.0))
        streamed = []
        for f in flows:
            streamed.extend(agg.add(f))
        streamed.extend(agg.flush())
        batch = nf.aggregate(flows, nf.IngestConfig(1e6, 100.0))
        by_ts = {s.timestamp: s for s in batch}
        for s in streamed:
            ref = by_ts.get(s.timestamp, LinkSample(s.timestamp, 0.0, 0))
            assert s.active_flows == ref.active_flows
            assert s.utilization == pytest.approx(ref.utilization)

    def test_late_records_dropped_beyond_allowance(self):
        agg = nf.StreamingAggregator(nf.IngestConfig(1e6, 10.0), lateness_intervals=1)
        assert agg.add(nf.TimedFlow(5.0, 6.0, 10)) == []
        emitted = agg.add(nf.TimedFlow(95.0, 96.0, 10))  # advances far ahead
        assert emitted  # old intervals became final
        assert agg.dropped_late == 0
        assert agg.add(nf.TimedFlow(6.0, 7.0, 10)) == []  # targets emitted interval
        assert agg.dropped_late == 1


class TestSamplesCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        samples = [
            LinkSample(
                float(i * 1800),
                round(float(rng.uniform(0, 100)), 6),
                int(rng.integers(0, 5000)),
            )
            for i in range(1000)
        ]
        path = tmp_path / "samples.csv"
        nf.write_samples_csv(samples, path)
        assert nf.read_samples_csv(path) == samples

    def test_negative_utilization_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(nf.CSV_HEADER + "\n100,-3.0,5\n")
        with pytest.raises(MalformedRow) as exc:
            nf.read_samples_csv(path)
        assert exc.value.line_number == 2

    def test_header_only_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(nf.CSV_HEADER + "\n")
        assert nf.read_samples_csv(path) == []

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,util,count\n1,2,3\n")
        with pytest.raises(MalformedRow):
            nf.read_samples_csv(path)

    def test_out_of_order_sorted_with_warning(self, tmp_path, caplog):
        path = tmp_path / "unsorted.csv"
        path.write_text(nf.CSV_HEADER + "\n200,1.000000,2\n100,2.000000,3\n")
        with caplog.at_level("WARNING"):
            samples = nf.read_samples_csv(path)
        assert [s.timestamp for s in samples] == [100.0, 200.0]
        assert any("non-monotonic" in r.message for r in caplog.records)


class TestUdpCollection:
    def test_localhost_datagrams_received(self):
        port = 19955
        payloads = [
            nf.encode_v5_datagram(*random_datagram(np.random.default_rng(i)))
            for i in range(3)
        ]

        def send():
            s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            for p in payloads:
                s.sendto(p, ("127.0.0.1", port))
            s.close()

        collector = nf.collect_udp("127.0.0.1", port, max_datagrams=3, timeout=5.0)
        t = threading.Timer(0.2, send)
        t.start()
        received = list(collector)
        t.join()
        assert received == payloads
