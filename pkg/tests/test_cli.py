import json

import numpy as np
import pytest

from flowlink import netflow as nf
from flowlink.cli import main

from conftest import two_regime_samples
from test_netflow import make_header, make_record, random_datagram

BASE_CONFIG = """
# deterministic traffic on an unconstrained link
model.lambda = 10
model.size.family = Deterministic
model.size.params = 20000
model.duration.family = Deterministic
model.duration.params = 2
sim.mode = Unconstrained
sim.horizon = 200
sim.seed = 42
sim.sample_interval = 0.5
sim.warmup = 20
"""

PS_CONFIG = """
model.lambda = 10
model.size.family = Deterministic
model.size.params = 20000
model.duration.family = Deterministic
model.duration.params = 2
sim.mode = ProcessorSharing
sim.horizon = 300
sim.seed = 7
sim.capacity = 1e6
sim.peak_rate = 1e4
sim.sample_interval = 0.5
sim.warmup = 50
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "sim.conf"
    path.write_text(BASE_CONFIG)
    return path


@pytest.fixture
def ps_config_file(tmp_path):
    path = tmp_path / "ps.conf"
    path.write_text(PS_CONFIG)
    return path


class TestSimulate:
    def test_happy_path_writes_three_files(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
        assert (out / "samples.csv").exists()
        assert (out / "metadata.txt").exists()
        assert (out / "moments.json").exists()
        moments = json.loads((out / "moments.json").read_text())
        assert moments["mean_rate"]["theoretical"] == pytest.approx(200000.0)
        assert moments["mean_rate"]["relative_error"] < 0.1

    def test_negative_lambda_exits_2_naming_key(self, config_file, tmp_path, capsys):
        rc = main(
            [
                "simulate",
                "--config",
                str(config_file),
                "--set",
                "model.lambda=-1",
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc == 2
        assert "lambda" in capsys.readouterr().err

    def test_exponential_durations_exit_3(self, config_file, tmp_path, capsys):
        rc = main(
            [
                "simulate",
                "--config",
                str(config_file),
                "--set",
                "model.duration.family=Exponential",
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc == 3

    def test_samples_csv_readable_by_shared_reader(self, config_file, tmp_path):
        out = tmp_path / "out"
        main(["simulate", "--config", str(config_file), "--out", str(out)])
        samples = nf.read_samples_csv(out / "samples.csv")
        assert len(samples) > 100


class TestSweep:
    def test_points_csv_feeds_analyze(self, ps_config_file, tmp_path):
        out = tmp_path / "sweep"
        rc = main(
            [
                "sweep",
                "--config",
                str(ps_config_file),
                "--lambdas",
                "5,10,15,20,30,40,55,75",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        samples = nf.read_samples_csv(out / "sweep.csv")
        assert len(samples) == 8
        utils = [s.utilization for s in samples]
        assert all(b >= a - 1e-6 for a, b in zip(utils, utils[1:]))

    def test_single_lambda(self, ps_config_file, tmp_path):
        out = tmp_path / "one"
        assert (
            main(["sweep", "--config", str(ps_config_file), "--lambdas", "10",
                  "--out", str(out)])
            == 0
        )
        assert len(nf.read_samples_csv(out / "sweep.csv")) == 1

    def test_missing_capacity_exits_2(self, config_file, tmp_path):
        rc = main(
            [
                "sweep",
                "--config",
                str(config_file),
                "--set",
                "sim.mode=ProcessorSharing",
                "--lambdas",
                "10",
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc == 2


def datagram_file(path, n, seed=0, bad_tail=False):
    rng = np.random.default_rng(seed)
    blobs = []
    for i in range(n):
        header = make_header(1, sys_uptime=1000, unix_secs=1_600_000_000 + i * 60)
        record = make_record(octets=int(rng.integers(1000, 10**6)),
                             first=500, last=900)
        blobs.append(nf.encode_v5_datagram(header, [record]))
    data = b"".join(blobs)
    if bad_tail:
        data += blobs[0][:40]  # truncated datagram at the end
    path.write_bytes(data)
    return path


class TestIngest:
    def test_valid_datagram_file(self, tmp_path, capsys):
        f = datagram_file(tmp_path / "flows.bin", 100)
        out = tmp_path / "out"
        rc = main(
            ["ingest", "--from", str(f), "--capacity", "1e6",
             "--interval", "1800", "--out", str(out)]
        )
        assert rc == 0
        assert "100 datagrams" in capsys.readouterr().out
        assert nf.read_samples_csv(out / "samples.csv")

    def test_truncated_datagram_counted_not_fatal(self, tmp_path, capsys):
        f = datagram_file(tmp_path / "flows.bin", 10, bad_tail=True)
        out = tmp_path / "out"
        rc = main(
            ["ingest", "--from", str(f), "--capacity", "1e6",
             "--interval", "1800", "--out", str(out)]
        )
        assert rc == 0
        assert "1 parse errors" in capsys.readouterr().out

    def test_missing_input_exits_2(self, tmp_path):
        rc = main(
            ["ingest", "--from", str(tmp_path / "nope.bin"), "--capacity", "1e6",
             "--interval", "1800", "--out", str(tmp_path / "o")]
        )
        assert rc == 2


class TestAnalyze:
    def test_knee_verdict(self, tmp_path, capsys):
        path = tmp_path / "samples.csv"
        nf.write_samples_csv(two_regime_samples(seed=0), path)
        out = tmp_path / "out"
        rc = main(
            ["analyze", "--samples", str(path),
             "--set", "analyzer.saturation_quantile=0.6", "--out", str(out)]
        )
        assert rc == 0
        verdict = capsys.readouterr().out
        assert "knee at" in verdict
        report = json.loads((out / "report.json").read_text())
        assert report["knee_flows"] == pytest.approx(2500, rel=0.05)
        assert report["knee_utilization_percent"] == pytest.approx(45, rel=0.05)
        assert (out / "samples_labeled.csv").exists()
        assert (out / "fitted_lines.csv").exists()

    def test_underload_verdict(self, tmp_path, capsys):
        path = tmp_path / "samples.csv"
        samples = [
            nf.LinkSample(float(i), 0.02 * n, n)
            for i, n in enumerate(range(10, 260, 25))
        ]
        nf.write_samples_csv(samples, path)
        rc = main(["analyze", "--samples", str(path), "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "working area not exceeded" in capsys.readouterr().out

    def test_two_rows_exit_4(self, tmp_path, capsys):
        path = tmp_path / "samples.csv"
        path.write_text(nf.CSV_HEADER + "\n0,1.000000,10\n1,2.000000,20\n")
        rc = main(["analyze", "--samples", str(path), "--out", str(tmp_path / "o")])
        assert rc == 4
        assert "InsufficientWorkingData" in capsys.readouterr().err


class TestPipeline:
    def test_end_to_end_determinism(self, ps_config_file, tmp_path):
        reports = []
        for run in ("a", "b"):
            sweep_dir = tmp_path / f"sweep_{run}"
            main(
                ["sweep", "--config", str(ps_config_file), "--lambdas",
                 "5,10,15,20,25,30,40,55,75,90", "--out", str(sweep_dir)]
            )
            out = tmp_path / f"report_{run}"
            rc = main(
                ["analyze", "--samples", str(sweep_dir / "sweep.csv"),
                 "--set", "analyzer.saturation_quantile=0.5",
                 "--set", "analyzer.min_working_samples=3",
                 "--out", str(out)]
            )
            assert rc == 0
            reports.append((out / "report.json").read_bytes())
        assert reports[0] == reports[1]
