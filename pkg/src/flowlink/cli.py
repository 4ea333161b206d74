"""Command-line entry point: simulate, sweep, ingest, analyze.

Configs are flat key=value text files with dotted keys (model.lambda,
sim.capacity, analyzer.working_util_threshold); `--set k=v` overrides win
over file values.  Exit codes are stable for scripting: 0 ok, 2 config
error, 3 undefined moment, 4 fit failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import analyzer as az
from . import netflow as nf
from . import simulator as sim
from . import traffic_model as tm
from .errors import (
    FitError,
    FlowlinkError,
    InvalidConfig,
    InvalidParameters,
    MalformedRow,
    UndefinedMoment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENT = 3
EXIT_FIT = 4


class ConfigError(Exception):
    pass


def _read_config(path) -> dict:
    items = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        items[key.strip()] = value.strip()
    return items


def _apply_overrides(items: dict, overrides) -> dict:
    out = dict(items)
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"--set expects key=value, got {ov!r}")
        key, _, value = ov.partition("=")
        out[key.strip()] = value.strip()
    return out


def _subset(items: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in items.items() if k.startswith(prefix + ".")}


def _build_model(items: dict) -> tm.TrafficModel:
    model_items = _subset(items, "model")
    if not model_items:
        raise ConfigError("config defines no model.* keys")
    return tm.TrafficModel.from_config(model_items)


def _build_sim_config(items: dict, model: tm.TrafficModel) -> sim.SimulationConfig:
    s = _subset(items, "sim")

    def fnum(key, default=None):
        if key not in s:
            if default is None:
                raise ConfigError(f"missing key: sim.{key}")
            return default
        try:
            return float(s[key])
        except ValueError:
            raise ConfigError(f"sim.{key}: not a number: {s[key]!r}")

    mode_name = s.get("mode", "Unconstrained")
    try:
        mode = sim.Mode(mode_name)
    except ValueError:
        raise ConfigError(f"sim.mode: unknown mode {mode_name!r}")
    capacity = fnum("capacity", 0.0) or None
    peak = fnum("peak_rate", 0.0) or None
    warmup = fnum("warmup", -1.0)
    return sim.SimulationConfig(
        model=model,
        horizon=fnum("horizon"),
        seed=int(fnum("seed", 0.0)),
        mode=mode,
        link_capacity=capacity,
        per_flow_peak_rate=peak,
        sample_interval=fnum("sample_interval", 1.0),
        warmup=None if warmup < 0 else warmup,
    )


def _build_analyzer_config(items: dict) -> az.AnalyzerConfig:
    a = _subset(items, "analyzer")
    kwargs = {}
    numeric = {
        "working_util_threshold": float,
        "saturation_quantile": float,
        "working_ratio_floor": float,
        "moderate_ratio_floor": float,
        "min_working_samples": int,
        "min_saturation_samples": int,
    }
    for key, value in a.items():
        if key == "least_squares_working_line":
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif key in numeric:
            try:
                kwargs[key] = numeric[key](value)
            except ValueError:
                raise ConfigError(f"analyzer.{key}: not a number: {value!r}")
        else:
            raise ConfigError(f"unknown analyzer key: analyzer.{key}")
    try:
        return az.AnalyzerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _write_metadata(path, items: dict, extra: dict) -> None:
    with open(path, "w") as fh:
        for k in sorted(items):
            fh.write(f"{k}={items[k]}\n")
        for k in sorted(extra):
            fh.write(f"{k}={extra[k]}\n")


def _rel_err(emp, theory):
    return abs(emp - theory) / abs(theory) if theory else abs(emp)


def run_simulate(args) -> int:
    items = _apply_overrides(_read_config(args.config), args.set)
    model = _build_model(items)
    config = _build_sim_config(items, model)
    try:
        theory = tm.theoretical_moments(model)
    except UndefinedMoment as exc:
        print(f"error: divergent moment: {exc}", file=sys.stderr)
        return EXIT_DIVERGENT
    result = sim.simulate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nf.write_samples_csv(result.samples, out / "samples.csv")
    _write_metadata(out / "metadata.txt", items, {"resolved.warmup": config.warmup})
    comparison = {
        "mean_rate": {
            "theoretical": theory.mean_rate,
            "empirical": result.empirical_mean_rate,
            "relative_error": _rel_err(result.empirical_mean_rate, theory.mean_rate),
        },
        "rate_variance": {
            "theoretical": theory.rate_variance,
            "empirical": result.empirical_rate_variance,
            "relative_error": _rel_err(
                result.empirical_rate_variance, theory.rate_variance
            ),
            "batch_means_ci": list(result.rate_variance_ci),
        },
        "mean_active_flows": {
            "theoretical": theory.mean_active_flows,
            "empirical": result.empirical_mean_active,
            "relative_error": _rel_err(
                result.empirical_mean_active, theory.mean_active_flows
            ),
        },
    }
    with open(out / "moments.json", "w") as fh:
        json.dump(comparison, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"simulated {len(result.samples)} samples, "
        f"{len(result.completed_flows)} completed flows -> {out}"
    )
    return EXIT_OK


def run_sweep(args) -> int:
    items = _apply_overrides(_read_config(args.config), args.set)
    model = _build_model(items)
    config = _build_sim_config(items, model)
    if config.mode is not sim.Mode.PROCESSOR_SHARING:
        raise ConfigError("sweep requires sim.mode=ProcessorSharing")
    try:
        lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--lambdas: bad number list {args.lambdas!r}")
    points = sim.load_sweep(config, lambdas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = [
        sim.LinkSample(timestamp=i, utilization=u, active_flows=int(round(n)))
        for i, (u, n) in enumerate(points)
    ]
    nf.write_samples_csv(samples, out / "sweep.csv")
    _write_metadata(out / "metadata.txt", items, {"sweep.lambdas": args.lambdas})
    print(f"swept {len(points)} load points -> {out / 'sweep.csv'}")
    return EXIT_OK


def run_ingest(args) -> int:
    if not args.listen and not args.from_files:
        raise ConfigError("ingest needs --listen or --from")
    config = nf.IngestConfig(link_capacity=args.capacity, interval=args.interval)
    n_datagrams = n_records = n_errors = 0
    flows = []

    def consume(datagrams, errors):
        nonlocal n_datagrams, n_records, n_errors
        n_errors += len(errors)
        for header, records in datagrams:
            n_datagrams += 1
            for rec in records:
                try:
                    flows.append(nf.resolve_record(header, rec))
                    n_records += 1
                except FlowlinkError:
                    n_errors += 1

    if args.from_files:
        for path in args.from_files:
            try:
                data = Path(path).read_bytes()
            except OSError as exc:
                raise ConfigError(f"cannot read {path}: {exc}")
            consume(*nf.parse_datagram_stream(data))
    else:
        host, _, port = args.listen.rpartition(":")
        try:
            port = int(port)
        except ValueError:
            raise ConfigError(f"--listen: bad port in {args.listen!r}")
        for dgram in nf.collect_udp(
            host or "0.0.0.0", port, max_datagrams=args.max_datagrams, timeout=args.timeout
        ):
            try:
                consume([nf.parse_v5_datagram(dgram)], [])
            except FlowlinkError:
                n_errors += 1

    samples = nf.aggregate(flows, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nf.write_samples_csv(samples, out / "samples.csv")
    print(
        f"ingested {n_datagrams} datagrams, {n_records} records, "
        f"{n_errors} parse errors; {len(samples)} samples -> {out / 'samples.csv'}"
    )
    return EXIT_OK


def run_analyze(args) -> int:
    items = _apply_overrides({}, args.set)
    config = _build_analyzer_config(items)
    try:
        samples = nf.read_samples_csv(args.samples)
    except OSError as exc:
        print(f"error: cannot read samples: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MalformedRow as exc:
        print(f"error: malformed samples file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = az.analyze(samples, config)
    except FitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FIT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    az.write_report_json(report, out / "report.json")
    az.write_plot_data(
        samples, report, out / "samples_labeled.csv", out / "fitted_lines.csv"
    )
    if report.knee_flows is None:
        print("working area not exceeded")
    else:
        print(
            f"knee at {report.knee_flows:.0f} flows, "
            f"{report.knee_utilization:.1f}% utilization"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flowlink",
        description="Flow-level link capacity analysis: simulate, sweep, ingest, analyze.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run one simulation and compare moments")
    ps.add_argument("--config", required=True)
    ps.add_argument("--set", action="append", metavar="KEY=VALUE")
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=run_simulate)

    pw = sub.add_parser("sweep", help="processor-sharing load sweep over lambda values")
    pw.add_argument("--config", required=True)
    pw.add_argument("--lambdas", required=True, metavar="CSV-LIST")
    pw.add_argument("--set", action="append", metavar="KEY=VALUE")
    pw.add_argument("--out", required=True)
    pw.set_defaults(func=run_sweep)

    pi = sub.add_parser("ingest", help="turn NetFlow v5 datagrams into link samples")
    src = pi.add_mutually_exclusive_group(required=True)
    src.add_argument("--listen", metavar="ADDR:PORT")
    src.add_argument("--from", dest="from_files", nargs="+", metavar="FILE")
    pi.add_argument("--capacity", type=float, required=True, metavar="BITS")
    pi.add_argument("--interval", type=float, required=True, metavar="SECONDS")
    pi.add_argument("--max-datagrams", type=int, default=None)
    pi.add_argument("--timeout", type=float, default=None)
    pi.add_argument("--out", required=True)
    pi.set_defaults(func=run_ingest)

    pa = sub.add_parser("analyze", help="fit working/saturation lines and find the knee")
    pa.add_argument("--samples", required=True, metavar="FILE")
    pa.add_argument("--set", action="append", metavar="KEY=VALUE")
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=run_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UndefinedMoment as exc:
        print(f"error: divergent moment: {exc}", file=sys.stderr)
        return EXIT_DIVERGENT
    except (ConfigError, InvalidConfig, InvalidParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
