"""Benchmark harness: in situ runs, in transit producer/endpoint roles,
process orchestration, and the weak-scaling experiment.

Per-step phases recorded in timings.csv:

    solve          one solver step
    snapshot_copy  copying solver buffers into a Snapshot
    sink           total time spent in triggered sinks (in situ runs)
    transport      blocking send of a triggered snapshot (producers)

The "Original" baseline configuration is an empty bridge config: the
loop, the snapshot copy, and the measurement all still run, only the
sinks are absent.
"""

from __future__ import annotations

import os
import subprocess
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from nekmini import bridge as bridge_mod
from nekmini import reporting
from nekmini.reporting import MemoryRecord, TimingRecord
from nekmini.solver import SolverParams, init_state, snapshot_of, step
from nekmini.transport import (
    Endpoint,
    EndpointConfig,
    ProducerConfig,
    ProducerConnection,
)

ENDPOINT_ENV = "NEKMINI_ENDPOINT"


@dataclass(frozen=True)
class RunConfig:
    mode: str  # insitu | intransit-producer | intransit-endpoint
    solver: SolverParams
    steps: int
    bridge_config_path: str | None
    output_dir: Path
    label: str
    producers: int = 4
    frequency: int = 100  # producer-side send cadence (in transit)
    endpoint_address: str | None = None
    producer_id: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        object.__setattr__(self, "output_dir", Path(self.output_dir))


def measure_memory_hwm() -> int:
    """Peak resident set size of the calling process, in bytes."""
    try:
        import resource
    except ImportError as e:
        raise RuntimeError(f"peak RSS measurement unsupported on this platform: {e}") from e
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    if peak <= 0:
        raise RuntimeError("ru_maxrss unavailable on this platform")
    # Linux reports KiB, macOS reports bytes
    return peak if sys.platform == "darwin" else peak * 1024


def _load_bridge(path: str | None) -> bridge_mod.Bridge:
    if path is None:
        return bridge_mod.initialize(bridge_mod.BridgeConfig())
    return bridge_mod.initialize(bridge_mod.load_config(path))


def run_insitu(cfg: RunConfig) -> Path:
    """Solver and sinks in one process; writes the report CSVs.

    Returns the output directory. Every step records a solve, a
    snapshot_copy, and a sink phase (the sink phase is 0 on steps where
    nothing triggers).
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    br = _load_bridge(cfg.bridge_config_path)
    state = init_state(cfg.solver)
    timings: list[TimingRecord] = []

    def run_sinks(snap) -> float:
        t0 = time.perf_counter()
        br.update(snap)
        return time.perf_counter() - t0

    # step 0: capture the initial condition (bridge gates on the flag)
    t0 = time.perf_counter()
    snap = snapshot_of(state, producer_id=0, block_origin_index=0)
    timings.append(TimingRecord(cfg.label, 0, "snapshot_copy", time.perf_counter() - t0))
    timings.append(TimingRecord(cfg.label, 0, "sink", run_sinks(snap)))

    for _ in range(cfg.steps):
        t0 = time.perf_counter()
        state = step(state, cfg.solver)
        t1 = time.perf_counter()
        snap = snapshot_of(state, producer_id=0, block_origin_index=0)
        t2 = time.perf_counter()
        timings.append(TimingRecord(cfg.label, state.step, "solve", t1 - t0))
        timings.append(TimingRecord(cfg.label, state.step, "snapshot_copy", t2 - t1))
        timings.append(TimingRecord(cfg.label, state.step, "sink", run_sinks(snap)))

    summaries = br.finalize()
    reporting.write_timings(out / "timings.csv", timings)
    reporting.write_memory(
        out / "memory.csv", [MemoryRecord(cfg.label, "insitu", measure_memory_hwm())]
    )
    bytes_by_key = {
        (cfg.label, f"sink:{s.kind}"): s.bytes_written for s in summaries
    }
    sink_rows = [
        TimingRecord(cfg.label, -1, f"sink:{s.kind}", s.seconds) for s in summaries
    ]
    agg = reporting.aggregate(timings + sink_rows, bytes_by_key)
    reporting.write_summary(out / "summary.csv", agg)
    return out


def run_producer(cfg: RunConfig) -> Path:
    """In transit producer: independent solver instance streaming
    triggered snapshots to the endpoint."""
    address = cfg.endpoint_address or os.environ.get(ENDPOINT_ENV)
    if not address:
        raise ValueError(f"no endpoint address (flag or ${ENDPOINT_ENV})")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    label = cfg.label
    pid = cfg.producer_id
    conn = ProducerConnection(ProducerConfig(address, pid))
    state = init_state(cfg.solver)
    timings: list[TimingRecord] = []
    nx = cfg.solver.nx

    def ship(st) -> tuple[float, float]:
        t0 = time.perf_counter()
        snap = snapshot_of(st, producer_id=pid, block_origin_index=pid * nx)
        t1 = time.perf_counter()
        conn.send_step(snap)
        return t1 - t0, time.perf_counter() - t1

    try:
        copy_s, send_s = ship(state)
        timings.append(TimingRecord(label, 0, "snapshot_copy", copy_s))
        timings.append(TimingRecord(label, 0, "transport", send_s))
        for _ in range(cfg.steps):
            t0 = time.perf_counter()
            state = step(state, cfg.solver)
            timings.append(TimingRecord(label, state.step, "solve", time.perf_counter() - t0))
            if state.step % cfg.frequency == 0:
                copy_s, send_s = ship(state)
                timings.append(TimingRecord(label, state.step, "snapshot_copy", copy_s))
                timings.append(TimingRecord(label, state.step, "transport", send_s))
    finally:
        conn.close()

    reporting.write_timings(out / "timings.csv", timings)
    reporting.write_memory(
        out / "memory.csv", [MemoryRecord(label, f"producer{pid}", measure_memory_hwm())]
    )
    agg = reporting.aggregate(
        timings, {(label, "transport"): conn.bytes_sent}
    )
    reporting.write_summary(out / "summary.csv", agg)
    return out


def run_endpoint(cfg: RunConfig, listen: str = "127.0.0.1:0",
                 port_file: str | Path | None = None,
                 step_timeout: float = 120.0) -> Path:
    """In transit endpoint: runs the configured bridge behind the staging
    transport. Writes the bound address to port_file once listening."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    br = _load_bridge(cfg.bridge_config_path)
    ep = Endpoint(
        EndpointConfig(listen, expected_producers=cfg.producers, step_timeout=step_timeout), br
    )
    if port_file:
        tmp = Path(str(port_file) + ".tmp")
        tmp.write_text(ep.address)
        tmp.rename(port_file)  # atomic publish
    summary = ep.serve()
    sink_summaries = br.finalize()
    reporting.write_memory(
        out / "memory.csv", [MemoryRecord(cfg.label, "endpoint", measure_memory_hwm())]
    )
    rows = [TimingRecord(cfg.label, -1, f"sink:{s.kind}", s.seconds) for s in sink_summaries]
    bytes_by_key = {(cfg.label, f"sink:{s.kind}"): s.bytes_written for s in sink_summaries}
    bytes_by_key[(cfg.label, "endpoint:received")] = summary.bytes_received
    rows.append(TimingRecord(cfg.label, -1, "endpoint:received", 0.0))
    reporting.write_summary(out / "summary.csv", reporting.aggregate(rows, bytes_by_key))
    lines = [
        f"steps_completed={summary.steps_completed}",
        f"incomplete_steps={summary.incomplete_steps}",
        f"bytes_received={summary.bytes_received}",
        f"producers_seen={summary.producers_seen}",
    ] + [f"error={e}" for e in summary.errors]
    (out / "endpoint_summary.txt").write_text("\n".join(lines) + "\n")
    return out


def _wait_for_file(path: Path, proc: subprocess.Popen | None = None,
                   timeout: float = 30.0) -> str:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if path.exists():
            return path.read_text().strip()
        if proc is not None and proc.poll() is not None:
            raise RuntimeError(f"endpoint exited with {proc.returncode} before listening")
        time.sleep(0.05)
    raise TimeoutError(f"endpoint never published its address to {path}")


def run_intransit(cfg: RunConfig) -> Path:
    """Orchestrated in transit run: spawns 1 endpoint + P producer
    processes, waits for them, merges the reports."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    port_file = out / "endpoint.addr"
    if port_file.exists():
        port_file.unlink()

    base_cmd = [sys.executable, "-m", "nekmini"]
    solver = cfg.solver
    ep_cmd = base_cmd + [
        "endpoint",
        "--out", str(out / "endpoint"),
        "--producers", str(cfg.producers),
        "--listen", "127.0.0.1:0",
        "--port-file", str(port_file),
        "--label", cfg.label,
    ]
    if cfg.bridge_config_path:
        ep_cmd += ["--config", str(cfg.bridge_config_path)]
    ep_proc = subprocess.Popen(ep_cmd)
    try:
        address = _wait_for_file(port_file, ep_proc)
        producer_procs = []
        for pid in range(cfg.producers):
            cmd = base_cmd + [
                "producer",
                "--endpoint", address,
                "--id", str(pid),
                "--steps", str(cfg.steps),
                "--frequency", str(cfg.frequency),
                "--out", str(out / f"producer_{pid}"),
                "--label", cfg.label,
                "--nx", str(solver.nx), "--ny", str(solver.ny),
                "--rayleigh", str(solver.rayleigh), "--prandtl", str(solver.prandtl),
                "--seed", str(solver.seed + pid),
                "--amplitude", str(solver.perturbation_amplitude),
            ]
            producer_procs.append(subprocess.Popen(cmd))
        failures = []
        for pid, proc in enumerate(producer_procs):
            if proc.wait() != 0:
                failures.append(f"producer {pid} exited with {proc.returncode}")
        if ep_proc.wait(timeout=120) != 0:
            failures.append(f"endpoint exited with {ep_proc.returncode}")
        if failures:
            raise RuntimeError("; ".join(failures))
    finally:
        if ep_proc.poll() is None:
            ep_proc.kill()

    reporting.report(out, out)
    return out


def weak_scaling(base: RunConfig, producer_counts: list[int]) -> Path:
    """Run the orchestrated in transit benchmark for each producer count
    with a fixed per-producer problem size; emit scaling.csv + chart."""
    out = base.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in producer_counts:
        run_dir = out / f"p{p}"
        cfg = replace(base, output_dir=run_dir, producers=p, label=f"{base.label}-p{p}")
        run_intransit(cfg)
        per_step, rss = _producer_step_times(run_dir, p)
        mean, sd = reporting.mean_std(per_step)
        rows.append((p, mean, sd, int(sum(rss) / len(rss))))

    import csv

    with open(out / "scaling.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(reporting.SCALING_HEADER)
        for p, mean, sd, rss in rows:
            w.writerow([p, f"{mean:.9f}", f"{sd:.9f}", rss])
    chart = reporting.line_chart_svg(
        [(p, mean) for p, mean, _, _ in rows],
        "weak scaling: mean producer time per step",
        "producers", "seconds/step",
    )
    (out / "scaling.svg").write_text(chart)
    return out


def _producer_step_times(run_dir: Path, producers: int) -> tuple[list[float], list[int]]:
    """Per-producer mean wall time per step (all phases summed / steps)."""
    per_step = []
    rss = []
    for pid in range(producers):
        pdir = run_dir / f"producer_{pid}"
        recs = reporting.read_timings(pdir / "timings.csv")
        steps = max(r.step for r in recs)
        per_step.append(sum(r.seconds for r in recs) / max(steps, 1))
        rss.extend(m.peak_rss_bytes for m in reporting.read_memory(pdir / "memory.csv"))
    return per_step, rss
