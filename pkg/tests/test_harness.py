"""Tests for the benchmark harness: in situ runs, the in transit roles,
and the process orchestration."""

import threading

import pytest

from nekmini import reporting
from nekmini.harness import (
    RunConfig,
    measure_memory_hwm,
    run_endpoint,
    run_insitu,
    run_intransit,
    run_producer,
)
from nekmini.solver import SolverParams


def small_solver(**kw):
    defaults = dict(nx=16, ny=16, rayleigh=1e4, prandtl=0.7, seed=0)
    defaults.update(kw)
    return SolverParams(**defaults)


def insitu_config(tmp_path, steps=5, config=None, label="run"):
    return RunConfig(
        mode="insitu",
        solver=small_solver(),
        steps=steps,
        bridge_config_path=config,
        output_dir=tmp_path / "out",
        label=label,
    )


def write_config(tmp_path, body):
    p = tmp_path / "analysis.xml"
    p.write_text(f"<sensei>{body}</sensei>\n")
    return str(p)


def test_measure_memory_hwm_is_plausible():
    rss = measure_memory_hwm()
    # a running python interpreter with numpy loaded: between 10 MB and 100 GB
    assert 10 * 2**20 < rss < 100 * 2**30


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError, match="steps"):
        RunConfig("insitu", small_solver(), 0, None, tmp_path, "x")


class TestInsitu:
    def test_phase_rows_complete(self, tmp_path):
        cfg = insitu_config(tmp_path, steps=4)
        out = run_insitu(cfg)
        recs = reporting.read_timings(out / "timings.csv")
        # step 0: snapshot_copy + sink; steps 1..4: solve + snapshot_copy + sink
        by_step = {}
        for r in recs:
            by_step.setdefault(r.step, set()).add(r.phase)
        assert by_step[0] == {"snapshot_copy", "sink"}
        for s in range(1, 5):
            assert by_step[s] == {"solve", "snapshot_copy", "sink"}
        assert all(r.seconds >= 0 for r in recs)
        assert all(r.label == "run" for r in recs)

    def test_memory_csv_row(self, tmp_path):
        out = run_insitu(insitu_config(tmp_path, steps=2))
        mem = reporting.read_memory(out / "memory.csv")
        assert len(mem) == 1
        assert mem[0].role == "insitu"
        assert mem[0].peak_rss_bytes > 10 * 2**20

    def test_summary_bytes_match_files_on_disk(self, tmp_path):
        ck = tmp_path / "ck"
        cfg_path = write_config(
            tmp_path, f'<analysis type="checkpoint" frequency="2" dir="{ck}"/>'
        )
        out = run_insitu(insitu_config(tmp_path, steps=4, config=cfg_path))
        written = sum(p.stat().st_size for p in ck.glob("*.vtk"))
        summary = reporting.read_summary(out / "summary.csv")
        assert summary[("run", "sink:checkpoint")][2] == written
        # triggers at steps 0, 2, 4
        assert len(list(ck.glob("*.vtk"))) == 3

    def test_empty_config_baseline_writes_nothing_extra(self, tmp_path):
        out = run_insitu(insitu_config(tmp_path, steps=3, label="Original"))
        names = sorted(p.name for p in out.iterdir())
        assert names == ["memory.csv", "summary.csv", "timings.csv"]
        summary = reporting.read_summary(out / "summary.csv")
        assert all(nbytes == 0 for _, _, nbytes in summary.values())


class TestIntransitRoles:
    def test_producer_requires_address(self, tmp_path, monkeypatch):
        monkeypatch.delenv("NEKMINI_ENDPOINT", raising=False)
        cfg = RunConfig("intransit-producer", small_solver(), 2, None,
                        tmp_path / "p", "x")
        with pytest.raises(ValueError, match="endpoint address"):
            run_producer(cfg)

    def test_endpoint_plus_producer_in_threads(self, tmp_path):
        stats = tmp_path / "stats.csv"
        cfg_path = write_config(tmp_path, f'<analysis type="stats" frequency="1" path="{stats}"/>')
        ep_out = tmp_path / "ep"
        ep_cfg = RunConfig("intransit-endpoint", small_solver(), 1, cfg_path,
                           ep_out, "t", producers=1)
        port_file = tmp_path / "addr"
        result = {}

        def serve():
            result["out"] = run_endpoint(ep_cfg, "127.0.0.1:0", port_file, step_timeout=30.0)

        t = threading.Thread(target=serve, daemon=True)
        t.start()
        deadline = 30.0
        import time
        t0 = time.monotonic()
        while not port_file.exists():
            assert time.monotonic() - t0 < deadline
            time.sleep(0.02)
        address = port_file.read_text().strip()

        prod_cfg = RunConfig("intransit-producer", small_solver(), 4, None,
                             tmp_path / "p0", "t", frequency=2,
                             endpoint_address=address, producer_id=0)
        p_out = run_producer(prod_cfg)
        t.join(timeout=30)
        assert not t.is_alive()

        # producer wrote solve rows for every step, transport rows on cadence
        recs = reporting.read_timings(p_out / "timings.csv")
        transport_steps = sorted(r.step for r in recs if r.phase == "transport")
        assert transport_steps == [0, 2, 4]
        assert sorted(r.step for r in recs if r.phase == "solve") == [1, 2, 3, 4]

        # endpoint ran the stats sink once per delivered step
        lines = stats.read_text().strip().split("\n")
        assert len(lines) == 1 + 3 * 3  # header + 3 steps x 3 fields
        text = (result["out"] / "endpoint_summary.txt").read_text()
        assert "steps_completed=3" in text
        assert "incomplete_steps=0" in text

        # byte accounting agrees across the two roles
        p_summary = reporting.read_summary(p_out / "summary.csv")
        e_summary = reporting.read_summary(result["out"] / "summary.csv")
        assert p_summary[("t", "transport")][2] == e_summary[("t", "endpoint:received")][2]


class TestOrchestration:
    def test_run_intransit_two_producers(self, tmp_path):
        ck = tmp_path / "ck"
        cfg_path = write_config(
            tmp_path, f'<analysis type="checkpoint" frequency="2" dir="{ck}"/>'
        )
        cfg = RunConfig("intransit", small_solver(), 4, cfg_path,
                        tmp_path / "out", "orc", producers=2, frequency=2)
        out = run_intransit(cfg)
        # merged report
        assert (out / "summary.csv").exists()
        assert (out / "chart.svg").exists()
        # per-role artifacts
        for sub in ("endpoint", "producer_0", "producer_1"):
            assert (out / sub / "memory.csv").exists()
        text = (out / "endpoint" / "endpoint_summary.txt").read_text()
        assert "steps_completed=3" in text
        # checkpoint sink saw assembled steps 0, 2, 4 (frequency 2, one
        # global block per step)
        names = sorted(p.name for p in ck.glob("*.vtk"))
        assert names == [
            "step000000_blk000.vtk", "step000002_blk000.vtk", "step000004_blk000.vtk",
        ]

    def test_run_intransit_surfaces_producer_failure(self, tmp_path):
        # producers=3 launches pids 0..2 but the endpoint expects 3 and gets
        # them; instead break things by pointing the bridge at a bad config
        bad = tmp_path / "bad.xml"
        bad.write_text("<sensei><analysis type='warp-drive' frequency='1'/></sensei>")
        cfg = RunConfig("intransit", small_solver(), 2, str(bad),
                        tmp_path / "out", "x", producers=1, frequency=1)
        with pytest.raises(RuntimeError):
            run_intransit(cfg)
