import numpy as np
import pytest

from nekmini import bridge as bridge_mod
from nekmini.bridge import (
    AnalysisSpec,
    Bridge,
    BridgeConfig,
    ConfigError,
    parse_config,
    should_trigger,
)
from nekmini.solver import SolverParams, init_state, snapshot_of, step

# the upstream sample document, verbatim
CATALYST_DOC = """<sensei>
  <analysis type="catalyst" pipeline="pythonscript" filename="analysis.py" frequency="100" />
</sensei>
"""


def make_snapshot(step_no=0):
    p = SolverParams(nx=8, ny=8, perturbation_amplitude=1e-3)
    s = init_state(p)
    for _ in range(step_no):
        s = step(s, p)
    return snapshot_of(s, producer_id=0)


def test_catalyst_document_parses_verbatim():
    cfg = parse_config(CATALYST_DOC)
    assert len(cfg.specs) == 1
    spec = cfg.specs[0]
    assert spec.kind == "render"  # catalyst maps onto the render sink
    assert spec.frequency == 100


def test_empty_document_gives_no_specs():
    cfg = parse_config("<sensei></sensei>")
    assert cfg.specs == ()


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError, match="unknown analysis kind"):
        parse_config('<sensei><analysis type="frobnicate" frequency="1"/></sensei>')


def test_bad_frequency_rejected():
    with pytest.raises(ConfigError, match="frequency"):
        parse_config('<sensei><analysis type="null" frequency="0"/></sensei>')


def test_malformed_document_rejected():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("<sensei><analysis")


def test_stats_requires_path():
    with pytest.raises(ConfigError, match="path"):
        parse_config('<sensei><analysis type="stats" frequency="1"/></sensei>')


def test_unknown_attribute_is_warning_not_error(caplog):
    with caplog.at_level("WARNING"):
        cfg = parse_config('<sensei><analysis type="null" frequency="2" zap="1"/></sensei>')
    assert cfg.specs[0].kind == "null"
    assert any("zap" in rec.message for rec in caplog.records)


@pytest.mark.parametrize(
    "freq,step_no,at_zero,expected",
    [
        (100, 100, True, True),
        (100, 101, True, False),
        (100, 0, False, False),
        (100, 0, True, True),
        (1, 7, False, True),
    ],
)
def test_should_trigger(freq, step_no, at_zero, expected):
    spec = AnalysisSpec("null", freq)
    assert should_trigger(spec, step_no, at_zero) is expected


def test_trigger_count_over_run():
    # 3000 steps at frequency 100 without the step-zero trigger: 30 exactly
    cfg = BridgeConfig((AnalysisSpec("null", 100),), trigger_at_step_zero=False)
    br = Bridge(cfg)
    snap = make_snapshot()
    n = 0
    for s in range(1, 3001):
        reports = br.update(type(snap)(snap.time, s, 0, snap.blocks))
        n += len(reports)
    assert n == 3000 // 100
    assert br.finalize()[0].invocations == 30


def test_non_monotone_step_rejected():
    br = Bridge(BridgeConfig((AnalysisSpec("null", 1),)))
    snap = make_snapshot()
    br.update(type(snap)(snap.time, 5, 0, snap.blocks))
    with pytest.raises(ValueError, match="non-increasing"):
        br.update(type(snap)(snap.time, 5, 0, snap.blocks))


def test_invalid_snapshot_rejected():
    br = Bridge(BridgeConfig((AnalysisSpec("null", 1),)))
    snap = make_snapshot()
    bad = type(snap)(snap.time, 1, 0, ())
    with pytest.raises(ValueError, match="invalid snapshot"):
        br.update(bad)


class _BoomSink:
    def __init__(self):
        self.calls = 0

    def consume(self, s):
        self.calls += 1
        raise IOError("disk on fire")

    def finalize(self):
        pass


def test_sink_failure_isolated(tmp_path):
    cfg = parse_config(
        f'<sensei><analysis type="null" frequency="1"/>'
        f'<analysis type="stats" frequency="1" path="{tmp_path}/s.csv"/></sensei>'
    )
    br = Bridge(cfg)
    br.sinks[0] = _BoomSink()  # inject a failure into the first sink
    snap = make_snapshot()
    reports = br.update(snap)
    assert len(reports) == 2
    assert reports[0].error is not None and "disk on fire" in reports[0].error
    assert reports[1].error is None
    # failure counted, later sink still ran
    summaries = br.finalize()
    assert summaries[0].failures == 1
    assert summaries[1].invocations == 1


def test_finalize_totals_match_step_reports(tmp_path):
    cfg = parse_config(
        f'<sensei><analysis type="checkpoint" frequency="3" dir="{tmp_path}/ck"/>'
        f'<analysis type="null" frequency="2"/></sensei>'
    )
    br = Bridge(cfg)
    p = SolverParams(nx=8, ny=8, perturbation_amplitude=1e-3)
    s = init_state(p)
    accum = {}
    for _ in range(20):
        s = step(s, p)
        for r in br.update(snapshot_of(s, 0)):
            inv, secs, nbytes = accum.get(r.kind, (0, 0.0, 0))
            accum[r.kind] = (inv + 1, secs + r.seconds, nbytes + r.bytes_written)
    for summary in br.finalize():
        inv, secs, nbytes = accum[summary.kind]
        assert summary.invocations == inv
        assert summary.bytes_written == nbytes
        assert summary.seconds == pytest.approx(secs)


def test_unwritable_output_fails_at_initialize(tmp_path):
    # a path whose parent is a regular file cannot be created, even by root
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    doc = f'<sensei><analysis type="checkpoint" frequency="1" dir="{blocker}/ck"/></sensei>'
    with pytest.raises(OSError):
        bridge_mod.initialize(parse_config(doc))


def test_empty_config_update_is_noop():
    br = Bridge(BridgeConfig())
    assert br.update(make_snapshot()) == []
    assert br.finalize() == []
