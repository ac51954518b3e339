import math
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodbed.confusion import ConfusionCounts, EvaluationError, batch_is_attack, confusion
from floodbed.ids import IdsDecision, Label
from floodbed.metrics import RunManifest, chart_x, drop_windows, render_charts, summarize
from floodbed.scenario import preset
from floodbed.timeline import TimelineLog, read_run, write_run
from floodbed.traffic import Kind

counts = st.integers(0, 10_000)


def test_perfect_detector():
    c = confusion([True, False, True], [True, False, True])
    assert (c.accuracy, c.tpr, c.tnr) == (1.0, 1.0, 1.0)


def test_all_benign_tpr_undefined():
    c = confusion([False] * 5, [False] * 5)
    assert c.tnr == 1.0 and math.isnan(c.tpr) and not c.tpr_defined and c.tnr_defined


@settings(max_examples=1000, deadline=None)
@given(counts, counts, counts, counts)
def test_confusion_identities(tp, fp, tn, fn):
    c = ConfusionCounts(tp, fp, tn, fn)
    total = tp + fp + tn + fn
    if total:
        assert c.accuracy == (tp + tn) / total
    if tp + fn:
        assert c.tpr == tp / (tp + fn)
    if tn + fp:
        assert c.tnr == tn / (tn + fp)
        assert c.fpr == pytest.approx(1 - c.tnr)
    if tp + fn and tn + fp:
        assert min(c.tpr, c.tnr) - 1e-12 <= c.accuracy <= max(c.tpr, c.tnr) + 1e-12


def test_batch_truth_strict_majority():
    kinds = {(1, i): Kind.FLOOD if i < 5 else Kind.TELEMETRY for i in range(10)}
    assert not batch_is_attack([(1, i) for i in range(10)], kinds)
    assert batch_is_attack([(1, i) for i in range(9)], kinds)
    with pytest.raises(EvaluationError):
        batch_is_attack([(9, 9)], kinds)


def test_report_from_csv_equals_in_memory(tmp_path, run_preset):
    r = run_preset("attack10-mitigation")
    write_run(tmp_path, r.log, r.truth)
    log2, truth2 = read_run(tmp_path)
    assert summarize(log2, truth2) == summarize(r.log, r.truth)
    assert log2.samples == r.log.samples
    assert [d.score for d in log2.decisions] == [d.score for d in r.log.decisions]


def test_outputs_byte_identical(tmp_path):
    from floodbed.sim import run_sim
    dirs = []
    for i in range(2):
        r = run_sim(preset("attack10-mitigation", seed=5))
        out = tmp_path / str(i)
        write_run(out, r.log, r.truth)
        render_charts(r.log, out)
        dirs.append(out)
    names = sorted(p.name for p in dirs[0].iterdir())
    assert {"queue.svg", "rate.svg", "delay.svg", "decisions.svg", "timeline.csv"} <= set(names)
    for n in names:
        assert (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes(), n


def test_drop_bands_match_events(tmp_path, run_preset):
    r = run_preset("attack60-mitigation")
    render_charts(r.log, tmp_path)
    svg = (tmp_path / "queue.svg").read_text()
    bands = re.findall(r'<rect class="drop-window" data-start="([^"]+)" data-end="([^"]+)" x="([^"]+)" '
                       r'y="[^"]+" width="([^"]+)"', svg)
    events = [(e.time, e.event) for e in r.log.events]
    starts = [t for t, e in events if e == "activate"]
    ends = [t for t, e in events if e == "deadline"]
    assert [float(b[0]) for b in bands] == starts
    assert [float(b[1]) for b in bands] == ends
    for (s, e, x, w) in bands:
        assert float(x) == pytest.approx(chart_x(float(s), r.log.horizon), abs=0.01)
        assert float(x) + float(w) == pytest.approx(chart_x(float(e), r.log.horizon), abs=0.02)
    bounds = re.findall(r'class="attack-bound" data-time="([^"]+)"', svg)
    assert [float(b) for b in bounds] == [300.0, 360.0]


def test_no_attack_no_shading(tmp_path, run_preset):
    r = run_preset("benign-only")
    for p in render_charts(r.log, tmp_path):
        text = p.read_text()
        assert "drop-window" not in text and "attack-bound" not in text


def test_summary_fields(run_preset):
    rep = summarize((r := run_preset("attack60-mitigation")).log, r.truth)
    assert rep["complete"] and rep["conservation_ok"]
    assert len(rep["activations"]) == 2
    assert rep["benign_collateral"] > 0 and rep["dropped_flood"] > 0
    a = rep["attacks"][0]
    assert a["activation_latency"] is not None and a["activation_latency"] >= 0


def test_drain_reported(run_preset):
    r = run_preset("attack10-nomitigation")
    rep = summarize(r.log, r.truth)
    assert rep["attacks"][0]["drain_time"] == pytest.approx(90.0, rel=0.05)
    assert rep["activations"] == []


def test_truncated_log_is_partial(run_preset):
    r = run_preset("attack10-nomitigation")
    cut = TimelineLog(r.log.samples[:100], r.log.decisions, [], [], r.log.attacks, {}, r.log.trained_at,
                      r.log.horizon, True)
    assert summarize(cut, r.truth)["complete"] is False
    bogus = [IdsDecision(0, 0.5, Label.ATTACK, 0.3, 1.0, ((99, 99),))]
    rep = summarize(TimelineLog(r.log.samples, bogus, horizon=r.log.horizon), r.truth)
    assert rep["complete"] is False and rep["confusion"] is None


def test_open_drop_window_ends_at_horizon():
    from floodbed.mitigation import MitigationEvent
    log = TimelineLog(events=[MitigationEvent(5.0, "activate", 0, 0)], horizon=20.0)
    assert drop_windows(log) == [(5.0, 20.0)]


def test_manifest_roundtrip(tmp_path):
    sc = preset("attack10-mitigation", seed=9)
    m = RunManifest(sc.name, sc.to_dict(), sc.seed, "sim")
    m.write(tmp_path / "m.json")
    assert RunManifest.read(tmp_path / "m.json") == m
