import json
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marrowcell.config import RunConfig
from marrowcell.errors import ConfigError, ManifestError, UndefinedMetricError
from marrowcell.metrics import MetricsReport
from marrowcell.reporting import (
    PUBLISHED_RESULTS,
    accuracy_gap,
    new_manifest,
    parse_report,
    read_manifest,
    read_report_struct,
    render_report,
    report_struct,
    write_manifest,
    write_reports,
)


def make_manifest(root="data", seed=0):
    cfg = RunConfig.model_validate({"dataset": {"root": root, "subset_seed": seed}})
    return new_manifest(cfg, "abc123", {"root": root, "subset_fraction": 0.2, "split_rule": "stratified"})


def test_manifest_round_trip(tmp_path):
    m = make_manifest().model_copy(update={"checkpoints": ["checkpoints/epoch_1"]})
    write_manifest(tmp_path, m)
    assert read_manifest(tmp_path) == m


def test_manifest_missing_field(tmp_path):
    doc = json.loads(make_manifest().model_dump_json())
    del doc["taxonomy_hash"]
    (tmp_path / "manifest").write_text(json.dumps(doc, indent=2))
    with pytest.raises(ManifestError, match="taxonomy_hash"):
        read_manifest(tmp_path)


def test_manifest_malformed_reports_line(tmp_path):
    (tmp_path / "manifest").write_text('{\n  "run_id": "x",\n  oops\n}')
    with pytest.raises(ManifestError, match=r"manifest:3:"):
        read_manifest(tmp_path)


def test_manifest_is_append_only(tmp_path):
    m = make_manifest()
    write_manifest(tmp_path, m)
    grown = m.model_copy(update={"checkpoints": ["checkpoints/epoch_1"]})
    write_manifest(tmp_path, grown)
    with pytest.raises(ManifestError):
        write_manifest(tmp_path, grown.model_copy(update={"taxonomy_hash": "other"}))
    with pytest.raises(ManifestError):
        write_manifest(tmp_path, m)  # dropping a recorded checkpoint


def test_two_manifests_differ_only_in_identity():
    a = make_manifest().model_dump()
    b = make_manifest().model_dump()
    differing = {k for k in a if a[k] != b[k]}
    assert differing <= {"run_id", "timestamp"}
    assert "run_id" in differing


@given(st.integers(0, 10**6), st.text(min_size=1, max_size=20))
@settings(max_examples=25, deadline=None)
def test_manifest_round_trip_property(seed, root):
    m = make_manifest(root=root, seed=seed)
    with tempfile.TemporaryDirectory() as d:
        write_manifest(Path(d), m)
        assert read_manifest(Path(d)) == m


def test_render_published_rows():
    table = render_report(PUBLISHED_RESULTS)
    lines = table.splitlines()
    assert lines[0].split(" | ")[0].strip() == "Set"
    val = next(ln for ln in lines if ln.startswith("Validation"))
    assert "96.19%" in val
    assert [c.strip() for c in val.split("|")] == [
        "Validation", "7.2734", "96.19%", "0.6000", "0.5968", "0.8297",
    ]


def test_render_perfect_row():
    table = render_report([MetricsReport("Validation", 0.0, 1.0, 1.0, 1.0, 1.0)])
    assert [c.strip() for c in table.splitlines()[2].split("|")] == [
        "Validation", "0.0000", "100.00%", "1.0000", "1.0000", "1.0000",
    ]


def test_render_empty():
    with pytest.raises(ConfigError):
        render_report([])


reports = st.builds(
    MetricsReport,
    set_name=st.sampled_from(["Training", "Validation", "Test"]),
    loss=st.floats(0, 20),
    accuracy=st.floats(0, 1),
    precision=st.floats(0, 1),
    recall=st.floats(0, 1),
    auc=st.floats(0, 1),
)


@given(st.lists(reports, min_size=1, max_size=4))
def test_render_parse_round_trip(rs):
    text = render_report(rs)
    assert text == render_report(rs)
    for parsed, r in zip(parse_report(text), rs):
        assert parsed["set_name"] == r.set_name
        assert parsed["loss"] == float(f"{r.loss:.4f}")
        assert parsed["accuracy"] == round(float(f"{r.accuracy * 100:.2f}") / 100, 4)
        for key in ("precision", "recall", "auc"):
            assert parsed[key] == float(f"{getattr(r, key):.4f}")


def test_accuracy_gap_published():
    assert round(accuracy_gap(PUBLISHED_RESULTS) * 100, 9) == 0.2


def test_report_files(tmp_path):
    text_path, struct_path = write_reports(tmp_path, PUBLISHED_RESULTS, ["MetricWarning: x"])
    assert text_path.read_text() == render_report(PUBLISHED_RESULTS)
    assert read_report_struct(struct_path) == list(PUBLISHED_RESULTS)
    assert struct_path.read_text() == report_struct(PUBLISHED_RESULTS)
    assert (tmp_path / "warnings.log").read_text() == "MetricWarning: x\n"


def test_non_finite_report_rejected():
    with pytest.raises(UndefinedMetricError):
        MetricsReport("Training", float("nan"), 0.5, 0.5, 0.5, 0.5)
