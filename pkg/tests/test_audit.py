import json
from dataclasses import replace

import pytest

from ghostedit.archive import load_archive
from ghostedit.audit import (
    SEVERITY,
    Finding,
    detect_mtime_anomalies,
    diff_images,
    load_store,
    record_trust,
    type_transitions,
    verdict_of,
    verify_integrity,
    verify_trust,
)
from ghostedit.engine import EditPlan, InjectFile, MtimePolicy, ReplaceEntry, apply_edit, run_attack_chain
from ghostedit.errors import RecordNotFound, StoreCorrupt
from ghostedit.fixtures import FIXTURE_EPOCH
from ghostedit.layerfs import LayerBlob, read_layer, write_layer
from ghostedit.tarcodec import EntryKind


def codes(findings):
    return sorted(f.code for f in findings)


# --- severities and verdicts -----------------------------------------------

def test_verdicts():
    assert verdict_of([]) == "clean"
    assert verdict_of([Finding("IMAGE_ID")]) == "clean"
    assert verdict_of([Finding("MTIME_ANOMALY"), Finding("IMAGE_ID")]) == "suspicious"
    assert verdict_of([Finding("MTIME_ANOMALY"), Finding("TRUST_DIGEST_MISMATCH")]) == "tampered"
    assert {SEVERITY[c] for c in ("DIFFID_MISMATCH", "HISTORY_COUNT_MISMATCH", "ENTRYPOINT_DRIFT",
                                  "TRUST_DIGEST_MISMATCH")} == {"critical"}
    with pytest.raises(ValueError):
        Finding("NOT_A_CODE")


# --- verify_integrity ------------------------------------------------------

def test_untouched_fixtures_are_clean(fixtures):
    for image in fixtures.values():
        report = verify_integrity(image)
        assert report.verdict == "clean"
        assert codes(report.findings) == ["IMAGE_ID"]


def test_corrupted_layer_is_tampered(python_like):
    data = bytearray(write_layer(python_like.layers[2]))
    data[-1100] ^= 0x01  # inside member data, header checksums still hold
    layers = list(python_like.layers)
    layers[2] = read_layer(bytes(data))
    report = verify_integrity(replace(python_like, layers=tuple(layers)))
    assert report.verdict == "tampered"
    mismatch = [f for f in report.findings if f.code == "DIFFID_MISMATCH"]
    assert [f.layer_index for f in mismatch] == [2]


def test_ghostedit_output_passes_self_verification(fixture_archives):
    out, _ = run_attack_chain(fixture_archives["python-like"])
    assert verify_integrity(load_archive(out)).verdict == "clean"


def test_history_count_mismatch(python_like):
    layers = python_like.layers + (LayerBlob(),)
    report = verify_integrity(replace(python_like, layers=layers))
    assert "HISTORY_COUNT_MISMATCH" in codes(report.findings)


# --- mtime heuristics ------------------------------------------------------

def test_mtime_anomalies(python_like):
    assert detect_mtime_anomalies(python_like) == []
    now = FIXTURE_EPOCH + 30 * 86400
    honest, _ = apply_edit(python_like, EditPlan(7, (InjectFile(
        "usr/local/bin/late", b"x", mtime_policy=MtimePolicy.HONEST),)), now=now)
    findings = detect_mtime_anomalies(honest)
    assert [(f.code, f.layer_index, f.path) for f in findings] == [("MTIME_ANOMALY", 7, "usr/local/bin/late")]
    assert detect_mtime_anomalies(honest, tolerance_seconds=31 * 86400) == []
    stealth, _ = apply_edit(python_like, EditPlan(7, (InjectFile("usr/local/bin/late", b"x"),)), now=now)
    assert detect_mtime_anomalies(stealth) == []
    with pytest.raises(ValueError):
        detect_mtime_anomalies(python_like, -1)


# --- diff_images -----------------------------------------------------------

def test_identical_images_diff_empty(fixtures):
    for image in fixtures.values():
        report = diff_images(image, image)
        assert report.per_layer == () and report.config_drift == () and report.findings == ()
        assert report.verdict == "clean"


def test_python3_pair(python_like):
    edited, _ = apply_edit(python_like, EditPlan(7, (ReplaceEntry(
        "usr/local/bin/python3", EntryKind.REGULAR, b"GH0STEDIT-MARKER\n"),)))
    report = diff_images(python_like, edited)
    assert [(f.code, f.layer_index, f.path) for f in report.findings] == [
        ("TYPE_TRANSITION", 7, "usr/local/bin/python3")]
    assert [d.path for d in type_transitions(report)] == ["usr/local/bin/python3"]
    assert [d.field for d in report.config_drift] == ["diff_ids"]


def test_attack_chain_pair(fixture_archives):
    original = load_archive(fixture_archives["nginx-like"])
    out, _ = run_attack_chain(fixture_archives["nginx-like"], target_prefix="usr/sbin")
    report = diff_images(original, load_archive(out))
    assert codes(report.findings) == ["ENTRYPOINT_DRIFT", "ENTRY_ADDED"]
    assert report.verdict == "tampered"
    assert {d.field for d in report.config_drift} == {"entrypoint", "diff_ids"}
    json.dumps(report.to_json())


def test_layer_count_mismatch(python_like):
    shorter = replace(python_like, layers=python_like.layers[:-1])
    assert "LAYER_COUNT_MISMATCH" in codes(diff_images(python_like, shorter).findings)


# --- trust store -----------------------------------------------------------

def test_trust_round_trip(tmp_path, fixtures, fixture_archives):
    store = tmp_path / "trust.jsonl"
    python = fixtures["python-like"]
    record = record_trust(python, "python:3.12-slim", store, now="2024-08-14T00:00:00Z")
    assert record.image_id == python.image_id
    assert verify_trust(python, "python:3.12-slim", store) is None

    out, _ = run_attack_chain(fixture_archives["python-like"])
    finding = verify_trust(load_archive(out), "python:3.12-slim", store)
    assert finding.code == "TRUST_DIGEST_MISMATCH" and finding.severity == "critical"

    with pytest.raises(RecordNotFound):
        verify_trust(python, "unknown:tag", store)


def test_second_record_wins(tmp_path, fixtures):
    store = tmp_path / "trust.jsonl"
    record_trust(fixtures["alpine-like"], "base:latest", store)
    record_trust(fixtures["ubuntu-like"], "base:latest", store)
    record_trust(fixtures["redis-like"], "redis:7", store)
    records = load_store(store)
    assert records["base:latest"].image_id == fixtures["ubuntu-like"].image_id
    assert len(store.read_text().splitlines()) == 2
    assert verify_trust(fixtures["ubuntu-like"], "base:latest", store) is None


def test_missing_and_corrupt_store(tmp_path, python_like):
    with pytest.raises(RecordNotFound):
        verify_trust(python_like, "x:y", tmp_path / "absent.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(StoreCorrupt):
        load_store(bad)
