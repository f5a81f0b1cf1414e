"""Integrity checks and tamper detection for saved images.

Self-verification (``verify_integrity``) only proves an archive is
internally consistent, which a rehashed layer edit always is. Catching
the edit needs outside knowledge: a reference image (``diff_images``) or
a digest recorded before the edit (``record_trust``/``verify_trust``).
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .archive import ImageArchive, compute_diff_id, compute_image_id
from .digest import Digest
from .errors import RecordNotFound, StoreCorrupt, StoreUnwritable
from .layerfs import Change, EntryDiff, LayerBlob, layer_diff, materialize_rootfs
from .tarcodec import EntryKind

DEFAULT_MTIME_TOLERANCE = 86400

CRITICAL, WARN, INFO = "critical", "warn", "info"

SEVERITY = {
    "DIFFID_MISMATCH": CRITICAL,
    "HISTORY_COUNT_MISMATCH": CRITICAL,
    "LAYER_COUNT_MISMATCH": CRITICAL,
    "ENTRYPOINT_DRIFT": CRITICAL,
    "TRUST_DIGEST_MISMATCH": CRITICAL,
    "TYPE_TRANSITION": WARN,
    "MTIME_ANOMALY": WARN,
    "CONTENT_DRIFT": WARN,
    "ENTRY_ADDED": WARN,
    "ENTRY_REMOVED": WARN,
    "DANGLING_HARDLINK": WARN,
    "META_DRIFT": INFO,
    "IMAGE_ID": INFO,
}

_CHANGE_CODE = {
    Change.ADDED: "ENTRY_ADDED",
    Change.REMOVED: "ENTRY_REMOVED",
    Change.CONTENT_MODIFIED: "CONTENT_DRIFT",
    Change.TYPE_CHANGED: "TYPE_TRANSITION",
    Change.META_CHANGED: "META_DRIFT",
}


@dataclass(frozen=True)
class Finding:
    code: str
    layer_index: int | None = None
    path: str | None = None
    evidence: str = ""

    def __post_init__(self) -> None:
        if self.code not in SEVERITY:
            raise ValueError(f"unknown finding code {self.code!r}")

    @property
    def severity(self) -> str:
        return SEVERITY[self.code]

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity,
            "layer_index": self.layer_index,
            "path": self.path,
            "evidence": self.evidence,
        }


def verdict_of(findings) -> str:
    severities = {f.severity for f in findings}
    if CRITICAL in severities:
        return "tampered"
    if WARN in severities:
        return "suspicious"
    return "clean"


@dataclass(frozen=True)
class IntegrityReport:
    image_id: Digest
    findings: tuple[Finding, ...]

    @property
    def verdict(self) -> str:
        return verdict_of(self.findings)

    def to_json(self) -> dict:
        return {
            "kind": "integrity",
            "image_id": str(self.image_id),
            "verdict": self.verdict,
            "findings": [f.to_json() for f in self.findings],
        }


@dataclass(frozen=True)
class ConfigDrift:
    field: str
    before: object
    after: object

    def to_json(self) -> dict:
        return {"field": self.field, "before": self.before, "after": self.after}


@dataclass(frozen=True)
class TamperReport:
    reference_image_id: Digest
    suspect_image_id: Digest
    per_layer: tuple[tuple[int, tuple[EntryDiff, ...]], ...]
    config_drift: tuple[ConfigDrift, ...]
    findings: tuple[Finding, ...]

    @property
    def verdict(self) -> str:
        return verdict_of(self.findings)

    def to_json(self) -> dict:
        return {
            "kind": "tamper",
            "reference_image_id": str(self.reference_image_id),
            "suspect_image_id": str(self.suspect_image_id),
            "verdict": self.verdict,
            "per_layer": [
                {"layer_index": i, "diffs": [d.to_json() for d in diffs]}
                for i, diffs in self.per_layer
            ],
            "config_drift": [d.to_json() for d in self.config_drift],
            "findings": [f.to_json() for f in self.findings],
        }


# --------------------------------------------------------------------------
# self-verification

def verify_integrity(image: ImageArchive) -> IntegrityReport:
    findings = []
    diff_ids = image.config.diff_ids
    for index, layer in enumerate(image.layers):
        actual = compute_diff_id(layer)
        expected = diff_ids[index] if index < len(diff_ids) else None
        if actual != expected:
            findings.append(Finding(
                "DIFFID_MISMATCH", index, None,
                f"config records {expected}, layer hashes to {actual}",
            ))
    if len(diff_ids) != len(image.layers):
        findings.append(Finding(
            "DIFFID_MISMATCH", None, None,
            f"{len(image.layers)} layers but {len(diff_ids)} diff_ids",
        ))
    with_layer = len(image.config.layer_history)
    if with_layer != len(image.layers):
        findings.append(Finding(
            "HISTORY_COUNT_MISMATCH", None, None,
            f"{with_layer} non-empty history entries for {len(image.layers)} layers",
        ))
    for warning in materialize_rootfs(image.layers).warnings:
        findings.append(Finding(
            "DANGLING_HARDLINK", warning.layer_index, warning.path,
            f"hardlink target {warning.target} is not in the stack",
        ))
    findings.append(Finding("IMAGE_ID", None, None, str(image.image_id)))
    return IntegrityReport(image.image_id, tuple(findings))


def detect_mtime_anomalies(image: ImageArchive,
                           tolerance_seconds: int = DEFAULT_MTIME_TOLERANCE) -> list[Finding]:
    """Entries stamped later than the image claims to have been built."""
    if tolerance_seconds < 0:
        raise ValueError("tolerance_seconds must be >= 0")
    created = image.config.created_epoch
    if created is None:
        return []
    limit = created + tolerance_seconds
    findings = []
    for index, layer in enumerate(image.layers):
        for entry in layer.entries:
            if entry.mtime > limit:
                findings.append(Finding(
                    "MTIME_ANOMALY", index, entry.path,
                    f"mtime {_iso(entry.mtime)} is {entry.mtime - created}s after "
                    f"image created {image.config.created}",
                ))
    return findings


def _iso(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# reference diffing

def _describe_diff(diff: EntryDiff) -> str:
    b, a = diff.before, diff.after
    parts = []
    if b is not None:
        parts.append(f"before {b.kind.value} size={b.size}"
                     + (f" {b.content_digest}" if b.content_digest else "")
                     + (f" -> {b.link_target}" if b.link_target else ""))
    if a is not None:
        parts.append(f"after {a.kind.value} size={a.size}"
                     + (f" {a.content_digest}" if a.content_digest else "")
                     + (f" -> {a.link_target}" if a.link_target else ""))
    return "; ".join(parts)


def _argv_drift(before: tuple[str, ...], after: tuple[str, ...]) -> str:
    n = len(after) - len(before)
    if n > 0 and after[n:] == before:
        return f"prepended {list(after[:n])} to {list(before)}"
    return f"{list(before)} -> {list(after)}"


def diff_images(reference: ImageArchive, suspect: ImageArchive) -> TamperReport:
    """Compare two archives layer by layer (by position, not digest)."""
    findings: list[Finding] = []
    per_layer = []
    n_ref, n_sus = len(reference.layers), len(suspect.layers)
    if n_ref != n_sus:
        findings.append(Finding(
            "LAYER_COUNT_MISMATCH", None, None,
            f"reference has {n_ref} layers, suspect has {n_sus}",
        ))
    empty = LayerBlob()
    for index in range(max(n_ref, n_sus)):
        before = reference.layers[index] if index < n_ref else empty
        after = suspect.layers[index] if index < n_sus else empty
        diffs = layer_diff(before, after)
        if not diffs:
            continue
        per_layer.append((index, tuple(diffs)))
        for diff in diffs:
            findings.append(Finding(_CHANGE_CODE[diff.change], index, diff.path, _describe_diff(diff)))

    drift = []
    ref_cfg, sus_cfg = reference.config, suspect.config
    pairs = [
        ("created", ref_cfg.created, sus_cfg.created),
        ("history", [h.created_by for h in ref_cfg.history], [h.created_by for h in sus_cfg.history]),
        ("entrypoint", list(ref_cfg.runtime.entrypoint), list(sus_cfg.runtime.entrypoint)),
        ("command", list(ref_cfg.runtime.command), list(sus_cfg.runtime.command)),
        ("env", list(ref_cfg.runtime.env), list(sus_cfg.runtime.env)),
        ("diff_ids", [str(d) for d in ref_cfg.diff_ids], [str(d) for d in sus_cfg.diff_ids]),
    ]
    for name, before, after in pairs:
        if before != after:
            drift.append(ConfigDrift(name, before, after))
    if len(ref_cfg.layer_history) != len(sus_cfg.layer_history):
        findings.append(Finding(
            "HISTORY_COUNT_MISMATCH", None, None,
            f"reference has {len(ref_cfg.layer_history)} layer-producing history entries, "
            f"suspect has {len(sus_cfg.layer_history)}",
        ))
    if ref_cfg.runtime.entrypoint != sus_cfg.runtime.entrypoint:
        findings.append(Finding(
            "ENTRYPOINT_DRIFT", None, None,
            "entrypoint " + _argv_drift(ref_cfg.runtime.entrypoint, sus_cfg.runtime.entrypoint),
        ))
    elif ref_cfg.runtime.command != sus_cfg.runtime.command:
        findings.append(Finding(
            "ENTRYPOINT_DRIFT", None, None,
            "command " + _argv_drift(ref_cfg.runtime.command, sus_cfg.runtime.command),
        ))

    return TamperReport(
        reference_image_id=reference.image_id,
        suspect_image_id=suspect.image_id,
        per_layer=tuple(per_layer),
        config_drift=tuple(drift),
        findings=tuple(findings),
    )


def type_transitions(report: TamperReport) -> list[EntryDiff]:
    """Symlink-to-regular style kind changes, the flagship tamper signal."""
    return [d for _, diffs in report.per_layer for d in diffs if d.change is Change.TYPE_CHANGED
            and d.before_entry is not None and d.before_entry.kind is EntryKind.SYMLINK]


# --------------------------------------------------------------------------
# trust store

@dataclass(frozen=True)
class TrustRecord:
    name_tag: str
    image_id: Digest
    recorded_at: str

    def to_json(self) -> dict:
        return {"name_tag": self.name_tag, "image_id": str(self.image_id), "recorded_at": self.recorded_at}


def load_store(store_path) -> dict[str, TrustRecord]:
    path = Path(store_path)
    records: dict[str, TrustRecord] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        return records
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            record = TrustRecord(doc["name_tag"], Digest.parse(doc["image_id"]), doc["recorded_at"])
        except (ValueError, KeyError, TypeError) as exc:
            raise StoreCorrupt(f"{path}:{lineno}: {exc}") from None
        records[record.name_tag] = record
    return records


def record_trust(image: ImageArchive, name_tag: str, store_path, *,
                 now: str | None = None) -> TrustRecord:
    """Bind ``name_tag`` to the image's current id, replacing any older record.

    The store is rewritten through a temp file and renamed into place.
    Concurrent writers to one store must be serialized by the caller.
    """
    recorded_at = now or datetime.fromtimestamp(time.time(), timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    record = TrustRecord(name_tag, compute_image_id(image.config), recorded_at)
    path = Path(store_path)
    records = load_store(path)
    records[name_tag] = record
    body = "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in records.values())
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(prefix=".trust-", dir=path.parent)
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(body)
        os.replace(tmp, path)
    except OSError as exc:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
        raise StoreUnwritable(f"cannot write trust store {path}: {exc}") from None
    return record


def verify_trust(image: ImageArchive, name_tag: str, store_path) -> Finding | None:
    """``None`` when the recorded id matches, else a TRUST_DIGEST_MISMATCH."""
    records = load_store(store_path)
    record = records.get(name_tag)
    if record is None:
        raise RecordNotFound(name_tag)
    actual = compute_image_id(image.config)
    if actual == record.image_id:
        return None
    return Finding(
        "TRUST_DIGEST_MISMATCH", None, None,
        f"{name_tag} was recorded as {record.image_id} at {record.recorded_at}; "
        f"inspected image is {actual}",
    )
