"""``ghostedit`` command line.

Exit codes: 0 clean/success, 1 suspicious, 2 parse error, 3 target not
found, 4 precondition violated, 5 tampered/mismatch, 6 missing trust
record, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .archive import LayoutKind, detect_layout, load_archive, parent_of, parse_timestamp, save_archive
from .audit import (
    DEFAULT_MTIME_TOLERANCE,
    detect_mtime_anomalies,
    diff_images,
    record_trust,
    verify_integrity,
    verify_trust,
)
from .engine import (
    DEFAULT_PAYLOAD_NAME,
    MARKER_PAYLOAD,
    AutoLatestTouching,
    EditPlan,
    InjectFile,
    MtimePolicy,
    PrependEntrypoint,
    RemoveEntry,
    ReplaceEntry,
    apply_edit,
    run_attack_chain,
)
from .errors import (
    ArchiveError,
    IndexOutOfRange,
    InvariantViolation,
    PlanInvalid,
    PreconditionViolated,
    RecordNotFound,
    SpliceAmbiguous,
    TargetNotFound,
    TrustError,
)
from .fixtures import fixture_bytes, fixture_names, fixture_spec
from .layerfs import find_last_layer_touching, write_layer

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_SUSPICIOUS = 1
EXIT_PARSE = 2
EXIT_TARGET = 3
EXIT_PRECONDITION = 4
EXIT_TAMPERED = 5
EXIT_MISSING_RECORD = 6
EXIT_USAGE = 64

_VERDICT_EXIT = {"clean": EXIT_OK, "suspicious": EXIT_SUSPICIOUS, "tampered": EXIT_TAMPERED}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: {message}\n")


# --------------------------------------------------------------------------
# output helpers

def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _envelope(args, payload: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": args.command,
        "generated_at": args.generated_at or _now_iso(),
        "payload": payload,
    }


def _emit_json(args, payload: dict) -> None:
    sys.stdout.write(json.dumps(_envelope(args, payload), indent=2, sort_keys=True) + "\n")


def _write_atomic(path: str, data: bytes) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ArchiveError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load(path: str, *, verify: bool = True):
    data = _read(path)
    return load_archive(data, verify=verify)


def _short(text: str, width: int) -> str:
    return text if len(text) <= width else text[:width - 3] + "..."


# --------------------------------------------------------------------------
# commands

def cmd_inspect(args) -> int:
    data = _read(args.archive)
    layout = detect_layout(data)
    if layout is not LayoutKind.LEGACY_DOCKER_SAVE:
        raise ArchiveError(f"layout unsupported for editing; detected: {layout.value}")
    image = load_archive(data)
    prefix = args.touch_prefix
    last_touch = find_last_layer_touching(image, prefix) if prefix else None
    history = image.config.layer_history
    rows = []
    for index, layer in enumerate(image.layers):
        parent = parent_of(image, index)
        rows.append({
            "index": index,
            "diff_id": str(image.config.diff_ids[index]),
            "path": image.manifest.layer_paths[index],
            "size": len(write_layer(layer)),
            "entries": len(layer),
            "created_by": history[index].created_by if index < len(history) else "",
            "parent": str(parent) if parent else None,
            "last_touch": index == last_touch,
        })
    runtime = image.config.runtime
    payload = {
        "kind": "inspection",
        "layout": layout.value,
        "image_id": str(image.image_id),
        "repo_tags": list(image.repo_tags),
        "created": image.config.created,
        "entrypoint": list(runtime.entrypoint),
        "command": list(runtime.command),
        "env": list(runtime.env),
        "touch_prefix": prefix,
        "last_touch_layer": last_touch,
        "layers": rows,
    }
    if args.json:
        _emit_json(args, payload)
        return EXIT_OK

    out = sys.stdout
    out.write(f"image       {image.image_id}\n")
    out.write(f"tags        {', '.join(image.repo_tags) or '-'}\n")
    out.write(f"created     {image.config.created}\n")
    out.write(f"entrypoint  {json.dumps(list(runtime.entrypoint))}\n")
    out.write(f"command     {json.dumps(list(runtime.command))}\n\n")
    out.write(f"{'IDX':>3}  {'DIFF_ID':<12}  {'SIZE':>8}  CREATED_BY\n")
    for row in rows:
        flag = f"   <- last touch: {prefix}" if row["last_touch"] else ""
        digest = row["diff_id"].split(":", 1)[1][:12]
        out.write(f"{row['index']:>3}  {digest:<12}  {row['size']:>8}  "
                  f"{_short(row['created_by'], 60)}{flag}\n")
    out.write("\nhierarchy\n")
    for row in rows:
        indent = "  " * row["index"]
        arrow = "`- " if row["index"] else ""
        out.write(f"{indent}{arrow}{row['diff_id'][:19]} (layer {row['index']})\n")
    return EXIT_OK


class _AppendAction(argparse.Action):
    """Collect --inject/--replace/--remove/--prepend-entrypoint in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        actions = list(getattr(namespace, "actions", None) or [])
        actions.append((self.dest, values))
        namespace.actions = actions


def _split_assignment(value: str, flag: str) -> tuple[str, str]:
    path, sep, source = value.partition("=")
    if not sep or not path or not source:
        raise UsageError(f"{flag} expects PATH=FILE, got {value!r}")
    return path, source


def _payload(source: str) -> bytes:
    try:
        return Path(source).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {source}: {exc.strerror or exc}") from None


def _build_actions(args) -> list:
    policy = MtimePolicy(args.mtime)
    built = []
    for kind, value in args.actions or []:
        if kind == "inject":
            path, source = _split_assignment(value, "--inject")
            built.append(InjectFile(path, _payload(source), mtime_policy=policy))
        elif kind == "replace":
            path, source = _split_assignment(value, "--replace")
            built.append(ReplaceEntry(path, content_or_target=_payload(source), mtime_policy=policy))
        elif kind == "remove":
            built.append(RemoveEntry(value))
        else:
            built.append(PrependEntrypoint(value))
    return built


def cmd_edit(args) -> int:
    actions = _build_actions(args)
    if not actions:
        raise UsageError("edit needs at least one of --inject, --replace, --remove, --prepend-entrypoint")
    target = args.target_layer if args.target_layer is not None else AutoLatestTouching(args.target_prefix)
    image = _load(args.archive)
    edited, report = apply_edit(image, EditPlan(target, tuple(actions)))
    _write_atomic(args.out, save_archive(edited))
    return _report_edit(args, report)


def _report_edit(args, report) -> int:
    payload = {"kind": "edit", "out": args.out, **report.to_json()}
    if args.json:
        _emit_json(args, payload)
        return EXIT_OK
    out = sys.stdout
    out.write(f"target layer  {report.resolved_layer}\n")
    out.write(f"diff_id       {report.old_diff_id} -> {report.new_diff_id}\n")
    out.write(f"layer path    {report.old_layer_path} -> {report.new_layer_path}\n")
    out.write(f"image id      {report.old_image_id} -> {report.new_image_id}\n")
    out.write(f"size delta    {report.bytes_delta:+d} bytes\n")
    out.write(f"entrypoint    {json.dumps(list(report.entrypoint))}\n")
    out.write(f"command       {json.dumps(list(report.command))}\n")
    for line in report.actions_applied:
        out.write(f"  - {line}\n")
    out.write(f"wrote {args.out}\n")
    return EXIT_OK


def cmd_attack_chain(args) -> int:
    payload = _payload(args.payload) if args.payload else MARKER_PAYLOAD
    data = _read(args.archive)
    edited, report = run_attack_chain(data, payload, args.payload_name, args.target_prefix)
    _write_atomic(args.out, edited)
    return _report_edit(args, report)


def _trust_check(args, image):
    if args.trust_store is None and args.tag is None:
        return None
    if args.trust_store is None or args.tag is None:
        raise UsageError("--trust-store and --tag must be given together")
    return verify_trust(image, args.tag, args.trust_store)


def cmd_audit(args) -> int:
    if args.mtime_tolerance < 0:
        raise UsageError("--mtime-tolerance must be >= 0")
    image = _load(args.archive, verify=False)
    if args.reference:
        reference = _load(args.reference, verify=False)
        report = diff_images(reference, image)
        extra = []
    else:
        report = verify_integrity(image)
        extra = detect_mtime_anomalies(image, args.mtime_tolerance)
    trust = _trust_check(args, image)
    if trust is not None:
        extra.append(trust)
    report = replace(report, findings=report.findings + tuple(extra))
    payload = report.to_json()
    if args.json:
        _emit_json(args, payload)
    else:
        out = sys.stdout
        out.write(f"verdict  {report.verdict}\n")
        if args.reference:
            out.write(f"reference  {report.reference_image_id}\nsuspect    {report.suspect_image_id}\n")
            for drift in report.config_drift:
                out.write(f"config drift: {drift.field}\n")
        else:
            out.write(f"image    {report.image_id}\n")
        for finding in report.findings:
            where = " ".join(p for p in (
                f"layer {finding.layer_index}" if finding.layer_index is not None else "",
                finding.path or "") if p)
            out.write(f"{finding.severity:<8} {finding.code:<22} {where}  {finding.evidence}\n")
    return _VERDICT_EXIT[report.verdict]


def cmd_diff(args) -> int:
    args.archive, args.reference = args.suspect, args.reference_archive
    args.trust_store = args.tag = None
    args.mtime_tolerance = DEFAULT_MTIME_TOLERANCE
    return cmd_audit(args)


def cmd_trust(args) -> int:
    image = _load(args.archive)
    if args.action == "record":
        record = record_trust(image, args.tag, args.store, now=args.generated_at)
        payload = {"kind": "trust", "action": "record", "status": "recorded", **record.to_json()}
        code = EXIT_OK
    else:
        finding = verify_trust(image, args.tag, args.store)
        payload = {
            "kind": "trust", "action": "verify", "name_tag": args.tag,
            "image_id": str(image.image_id),
            "status": "pass" if finding is None else "mismatch",
            "finding": finding.to_json() if finding else None,
        }
        code = EXIT_OK if finding is None else EXIT_TAMPERED
    if args.json:
        _emit_json(args, payload)
    elif args.action == "record":
        sys.stdout.write(f"recorded {args.tag} -> {payload['image_id']}\n")
    elif finding is None:
        sys.stdout.write(f"pass {args.tag} {image.image_id}\n")
    else:
        sys.stdout.write(f"MISMATCH {finding.code}: {finding.evidence}\n")
    return code


def cmd_fixture(args) -> int:
    if args.name not in fixture_names():
        raise UsageError(f"unknown fixture {args.name!r}; valid names: {', '.join(fixture_names())}")
    data = fixture_bytes(fixture_spec(args.name))
    _write_atomic(args.out, data)
    image = load_archive(data)
    if args.json:
        _emit_json(args, {"kind": "fixture", "name": args.name, "out": args.out,
                          "image_id": str(image.image_id), "size": len(data)})
    else:
        sys.stdout.write(f"wrote {args.name} ({len(data)} bytes) to {args.out}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _generated_at(value: str) -> str:
    try:
        parse_timestamp(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a versioned JSON report")
    common.add_argument("--generated-at", type=_generated_at, default=None,
                        help="freeze the report timestamp (RFC 3339)")

    parser = _Parser(prog="ghostedit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="show layers, history and hierarchy")
    p.add_argument("archive")
    p.add_argument("--touch-prefix", default="usr/local/bin",
                   help="flag the last layer touching this directory (default: %(default)s)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("edit", parents=[common], help="edit a layer in place")
    p.add_argument("archive")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-layer", type=int, metavar="N")
    target.add_argument("--target-prefix", metavar="P")
    p.add_argument("--inject", dest="inject", action=_AppendAction, metavar="PATH=FILE")
    p.add_argument("--replace", dest="replace", action=_AppendAction, metavar="PATH=FILE")
    p.add_argument("--remove", dest="remove", action=_AppendAction, metavar="PATH")
    p.add_argument("--prepend-entrypoint", dest="prepend", action=_AppendAction, metavar="PATH")
    p.add_argument("--mtime", choices=[m.value for m in MtimePolicy], default=MtimePolicy.STEALTH.value)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit, actions=None)

    p = sub.add_parser("attack-chain", parents=[common], help="automated inject + entrypoint prepend")
    p.add_argument("archive")
    p.add_argument("--payload", help="payload file (default: a benign marker)")
    p.add_argument("--payload-name", default=DEFAULT_PAYLOAD_NAME)
    p.add_argument("--target-prefix", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack_chain)

    p = sub.add_parser("audit", parents=[common], help="check an archive for tampering")
    p.add_argument("archive")
    p.add_argument("--reference", help="known-good archive to diff against")
    p.add_argument("--trust-store")
    p.add_argument("--tag", metavar="NAME:TAG")
    p.add_argument("--mtime-tolerance", type=int, default=DEFAULT_MTIME_TOLERANCE, metavar="SECS")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("diff", parents=[common], help="diff a suspect archive against a reference")
    p.add_argument("reference_archive")
    p.add_argument("suspect")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("trust", parents=[common], help="record or verify a trusted image id")
    p.add_argument("action", choices=["record", "verify"])
    p.add_argument("archive")
    p.add_argument("--tag", required=True, metavar="NAME:TAG")
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_trust)

    p = sub.add_parser("fixture", parents=[common], help="write a canned synthetic image")
    p.add_argument("name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RecordNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_RECORD
    except (TargetNotFound, IndexOutOfRange) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TARGET
    except (PreconditionViolated, SpliceAmbiguous, PlanInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ArchiveError, InvariantViolation, TrustError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
