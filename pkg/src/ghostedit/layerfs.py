"""Layer contents and layer-stack filesystem semantics."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .digest import Digest
from .tarcodec import EntryKind, TarEntry, normalize_path, read_tar, write_tar

log = logging.getLogger(__name__)

WHITEOUT_PREFIX = ".wh."
OPAQUE_MARKER = ".wh..wh..opq"


@dataclass(frozen=True)
class LayerBlob:
    """One layer tar, as an ordered tuple of entries.

    ``raw`` keeps the exact bytes a layer was read from so that layers
    written by other tools (GNU headers, uname fields, record padding)
    still hash to their recorded diff_id. It is dropped by every edit and
    ignored by equality.
    """

    entries: tuple[TarEntry, ...] = ()
    raw: bytes | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.entries, tuple):
            object.__setattr__(self, "entries", tuple(self.entries))

    def paths(self) -> list[str]:
        return [e.path for e in self.entries]

    def find(self, path: str) -> TarEntry | None:
        for entry in reversed(self.entries):
            if entry.path == path:
                return entry
        return None

    def __len__(self) -> int:
        return len(self.entries)


def read_layer(tar_bytes: bytes) -> LayerBlob:
    return LayerBlob(tuple(read_tar(tar_bytes)), raw=bytes(tar_bytes))


def write_layer(layer: LayerBlob) -> bytes:
    if layer.raw is not None:
        return layer.raw
    return write_tar(layer.entries)


def canonical_bytes(layer: LayerBlob) -> bytes:
    """Serialization ignoring any retained original bytes."""
    return write_tar(layer.entries)


def layer_digest(layer: LayerBlob) -> Digest:
    return Digest.of(write_layer(layer))


# --------------------------------------------------------------------------
# whiteouts

def whiteout_target(entry_path: str) -> tuple[str, bool] | None:
    """What a whiteout entry hides: ``(path, opaque)`` or ``None``.

    For an opaque marker the returned path is the directory whose lower
    contents are hidden ("" for the root).
    """
    parent, _, name = entry_path.rpartition("/")
    if name == OPAQUE_MARKER:
        return parent, True
    if name.startswith(WHITEOUT_PREFIX) and len(name) > len(WHITEOUT_PREFIX):
        hidden = name[len(WHITEOUT_PREFIX):]
        return (f"{parent}/{hidden}" if parent else hidden), False
    return None


def is_under(path: str, prefix: str) -> bool:
    """True if ``path`` equals ``prefix`` or lies below it (component-wise)."""
    if not prefix:
        return True
    return path == prefix or path.startswith(prefix + "/")


# --------------------------------------------------------------------------
# root filesystem

@dataclass(frozen=True)
class FsNode:
    kind: EntryKind
    mode: int
    content: bytes
    link_target: str
    provenance_layer: int
    mtime: int = 0
    dangling: bool = False


@dataclass(frozen=True)
class DanglingLink:
    layer_index: int
    path: str
    target: str

    def __str__(self) -> str:
        return f"layer {self.layer_index}: hardlink {self.path} -> {self.target} is dangling"


@dataclass
class RootFs:
    files: dict[str, FsNode] = field(default_factory=dict)
    warnings: list[DanglingLink] = field(default_factory=list)

    def __contains__(self, path: str) -> bool:
        return path in self.files

    def __getitem__(self, path: str) -> FsNode:
        return self.files[path]


def _drop_subtree(files: dict[str, FsNode], path: str, *, keep_root: bool) -> None:
    prefix = path + "/" if path else ""
    doomed = [p for p in files if p.startswith(prefix)]
    if not keep_root and path in files:
        doomed.append(path)
    for p in doomed:
        del files[p]


def materialize_rootfs(layers) -> RootFs:
    """Overlay ``layers`` bottom-up into a single view.

    Whiteouts in layer *i* only hide content from layers below *i*, so
    they are applied before that layer's own entries. A non-directory
    replacing a directory hides everything beneath it; an entry below a
    path that is currently a non-directory replaces that path.
    """
    fs = RootFs()
    files = fs.files
    parents: set[str] = set()  # every ancestor ever placed; may go stale
    for index, layer in enumerate(layers):
        regular_entries = []
        for entry in layer.entries:
            target = whiteout_target(entry.path)
            if target is None:
                regular_entries.append(entry)
                continue
            hidden, opaque = target
            _drop_subtree(files, hidden, keep_root=opaque)

        for entry in regular_entries:
            parts = entry.path.split("/")
            for depth in range(1, len(parts)):
                ancestor = "/".join(parts[:depth])
                parents.add(ancestor)
                node = files.get(ancestor)
                if node is not None and node.kind is not EntryKind.DIRECTORY:
                    del files[ancestor]
            # a directory, explicit or implied by its children, is replaced whole
            if entry.kind is not EntryKind.DIRECTORY and entry.path in parents:
                _drop_subtree(files, entry.path, keep_root=True)

            content = entry.content
            dangling = False
            if entry.kind is EntryKind.HARDLINK:
                files.pop(entry.path, None)  # unlink before linking, as tar does
                linked = files.get(entry.link_target)
                if linked is not None and linked.kind in (EntryKind.REGULAR, EntryKind.HARDLINK) \
                        and not linked.dangling:
                    content = linked.content
                else:
                    dangling = True
                    warning = DanglingLink(index, entry.path, entry.link_target)
                    fs.warnings.append(warning)
                    log.warning("%s", warning)
            files[entry.path] = FsNode(
                kind=entry.kind,
                mode=entry.mode,
                content=content,
                link_target=entry.link_target,
                provenance_layer=index,
                mtime=entry.mtime,
                dangling=dangling,
            )
    return fs


# --------------------------------------------------------------------------
# diffs

class Change(enum.Enum):
    ADDED = "Added"
    REMOVED = "Removed"
    CONTENT_MODIFIED = "ContentModified"
    TYPE_CHANGED = "TypeChanged"
    META_CHANGED = "MetaChanged"


@dataclass(frozen=True)
class EntrySummary:
    kind: EntryKind
    size: int
    content_digest: Digest | None
    mtime: int
    mode: int
    link_target: str

    @classmethod
    def of(cls, entry: TarEntry) -> EntrySummary:
        digest = Digest.of(entry.content) if entry.kind in (EntryKind.REGULAR, EntryKind.OPAQUE) else None
        return cls(entry.kind, entry.size, digest, entry.mtime, entry.mode, entry.link_target)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "size": self.size,
            "content_digest": str(self.content_digest) if self.content_digest else None,
            "mtime": self.mtime,
            "mode": f"{self.mode:04o}",
            "link_target": self.link_target,
        }


@dataclass(frozen=True)
class EntryDiff:
    path: str
    change: Change
    before_entry: TarEntry | None = field(default=None, repr=False)
    after_entry: TarEntry | None = field(default=None, repr=False)

    @property
    def before(self) -> EntrySummary | None:
        return EntrySummary.of(self.before_entry) if self.before_entry else None

    @property
    def after(self) -> EntrySummary | None:
        return EntrySummary.of(self.after_entry) if self.after_entry else None

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "change": self.change.value,
            "before": self.before.to_json() if self.before else None,
            "after": self.after.to_json() if self.after else None,
        }


def _effective(layer: LayerBlob) -> dict[str, TarEntry]:
    last: dict[str, TarEntry] = {}
    for entry in layer.entries:
        last[entry.path] = entry
    return last


def _classify(a: TarEntry, b: TarEntry) -> Change | None:
    if a == b:
        return None
    if a.kind is not b.kind:
        return Change.TYPE_CHANGED
    if a.content != b.content or a.link_target != b.link_target or a.typeflag != b.typeflag:
        return Change.CONTENT_MODIFIED
    return Change.META_CHANGED


def layer_diff(before: LayerBlob, after: LayerBlob) -> list[EntryDiff]:
    """Path-keyed differences between two layers, sorted by path."""
    a, b = _effective(before), _effective(after)
    diffs = []
    for path in sorted(a.keys() | b.keys()):
        old, new = a.get(path), b.get(path)
        if old is None:
            diffs.append(EntryDiff(path, Change.ADDED, None, new))
        elif new is None:
            diffs.append(EntryDiff(path, Change.REMOVED, old, None))
        else:
            change = _classify(old, new)
            if change is not None:
                diffs.append(EntryDiff(path, change, old, new))
    return diffs


# --------------------------------------------------------------------------
# target search

def touches(entry_path: str, prefix: str) -> bool:
    """Whether an entry changes anything at or below ``prefix``.

    Whiteouts count through the path they hide, in both directions: a
    whiteout under the prefix touches it, and so does one that hides an
    ancestor of the prefix.
    """
    target = whiteout_target(entry_path)
    if target is not None:
        hidden, _ = target
        return is_under(hidden, prefix) or is_under(prefix, hidden)
    return is_under(entry_path, prefix)


def clean_prefix(prefix: str) -> str:
    prefix = prefix.strip("/")
    return normalize_path(prefix) if prefix else ""


def find_last_layer_touching(image, path_prefix: str) -> int | None:
    prefix = clean_prefix(path_prefix)
    for index in range(len(image.layers) - 1, -1, -1):
        if any(touches(e.path, prefix) for e in image.layers[index].entries):
            return index
    return None
