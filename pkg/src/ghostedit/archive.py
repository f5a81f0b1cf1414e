"""In-memory model of a ``docker save`` archive.

The outer tar holds ``manifest.json``, a config JSON named after the image
id, and one ``<dir>/layer.tar`` per layer. The config's ``rootfs.diff_ids``
lists the sha256 of every uncompressed layer tar, in layer order; a load
fails verification as soon as one of them disagrees with the layer bytes.
"""

from __future__ import annotations

import calendar
import enum
import json
import posixpath
import re
from dataclasses import dataclass, field

from .digest import Digest
from .errors import (
    ConfigUnparseable,
    DigestMismatch,
    IndexOutOfRange,
    InvariantViolation,
    LayoutUnsupported,
    ManifestMissing,
    MissingMember,
    PathTraversal,
)
from .layerfs import LayerBlob, is_under, layer_digest, read_layer, write_layer
from .tarcodec import EntryKind, TarEntry, normalize_path, read_tar, write_tar

MANIFEST_NAME = "manifest.json"
LAYER_TAR_NAME = "layer.tar"
MEMBER_MODE = 0o644

_GZIP_MAGIC = b"\x1f\x8b"
_HEX_NAME_RE = re.compile(r"^([0-9a-f]{64})(\.tar)?$")
_TIMESTAMP_RE = re.compile(
    r"^(\d{4})-(\d\d)-(\d\d)[Tt ](\d\d):(\d\d):(\d\d)(?:\.\d+)?(Z|z|[+-]\d\d:\d\d)$"
)


class LayoutKind(enum.Enum):
    LEGACY_DOCKER_SAVE = "legacy-docker-save"
    OCI_NESTED = "oci-nested"
    UNKNOWN = "unknown"


def parse_timestamp(value: str) -> int:
    """RFC 3339 timestamp to integer epoch seconds (fraction truncated)."""
    match = _TIMESTAMP_RE.match(value or "")
    if not match:
        raise ValueError(f"not an RFC 3339 timestamp: {value!r}")
    year, month, day, hour, minute, second = (int(g) for g in match.groups()[:6])
    seconds = calendar.timegm((year, month, day, hour, minute, second, 0, 0, 0))
    zone = match.group(7)
    if zone not in ("Z", "z"):
        sign = 1 if zone[0] == "+" else -1
        seconds -= sign * (int(zone[1:3]) * 3600 + int(zone[4:6]) * 60)
    return seconds


# --------------------------------------------------------------------------
# config and manifest

@dataclass(frozen=True)
class HistoryEntry:
    created: str
    created_by: str
    empty_layer: bool = False


@dataclass(frozen=True)
class RuntimeConfig:
    entrypoint: tuple[str, ...] = ()
    command: tuple[str, ...] = ()
    env: tuple[str, ...] = ()

    @property
    def argv(self) -> tuple[str, ...]:
        """What the container actually executes: entrypoint then command."""
        return self.entrypoint + self.command


def _str_list(value, what: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigUnparseable(f"{what} must be a list of strings")
    return tuple(value)


@dataclass(frozen=True)
class ImageConfig:
    created: str
    history: tuple[HistoryEntry, ...]
    diff_ids: tuple[Digest, ...]
    runtime: RuntimeConfig
    raw_bytes: bytes = field(repr=False)

    rootfs_type = "layers"

    @classmethod
    def from_bytes(cls, raw: bytes) -> ImageConfig:
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigUnparseable(f"config is not JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigUnparseable("config must be a JSON object")
        rootfs = doc.get("rootfs")
        if not isinstance(rootfs, dict) or rootfs.get("type") != "layers":
            raise ConfigUnparseable("config rootfs must have type 'layers'")
        try:
            diff_ids = tuple(Digest.parse(d) for d in rootfs.get("diff_ids") or [])
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigUnparseable(f"bad diff_ids: {exc}") from None
        history = []
        for item in doc.get("history") or []:
            if not isinstance(item, dict):
                raise ConfigUnparseable("history entries must be objects")
            history.append(HistoryEntry(
                created=str(item.get("created", "")),
                created_by=str(item.get("created_by", "")),
                empty_layer=bool(item.get("empty_layer", False)),
            ))
        runtime = doc.get("config") or {}
        if not isinstance(runtime, dict):
            raise ConfigUnparseable("config.config must be an object")
        return cls(
            created=str(doc.get("created", "")),
            history=tuple(history),
            diff_ids=diff_ids,
            runtime=RuntimeConfig(
                entrypoint=_str_list(runtime.get("Entrypoint"), "Entrypoint"),
                command=_str_list(runtime.get("Cmd"), "Cmd"),
                env=_str_list(runtime.get("Env"), "Env"),
            ),
            raw_bytes=bytes(raw),
        )

    @property
    def created_epoch(self) -> int | None:
        try:
            return parse_timestamp(self.created)
        except ValueError:
            return None

    @property
    def layer_history(self) -> list[HistoryEntry]:
        """History entries that produced a layer, in layer order."""
        return [h for h in self.history if not h.empty_layer]


@dataclass(frozen=True)
class Manifest:
    config_path: str
    repo_tags: tuple[str, ...]
    layer_paths: tuple[str, ...]
    raw_bytes: bytes = field(repr=False)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Manifest:
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ManifestMissing(f"manifest.json is not JSON: {exc}") from None
        if not _legacy_manifest_shape(doc):
            raise ManifestMissing("manifest.json has no Config/Layers entry")
        if len(doc) != 1:
            raise LayoutUnsupported("multi-image archives are not supported")
        item = doc[0]
        layers = item["Layers"]
        if not layers:
            raise InvariantViolation("manifest lists no layers")
        return cls(
            config_path=normalize_path(item["Config"]),
            repo_tags=tuple(item.get("RepoTags") or ()),
            layer_paths=tuple(normalize_path(p) for p in layers),
            raw_bytes=bytes(raw),
        )


def _legacy_manifest_shape(doc) -> bool:
    return (
        isinstance(doc, list) and bool(doc)
        and all(isinstance(item, dict) and isinstance(item.get("Config"), str)
                and isinstance(item.get("Layers"), list)
                and all(isinstance(p, str) for p in item["Layers"])
                for item in doc)
    )


# --------------------------------------------------------------------------
# archive

@dataclass(frozen=True)
class ImageArchive:
    manifest: Manifest
    config: ImageConfig
    layers: tuple[LayerBlob, ...]
    extras: tuple[TarEntry, ...] = ()

    def __post_init__(self) -> None:
        for name in ("layers", "extras"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))

    @property
    def image_id(self) -> Digest:
        return compute_image_id(self.config)

    @property
    def repo_tags(self) -> tuple[str, ...]:
        return self.manifest.repo_tags


def compute_diff_id(layer: LayerBlob) -> Digest:
    return layer_digest(layer)


def compute_image_id(config: ImageConfig) -> Digest:
    return Digest.of(config.raw_bytes)


def parent_of(image: ImageArchive, layer_index: int) -> Digest | None:
    if not 0 <= layer_index < len(image.layers):
        raise IndexOutOfRange(f"layer index {layer_index} outside 0..{len(image.layers) - 1}")
    if layer_index == 0:
        return None
    return image.config.diff_ids[layer_index - 1]


def layer_dir(layer_path: str) -> str | None:
    """Directory that groups a layer's members, for ``<dir>/layer.tar`` paths."""
    parent, _, base = layer_path.rpartition("/")
    return parent if base == LAYER_TAR_NAME and parent else None


def relinked_path(layer_path: str, new_hex: str) -> str:
    """Content-addressed location of a layer whose diff_id became ``new_hex``."""
    directory = layer_dir(layer_path)
    if directory is not None:
        head = directory.rpartition("/")[0]
        return posixpath.join(head, new_hex, LAYER_TAR_NAME)
    head, _, base = layer_path.rpartition("/")
    match = _HEX_NAME_RE.match(base)
    if match:
        renamed = new_hex + (match.group(2) or "")
        return f"{head}/{renamed}" if head else renamed
    return layer_path


def _classify(entries: list[TarEntry]) -> LayoutKind:
    members = {e.path: e for e in entries}
    manifest = members.get(MANIFEST_NAME)
    if manifest is not None and manifest.kind is EntryKind.REGULAR:
        try:
            doc = json.loads(manifest.content.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            doc = None
        if _legacy_manifest_shape(doc):
            return LayoutKind.LEGACY_DOCKER_SAVE
    has_blobs = any(is_under(p, "blobs") for p in members)
    if "index.json" in members and has_blobs:
        return LayoutKind.OCI_NESTED
    return LayoutKind.UNKNOWN


def detect_layout(archive_bytes: bytes) -> LayoutKind:
    return _classify(read_tar(archive_bytes))


def _member_bytes(members: dict[str, TarEntry], path: str, what: str) -> bytes:
    seen = set()
    while True:
        entry = members.get(path)
        if entry is None:
            raise MissingMember(f"{what} {path!r} is not in the archive")
        if entry.kind is EntryKind.REGULAR:
            return entry.content
        if entry.kind not in (EntryKind.SYMLINK, EntryKind.HARDLINK) or path in seen:
            raise MissingMember(f"{what} {path!r} does not resolve to a file")
        seen.add(path)
        if entry.kind is EntryKind.SYMLINK:
            joined = posixpath.normpath(posixpath.join(posixpath.dirname(path), entry.link_target))
            if joined.startswith("../") or joined == ".." or joined.startswith("/"):
                raise PathTraversal(entry.link_target)
            path = joined
        else:
            path = entry.link_target


def load_archive(archive_bytes: bytes, *, verify: bool = True) -> ImageArchive:
    """Parse and verify a legacy docker-save archive.

    Every layer is hashed and checked against ``rootfs.diff_ids`` before
    its contents are parsed. ``verify=False`` skips that check so an
    auditor can still examine an archive that would fail to load.
    """
    entries = read_tar(archive_bytes)
    layout = _classify(entries)
    if layout is not LayoutKind.LEGACY_DOCKER_SAVE:
        message = f"layout unsupported for editing; detected: {layout.value}"
        if layout is LayoutKind.UNKNOWN and not any(e.path == MANIFEST_NAME for e in entries):
            raise ManifestMissing(message, layout)
        raise LayoutUnsupported(message, layout)

    members = {e.path: e for e in entries}
    manifest = Manifest.from_bytes(members[MANIFEST_NAME].content)
    config = ImageConfig.from_bytes(_member_bytes(members, manifest.config_path, "config"))
    if len(config.diff_ids) != len(manifest.layer_paths):
        raise InvariantViolation(
            f"manifest lists {len(manifest.layer_paths)} layers, "
            f"config records {len(config.diff_ids)} diff_ids"
        )

    layers = []
    for index, path in enumerate(manifest.layer_paths):
        data = _member_bytes(members, path, "layer")
        if data[:2] == _GZIP_MAGIC:
            raise LayoutUnsupported(f"layer {path} is compressed; only uncompressed layers are supported")
        actual = Digest.of(data)
        expected = config.diff_ids[index]
        if verify and actual != expected:
            raise DigestMismatch(index, expected, actual)
        layers.append(read_layer(data))

    modeled = {MANIFEST_NAME, manifest.config_path, *manifest.layer_paths}
    extras = tuple(e for e in entries if e.path not in modeled)
    return ImageArchive(manifest, config, tuple(layers), extras)


def check_invariants(image: ImageArchive) -> None:
    n = len(image.layers)
    if not (n == len(image.manifest.layer_paths) == len(image.config.diff_ids)):
        raise InvariantViolation(
            f"misaligned image: {n} layers, {len(image.manifest.layer_paths)} layer paths, "
            f"{len(image.config.diff_ids)} diff_ids"
        )
    for index, layer in enumerate(image.layers):
        actual = compute_diff_id(layer)
        if actual != image.config.diff_ids[index]:
            raise InvariantViolation(
                f"layer {index} hashes to {actual} but config records {image.config.diff_ids[index]}"
            )


def _member(path: str, content: bytes) -> TarEntry:
    return TarEntry(path, EntryKind.REGULAR, mode=MEMBER_MODE, content=content)


def save_archive(image: ImageArchive) -> bytes:
    """Serialize with the canonical writer.

    Member order: each layer's directory members followed by its
    layer.tar (manifest order), then the config, then remaining extras in
    their original order, and manifest.json last.
    """
    check_invariants(image)
    out: list[TarEntry] = []
    emitted_extras: set[int] = set()
    emitted_layers: set[str] = set()
    for path, layer in zip(image.manifest.layer_paths, image.layers):
        directory = layer_dir(path)
        if directory is not None:
            for i, extra in enumerate(image.extras):
                if i not in emitted_extras and is_under(extra.path, directory):
                    out.append(extra)
                    emitted_extras.add(i)
        if path not in emitted_layers:
            out.append(_member(path, write_layer(layer)))
            emitted_layers.add(path)
    out.append(_member(image.manifest.config_path, image.config.raw_bytes))
    out.extend(e for i, e in enumerate(image.extras) if i not in emitted_extras)
    out.append(_member(MANIFEST_NAME, image.manifest.raw_bytes))
    return write_tar(out)
