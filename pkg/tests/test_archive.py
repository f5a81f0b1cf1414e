import hashlib
import io
import json
import tarfile
from dataclasses import replace

import pytest

from ghostedit.archive import (
    LayoutKind,
    compute_diff_id,
    compute_image_id,
    detect_layout,
    layer_dir,
    load_archive,
    parent_of,
    parse_timestamp,
    relinked_path,
    save_archive,
)
from ghostedit.digest import Digest
from ghostedit.engine import rehash_and_relink
from ghostedit.errors import (
    ConfigUnparseable,
    DigestMismatch,
    IndexOutOfRange,
    LayoutUnsupported,
    ManifestMissing,
    MissingMember,
    TarMalformed,
)
from ghostedit.fixtures import fixture_names
from ghostedit.jsonsplice import raw_value
from ghostedit.layerfs import LayerBlob
from ghostedit.tarcodec import EntryKind, TarEntry, write_tar

# Digests of an upstream image's last two layers, used purely as parse targets.
UPSTREAM_PARENT = "c4de813b514787fcf51c1a819257340d2cd55582bda6c1bf4976abd8ce3b182f"
UPSTREAM_LAST = "bb08757677326f0612dfedb81d774197163a11f962cde60f12abe8fc38f21c4e"


def stdlib_tar(members: dict[str, bytes]) -> bytes:
    """Build an outer archive with the stdlib, GNU format plus record padding."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.GNU_FORMAT) as tf:
        for name, data in members.items():
            info = tarfile.TarInfo(name)
            info.size = len(data)
            info.mtime = 1700000000
            tf.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def layer_tar(files: dict[str, bytes]) -> bytes:
    return stdlib_tar(files)


def hand_archive(layers: list[bytes], diff_ids=None, *, history=None, config_extra=None):
    diff_ids = diff_ids or ["sha256:" + hashlib.sha256(b).hexdigest() for b in layers]
    config = {
        "created": "2024-08-14T00:00:00Z",
        "history": history if history is not None else [{"created_by": f"step {i}"} for i in range(len(layers))],
        "rootfs": {"type": "layers", "diff_ids": diff_ids},
        "config": {"Cmd": ["sh"]},
        **(config_extra or {}),
    }
    config_bytes = json.dumps(config, indent=2).encode()
    config_name = hashlib.sha256(config_bytes).hexdigest() + ".json"
    paths = [f"{d.split(':')[1]}/layer.tar" for d in diff_ids]
    manifest = [{"Config": config_name, "RepoTags": ["demo:1"], "Layers": paths}]
    members = {config_name: config_bytes, "manifest.json": json.dumps(manifest).encode()}
    members.update(zip(paths, layers))
    return stdlib_tar(members)


LAYERS = [layer_tar({"etc/os-release": b"demo\n"}), layer_tar({"usr/bin/app": b"app v1\n"}),
          layer_tar({"usr/bin/app2": b"app v2\n"})]


# --- layout detection ------------------------------------------------------

def test_detect_layout_legacy(fixture_archives):
    for data in fixture_archives.values():
        assert detect_layout(data) is LayoutKind.LEGACY_DOCKER_SAVE


def test_detect_layout_oci_nested():
    data = write_tar([
        TarEntry("index.json", EntryKind.REGULAR, content=b'{"schemaVersion":2,"manifests":[]}'),
        TarEntry("blobs/sha256", EntryKind.DIRECTORY),
    ])
    assert detect_layout(data) is LayoutKind.OCI_NESTED
    with pytest.raises(LayoutUnsupported, match="detected: oci-nested"):
        load_archive(data)


def test_detect_layout_unknown_and_missing_manifest():
    assert detect_layout(bytes(1024)) is LayoutKind.UNKNOWN
    with pytest.raises(ManifestMissing):
        load_archive(bytes(1024))
    with pytest.raises(TarMalformed):
        load_archive(b"")


# --- loading foreign archives ---------------------------------------------

def test_load_stdlib_built_archive_and_resave_verifies():
    data = hand_archive(LAYERS)
    image = load_archive(data)
    assert len(image.layers) == 3 and image.repo_tags == ("demo:1",)
    for layer, raw in zip(image.layers, LAYERS):
        assert compute_diff_id(layer).hex == hashlib.sha256(raw).hexdigest()
    again = load_archive(save_archive(image))
    assert again.config.raw_bytes == image.config.raw_bytes
    assert again == image


def test_flipped_byte_in_layer_1_is_digest_mismatch():
    corrupt = bytearray(LAYERS[1])
    corrupt[corrupt.index(b"app v1")] ^= 0x20
    expected = "sha256:" + hashlib.sha256(LAYERS[1]).hexdigest()
    data = hand_archive([LAYERS[0], bytes(corrupt), LAYERS[2]],
                        ["sha256:" + hashlib.sha256(b).hexdigest() for b in LAYERS])
    with pytest.raises(DigestMismatch) as info:
        load_archive(data)
    assert info.value.layer_index == 1
    assert str(info.value.expected) == expected
    assert info.value.actual.hex == hashlib.sha256(bytes(corrupt)).hexdigest()
    assert load_archive(data, verify=False).layers[1].raw == bytes(corrupt)


def test_upstream_vectors_parse_and_parent_of():
    data = hand_archive(LAYERS[:2], ["sha256:" + UPSTREAM_PARENT, "sha256:" + UPSTREAM_LAST])
    with pytest.raises(DigestMismatch):
        load_archive(data)
    image = load_archive(data, verify=False)
    assert image.config.diff_ids[-1] == Digest(UPSTREAM_LAST)
    assert parent_of(image, 1) == Digest(UPSTREAM_PARENT)
    assert parent_of(image, 0) is None
    assert image.manifest.layer_paths[1] == f"{UPSTREAM_LAST}/layer.tar"


def test_parent_of_three_layers_and_bounds():
    image = load_archive(hand_archive(LAYERS))
    assert parent_of(image, 2) == image.config.diff_ids[1]
    for bad in (-1, 3):
        with pytest.raises(IndexOutOfRange):
            parent_of(image, bad)


def test_config_errors():
    with pytest.raises(ConfigUnparseable):
        load_archive(hand_archive(LAYERS[:1], config_extra={"rootfs": {"type": "other"}}))
    members = {"manifest.json": json.dumps([{"Config": "c.json", "Layers": ["a/layer.tar"]}]).encode(),
               "c.json": b"{not json"}
    with pytest.raises(ConfigUnparseable):
        load_archive(stdlib_tar(members))
    members["c.json"] = b'{"rootfs":{"type":"layers","diff_ids":["sha256:' + b"0" * 64 + b'"]}}'
    with pytest.raises(MissingMember):
        load_archive(stdlib_tar(members))


def test_gzip_layer_is_unsupported():
    gz = b"\x1f\x8b" + b"\x00" * 30
    with pytest.raises(LayoutUnsupported, match="compressed"):
        load_archive(hand_archive([gz]))


# --- ids -------------------------------------------------------------------

def test_image_id_is_sha256_of_config_bytes(fixtures):
    for image in fixtures.values():
        assert compute_image_id(image.config).hex == hashlib.sha256(image.config.raw_bytes).hexdigest()
        assert compute_image_id(image.config) == compute_image_id(image.config)


def test_one_hex_char_rewrite_changes_image_id(python_like):
    raw = python_like.config.raw_bytes
    target = python_like.config.diff_ids[3].hex
    flipped = target[:-1] + ("0" if target[-1] != "0" else "1")
    rewritten = raw.replace(target.encode(), flipped.encode())
    assert hashlib.sha256(rewritten).hexdigest() != hashlib.sha256(raw).hexdigest()
    config = type(python_like.config).from_bytes(rewritten)
    assert compute_image_id(config) != compute_image_id(python_like.config)


# --- save ------------------------------------------------------------------

@pytest.mark.parametrize("name", fixture_names())
def test_fixture_save_load_identity(name, fixture_archives):
    data = fixture_archives[name]
    image = load_archive(data)
    assert save_archive(image) == data
    assert load_archive(save_archive(image)) == image


def test_saved_archive_is_readable_by_stdlib(fixture_archives):
    with tarfile.open(fileobj=io.BytesIO(fixture_archives["python-like"])) as tf:
        names = tf.getnames()
    assert names[-1] == "manifest.json"
    assert sum(n.endswith("/layer.tar") for n in names) == 8


def test_edited_save_changes_size_not_history(python_like):
    layers = list(python_like.layers)
    extra = TarEntry("usr/local/bin/extra", EntryKind.REGULAR, content=b"x" * 600)
    layers[7] = LayerBlob(layers[7].entries + (extra,))
    edited = rehash_and_relink(replace(python_like, layers=tuple(layers)), 7)
    before, after = save_archive(python_like), save_archive(edited)
    assert len(after) != len(before)
    new_raw = load_archive(after).config.raw_bytes
    assert raw_value(new_raw, ("history",)) == raw_value(python_like.config.raw_bytes, ("history",))


# --- helpers ---------------------------------------------------------------

def test_layer_paths_and_relinking():
    h = "ab" * 32
    assert layer_dir("0123/layer.tar") == "0123"
    assert layer_dir("blobs/x.tar") is None
    assert relinked_path("0123/layer.tar", h) == f"{h}/layer.tar"
    assert relinked_path(f"{'cd' * 32}.tar", h) == f"{h}.tar"
    assert relinked_path("layers/custom-name.tar", h) == "layers/custom-name.tar"


@pytest.mark.parametrize("text, epoch", [
    ("1970-01-01T00:00:00Z", 0),
    ("2024-08-14T00:00:00Z", 1723593600),
    ("2024-08-14T02:00:00.123456789+02:00", 1723593600),
])
def test_parse_timestamp(text, epoch):
    assert parse_timestamp(text) == epoch


def test_parse_timestamp_rejects_garbage():
    with pytest.raises(ValueError):
        parse_timestamp("yesterday")
