import hashlib
from dataclasses import replace

import pytest

from ghostedit.archive import ImageConfig, load_archive, save_archive
from ghostedit.audit import diff_images
from ghostedit.engine import (
    MARKER_PAYLOAD,
    AutoLatestTouching,
    EditPlan,
    InjectFile,
    MtimePolicy,
    PrependEntrypoint,
    RemoveEntry,
    ReplaceEntry,
    apply_edit,
    prepend_entrypoint,
    rehash_and_relink,
    resolve_target,
    run_attack_chain,
)
from ghostedit.errors import (
    IndexOutOfRange,
    PlanInvalid,
    PreconditionViolated,
    SpliceAmbiguous,
    TargetNotFound,
)
from ghostedit.fixtures import FIXTURE_EPOCH, FixtureSpec, build_fixture, d, f, fixture_bytes, fixture_spec, x
from ghostedit.jsonsplice import insert_member, raw_value
from ghostedit.layerfs import LayerBlob, materialize_rootfs, read_layer, write_layer
from ghostedit.tarcodec import EntryKind

PAYLOAD = "/usr/local/bin/ghostedit_rev_shell"


def small_spec(**overrides):
    base = dict(
        name="three", name_tag="three:1",
        layers=((d("opt"), x("opt/a", "a\n")), (f("etc/b", "bbbb\n"),), (x("opt/c", "c\n"),)),
        history=(("ADD a", False), ("ADD b", False), ("ENV X=1", True), ("ADD c", False)),
        command=("sh",), target_prefix="opt",
    )
    base.update(overrides)
    return FixtureSpec(**base)


@pytest.fixture
def three():
    return build_fixture(small_spec())


# --- target resolution -----------------------------------------------------

def test_resolve_target(python_like):
    assert resolve_target(python_like, EditPlan(AutoLatestTouching("usr/local/bin"), (RemoveEntry("x"),))) == 7
    assert resolve_target(python_like, EditPlan(7, (RemoveEntry("x"),))) == 7
    with pytest.raises(TargetNotFound):
        resolve_target(python_like, EditPlan(AutoLatestTouching("nonexistent/"), (RemoveEntry("x"),)))
    with pytest.raises(IndexOutOfRange):
        resolve_target(python_like, EditPlan(8, (RemoveEntry("x"),)))


def test_plan_validation(python_like):
    with pytest.raises(PlanInvalid):
        apply_edit(python_like, EditPlan(0, ()))
    with pytest.raises(PlanInvalid):
        apply_edit(python_like, EditPlan(0, (PrependEntrypoint("/a"), PrependEntrypoint("/b"))))


# --- apply_edit ------------------------------------------------------------

def test_python3_replacement(python_like):
    plan = EditPlan(AutoLatestTouching("usr/local/bin"),
                    (ReplaceEntry("usr/local/bin/python3", EntryKind.REGULAR, MARKER_PAYLOAD),))
    edited, report = apply_edit(python_like, plan)
    reloaded = load_archive(save_archive(edited))
    node = materialize_rootfs(reloaded.layers)["usr/local/bin/python3"]
    assert node.kind is EntryKind.REGULAR and node.content == MARKER_PAYLOAD
    assert reloaded.config.history == python_like.config.history
    assert report.resolved_layer == 7
    assert report.new_diff_id == reloaded.config.diff_ids[7] != report.old_diff_id
    assert report.new_layer_path == f"{report.new_diff_id.hex}/layer.tar"
    # companion members moved with the layer directory
    assert any(e.path == f"{report.new_diff_id.hex}/VERSION" for e in reloaded.extras)
    assert not any(e.path.startswith(report.old_diff_id.hex) for e in reloaded.extras)


def test_probe_plan_is_byte_identical(fixture_archives):
    data = fixture_archives["python-like"]
    image = load_archive(data)
    edited, report = apply_edit(image, EditPlan(7, (), probe=True))
    assert save_archive(edited) == data
    assert report.old_diff_id == report.new_diff_id
    assert report.old_image_id == report.new_image_id


def test_inject_then_diff_has_one_added(fixtures):
    alpine = fixtures["alpine-like"]
    edited, _ = apply_edit(alpine, EditPlan(0, (InjectFile("bin/busybox-old", b"old busybox\n"),)))
    findings = diff_images(alpine, edited).findings
    assert [(f.code, f.path) for f in findings] == [("ENTRY_ADDED", "bin/busybox-old")]


def test_inject_lands_next_to_its_directory(python_like):
    edited, _ = apply_edit(python_like, EditPlan(7, (InjectFile("usr/local/bin/zz", b"z"),)))
    paths = edited.layers[7].paths()
    i = paths.index("usr/local/bin/zz")
    assert paths[i - 1].startswith("usr/local/bin")


@pytest.mark.parametrize("action", [
    InjectFile("usr/local/bin/python3", b"dup"),
    ReplaceEntry("usr/local/bin/absent", EntryKind.REGULAR, b"x"),
    RemoveEntry("usr/local/bin/absent"),
    InjectFile("../escape", b"x"),
    ReplaceEntry("usr/local/bin/python3", EntryKind.SYMLINK, ""),
    PrependEntrypoint("relative/path"),
])
def test_preconditions(python_like, action):
    with pytest.raises(PreconditionViolated):
        apply_edit(python_like, EditPlan(7, (action,)))


def test_remove_entry(python_like):
    edited, _ = apply_edit(python_like, EditPlan(7, (RemoveEntry("usr/local/bin/python3"),)))
    assert edited.layers[7].find("usr/local/bin/python3") is None
    assert "usr/local/bin/python3" not in materialize_rootfs(edited.layers)


def test_mtime_policies(three):
    created = FIXTURE_EPOCH
    now = created + 10 ** 6
    cases = {MtimePolicy.STEALTH: created, MtimePolicy.HONEST: now}
    for policy, expected in cases.items():
        edited, _ = apply_edit(three, EditPlan(2, (InjectFile("opt/new", b"n", mtime_policy=policy),)), now=now)
        assert edited.layers[2].find("opt/new").mtime == expected
    old = replace(three.layers[2].entries[0], mtime=123)
    image = rehash_and_relink(replace(three, layers=(*three.layers[:2], LayerBlob((old,)))), 2)
    edited, _ = apply_edit(image, EditPlan(2, (ReplaceEntry("opt/c", EntryKind.REGULAR, b"c2",
                                                            mtime_policy=MtimePolicy.PRESERVE),)), now=now)
    assert edited.layers[2].find("opt/c").mtime == 123


def test_ambiguous_diff_id_splice_is_refused(python_like):
    hex7 = python_like.config.diff_ids[7].hex
    raw = insert_member(python_like.config.raw_bytes, ("config",), "Labels", {"origin": hex7})
    image = replace(python_like, config=ImageConfig.from_bytes(raw))
    plan = EditPlan(7, (ReplaceEntry("usr/local/bin/python3", EntryKind.REGULAR, b"x"),))
    with pytest.raises(SpliceAmbiguous):
        apply_edit(image, plan)


# --- prepend_entrypoint ----------------------------------------------------

def test_prepend_to_entrypoint(fixtures):
    nginx = fixtures["nginx-like"].config
    assert nginx.runtime.entrypoint == ("/docker-entrypoint.sh", "nginx")
    out = prepend_entrypoint(nginx, PAYLOAD)
    assert out.runtime.entrypoint == (PAYLOAD, "/docker-entrypoint.sh", "nginx")
    assert out.runtime.command == nginx.runtime.command
    twice = prepend_entrypoint(out, PAYLOAD)
    assert twice.runtime.entrypoint[:2] == (PAYLOAD, PAYLOAD)


def test_prepend_to_cmd_only(python_like):
    out = prepend_entrypoint(python_like.config, PAYLOAD)
    assert out.runtime.entrypoint == ()
    assert out.runtime.command == (PAYLOAD, "python3")
    assert raw_value(out.raw_bytes, ("history",)) == raw_value(python_like.config.raw_bytes, ("history",))


def test_prepend_with_nothing_set():
    image = build_fixture(small_spec(command=()))
    out = prepend_entrypoint(image.config, PAYLOAD)
    assert out.runtime.entrypoint == (PAYLOAD,) and out.runtime.command == ()


# --- rehash_and_relink -----------------------------------------------------

def test_rehash_after_flipping_a_byte(three):
    data = bytearray(write_layer(three.layers[1]))
    data[data.index(b"bbbb")] ^= 0x01
    flipped = read_layer(bytes(data))
    image = rehash_and_relink(replace(three, layers=(three.layers[0], flipped, three.layers[2])), 1)
    assert image.config.diff_ids[1].hex == hashlib.sha256(bytes(data)).hexdigest()
    assert image.config.diff_ids[0] == three.config.diff_ids[0]
    reloaded = load_archive(save_archive(image))
    assert reloaded.manifest.layer_paths[1] == f"{image.config.diff_ids[1].hex}/layer.tar"


def test_rehash_without_change_is_identity(three):
    assert rehash_and_relink(three, 1) == three


# --- attack chain ----------------------------------------------------------

def test_attack_chain_nginx():
    data = fixture_bytes(fixture_spec("nginx-like"))
    out, report = run_attack_chain(data, target_prefix="usr/sbin")
    image = load_archive(out)
    assert image.config.runtime.entrypoint[0] == "/usr/sbin/ghostedit_rev_shell"
    node = materialize_rootfs(image.layers)["usr/sbin/ghostedit_rev_shell"]
    assert node.content == MARKER_PAYLOAD and node.mode == 0o755
    assert report.entrypoint[0] == "/usr/sbin/ghostedit_rev_shell"


def test_attack_chain_missing_prefix(fixture_archives):
    with pytest.raises(TargetNotFound):
        run_attack_chain(fixture_archives["alpine-like"], target_prefix="opt/nothing")
    with pytest.raises(PlanInvalid):
        run_attack_chain(fixture_archives["alpine-like"], payload_name="a/b", target_prefix="bin")
