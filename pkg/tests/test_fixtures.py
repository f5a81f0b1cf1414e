import pytest

from ghostedit.archive import load_archive
from ghostedit.audit import verify_integrity
from ghostedit.errors import SpecInvalid
from ghostedit.fixtures import (
    BASE_IMAGE_ANALOGUES,
    FixtureSpec,
    build_fixture,
    canned_fixtures,
    f,
    fixture_bytes,
    fixture_names,
    fixture_spec,
    ln,
)
from ghostedit.layerfs import find_last_layer_touching
from ghostedit.tarcodec import EntryKind


def one_layer(**kw):
    spec = dict(name="mini", name_tag="mini:1", layers=((f("hello", "hi\n"),),),
                history=(("ADD hello", False),))
    spec.update(kw)
    return FixtureSpec(**spec)


def test_minimal_spec():
    image = build_fixture(one_layer())
    assert len(image.config.diff_ids) == 1
    assert verify_integrity(image).verdict == "clean"
    assert load_archive(fixture_bytes(one_layer())) == image


def test_builds_are_deterministic():
    for name in fixture_names():
        assert fixture_bytes(fixture_spec(name)) == fixture_bytes(fixture_spec(name))


@pytest.mark.parametrize("kw", [
    {"history": ()},
    {"history": (("a", False), ("b", False))},
    {"layers": (), "history": ()},
    {"created": "not a time"},
    {"layers": ((f("x", "1"),), (f("x", "1"),)), "history": (("a", False), ("b", False))},
    {"layers": ((f("/abs", "1"),),)},
])
def test_invalid_specs(kw):
    with pytest.raises(SpecInvalid):
        build_fixture(one_layer(**kw))


def test_canned_set(fixtures):
    assert len(canned_fixtures()) == 10 == len(fixture_names())
    assert set(BASE_IMAGE_ANALOGUES) <= set(fixture_names())
    assert fixtures["nginx-like"].config.runtime.entrypoint == ("/docker-entrypoint.sh", "nginx")
    busybox = fixtures["alpine-like"].layers[0].find("bin/busybox")
    assert busybox is not None and busybox.kind is EntryKind.REGULAR


def test_python_like_shape(python_like):
    assert len(python_like.layers) == 8
    assert find_last_layer_touching(python_like, "usr/local/bin") == 7
    assert python_like.config.created == "2024-08-14T00:00:00Z"


def test_every_fixture_has_its_target_prefix(fixtures):
    for name, image in fixtures.items():
        assert find_last_layer_touching(image, fixture_spec(name).target_prefix) is not None, name


def test_unknown_fixture_lists_names():
    with pytest.raises(KeyError, match="python-like"):
        fixture_spec("nope")


def test_links_in_specs():
    image = build_fixture(one_layer(layers=((f("a", "x"), ln("b", "a")),)))
    assert image.layers[0].find("b").link_target == "a"
