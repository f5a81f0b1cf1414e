"""Parse, tamper with and audit docker-save image archives."""

__version__ = "0.1.0"

from .archive import ImageArchive, LayoutKind, detect_layout, load_archive, save_archive
from .audit import diff_images, record_trust, verify_integrity, verify_trust
from .digest import Digest
from .engine import (
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
from .fixtures import build_fixture, canned_fixtures, fixture_bytes, fixture_spec
from .layerfs import LayerBlob, find_last_layer_touching, layer_diff, materialize_rootfs


__all__ = [
    "AutoLatestTouching", "Digest", "EditPlan", "ImageArchive", "InjectFile", "LayerBlob",
    "LayoutKind", "MtimePolicy", "PrependEntrypoint", "RemoveEntry", "ReplaceEntry",
    "apply_edit", "build_fixture", "canned_fixtures", "detect_layout", "diff_images",
    "find_last_layer_touching", "fixture_bytes", "fixture_spec", "layer_diff", "load_archive",
    "materialize_rootfs", "record_trust", "run_attack_chain", "save_archive", "verify_integrity",
    "verify_trust",
]
