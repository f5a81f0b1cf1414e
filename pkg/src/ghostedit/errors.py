"""Exception hierarchy shared by every ghostedit module."""

from __future__ import annotations


class GhostEditError(Exception):
    """Base class for all errors raised by this package."""


class ArchiveError(GhostEditError):
    """Problems reading or interpreting an archive."""


class TarMalformed(ArchiveError):
    pass


class PathTraversal(ArchiveError):
    def __init__(self, path: str):
        super().__init__(f"path escapes the archive root: {path!r}")
        self.path = path


class UnsupportedEntry(ArchiveError):
    pass


class PathTooLongUnrepresentable(ArchiveError):
    pass


class LayoutUnsupported(ArchiveError):
    def __init__(self, message: str, layout: object = None):
        super().__init__(message)
        self.layout = layout


class ManifestMissing(LayoutUnsupported):
    pass


class ConfigUnparseable(ArchiveError):
    pass


class MissingMember(ArchiveError):
    pass


class DigestMismatch(ArchiveError):
    def __init__(self, layer_index: int, expected, actual):
        super().__init__(
            f"layer {layer_index} failed verification: "
            f"config records {expected}, layer hashes to {actual}"
        )
        self.layer_index = layer_index
        self.expected = expected
        self.actual = actual


class InvariantViolation(GhostEditError):
    pass


class IndexOutOfRange(GhostEditError, IndexError):
    pass


class EditError(GhostEditError):
    pass


class TargetNotFound(EditError):
    pass


class PreconditionViolated(EditError):
    def __init__(self, action: object, path: str | None, reason: str):
        super().__init__(f"{reason}: {path}" if path else reason)
        self.action = action
        self.path = path


class PlanInvalid(EditError):
    pass


class SpliceAmbiguous(EditError):
    pass


class TrustError(GhostEditError):
    pass


class StoreUnwritable(TrustError):
    pass


class StoreCorrupt(TrustError):
    pass


class RecordNotFound(TrustError):
    def __init__(self, name_tag: str):
        super().__init__(f"no trust record for {name_tag!r}")
        self.name_tag = name_tag


class SpecInvalid(GhostEditError):
    pass
