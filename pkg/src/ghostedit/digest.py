from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

_HEX_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True, order=True)
class Digest:
    """A sha256 content address, stored as lowercase hex."""

    hex: str

    def __post_init__(self) -> None:
        if not isinstance(self.hex, str) or not _HEX_RE.match(self.hex):
            raise ValueError(f"not a sha256 hex digest: {self.hex!r}")

    algorithm = "sha256"

    @classmethod
    def of(cls, data: bytes) -> Digest:
        return cls(hashlib.sha256(data).hexdigest())

    @classmethod
    def parse(cls, value: str) -> Digest:
        """Accept either ``sha256:<hex>`` or bare hex."""
        if value.startswith("sha256:"):
            value = value[len("sha256:"):]
        return cls(value)

    def __str__(self) -> str:
        return f"sha256:{self.hex}"

    @property
    def short(self) -> str:
        return self.hex[:12]
