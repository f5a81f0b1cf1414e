"""Canonical tar reader/writer.

The writer emits plain USTAR headers, adds a PAX ``x`` header only when a
name, link name or numeric field does not fit, pads member data to 512
bytes and finishes with exactly two zero blocks (no record padding). That
makes the output a pure function of the entry list, which is what the
digest and round-trip guarantees rest on.

The reader accepts USTAR, GNU (``L``/``K`` long names) and PAX input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import (
    PathTooLongUnrepresentable,
    PathTraversal,
    TarMalformed,
    UnsupportedEntry,
)

BLOCK = 512
ZERO_BLOCK = bytes(BLOCK)
END_OF_ARCHIVE = bytes(2 * BLOCK)

_POSIX_MAGIC = b"ustar\x00"
_PAX_NAME = b"././@PaxHeader"

# header types that never carry a data section
_NO_DATA_TYPES = frozenset({b"1", b"2", b"3", b"4", b"5", b"6"})
_REJECTED_TYPES = {b"3": "character device", b"4": "block device", b"S": "sparse file"}


class EntryKind(enum.Enum):
    REGULAR = "regular"
    SYMLINK = "symlink"
    DIRECTORY = "directory"
    HARDLINK = "hardlink"
    OPAQUE = "opaque"  # any other header type, carried through untouched


_KIND_TYPEFLAG = {
    EntryKind.REGULAR: b"0",
    EntryKind.HARDLINK: b"1",
    EntryKind.SYMLINK: b"2",
    EntryKind.DIRECTORY: b"5",
}
_TYPEFLAG_KIND = {b"0": EntryKind.REGULAR, b"\x00": EntryKind.REGULAR,
                  b"1": EntryKind.HARDLINK, b"2": EntryKind.SYMLINK,
                  b"5": EntryKind.DIRECTORY}


def normalize_path(path: str) -> str:
    """Normalize an archive member path.

    Leading ``./`` and repeated slashes are dropped; absolute paths and
    ``..`` components raise :class:`PathTraversal` instead of being
    rewritten.
    """
    if path.startswith("/"):
        raise PathTraversal(path)
    parts = [p for p in path.split("/") if p not in ("", ".")]
    if ".." in parts:
        raise PathTraversal(path)
    if not parts:
        raise UnsupportedEntry(f"entry names the archive root: {path!r}")
    return "/".join(parts)


@dataclass(frozen=True)
class TarEntry:
    path: str
    kind: EntryKind
    mode: int = 0o644
    mtime: int = 0
    link_target: str = ""
    content: bytes = b""
    uid: int = 0
    gid: int = 0
    typeflag: bytes = b""  # OPAQUE only

    def __post_init__(self) -> None:
        if normalize_path(self.path) != self.path:
            raise ValueError(f"path is not normalized: {self.path!r}")
        if self.kind not in (EntryKind.REGULAR, EntryKind.OPAQUE) and self.content:
            raise ValueError(f"{self.kind.value} entry cannot carry content: {self.path}")
        if self.kind not in (EntryKind.SYMLINK, EntryKind.HARDLINK, EntryKind.OPAQUE) and self.link_target:
            raise ValueError(f"{self.kind.value} entry cannot carry a link target: {self.path}")
        if self.kind is EntryKind.OPAQUE and len(self.typeflag) != 1:
            raise ValueError("opaque entries need their one-byte typeflag")

    @property
    def size(self) -> int:
        return len(self.content)

    @property
    def name(self) -> str:
        return self.path.rsplit("/", 1)[-1]

    @property
    def parent(self) -> str:
        return self.path.rsplit("/", 1)[0] if "/" in self.path else ""


# --------------------------------------------------------------------------
# writing

def _octal(value: int, width: int) -> bytes:
    return b"%0*o\x00" % (width - 1, value)


def _fits(value: int, width: int) -> bool:
    return 0 <= value < 8 ** (width - 1)


def _pax_records(records: dict[str, str]) -> bytes:
    out = bytearray()
    for key, value in records.items():
        body = f" {key}={value}\n".encode("utf-8", "surrogateescape")
        n = len(body)
        length = n + len(str(n))
        while length != n + len(str(length)):
            length = n + len(str(length))
        out += str(length).encode("ascii") + body
    return bytes(out)


def _header(name: bytes, mode: int, uid: int, gid: int, size: int,
            mtime: int, typeflag: bytes, linkname: bytes) -> bytes:
    buf = bytearray(BLOCK)
    buf[0:len(name)] = name
    buf[100:108] = _octal(mode, 8)
    buf[108:116] = _octal(uid, 8)
    buf[116:124] = _octal(gid, 8)
    buf[124:136] = _octal(size, 12)
    buf[136:148] = _octal(mtime, 12)
    buf[148:156] = b" " * 8
    buf[156:157] = typeflag
    buf[157:157 + len(linkname)] = linkname
    buf[257:263] = _POSIX_MAGIC
    buf[263:265] = b"00"
    buf[329:337] = _octal(0, 8)
    buf[337:345] = _octal(0, 8)
    buf[148:156] = b"%06o\x00 " % sum(buf)
    return bytes(buf)


def _pad(data: bytes) -> bytes:
    rem = len(data) % BLOCK
    return data + bytes(BLOCK - rem) if rem else data


def encode_entry(entry: TarEntry) -> bytes:
    """Header block(s) plus padded data for one entry."""
    name = entry.path + ("/" if entry.kind is EntryKind.DIRECTORY else "")
    if "\x00" in name or "\x00" in entry.link_target:
        raise PathTooLongUnrepresentable(f"NUL byte in entry name: {entry.path!r}")
    name_b = name.encode("utf-8", "surrogateescape")
    link_b = entry.link_target.encode("utf-8", "surrogateescape")

    pax: dict[str, str] = {}
    if len(name_b) > 100:
        pax["path"] = name
        name_b = name_b[:100]
    if len(link_b) > 100:
        pax["linkpath"] = entry.link_target
        link_b = link_b[:100]
    numbers = {"uid": (entry.uid, 8), "gid": (entry.gid, 8),
               "size": (entry.size, 12), "mtime": (entry.mtime, 12)}
    for key, (value, width) in numbers.items():
        if not _fits(value, width):
            pax[key] = str(value)

    def clamp(key: str) -> int:
        value, width = numbers[key]
        return value if _fits(value, width) else 0

    typeflag = entry.typeflag if entry.kind is EntryKind.OPAQUE else _KIND_TYPEFLAG[entry.kind]
    out = bytearray()
    if pax:
        records = _pax_records(pax)
        out += _header(_PAX_NAME, 0o644, 0, 0, len(records), 0, b"x", b"")
        out += _pad(records)
    out += _header(name_b, entry.mode & 0o7777, clamp("uid"), clamp("gid"),
                   clamp("size"), clamp("mtime"), typeflag, link_b)
    out += _pad(entry.content)
    return bytes(out)


def write_tar(entries) -> bytes:
    out = bytearray()
    for entry in entries:
        out += encode_entry(entry)
    out += END_OF_ARCHIVE
    return bytes(out)


# --------------------------------------------------------------------------
# reading

def _nts(field_bytes: bytes) -> bytes:
    end = field_bytes.find(b"\x00")
    return field_bytes if end < 0 else field_bytes[:end]


def _number(field_bytes: bytes) -> int:
    if field_bytes and field_bytes[0] & 0x80:
        value = int.from_bytes(field_bytes[1:], "big")
        if field_bytes[0] == 0xFF:  # negative base-256
            value -= 256 ** (len(field_bytes) - 1)
        return value
    text = _nts(field_bytes).strip(b" \x00")
    if not text:
        return 0
    try:
        return int(text, 8)
    except ValueError:
        raise TarMalformed(f"bad numeric header field {field_bytes!r}") from None


def _checksum_ok(block: bytes) -> bool:
    stored = _number(block[148:156])
    masked = block[:148] + b" " * 8 + block[156:]
    if stored == sum(masked):
        return True
    return stored == sum(b - 256 if b > 127 else b for b in masked)


def _parse_pax(data: bytes) -> dict[str, str]:
    records: dict[str, str] = {}
    pos = 0
    while pos < len(data):
        if data[pos] == 0:
            break
        space = data.find(b" ", pos)
        if space < 0:
            raise TarMalformed("corrupt PAX record")
        try:
            length = int(data[pos:space])
        except ValueError:
            raise TarMalformed("corrupt PAX record length") from None
        record = data[space + 1:pos + length]
        if length <= 0 or not record.endswith(b"\n") or b"=" not in record:
            raise TarMalformed("corrupt PAX record")
        key, _, value = record[:-1].partition(b"=")
        records[key.decode("utf-8", "surrogateescape")] = value.decode("utf-8", "surrogateescape")
        pos += length
    return records


def _decode(raw: bytes) -> str:
    return raw.decode("utf-8", "surrogateescape")


def read_tar(data: bytes) -> list[TarEntry]:
    """Parse tar bytes into entries, in on-tape order."""
    if not data:
        raise TarMalformed("empty stream")
    entries: list[TarEntry] = []
    pos = 0
    pax: dict[str, str] = {}
    global_pax: dict[str, str] = {}
    long_name: str | None = None
    long_link: str | None = None
    while True:
        if pos == len(data):
            break  # missing end-of-archive marker is tolerated
        if pos + BLOCK > len(data):
            raise TarMalformed(f"truncated header at offset {pos}")
        block = data[pos:pos + BLOCK]
        if block == ZERO_BLOCK:
            break
        if not _checksum_ok(block):
            raise TarMalformed(f"header checksum mismatch at offset {pos}")
        typeflag = block[156:157]
        merged = {**global_pax, **pax}
        size = _number(block[124:136])
        if "size" in merged and typeflag not in (b"x", b"g"):
            size = int(merged["size"])
        if typeflag in _NO_DATA_TYPES:
            data_len = 0
        else:
            data_len = size
        start = pos + BLOCK
        if start + data_len > len(data):
            raise TarMalformed(f"truncated member data at offset {pos}")
        payload = data[start:start + data_len]
        pos = start + data_len + (-data_len % BLOCK)

        if typeflag == b"x":
            pax = _parse_pax(payload)
            continue
        if typeflag == b"g":
            global_pax.update(_parse_pax(payload))
            continue
        if typeflag == b"L":
            long_name = _decode(_nts(payload))
            continue
        if typeflag == b"K":
            long_link = _decode(_nts(payload))
            continue

        for key in merged:
            if "xattr" in key:
                raise UnsupportedEntry(f"extended attributes are not supported ({key})")
            if key.startswith("GNU.sparse"):
                raise UnsupportedEntry("sparse files are not supported")
        if typeflag in _REJECTED_TYPES:
            raise UnsupportedEntry(f"{_REJECTED_TYPES[typeflag]} entries are not supported")

        name = _decode(_nts(block[0:100]))
        if block[257:263] == _POSIX_MAGIC:
            prefix = _decode(_nts(block[345:500]))
            if prefix:
                name = f"{prefix}/{name}"
        link = _decode(_nts(block[157:257]))
        if long_name is not None:
            name = long_name
        if long_link is not None:
            link = long_link
        name = merged.get("path", name)
        link = merged.get("linkpath", link)
        mtime = _number(block[136:148])
        if "mtime" in merged:
            mtime = int(float(merged["mtime"]))
        uid = int(merged["uid"]) if "uid" in merged else _number(block[108:116])
        gid = int(merged["gid"]) if "gid" in merged else _number(block[116:124])
        mode = _number(block[100:108]) & 0o7777
        pax, long_name, long_link = {}, None, None

        kind = _TYPEFLAG_KIND.get(typeflag, EntryKind.OPAQUE)
        if typeflag == b"\x00" and name.endswith("/"):
            kind = EntryKind.DIRECTORY
        if kind is EntryKind.HARDLINK:
            link = normalize_path(link)
        entries.append(TarEntry(
            path=normalize_path(name),
            kind=kind,
            mode=mode,
            mtime=mtime,
            link_target=link if kind in (EntryKind.SYMLINK, EntryKind.HARDLINK, EntryKind.OPAQUE) else "",
            content=payload if kind in (EntryKind.REGULAR, EntryKind.OPAQUE) else b"",
            uid=uid,
            gid=gid,
            typeflag=typeflag if kind is EntryKind.OPAQUE else b"",
        ))
    return entries
