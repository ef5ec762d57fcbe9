"""Disc images sealed under a key bound to (tag code, visible serial).

File layout (all integers big-endian)::

    b"TDIMG1"
    u32 header_len ‖ header JSON (UTF-8, sorted keys, no whitespace)
    sector_count × ( nonce[12] ‖ u32 ct_len ‖ ciphertext‖gcm_tag[ct_len] )
    image_nonce[12] ‖ image_tag[16]

Sector i is sealed with AAD = header JSON ‖ u64(i). The image tag is
AES-GCM over an empty plaintext with AAD = every preceding byte of the file
from the magic onward, so header edits, truncation and reordering all fail.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import ContentAuthFailure, HeaderCorrupt, OversizeSector, WidthMismatch
from .model import TagCode, VisibleSerial

MAGIC = b"TDIMG1"
VERSION = 1
CONTENT_INFO = b"tagdrive-content-v1"
DEFAULT_SECTOR_SIZE = 2048
NONCE_LEN = 12
TAG_LEN = 16


def derive_content_key(code: TagCode, serial: VisibleSerial, width: int | None = None) -> bytes:
    if width is not None and code.width != width:
        raise WidthMismatch(f"{code.width}-bit code, deployment width is {width}")
    hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=str(serial).encode("ascii"), info=CONTENT_INFO)
    return hkdf.derive(code.to_bytes())


@dataclass(frozen=True)
class SealedImage:
    serial: VisibleSerial
    sector_size: int
    sectors: tuple  # each: nonce ‖ ciphertext ‖ gcm tag
    image_tag: bytes  # image nonce ‖ gcm tag
    version: int = VERSION

    @property
    def sector_count(self) -> int:
        return len(self.sectors)

    def header_bytes(self) -> bytes:
        return _header_bytes(self.version, self.serial, self.sector_size, len(self.sectors))

    def _body(self) -> bytes:
        hdr = self.header_bytes()
        parts = [MAGIC, struct.pack(">I", len(hdr)), hdr]
        for rec in self.sectors:
            parts += [rec[:NONCE_LEN], struct.pack(">I", len(rec) - NONCE_LEN), rec[NONCE_LEN:]]
        return b"".join(parts)

    def to_bytes(self) -> bytes:
        return self._body() + self.image_tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedImage":
        if not data.startswith(MAGIC):
            raise HeaderCorrupt("bad magic")
        pos = len(MAGIC)
        try:
            (hlen,) = struct.unpack_from(">I", data, pos)
            pos += 4
            raw = data[pos:pos + hlen]
            if len(raw) != hlen:
                raise HeaderCorrupt("truncated header")
            pos += hlen
            hdr = json.loads(raw.decode("utf-8"))
            version, serial = hdr["version"], VisibleSerial(hdr["serial"])
            size, count = hdr["sector_size"], hdr["sector_count"]
        except HeaderCorrupt:
            raise
        except Exception as exc:
            raise HeaderCorrupt(f"unreadable header: {exc}") from exc
        if version != VERSION or not isinstance(count, int) or not isinstance(size, int) or count < 0 or size <= 0:
            raise HeaderCorrupt("unsupported header values")
        sectors = []
        for _ in range(count):
            if pos + NONCE_LEN + 4 > len(data):
                raise HeaderCorrupt("truncated sector record")
            nonce = data[pos:pos + NONCE_LEN]
            (clen,) = struct.unpack_from(">I", data, pos + NONCE_LEN)
            pos += NONCE_LEN + 4
            ct = data[pos:pos + clen]
            if len(ct) != clen or clen < TAG_LEN:
                raise HeaderCorrupt("truncated sector record")
            pos += clen
            sectors.append(nonce + ct)
        tag = data[pos:]
        if len(tag) != NONCE_LEN + TAG_LEN:
            raise HeaderCorrupt("missing or oversized image tag")
        return cls(serial, size, tuple(sectors), tag, version)


def _header_bytes(version, serial, sector_size, sector_count) -> bytes:
    hdr = {"version": version, "serial": str(serial), "sector_size": sector_size, "sector_count": sector_count}
    return json.dumps(hdr, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _sector_aad(header: bytes, index: int) -> bytes:
    return header + struct.pack(">Q", index)


def seal_content(sectors: Sequence[bytes], code: TagCode, serial: VisibleSerial,
                 sector_size: int = DEFAULT_SECTOR_SIZE,
                 randbytes: Callable[[int], bytes] = os.urandom) -> SealedImage:
    for i, s in enumerate(sectors):
        if len(s) > sector_size:
            raise OversizeSector(f"sector {i} is {len(s)} bytes, limit {sector_size}")
    aead = AESGCM(derive_content_key(code, serial))
    header = _header_bytes(VERSION, serial, sector_size, len(sectors))
    sealed = []
    for i, s in enumerate(sectors):
        nonce = randbytes(NONCE_LEN)
        sealed.append(nonce + aead.encrypt(nonce, bytes(s), _sector_aad(header, i)))
    partial = SealedImage(serial, sector_size, tuple(sealed), b"")
    nonce = randbytes(NONCE_LEN)
    tag = aead.encrypt(nonce, b"", partial._body())
    return SealedImage(serial, sector_size, tuple(sealed), nonce + tag)


def open_content(image: SealedImage, code: TagCode, serial: VisibleSerial) -> list[bytes]:
    """Return every plaintext sector, or raise without releasing any."""
    if not isinstance(image, SealedImage):
        raise HeaderCorrupt("not a sealed image")
    aead = AESGCM(derive_content_key(code, serial))
    tag = image.image_tag
    try:
        aead.decrypt(tag[:NONCE_LEN], tag[NONCE_LEN:], image._body())
    except (InvalidTag, ValueError):
        raise ContentAuthFailure("image authentication failed") from None
    header = image.header_bytes()
    out = []
    for i, rec in enumerate(image.sectors):
        try:
            pt = aead.decrypt(rec[:NONCE_LEN], rec[NONCE_LEN:], _sector_aad(header, i))
        except (InvalidTag, ValueError):
            raise ContentAuthFailure("sector authentication failed") from None
        if len(pt) > image.sector_size:
            raise ContentAuthFailure("sector authentication failed")
        out.append(pt)
    return out


def split_sectors(data: bytes, sector_size: int = DEFAULT_SECTOR_SIZE) -> list[bytes]:
    return [data[i:i + sector_size] for i in range(0, len(data), sector_size)]
