"""Vendor-side provisioning and client-side activation of tag codes.

An activation blob is ``version(1) ‖ salt(16) ‖ nonce(12) ‖ AES-256-GCM(code bytes)``
with key = HKDF-SHA-256(purchase secret, salt, "tagdrive-activation-v1").
Blobs are public; only the purchase secret unlocks them.
"""

from __future__ import annotations

import re
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import BlobAuthFailure, MalformedText, SerialCollision, WidthMismatch
from .model import (ActivationRecord, CodeDatabase, FrequencyBand, RfidTag, Source,
                    TagCode, VisibleSerial)

BLOB_VERSION = 1
SALT_LEN = 16
NONCE_LEN = 12
ACTIVATION_INFO = b"tagdrive-activation-v1"

SECRET_ALPHABET = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789"
SECRET_LEN = 16
_SECRET_RE = re.compile(f"^[{SECRET_ALPHABET}]{{{SECRET_LEN}}}$")

SERIAL_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
SERIAL_PREFIX = "TD"
MAX_SERIAL_ATTEMPTS = 5

Entropy = Callable[[int], bytes]


@dataclass(frozen=True)
class PurchaseSecret:
    text: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not _SECRET_RE.match(self.text):
            raise MalformedText("purchase secret must be 16 characters from " + SECRET_ALPHABET)

    def __str__(self):
        return self.text


def _draw_chars(alphabet: str, n: int, entropy: Entropy) -> str:
    # alphabet sizes here are 32 and 36; reject bytes above the largest multiple
    limit = 256 - 256 % len(alphabet)
    out = []
    while len(out) < n:
        for b in entropy(n):
            if b < limit:
                out.append(alphabet[b % len(alphabet)])
                if len(out) == n:
                    break
    return "".join(out)


def generate_secret(entropy: Entropy = secrets.token_bytes) -> PurchaseSecret:
    return PurchaseSecret(_draw_chars(SECRET_ALPHABET, SECRET_LEN, entropy))


def generate_serial(entropy: Entropy = secrets.token_bytes) -> VisibleSerial:
    raw = _draw_chars(SERIAL_ALPHABET, 12, entropy)
    return VisibleSerial(f"{SERIAL_PREFIX}-{raw[:4]}-{raw[4:8]}-{raw[8:]}")


def generate_code(width: int, entropy: Entropy = secrets.token_bytes) -> TagCode:
    nbytes = (width + 7) // 8
    value = int.from_bytes(entropy(nbytes), "big") >> (nbytes * 8 - width)
    return TagCode(value, width)


def activation_key(secret: PurchaseSecret, salt: bytes) -> bytes:
    hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=salt, info=ACTIVATION_INFO)
    return hkdf.derive(str(secret).encode("ascii"))


@dataclass(frozen=True)
class ActivationBlob:
    version: int
    salt: bytes
    nonce: bytes
    ciphertext: bytes  # includes the 16-byte GCM tag

    def to_bytes(self) -> bytes:
        return bytes([self.version]) + self.salt + self.nonce + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "ActivationBlob":
        if len(data) < 1 + SALT_LEN + NONCE_LEN + 16:
            raise BlobAuthFailure("blob too short")
        return cls(data[0], data[1:1 + SALT_LEN], data[1 + SALT_LEN:1 + SALT_LEN + NONCE_LEN],
                   data[1 + SALT_LEN + NONCE_LEN:])


def seal_code(code: TagCode, secret: PurchaseSecret, entropy: Entropy = secrets.token_bytes) -> ActivationBlob:
    salt = entropy(SALT_LEN)
    nonce = entropy(NONCE_LEN)
    ct = AESGCM(activation_key(secret, salt)).encrypt(nonce, code.to_bytes(), None)
    return ActivationBlob(BLOB_VERSION, salt, nonce, ct)


def open_blob(blob: ActivationBlob | bytes, secret: PurchaseSecret, width: int) -> TagCode:
    if isinstance(blob, (bytes, bytearray)):
        blob = ActivationBlob.from_bytes(bytes(blob))
    if blob.version != BLOB_VERSION:
        # the version byte is outside the AEAD, so an unknown one is treated as tampering
        raise BlobAuthFailure(f"unsupported blob version {blob.version}")
    try:
        pt = AESGCM(activation_key(secret, blob.salt)).decrypt(blob.nonce, blob.ciphertext, None)
    except InvalidTag:
        raise BlobAuthFailure("blob did not authenticate under this secret") from None
    if len(pt) != (width + 7) // 8:
        raise WidthMismatch(f"blob holds a {len(pt) * 8}-bit payload, database width is {width}")
    value = int.from_bytes(pt, "big")
    if value >> width:
        raise WidthMismatch(f"blob code exceeds {width} bits")
    return TagCode(value, width)


@dataclass(frozen=True)
class RegistryEntry:
    blob: ActivationBlob
    provisioned_at: int


class SerialRegistry:
    """Serial → blob map. Readers see an immutable snapshot; writers serialize on a lock."""

    def __init__(self, width: int, entries: dict | None = None):
        self.width = width
        self._entries: dict[VisibleSerial, RegistryEntry] = dict(entries or {})
        self._write_lock = threading.Lock()

    def get(self, serial: VisibleSerial) -> RegistryEntry | None:
        return self._entries.get(serial)

    def __contains__(self, serial):
        return serial in self._entries

    def __len__(self):
        return len(self._entries)

    def snapshot(self) -> dict:
        return self._entries

    def add(self, serial: VisibleSerial, entry: RegistryEntry):
        with self._write_lock:
            self._put(serial, entry)

    def _put(self, serial: VisibleSerial, entry: RegistryEntry):
        # caller holds the write lock
        if serial in self._entries:
            raise SerialCollision(str(serial))
        new = dict(self._entries)
        new[serial] = entry
        self._entries = new

    @property
    def write_lock(self):
        return self._write_lock

    def __eq__(self, other):
        return isinstance(other, SerialRegistry) and self.width == other.width and self._entries == other._entries


def provision_disc(registry: SerialRegistry, width: int, secret: PurchaseSecret,
                   entropy: Entropy = secrets.token_bytes, band: FrequencyBand = FrequencyBand.HF_13_56MHz,
                   now: int | None = None):
    """Mint a code and serial, seal the code under ``secret``, record the blob.

    Entropy is drawn in this order: code, serial (retried on collision), salt, nonce.
    Returns (serial, tag, blob).
    """
    if width != registry.width:
        raise WidthMismatch(f"registry width is {registry.width}, asked for {width}")
    code = generate_code(width, entropy)
    with registry.write_lock:
        for _ in range(MAX_SERIAL_ATTEMPTS):
            serial = generate_serial(entropy)
            if serial not in registry:
                break
        else:
            raise SerialCollision(f"no fresh serial after {MAX_SERIAL_ATTEMPTS} attempts")
        blob = seal_code(code, secret, entropy)
        stamp = int(time.time()) if now is None else now
        registry._put(serial, RegistryEntry(blob, stamp))
    return serial, RfidTag(code, band), blob


def activate(blob: ActivationBlob | bytes, secret: PurchaseSecret, db: CodeDatabase,
             serial: VisibleSerial, now: int | None = None) -> CodeDatabase:
    code = open_blob(blob, secret, db.width)
    stamp = int(time.time()) if now is None else now
    if db.latest_timestamp is not None:
        stamp = max(stamp, db.latest_timestamp)
    return db.insert(code, ActivationRecord(serial, stamp, Source.RemoteActivation))


def seeded_entropy(seed: int) -> Entropy:
    """Deterministic byte source for reproducible test fixtures. Not for real secrets."""
    import random
    rng = random.Random(seed)
    return rng.randbytes
