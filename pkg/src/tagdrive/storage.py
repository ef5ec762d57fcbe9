"""JSON persistence for registry.json and codedb.json."""

from __future__ import annotations

import base64
import json
import os
import tempfile
from datetime import datetime, timezone

from .activation import ActivationBlob, RegistryEntry, SerialRegistry
from .errors import StorageCorrupt
from .model import ActivationRecord, CodeDatabase, Source, VisibleSerial, format_code, parse_code

FORMAT_VERSION = 1


def to_iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def from_iso(text: str) -> int:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def registry_to_dict(reg: SerialRegistry) -> dict:
    entries = sorted(reg.snapshot().items(), key=lambda kv: kv[0].text)
    return {
        "version": FORMAT_VERSION,
        "width": reg.width,
        "entries": [
            {"serial": s.text, "blob": b64(e.blob.to_bytes()), "provisioned_at": to_iso(e.provisioned_at)}
            for s, e in entries
        ],
    }


def registry_from_dict(doc: dict) -> SerialRegistry:
    try:
        if doc["version"] != FORMAT_VERSION:
            raise StorageCorrupt(f"unsupported registry version {doc['version']}")
        reg = SerialRegistry(int(doc["width"]))
        for e in doc["entries"]:
            reg.add(VisibleSerial(e["serial"]),
                    RegistryEntry(ActivationBlob.from_bytes(unb64(e["blob"])), from_iso(e["provisioned_at"])))
    except StorageCorrupt:
        raise
    except Exception as exc:
        raise StorageCorrupt(f"bad registry document: {exc}") from exc
    return reg


def codedb_to_dict(db: CodeDatabase) -> dict:
    # insertion order is history order, which keeps activated_at non-decreasing
    return {
        "version": FORMAT_VERSION,
        "width": db.width,
        "entries": [
            {"code": format_code(c), "serial": r.serial.text, "activated_at": to_iso(r.activated_at),
             "source": r.source.value}
            for c, r in db.entries.items()
        ],
    }


def codedb_from_dict(doc: dict) -> CodeDatabase:
    try:
        if doc["version"] != FORMAT_VERSION:
            raise StorageCorrupt(f"unsupported codedb version {doc['version']}")
        db = CodeDatabase(int(doc["width"]))
        for e in doc["entries"]:
            rec = ActivationRecord(VisibleSerial(e["serial"]), from_iso(e["activated_at"]), Source(e["source"]))
            db = db.insert(parse_code(e["code"], db.width), rec)
    except StorageCorrupt:
        raise
    except Exception as exc:
        raise StorageCorrupt(f"bad codedb document: {exc}") from exc
    return db


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _atomic_write(path, text: str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise StorageCorrupt(f"{path}: {exc}") from exc


def save_registry(reg: SerialRegistry, path):
    _atomic_write(path, dumps(registry_to_dict(reg)))


def load_registry(path) -> SerialRegistry:
    return registry_from_dict(_load(path))


def save_codedb(db: CodeDatabase, path):
    _atomic_write(path, dumps(codedb_to_dict(db)))


def load_codedb(path) -> CodeDatabase:
    return codedb_from_dict(_load(path))
