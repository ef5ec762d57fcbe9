"""Scenario files: seed, drive config, database path and an insert/remove schedule."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .content import SealedImage
from .controller import ScheduledAction, validate_schedule
from .errors import ScenarioMalformed, TagDriveError
from .model import (CodeDatabase, Disc, DriveConfig, FrequencyBand, RfidTag, VisibleSerial,
                    format_code, parse_code)
from .storage import load_codedb

_CONFIG_KEYS = ("spin_up_ms", "read_retries", "reader_bands", "bit_error_rate", "p_detect",
                "tag_read_ms", "auth_ms")


@dataclass
class Scenario:
    seed: int
    config: DriveConfig
    db_path: str
    events: list = field(default_factory=list)
    db: CodeDatabase | None = None


def config_to_dict(cfg: DriveConfig) -> dict:
    return {
        "spin_up_ms": cfg.spin_up_ms,
        "read_retries": cfg.read_retries,
        "reader_bands": sorted(b.value for b in cfg.reader_bands),
        "bit_error_rate": cfg.bit_error_rate,
        "p_detect": cfg.p_detect,
        "tag_read_ms": cfg.tag_read_ms,
        "auth_ms": cfg.auth_ms,
    }


def config_from_dict(doc: dict) -> DriveConfig:
    unknown = set(doc) - set(_CONFIG_KEYS)
    if unknown:
        raise ScenarioMalformed(f"unknown config keys: {sorted(unknown)}")
    kw = dict(doc)
    if "reader_bands" in kw:
        kw["reader_bands"] = frozenset(FrequencyBand(b) for b in kw["reader_bands"])
    return DriveConfig(**kw)


def disc_to_dict(disc: Disc) -> dict:
    doc = {"serial": disc.serial.text, "title": disc.title, "tag": None}
    if disc.tag is not None:
        doc["tag"] = {"code": format_code(disc.tag.code), "band": disc.tag.band.value,
                      "damaged": disc.tag.damaged}
    return doc


def disc_from_dict(doc: dict, width: int, base: Path) -> Disc:
    tag = None
    if doc.get("tag") is not None:
        t = doc["tag"]
        tag = RfidTag(parse_code(t["code"], width), FrequencyBand(t.get("band", "HF_13_56MHz")),
                      bool(t.get("damaged", False)))
    content = None
    if doc.get("image"):
        content = SealedImage.from_bytes((base / doc["image"]).read_bytes())
    return Disc(VisibleSerial(doc["serial"]), tag, content, doc.get("title", ""))


def scenario_to_dict(sc: Scenario) -> dict:
    events = []
    for ev in sc.events:
        item = {"t_ms": ev.t_ms, "action": ev.action}
        if ev.disc is not None:
            item["disc"] = disc_to_dict(ev.disc)
        events.append(item)
    return {"seed": sc.seed, "config": config_to_dict(sc.config), "db": sc.db_path, "events": events}


def scenario_from_dict(doc: dict, base: Path | str = ".", load_db: bool = True) -> Scenario:
    base = Path(base)
    try:
        seed = doc["seed"]
        if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ScenarioMalformed("seed must be an unsigned 64-bit integer")
        cfg = config_from_dict(doc.get("config", {}))
        db_path = doc["db"]
        db = load_codedb(base / db_path) if load_db else None
        width = db.width if db is not None else doc.get("width")
        events = []
        for i, item in enumerate(doc["events"]):
            disc = None
            if item.get("disc") is not None:
                d = item["disc"]
                if isinstance(d, str):
                    dpath = base / d
                    with open(dpath, encoding="utf-8") as f:
                        disc = disc_from_dict(json.load(f), width, dpath.parent)
                else:
                    disc = disc_from_dict(d, width, base)
            events.append(ScheduledAction(item["t_ms"], item["action"], disc))
    except ScenarioMalformed:
        raise
    except (KeyError, TypeError, ValueError, OSError, TagDriveError) as exc:
        raise ScenarioMalformed(f"{type(exc).__name__}: {exc}") from exc
    validate_schedule(events)
    return Scenario(seed, cfg, db_path, events, db)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioMalformed(f"{path}: {exc}") from exc
    return scenario_from_dict(doc, path.parent)


def save_scenario(sc: Scenario, path):
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as f:
        json.dump(scenario_to_dict(sc), f, indent=2)
        f.write("\n")
