"""Simulator and toolchain for an RFID-authenticated disc drive."""

__version__ = "0.1.0"

from .model import (ActivationRecord, CodeDatabase, Disc, DriveConfig, FrequencyBand, RfidTag,  # noqa: F401
                    Source, TagCode, VisibleSerial, db_contains, db_insert, format_code, parse_code)

__all__ = ["ActivationRecord", "CodeDatabase", "Disc", "DriveConfig", "FrequencyBand", "RfidTag", "Source",
           "TagCode", "VisibleSerial", "db_contains", "db_insert", "format_code", "parse_code"]
