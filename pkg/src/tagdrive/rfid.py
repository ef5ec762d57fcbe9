"""Reader/tag air interface with a seeded bit-error channel."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import Disc, DriveConfig, FrequencyBand, TagCode


@dataclass(frozen=True)
class Ok:
    code: TagCode


@dataclass(frozen=True)
class NoTagDetected:
    pass


@dataclass(frozen=True)
class ReadCorrupt:
    pass


ReadResult = Union[Ok, NoTagDetected, ReadCorrupt]


def band_compatible(reader_bands, tag_band: FrequencyBand) -> bool:
    if not reader_bands:
        raise ValueError("reader_bands must not be empty")
    return tag_band in reader_bands


class ReadChannel:
    """Noisy channel. The same seed and call sequence give the same results."""

    def __init__(self, rng_seed: int, bit_error_rate: float = 0.0, p_detect: float = 0.9):
        if not 0.0 <= bit_error_rate <= 1.0 or not 0.0 <= p_detect <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        self.rng_seed = rng_seed
        self.bit_error_rate = bit_error_rate
        self.p_detect = p_detect
        self._rng = np.random.default_rng(rng_seed & 0xFFFFFFFFFFFFFFFF)

    @classmethod
    def for_config(cls, cfg: DriveConfig, seed: int) -> "ReadChannel":
        return cls(seed, cfg.bit_error_rate, cfg.p_detect)

    def transmit(self, code: TagCode) -> ReadResult:
        if self.bit_error_rate == 0.0:
            return Ok(code)
        flips = np.flatnonzero(self._rng.random(code.width) < self.bit_error_rate)
        if flips.size == 0:
            return Ok(code)
        mask = 0
        for i in flips:
            mask |= 1 << int(i)
        if self._rng.random() < self.p_detect:
            return ReadCorrupt()
        return Ok(TagCode(code.value ^ mask, code.width))


def read_tag(disc: Disc, cfg: DriveConfig, chan: ReadChannel) -> ReadResult:
    tag = disc.tag
    if tag is None or tag.damaged or not band_compatible(cfg.reader_bands, tag.band):
        return NoTagDetected()
    return chan.transmit(tag.code)
