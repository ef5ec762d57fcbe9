"""Drive controller state machine: read tag, match database, raise run or eject."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

from .errors import ContentAccessDenied, IllegalTransition, ScenarioMalformed
from .model import CodeDatabase, Disc, DriveConfig, db_contains
from .rfid import Ok, ReadChannel, ReadResult, read_tag


class DriveState(enum.Enum):
    Idle = 0
    SpinningUp = 1
    ReadingTag = 2
    Authenticating = 3
    Running = 4
    Ejecting = 5


class OutputSignals(NamedTuple):
    run: int
    eject: int


def signals_for(state: DriveState) -> OutputSignals:
    return OutputSignals(int(state is DriveState.Running), int(state is DriveState.Ejecting))


@dataclass(frozen=True)
class InsertDisc:
    disc: Disc


@dataclass(frozen=True)
class TagRead:
    result: ReadResult
    attempt: int = 1  # 1-based; the last allowed attempt is 1 + read_retries


@dataclass(frozen=True)
class AuthDecision:
    ok: bool


@dataclass(frozen=True)
class RemoveDisc:
    pass


@dataclass(frozen=True)
class Tick:
    ms: int  # time spent in the current state


DriveEvent = Union[InsertDisc, TagRead, AuthDecision, RemoveDisc, Tick]


def step(state: DriveState, event: DriveEvent, cfg: DriveConfig) -> tuple[DriveState, OutputSignals]:
    """Apply one event. Raises IllegalTransition when ``event`` is not accepted in ``state``."""
    S = DriveState
    if isinstance(event, RemoveDisc):
        new = S.Idle
    elif isinstance(event, Tick):
        if state is S.SpinningUp and event.ms >= cfg.spin_up_ms:
            new = S.ReadingTag
        else:
            new = state
    elif isinstance(event, InsertDisc):
        if state is not S.Idle:
            raise IllegalTransition(f"InsertDisc in {state.name}")
        new = S.SpinningUp
    elif isinstance(event, TagRead):
        if state is not S.ReadingTag:
            raise IllegalTransition(f"TagRead in {state.name}")
        if isinstance(event.result, Ok):
            new = S.Authenticating
        elif event.attempt >= 1 + cfg.read_retries:
            new = S.Ejecting
        else:
            new = S.ReadingTag
    elif isinstance(event, AuthDecision):
        if state is not S.Authenticating:
            raise IllegalTransition(f"AuthDecision in {state.name}")
        new = S.Running if event.ok else S.Ejecting
    else:
        raise IllegalTransition(f"unknown event {event!r}")
    return new, signals_for(new)


def authenticate(read: ReadResult, db: CodeDatabase) -> bool:
    return isinstance(read, Ok) and db_contains(db, read.code)


class Sample(NamedTuple):
    t_ms: int
    state: DriveState
    run: int
    eject: int


class SignalTrace:
    def __init__(self, samples: Iterable[Sample] = ()):
        self.samples: list[Sample] = list(samples)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        return isinstance(other, SignalTrace) and self.samples == other.samples

    def episodes(self) -> list[list[Sample]]:
        """Split samples into per-insertion runs, each starting at SpinningUp."""
        out: list[list[Sample]] = []
        for s in self.samples:
            if s.state is DriveState.Idle:
                continue
            if s.state is DriveState.SpinningUp or not out:
                out.append([])
            out[-1].append(s)
        return out

    def outcomes(self) -> list[DriveState]:
        """Final non-idle state of each episode."""
        return [ep[-1].state for ep in self.episodes()]


class DriveController:
    """One simulated drive. Internal steps are scheduled on a millisecond clock."""

    def __init__(self, db: CodeDatabase, cfg: DriveConfig, chan: ReadChannel, content_opener=None):
        self.db = db
        self.cfg = cfg
        self.chan = chan
        self.state = DriveState.Idle
        self.disc: Disc | None = None
        self.trace = SignalTrace([Sample(0, DriveState.Idle, 0, 0)])
        self.read_calls = 0
        self.content_requests = 0
        self._content_opener = content_opener
        self._pending: tuple[int, str] | None = None
        self._attempt = 0
        self._last_read: ReadResult | None = None

    def _apply(self, event: DriveEvent, t: int):
        new, sig = step(self.state, event, self.cfg)
        if new is self.state:
            return
        self.state = new
        sample = Sample(t, new, sig.run, sig.eject)
        if self.trace.samples[-1].t_ms == t:
            # several transitions in one millisecond collapse to the last one
            self.trace.samples[-1] = sample
        else:
            self.trace.samples.append(sample)

    def insert(self, disc: Disc, t: int):
        self.advance(t, inclusive=False)
        self._apply(InsertDisc(disc), t)
        self.disc = disc
        self._attempt = 0
        self._last_read = None
        self._pending = (t + self.cfg.spin_up_ms, "spun")
        self.advance(t, inclusive=True)

    def remove(self, t: int):
        self.advance(t, inclusive=False)
        self._pending = None
        self.disc = None
        self._last_read = None
        self._apply(RemoveDisc(), t)

    def advance(self, t: float, inclusive: bool = True):
        while self._pending is not None:
            due, kind = self._pending
            if due > t or (due == t and not inclusive):
                return
            self._pending = None
            self._fire(due, kind)

    def _fire(self, t: int, kind: str):
        cfg = self.cfg
        if kind == "spun":
            self._apply(Tick(cfg.spin_up_ms), t)
            self._pending = (t + cfg.tag_read_ms, "read")
        elif kind == "read":
            self._attempt += 1
            self.read_calls += 1
            result = read_tag(self.disc, cfg, self.chan)
            self._last_read = result
            self._apply(TagRead(result, self._attempt), t)
            if self.state is DriveState.Authenticating:
                self._pending = (t + cfg.auth_ms, "auth")
            elif self.state is DriveState.ReadingTag:
                self._pending = (t + cfg.tag_read_ms, "read")
        elif kind == "auth":
            self._apply(AuthDecision(authenticate(self._last_read, self.db)), t)

    def read_content(self):
        """Open the inserted disc's sealed image with the code the drive authenticated."""
        if self.state is not DriveState.Running:
            raise ContentAccessDenied(f"content read refused in state {self.state.name}")
        self.content_requests += 1
        if self._content_opener is None:
            from .content import open_content
            opener = open_content
        else:
            opener = self._content_opener
        return opener(self.disc.content, self._last_read.code, self.disc.serial)


@dataclass(frozen=True)
class ScheduledAction:
    t_ms: int
    action: str  # "insert" | "remove"
    disc: Disc | None = None


def validate_schedule(events: Sequence[ScheduledAction]):
    prev = 0
    loaded = False
    for i, ev in enumerate(events):
        if not isinstance(ev.t_ms, int) or isinstance(ev.t_ms, bool):
            raise ScenarioMalformed(f"event {i}: t_ms must be an integer")
        if ev.t_ms <= prev:
            raise ScenarioMalformed(f"event {i}: t_ms {ev.t_ms} not strictly after {prev}")
        prev = ev.t_ms
        if ev.action == "insert":
            if ev.disc is None:
                raise ScenarioMalformed(f"event {i}: insert without a disc")
            if loaded:
                raise ScenarioMalformed(f"event {i}: insert while a disc is already loaded")
            loaded = True
        elif ev.action == "remove":
            if not loaded:
                raise ScenarioMalformed(f"event {i}: remove with no disc loaded")
            loaded = False
        else:
            raise ScenarioMalformed(f"event {i}: unknown action {ev.action!r}")


def run_scenario(events: Sequence[ScheduledAction], db: CodeDatabase, cfg: DriveConfig,
                 seed: int, controller_hook=None) -> SignalTrace:
    """Replay an insert/remove schedule and return the signal trace.

    ``controller_hook(controller, t_ms)`` is called after every scheduled
    action and once at the end, for probes such as content-read attempts.
    """
    validate_schedule(events)
    ctl = DriveController(db, cfg, ReadChannel.for_config(cfg, seed))
    for ev in events:
        if ev.action == "insert":
            ctl.insert(ev.disc, ev.t_ms)
        else:
            ctl.remove(ev.t_ms)
        if controller_hook is not None:
            controller_hook(ctl, ev.t_ms)
    ctl.advance(float("inf"))
    if controller_hook is not None:
        controller_hook(ctl, None)
    return ctl.trace
