"""Audio guidance engine: upright gating, lock acquisition and four proximity tone levels.

The engine emits audio *events*; turning them into sound is a front-end
concern. Suggested pitches per level for such a front-end::

    level 1 (far)      440 Hz
    level 2            660 Hz
    level 3            880 Hz
    level 4 (<= 2 m)  1320 Hz
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

from .perception import (CameraIntrinsics, RangedDetection, ReplayFrame, SignSpec,
                         estimate_distance)

TOP_BAND_M = 2.0
DEFAULT_THRESHOLDS = (TOP_BAND_M, 6.0, 15.0)
SUGGESTED_FREQ_HZ = {1: 440.0, 2: 660.0, 3: 880.0, 4: 1320.0}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceAttitude:
    pitch_deg: float = 90.0
    roll_deg: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.pitch_deg <= 180.0:
            raise ValueError(f"pitch out of range: {self.pitch_deg!r}")
        if not -180.0 <= self.roll_deg <= 180.0:
            raise ValueError(f"roll out of range: {self.roll_deg!r}")


UPRIGHT = DeviceAttitude(90.0, 0.0)


@dataclass(frozen=True)
class GuidanceConfig:
    band_deg: float = 25.0
    k_confirm: int = 3
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS
    lost_grace_frames: int = 10
    # exponential smoothing weight on the new distance while locked; None = raw estimate
    smoothing_alpha: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        validate_thresholds(self.thresholds)
        if not self.band_deg > 0:
            raise ConfigError("band_deg must be > 0")
        if int(self.k_confirm) != self.k_confirm or self.k_confirm < 1:
            raise ConfigError("k_confirm must be an integer >= 1")
        if int(self.lost_grace_frames) != self.lost_grace_frames or self.lost_grace_frames < 0:
            raise ConfigError("lost_grace_frames must be an integer >= 0")
        if self.smoothing_alpha is not None and not 0.0 < self.smoothing_alpha <= 1.0:
            raise ConfigError("smoothing_alpha must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> GuidanceConfig:
        known = {"band_deg", "k_confirm", "thresholds", "lost_grace_frames", "smoothing_alpha"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown guidance keys: {', '.join(sorted(extra))}")
        return cls(**d)


def validate_thresholds(thresholds) -> None:
    if len(thresholds) != 3:
        raise ConfigError("exactly three tone thresholds are required")
    if thresholds[0] != TOP_BAND_M:
        raise ConfigError(f"the nearest tone band must end at {TOP_BAND_M} m")
    if not all(math.isfinite(t) for t in thresholds) or not (thresholds[0] < thresholds[1] < thresholds[2]):
        raise ConfigError(f"tone thresholds must be strictly ascending: {thresholds!r}")


def upright_gate(att: DeviceAttitude, band_deg: float = 25.0) -> bool:
    if not band_deg > 0:
        raise ConfigError("band_deg must be > 0")
    return abs(att.pitch_deg - 90.0) <= band_deg


def tone_level(est_distance_m: float, thresholds=DEFAULT_THRESHOLDS) -> int:
    """Tone level 1..4; 4 means the sign is within the top band. Boundaries count as nearer."""
    validate_thresholds(thresholds)
    if not est_distance_m > 0:
        raise ValueError(f"distance must be > 0: {est_distance_m!r}")
    return _level(est_distance_m, thresholds)


def _level(est_distance_m: float, thresholds) -> int:
    # unchecked: callers hold thresholds already validated by GuidanceConfig
    near, mid, far = thresholds
    if est_distance_m <= near:
        return 4
    if est_distance_m <= mid:
        return 3
    if est_distance_m <= far:
        return 2
    return 1


# states -------------------------------------------------------------------

@dataclass(frozen=True)
class Inactive:
    name = "INACTIVE"


@dataclass(frozen=True)
class Scanning:
    run_length: int = 0
    name = "SCANNING"


@dataclass(frozen=True)
class Locked:
    level: int
    last_distance_m: float
    name = "LOCKED"


@dataclass(frozen=True)
class Lost:
    frames_since_loss: int
    last_distance_m: float = math.nan
    name = "LOST"


GuidanceState = Union[Inactive, Scanning, Locked, Lost]


class EventKind(Enum):
    SILENCE = "SILENCE"
    BLIP = "BLIP"
    CONTINUOUS = "CONTINUOUS"


@dataclass(frozen=True)
class AudioEvent:
    kind: EventKind
    level: Optional[int] = None

    def __post_init__(self):
        if (self.kind is EventKind.SILENCE) != (self.level is None):
            raise ValueError("level must be present iff the event is not SILENCE")


SILENCE = AudioEvent(EventKind.SILENCE)


def step(state: GuidanceState, att: DeviceAttitude, obs: Optional[RangedDetection],
         cfg: GuidanceConfig) -> tuple[GuidanceState, AudioEvent]:
    """Advance the guidance machine by one camera frame."""
    if abs(att.pitch_deg - 90.0) > cfg.band_deg:
        return Inactive(), SILENCE

    if obs is None:
        if isinstance(state, Locked):
            return Lost(1, state.last_distance_m), SILENCE
        if isinstance(state, Lost):
            n = state.frames_since_loss + 1
            if n > cfg.lost_grace_frames:
                return Scanning(0), SILENCE
            return Lost(n, state.last_distance_m), SILENCE
        return Scanning(0), SILENCE

    d = obs.est_distance_m
    if not d > 0:
        raise ValueError(f"distance must be > 0: {d!r}")
    if isinstance(state, Locked):
        if cfg.smoothing_alpha is not None:
            d = cfg.smoothing_alpha * d + (1.0 - cfg.smoothing_alpha) * state.last_distance_m
        lvl = _level(d, cfg.thresholds)
        return Locked(lvl, d), AudioEvent(EventKind.CONTINUOUS, lvl)
    if isinstance(state, Lost) and state.frames_since_loss <= cfg.lost_grace_frames:
        lvl = _level(d, cfg.thresholds)
        return Locked(lvl, d), AudioEvent(EventKind.CONTINUOUS, lvl)

    # Lost past its grace only happens with lost_grace_frames == 0: start a fresh run
    run = state.run_length + 1 if isinstance(state, Scanning) else 1
    lvl = _level(d, cfg.thresholds)
    if run >= cfg.k_confirm:
        return Locked(lvl, d), AudioEvent(EventKind.CONTINUOUS, lvl)
    return Scanning(run), AudioEvent(EventKind.BLIP, lvl)


@dataclass
class TimelineRow:
    frame_index: int
    state: GuidanceState
    event: AudioEvent
    est_distance_m: Optional[float]


@dataclass
class GuidanceEngine:
    """Single-owner wrapper around :func:`step` that records the event timeline."""

    cfg: GuidanceConfig = field(default_factory=GuidanceConfig)
    state: GuidanceState = field(default_factory=Inactive)
    timeline: list[TimelineRow] = field(default_factory=list)
    record: bool = True

    def update(self, frame_index: int, att: DeviceAttitude,
               obs: Optional[RangedDetection]) -> AudioEvent:
        self.state, ev = step(self.state, att, obs, self.cfg)
        if self.record:
            self.timeline.append(
                TimelineRow(frame_index, self.state, ev, None if obs is None else obs.est_distance_m))
        return ev

    def reset(self) -> None:
        self.state = Inactive()


TIMELINE_COLUMNS = ("frame_index", "state", "event_kind", "level", "est_distance_m")


def timeline_csv(rows: Iterable[TimelineRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMELINE_COLUMNS)
    for r in rows:
        w.writerow([r.frame_index, r.state.name, r.event.kind.value,
                    "" if r.event.level is None else r.event.level,
                    "" if r.est_distance_m is None else f"{r.est_distance_m:.6f}"])
    return buf.getvalue()


def replay(frames: Iterable[ReplayFrame], cfg: GuidanceConfig, cam: CameraIntrinsics,
           sign: SignSpec) -> list[TimelineRow]:
    """Drive the engine frame by frame from a replay log."""
    engine = GuidanceEngine(cfg)
    for fr in frames:
        obs = None if fr.detection is None else estimate_distance(fr.detection, cam, sign)
        engine.update(fr.frame_index, DeviceAttitude(fr.device_pitch_deg), obs)
    return engine.timeline
