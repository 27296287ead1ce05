"""Known-size pinhole ranging, a synthetic sign detector and detection confirmation.

The detector is a port: anything yielding :class:`Detection` objects per
frame (the synthetic projector below, a replay log, a real model binding)
feeds :func:`estimate_distance` and the guidance engine the same way.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Optional

import numpy as np

from .geo import LocalVec, Pose2D, bearing_of, wrap_signed

DEFAULT_SIGN_WIDTH_M = 0.3048
DEFAULT_SIGN_HEIGHT_M = 0.4572
DEFAULT_CAMERA_HEIGHT_M = 1.4


class InvalidDetectionError(ValueError):
    pass


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float = 800.0
    image_width_px: int = 720
    image_height_px: int = 1280

    def __post_init__(self):
        if not (self.focal_px > 0 and self.image_width_px > 0 and self.image_height_px > 0):
            raise ValueError("camera intrinsics must be positive")

    @property
    def hfov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.image_width_px / (2.0 * self.focal_px)))

    @property
    def half_hfov_deg(self) -> float:
        return 0.5 * self.hfov_deg


@dataclass(frozen=True)
class SignSpec:
    physical_width_m: float = DEFAULT_SIGN_WIDTH_M
    mount_center_height_m: float = 2.1
    physical_height_m: float = DEFAULT_SIGN_HEIGHT_M

    def __post_init__(self):
        if not self.physical_width_m > 0:
            raise ValueError("sign width must be positive")
        if not self.physical_height_m > 0:
            raise ValueError("sign height must be positive")


@dataclass(frozen=True)
class PerceptionNoise:
    miss_prob: float = 0.0
    slant_cutoff_deg: float = 60.0
    px_jitter_sd: float = 0.0
    max_range_m: float = 60.0
    false_positive_prob: float = 0.0

    def __post_init__(self):
        for name in ("miss_prob", "false_positive_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]: {p!r}")
        if self.px_jitter_sd < 0 or self.max_range_m <= 0:
            raise ValueError("px_jitter_sd must be >= 0 and max_range_m > 0")
        if not 0.0 <= self.slant_cutoff_deg <= 90.0:
            raise ValueError("slant_cutoff_deg must lie in [0, 90]")


@dataclass(frozen=True)
class Detection:
    frame_index: int
    bbox_center_x_px: float
    bbox_center_y_px: float
    bbox_width_px: float
    bbox_height_px: float
    confidence: float = 1.0


@dataclass(frozen=True)
class RangedDetection:
    detection: Detection
    est_distance_m: float
    bearing_deg: float


def check_detection(d: Detection, cam: CameraIntrinsics, tol_px: float = 0.5) -> None:
    """Raise InvalidDetectionError unless the box is non-degenerate and inside the image."""
    if not (d.bbox_width_px > 0 and math.isfinite(d.bbox_width_px)):
        raise InvalidDetectionError(f"frame {d.frame_index}: bbox width must be > 0, got {d.bbox_width_px!r}")
    if not (d.bbox_height_px >= 0 and math.isfinite(d.bbox_height_px)):
        raise InvalidDetectionError(f"frame {d.frame_index}: bbox height must be >= 0")
    if not 0.0 <= d.confidence <= 1.0:
        raise InvalidDetectionError(f"frame {d.frame_index}: confidence outside [0, 1]")
    half_w, half_h = d.bbox_width_px / 2.0, d.bbox_height_px / 2.0
    if (d.bbox_center_x_px - half_w < -tol_px
            or d.bbox_center_x_px + half_w > cam.image_width_px + tol_px
            or d.bbox_center_y_px - half_h < -tol_px
            or d.bbox_center_y_px + half_h > cam.image_height_px + tol_px):
        raise InvalidDetectionError(f"frame {d.frame_index}: bbox extends outside the image")


def estimate_distance(d: Detection, cam: CameraIntrinsics, sign: SignSpec) -> RangedDetection:
    """Range a detected sign from its box width: ``focal * width_m / width_px``."""
    check_detection(d, cam)
    dist = cam.focal_px * sign.physical_width_m / d.bbox_width_px
    bearing = math.degrees(math.atan((d.bbox_center_x_px - cam.image_width_px / 2.0) / cam.focal_px))
    return RangedDetection(d, dist, bearing)


def incidence_deg(sign_pos: LocalVec, sign_facing_deg: float, viewer: LocalVec) -> float:
    """Angle between the sign's face normal and the sign-to-viewer line, in [0, 180]."""
    return abs(wrap_signed(bearing_of(viewer - sign_pos) - sign_facing_deg))


def project_sign(agent: Pose2D, camera_yaw_deg: float, sign_pos: LocalVec,
                 sign_facing_deg: float, cam: CameraIntrinsics, sign: SignSpec,
                 noise: PerceptionNoise, camera_height_m: float = DEFAULT_CAMERA_HEIGHT_M,
                 jitter_px: float = 0.0, frame_index: int = 0) -> Optional[Detection]:
    """Deterministic part of the synthetic detector (no miss draw)."""
    v = sign_pos - agent.position
    dist = v.norm()
    if dist <= 1e-9 or dist > noise.max_range_m:
        return None
    bearing = wrap_signed(bearing_of(v) - (agent.heading_deg + camera_yaw_deg))
    if abs(bearing) >= 90.0:
        return None
    inc = incidence_deg(sign_pos, sign_facing_deg, agent.position)
    if inc > noise.slant_cutoff_deg:
        return None

    f = cam.focal_px
    width = f * sign.physical_width_m * math.cos(math.radians(inc)) / dist + jitter_px
    if width < 1.0:
        return None
    height = f * sign.physical_height_m / dist
    cx = cam.image_width_px / 2.0 + f * math.tan(math.radians(bearing))
    cy = cam.image_height_px / 2.0 - f * (sign.mount_center_height_m - camera_height_m) / dist
    if (cx - width / 2.0 < 0.0 or cx + width / 2.0 > cam.image_width_px
            or cy - height / 2.0 < 0.0 or cy + height / 2.0 > cam.image_height_px):
        return None
    conf = min(1.0, 0.5 + width / 200.0)
    return Detection(frame_index, cx, cy, width, height, conf)


def synth_project(agent: Pose2D, camera_yaw_deg: float, sign_pos: LocalVec,
                  sign_facing_deg: float, cam: CameraIntrinsics, sign: SignSpec,
                  noise: PerceptionNoise, rng: np.random.Generator,
                  frame_index: int = 0,
                  camera_height_m: float = DEFAULT_CAMERA_HEIGHT_M) -> Optional[Detection]:
    """Simulate one frame of the sign detector.

    ``camera_yaw_deg`` is relative to the agent heading. Every call consumes
    the same draws from ``rng`` (two uniforms, then one normal) whatever the
    geometry, so per-frame streams stay aligned; a false positive consumes
    three extra uniforms.

    Returns None when the sign is out of view, out of range, too oblique,
    or dropped by the miss draw.
    """
    u_miss, u_fp = rng.random(2)
    z = rng.standard_normal()
    det = None
    if u_miss >= noise.miss_prob:
        det = project_sign(agent, camera_yaw_deg, sign_pos, sign_facing_deg, cam, sign,
                           noise, camera_height_m, z * noise.px_jitter_sd, frame_index)
    if det is None and u_fp < noise.false_positive_prob:
        a, b, c = rng.random(3)
        w = 10.0 + 150.0 * a
        cx = w / 2.0 + b * (cam.image_width_px - w)
        cy = w / 2.0 + c * (cam.image_height_px - w)
        det = Detection(frame_index, cx, cy, w, w, 0.5)
    return det


class ConfirmKind(Enum):
    CONFIRMED = "CONFIRMED"
    LOST = "LOST"


@dataclass(frozen=True)
class ConfirmationEvent:
    kind: ConfirmKind
    frame_index: int


def confirm_stream(frames: Iterable[tuple[int, Optional[Detection]]],
                   k_confirm: int) -> Iterator[ConfirmationEvent]:
    """CONFIRMED on the k-th consecutive hit, LOST on the first miss after a confirmed run."""
    if k_confirm < 1:
        raise ValueError("k_confirm must be >= 1")
    run = 0
    confirmed = False
    last = None
    for idx, det in frames:
        if last is not None and idx <= last:
            raise StreamError(f"frame index {idx} does not follow {last}")
        last = idx
        if det is None:
            if confirmed:
                yield ConfirmationEvent(ConfirmKind.LOST, idx)
            run = 0
            confirmed = False
            continue
        run += 1
        if run == k_confirm and not confirmed:
            confirmed = True
            yield ConfirmationEvent(ConfirmKind.CONFIRMED, idx)


# replay log ---------------------------------------------------------------

REPLAY_COLUMNS = ("frame_index", "t_s", "agent_east_m", "agent_north_m", "heading_deg",
                  "device_pitch_deg", "cam_yaw_deg", "bbox_cx", "bbox_cy", "bbox_w",
                  "bbox_h", "confidence")
_BBOX_FIELDS = ("bbox_cx", "bbox_cy", "bbox_w", "bbox_h", "confidence")


@dataclass(frozen=True)
class ReplayFrame:
    frame_index: int
    t_s: float
    agent_east_m: float
    agent_north_m: float
    heading_deg: float
    device_pitch_deg: float
    cam_yaw_deg: float
    detection: Optional[Detection]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_replay_log(frames: Iterable[ReplayFrame]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPLAY_COLUMNS)
    for fr in frames:
        row = [fr.frame_index, _fmt(fr.t_s), _fmt(fr.agent_east_m), _fmt(fr.agent_north_m),
               _fmt(fr.heading_deg), _fmt(fr.device_pitch_deg), _fmt(fr.cam_yaw_deg)]
        d = fr.detection
        if d is None:
            row += [""] * 5
        else:
            row += [_fmt(d.bbox_center_x_px), _fmt(d.bbox_center_y_px), _fmt(d.bbox_width_px),
                    _fmt(d.bbox_height_px), _fmt(d.confidence)]
        w.writerow(row)
    return buf.getvalue()


def read_replay_log(text: str | io.TextIOBase) -> list[ReplayFrame]:
    """Parse a replay log; blank bbox fields mean no detection on that frame."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.DictReader(stream)
    missing = [c for c in REPLAY_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise StreamError(f"replay log: missing column(s) {', '.join(missing)}")
    out = []
    last = None
    for row in reader:
        line = reader.line_num
        try:
            idx = int(row["frame_index"])
            vals = {k: float(row[k]) for k in REPLAY_COLUMNS[1:7]}
            bbox = [row[k].strip() for k in _BBOX_FIELDS]
            if all(bbox):
                cx, cy, bw, bh, conf = (float(b) for b in bbox)
                det = Detection(idx, cx, cy, bw, bh, conf)
            elif not any(bbox):
                det = None
            else:
                raise StreamError(f"replay log, line {line}: partially empty bbox fields")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, StreamError):
                raise
            raise StreamError(f"replay log, line {line}: {exc}") from None
        if last is not None and idx <= last:
            raise StreamError(f"replay log, line {line}: frame index {idx} does not follow {last}")
        last = idx
        out.append(ReplayFrame(idx, vals["t_s"], vals["agent_east_m"], vals["agent_north_m"],
                               vals["heading_deg"], vals["device_pitch_deg"], vals["cam_yaw_deg"], det))
    return out
