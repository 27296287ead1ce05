"""Seeded paired field-trial simulation: vision-guided vs GPS-follow stop finding.

Each trial places an agent 30-50 m before a bus-stop sign on a straight
sidewalk and runs both navigation policies against the *same* draws of GPS
bias, stop mapping offset and reroute, as the two apps ran side by side in
the field.

Seeding
-------
``trial_seed(master_seed, trial_id)`` is the first 32-bit word of
``numpy.random.SeedSequence([master_seed, trial_id])``. Inside a trial the
seed is spawned into four independent child streams, in this order:

0. site errors (:func:`sample_site_errors`, then the sign slant draws)
1. GPS fix jitter (GPS-follow only)
2. scan phase, aim offset, then per frame device sway and perception
   (vision-guided only)
3. scenario draws (start distance when the scenario leaves it open)

Because both policies read streams 0 and 3 identically, pairing holds by
construction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .geo import LocalVec, Pose2D, heading_unit, signed_gap, wrap_heading
from .guidance import (DeviceAttitude, EventKind, GuidanceConfig, GuidanceEngine, Locked, Lost,
                       Scanning)
from .perception import (CameraIntrinsics, PerceptionNoise, ReplayFrame, SignSpec,
                         estimate_distance, synth_project)

MAP_FAILURE_M = 30.48  # 100 ft
START_MIN_M, START_MAX_M = 30.0, 50.0
SITES = ("City", "Suburb")


class ConfigError(ValueError):
    pass


class Policy(str, Enum):
    VISION_GUIDED = "VisionGuided"
    GPS_FOLLOW = "GpsFollow"


POLICIES = (Policy.GPS_FOLLOW, Policy.VISION_GUIDED)


class FailureReason(str, Enum):
    NONE = "NONE"
    MAP_OVER_100FT = "MAP_OVER_100FT"
    REROUTE = "REROUTE"
    NEVER_CONFIRMED = "NEVER_CONFIRMED"
    LOST_AFTER_RETRACE = "LOST_AFTER_RETRACE"
    TIMEOUT = "TIMEOUT"


def _check_prob(name, p):
    if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1]: {p!r}")


def _check_nonneg(name, x):
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x >= 0.0):
        raise ConfigError(f"{name} must be a finite value >= 0: {x!r}")


@dataclass(frozen=True)
class MappingErrorDist:
    """Stop mapping offset: isotropic Gaussian body plus a uniform-magnitude tail."""

    p_tail: float = 0.0
    body_sd_m: float = 0.0
    tail_min_m: float = 0.0
    tail_max_m: float = 0.0

    def __post_init__(self):
        _check_prob("p_tail", self.p_tail)
        _check_nonneg("body_sd_m", self.body_sd_m)
        _check_nonneg("tail_min_m", self.tail_min_m)
        _check_nonneg("tail_max_m", self.tail_max_m)
        if self.tail_min_m > self.tail_max_m:
            raise ConfigError("tail_min_m must not exceed tail_max_m")


@dataclass(frozen=True)
class SiteModel:
    label: str
    gps_bias_sd_m: float = 0.0
    gps_noise_sd_m: float = 0.0
    reroute_prob: float = 0.0
    mapping_error_dist: MappingErrorDist = field(default_factory=MappingErrorDist)
    sign_slant_prob: float = 0.0
    occlusion_miss_prob: float = 0.0
    # a slanted sign is turned this far (uniform) from facing the approach
    slant_min_deg: float = 70.0
    slant_max_deg: float = 90.0

    def __post_init__(self):
        if self.label not in SITES:
            raise ConfigError(f"site label must be one of {SITES}: {self.label!r}")
        _check_nonneg("gps_bias_sd_m", self.gps_bias_sd_m)
        _check_nonneg("gps_noise_sd_m", self.gps_noise_sd_m)
        _check_prob("reroute_prob", self.reroute_prob)
        _check_prob("sign_slant_prob", self.sign_slant_prob)
        _check_prob("occlusion_miss_prob", self.occlusion_miss_prob)
        if not 0.0 <= self.slant_min_deg <= self.slant_max_deg <= 180.0:
            raise ConfigError("need 0 <= slant_min_deg <= slant_max_deg <= 180")

    @classmethod
    def from_dict(cls, label: str, d: dict) -> SiteModel:
        d = dict(d)
        d.pop("label", None)
        mapping = MappingErrorDist(**d.pop("mapping_error_dist", {}))
        return cls(label=label, mapping_error_dist=mapping, **d)


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str = "agent"
    walk_speed_mps: float = 1.0
    scan_half_angle_deg: float = 45.0
    scan_period_s: float = 2.0
    residual_vision: bool = False
    residual_vision_range_m: float = 0.0
    retrace_allowed: bool = True
    pitch_sd_deg: float = 0.0
    # per-trial offset of the sweep centre from the travel direction (lost orientation)
    aim_sd_deg: float = 0.0

    def __post_init__(self):
        if not self.walk_speed_mps > 0:
            raise ConfigError("walk_speed_mps must be > 0")
        if not 0.0 <= self.scan_half_angle_deg <= 90.0:
            raise ConfigError("scan_half_angle_deg must lie in [0, 90]")
        if not self.scan_period_s > 0:
            raise ConfigError("scan_period_s must be > 0")
        _check_nonneg("residual_vision_range_m", self.residual_vision_range_m)
        _check_nonneg("pitch_sd_deg", self.pitch_sd_deg)
        _check_nonneg("aim_sd_deg", self.aim_sd_deg)

    @property
    def vision_class(self) -> str:
        return "residual" if self.residual_vision else "none"


@dataclass(frozen=True)
class TrialParams:
    """Protocol constants shared by every trial of an experiment."""

    dt_s: float = 0.1
    arrival_m: float = 5.0
    gps_fix_interval_s: float = 1.0
    retrace_distance_m: float = 8.0
    # an unlocked agent gives up this far past the sign
    walk_past_m: float = 10.0
    max_time_s: float = 600.0
    camera_height_m: float = 1.4

    def __post_init__(self):
        for name in ("dt_s", "arrival_m", "gps_fix_interval_s", "max_time_s", "camera_height_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        _check_nonneg("retrace_distance_m", self.retrace_distance_m)
        _check_nonneg("walk_past_m", self.walk_past_m)


@dataclass(frozen=True)
class Scenario:
    sign_pos: LocalVec
    sign_facing_deg: float
    travel_heading_deg: float
    start_distance_m: float
    site: SiteModel
    agent: AgentProfile = field(default_factory=AgentProfile)
    cam: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    sign: SignSpec = field(default_factory=SignSpec)
    stop_id: str = "stop"
    # walking line offset from the sign, to the right of travel (negative = left)
    lateral_offset_m: float = 1.5
    perception: PerceptionNoise = field(default_factory=PerceptionNoise)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    params: TrialParams = field(default_factory=TrialParams)

    def __post_init__(self):
        if not START_MIN_M <= self.start_distance_m <= START_MAX_M:
            raise ConfigError(f"start_distance_m must lie in [30, 50]: {self.start_distance_m!r}")
        if not (0.0 <= self.travel_heading_deg < 360.0 and 0.0 <= self.sign_facing_deg < 360.0):
            raise ConfigError("headings must lie in [0, 360)")
        if not math.isfinite(self.lateral_offset_m):
            raise ConfigError("lateral_offset_m must be finite")

    def start_position(self) -> LocalVec:
        u = heading_unit(self.travel_heading_deg)
        right = LocalVec(u.north_m, -u.east_m)
        return self.sign_pos - u.scaled(self.start_distance_m) + right.scaled(self.lateral_offset_m)


@dataclass(frozen=True)
class SiteErrors:
    gps_bias: LocalVec
    mapping_offset: LocalVec
    reroute: bool


@dataclass(frozen=True)
class TrialOutcome:
    policy: Policy
    success: bool
    gap_m: Optional[float]
    failure_reason: FailureReason
    # estimate that triggered the stop (vision) or perceived distance at arrival (GPS)
    final_est_distance_m: Optional[float] = None

    def __post_init__(self):
        if not (self.success == (self.gap_m is not None) == (self.failure_reason is FailureReason.NONE)):
            raise ValueError("success, gap_m and failure_reason disagree")


def sample_site_errors(site: SiteModel, rng: np.random.Generator) -> SiteErrors:
    """Draw per-trial GPS bias, mapping offset and reroute flag.

    Draw order, always fully consumed: bias (2 normals), body offset
    (2 normals), tail selector, tail magnitude, tail direction (3 uniforms),
    reroute (1 uniform).
    """
    bias = rng.standard_normal(2) * site.gps_bias_sd_m
    body = rng.standard_normal(2)
    u_tail, u_mag, u_dir = rng.random(3)
    u_reroute = rng.random()

    m = site.mapping_error_dist
    if u_tail < m.p_tail:
        mag = m.tail_min_m + u_mag * (m.tail_max_m - m.tail_min_m)
        theta = 2.0 * math.pi * u_dir
        offset = LocalVec(mag * math.sin(theta), mag * math.cos(theta))
    else:
        offset = LocalVec(float(body[0]) * m.body_sd_m, float(body[1]) * m.body_sd_m)
    return SiteErrors(LocalVec(float(bias[0]), float(bias[1])), offset,
                      bool(u_reroute < site.reroute_prob))


def sample_sign_slant(site: SiteModel, rng: np.random.Generator) -> float:
    """Signed rotation (deg) of the sign face away from the approach; 0 when upright.

    Consumes three uniforms: slant selector, angle, side.
    """
    u_slant, u_ang, u_side = rng.random(3)
    if u_slant >= site.sign_slant_prob:
        return 0.0
    ang = site.slant_min_deg + u_ang * (site.slant_max_deg - site.slant_min_deg)
    return ang if u_side < 0.5 else -ang


def trial_seed(master_seed: int, trial_id: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(trial_id)]).generate_state(1)[0])


@dataclass
class _Streams:
    site: np.random.Generator
    gps: np.random.Generator
    vision: np.random.Generator
    scenario: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> _Streams:
        children = np.random.SeedSequence(int(seed)).spawn(4)
        return cls(*(np.random.default_rng(c) for c in children))


def _success(policy, gap, est) -> TrialOutcome:
    return TrialOutcome(policy, True, float(gap), FailureReason.NONE, est)


def _failure(policy, reason) -> TrialOutcome:
    return TrialOutcome(policy, False, None, reason)


def _run_gps(scn: Scenario, errs: SiteErrors, rng: np.random.Generator) -> TrialOutcome:
    """Follow the navigation app along the sidewalk until it announces arrival.

    The agent walks toward the mapped stop as seen through the current GPS
    fix (bias plus 1 Hz jitter). Arrival is announced when the perceived
    distance drops below the arrival radius, or when the perceived target
    comes abeam (its along-track remainder changes sign).
    """
    policy = Policy.GPS_FOLLOW
    if errs.mapping_offset.norm() > MAP_FAILURE_M:
        return _failure(policy, FailureReason.MAP_OVER_100FT)
    if errs.reroute:
        return _failure(policy, FailureReason.REROUTE)

    p = scn.params
    sd = scn.site.gps_noise_sd_m
    u = heading_unit(scn.travel_heading_deg)
    target = scn.sign_pos + errs.mapping_offset
    x, y = scn.start_position().east_m, scn.start_position().north_m
    step_m = scn.agent.walk_speed_mps * p.dt_s
    fix_every = max(1, round(p.gps_fix_interval_s / p.dt_s))
    n_frames = int(round(p.max_time_s / p.dt_s))
    jx = jy = 0.0
    prev_along = None
    for frame in range(n_frames):
        if frame % fix_every == 0:
            jx, jy = rng.standard_normal(2) * sd
        vx = target.east_m - (x + errs.gps_bias.east_m + jx)
        vy = target.north_m - (y + errs.gps_bias.north_m + jy)
        dist = math.hypot(vx, vy)
        along = vx * u.east_m + vy * u.north_m
        if dist < p.arrival_m or (prev_along is not None and along * prev_along <= 0.0):
            gap = signed_gap(scn.sign_pos, LocalVec(x, y), scn.travel_heading_deg)
            return _success(policy, gap, dist)
        direction = 1.0 if along > 0.0 else -1.0
        x += direction * step_m * u.east_m
        y += direction * step_m * u.north_m
        prev_along = along
    return _failure(policy, FailureReason.TIMEOUT)


def _run_vision(scn: Scenario, facing_deg: float, rng: np.random.Generator,
                trace: Optional[list] = None) -> TrialOutcome:
    """Walk toward the stop scanning with the camera until the top tone sounds.

    Unlocked, the agent walks the travel line sweeping the camera
    sinusoidally over +/- scan_half_angle about a per-trial aim offset.
    Once locked, the camera (and the walk) turns to the sign's last
    detected bearing. The first level-4
    continuous tone stops the agent. A loss that outlasts the grace period
    costs the single retrace (walk back, then approach again); a second one
    fails the trial.
    """
    policy = Policy.VISION_GUIDED
    p, agent = scn.params, scn.agent
    noise = replace(scn.perception, miss_prob=scn.site.occlusion_miss_prob)
    engine = GuidanceEngine(scn.guidance, record=False)
    step_m = agent.walk_speed_mps * p.dt_s
    n_frames = int(round(p.max_time_s / p.dt_s))
    travel = scn.travel_heading_deg
    u = heading_unit(travel)

    phase = 2.0 * math.pi * rng.random()
    aim = agent.aim_sd_deg * rng.standard_normal()
    pos = scn.start_position()
    lock_heading = travel
    ever_confirmed = False
    retraces_left = 1 if agent.retrace_allowed else 0
    back_remaining = 0.0
    t_scan = 0.0

    for frame in range(n_frames):
        pitch = 90.0 + agent.pitch_sd_deg * rng.standard_normal()
        att = DeviceAttitude(min(180.0, max(-90.0, pitch)))
        state = engine.state
        if back_remaining > 0.0:
            # retracing: camera faces back down the sidewalk, nothing to see
            walk_heading = wrap_heading(travel + 180.0)
            cam_yaw = 0.0
            det = None
        else:
            if isinstance(state, (Locked, Lost)):
                walk_heading = lock_heading
                cam_yaw = 0.0
            else:
                walk_heading = travel
                cam_yaw = aim + agent.scan_half_angle_deg * math.sin(
                    2.0 * math.pi * t_scan / agent.scan_period_s + phase)
                t_scan += p.dt_s
            det = synth_project(Pose2D(pos, walk_heading), cam_yaw, scn.sign_pos, facing_deg,
                                scn.cam, scn.sign, noise, rng, frame, p.camera_height_m)
        obs = None if det is None else estimate_distance(det, scn.cam, scn.sign)
        ev = engine.update(frame, att, obs)
        new = engine.state
        if trace is not None:
            trace.append(ReplayFrame(frame, frame * p.dt_s, pos.east_m, pos.north_m, walk_heading,
                                     att.pitch_deg, cam_yaw, det))

        if isinstance(new, Locked):
            ever_confirmed = True
            if obs is not None:
                lock_heading = wrap_heading(walk_heading + cam_yaw + obs.bearing_deg)
            if ev.kind is EventKind.CONTINUOUS and ev.level == 4:
                gap = signed_gap(scn.sign_pos, pos, travel)
                if agent.residual_vision and (scn.sign_pos - pos).norm() <= agent.residual_vision_range_m:
                    gap = 0.0
                return _success(policy, gap, new.last_distance_m)
        elif isinstance(state, Lost) and isinstance(new, Scanning):
            if retraces_left == 0:
                return _failure(policy, FailureReason.LOST_AFTER_RETRACE)
            retraces_left -= 1
            back_remaining = p.retrace_distance_m

        if back_remaining > 0.0:
            move = min(step_m, back_remaining)
            back_remaining -= move
            pos = pos - u.scaled(move)
            continue
        pos = pos + heading_unit(walk_heading).scaled(step_m)

        if not isinstance(engine.state, (Locked, Lost)) \
                and signed_gap(scn.sign_pos, pos, travel) < -p.walk_past_m:
            if not ever_confirmed:
                return _failure(policy, FailureReason.NEVER_CONFIRMED)
            return _failure(policy, FailureReason.LOST_AFTER_RETRACE)
    return _failure(policy, FailureReason.TIMEOUT)


def run_trial(scn: Scenario, policy: Policy | str, seed: int,
              hook: Optional[Callable[[SiteErrors], None]] = None,
              trace: Optional[list] = None) -> TrialOutcome:
    """Run one policy on one scenario; identical arguments give identical outcomes.

    ``hook`` receives the sampled site errors (pairing instrumentation);
    ``trace`` collects vision-guided frames as :class:`ReplayFrame` rows.
    """
    if not isinstance(scn, Scenario):
        raise ConfigError("run_trial needs a Scenario")
    policy = Policy(policy)
    streams = _Streams.from_seed(seed)
    errs = sample_site_errors(scn.site, streams.site)
    slant = sample_sign_slant(scn.site, streams.site)
    if hook is not None:
        hook(errs)
    if policy is Policy.GPS_FOLLOW:
        return _run_gps(scn, errs, streams.gps)
    facing = wrap_heading(scn.sign_facing_deg + slant)
    return _run_vision(scn, facing, streams.vision, trace)


# experiments ---------------------------------------------------------------

@dataclass(frozen=True)
class StopSpec:
    stop_id: str
    site: str
    sign_east_m: float = 0.0
    sign_north_m: float = 0.0
    travel_heading_deg: float = 0.0
    sign_facing_deg: Optional[float] = None
    lateral_offset_m: float = 1.5
    start_distance_m: Optional[float] = None

    def facing(self) -> float:
        if self.sign_facing_deg is None:
            return wrap_heading(self.travel_heading_deg + 180.0)
        return self.sign_facing_deg


@dataclass
class ExperimentConfig:
    scenarios: list[StopSpec]
    agents: list[AgentProfile]
    site_models: dict[str, SiteModel]
    master_seed: int = 0
    repetitions: int = 1
    skip: list[tuple[str, str]] = field(default_factory=list)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    sign: SignSpec = field(default_factory=SignSpec)
    perception: PerceptionNoise = field(default_factory=PerceptionNoise)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    trial: TrialParams = field(default_factory=TrialParams)

    def validate(self) -> None:
        if not self.scenarios:
            raise ConfigError("experiment has no scenarios")
        if not self.agents:
            raise ConfigError("experiment has no agents")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        ids = [s.stop_id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate stop_id in scenarios")
        aids = [a.agent_id for a in self.agents]
        if len(set(aids)) != len(aids):
            raise ConfigError("duplicate agent_id in agents")
        for s in self.scenarios:
            if s.site not in self.site_models:
                raise ConfigError(f"scenario {s.stop_id!r} names unknown site {s.site!r}")
            if s.start_distance_m is not None and not START_MIN_M <= s.start_distance_m <= START_MAX_M:
                raise ConfigError(f"scenario {s.stop_id!r}: start_distance_m outside [30, 50]")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        try:
            sites = {k: SiteModel.from_dict(k, v) for k, v in d["site_models"].items()}
            cfg = cls(
                scenarios=[StopSpec(**s) for s in d["scenarios"]],
                agents=[AgentProfile(**a) for a in d["agents"]],
                site_models=sites,
                master_seed=int(d.get("master_seed", 0)),
                repetitions=int(d.get("repetitions", 1)),
                skip=[(str(a), str(s)) for a, s in d.get("skip", [])],
                camera=CameraIntrinsics(**d.get("camera", {})),
                sign=SignSpec(**d.get("sign", {})),
                perception=PerceptionNoise(**d.get("perception", {})),
                guidance=GuidanceConfig.from_dict(d.get("guidance", {})),
                trial=TrialParams(**d.get("trial", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"experiment config: missing key {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigError(f"experiment config: {exc}") from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"experiment config: {exc}") from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        sites = {}
        for k, s in self.site_models.items():
            sd = asdict(s)
            sd.pop("label")
            sites[k] = sd
        return {
            "master_seed": self.master_seed,
            "repetitions": self.repetitions,
            "site_models": sites,
            "scenarios": [asdict(s) for s in self.scenarios],
            "agents": [asdict(a) for a in self.agents],
            "skip": [list(p) for p in self.skip],
            "camera": asdict(self.camera),
            "sign": asdict(self.sign),
            "perception": asdict(self.perception),
            "guidance": {**asdict(self.guidance), "thresholds": list(self.guidance.thresholds)},
            "trial": asdict(self.trial),
        }


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(d)


DEFAULT_CONFIG_NAME = "default_experiment.json"


def default_config_path() -> Path:
    return Path(str(resources.files("stopfinder") / "data" / DEFAULT_CONFIG_NAME))


def load_default_config() -> ExperimentConfig:
    return load_config(default_config_path())


@dataclass(frozen=True)
class TrialRow:
    trial_id: int
    stop_id: str
    site: str
    vision_class: str
    seed: int
    outcomes: dict  # Policy -> TrialOutcome
    agent_id: str = ""


TrialTable = list  # of TrialRow, in trial_id order


@dataclass(frozen=True)
class TrialPlan:
    trial_id: int
    seed: int
    scenario: Scenario
    agent_id: str


def plan_trials(cfg: ExperimentConfig, master_seed: Optional[int] = None) -> list[TrialPlan]:
    """Enumerate trials: repetitions x agents x scenarios, minus skipped (agent, stop) pairs."""
    cfg.validate()
    seed0 = cfg.master_seed if master_seed is None else master_seed
    skip = set(cfg.skip)
    plans = []
    tid = 0
    for _ in range(cfg.repetitions):
        for agent in cfg.agents:
            for spec in cfg.scenarios:
                if (agent.agent_id, spec.stop_id) in skip:
                    continue
                seed = trial_seed(seed0, tid)
                start = spec.start_distance_m
                if start is None:
                    start = float(_Streams.from_seed(seed).scenario.uniform(START_MIN_M, START_MAX_M))
                scn = Scenario(
                    sign_pos=LocalVec(spec.sign_east_m, spec.sign_north_m),
                    sign_facing_deg=spec.facing(),
                    travel_heading_deg=spec.travel_heading_deg,
                    start_distance_m=start,
                    site=cfg.site_models[spec.site],
                    agent=agent,
                    cam=cfg.camera,
                    sign=cfg.sign,
                    stop_id=spec.stop_id,
                    lateral_offset_m=spec.lateral_offset_m,
                    perception=cfg.perception,
                    guidance=cfg.guidance,
                    params=cfg.trial,
                )
                plans.append(TrialPlan(tid, seed, scn, agent.agent_id))
                tid += 1
    return plans


def _run_plan(plan: TrialPlan) -> TrialRow:
    outcomes = {pol: run_trial(plan.scenario, pol, plan.seed) for pol in POLICIES}
    return TrialRow(plan.trial_id, plan.scenario.stop_id, plan.scenario.site.label,
                    plan.scenario.agent.vision_class, plan.seed, outcomes, plan.agent_id)


def run_experiment(cfg: ExperimentConfig, master_seed: Optional[int] = None,
                   workers: int = 1) -> TrialTable:
    """Run every planned trial under both policies; rows come back in trial_id order."""
    plans = plan_trials(cfg, master_seed)
    if workers > 1 and len(plans) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_plan, plans, chunksize=8))
    else:
        rows = [_run_plan(p) for p in plans]
    return sorted(rows, key=lambda r: r.trial_id)


# trial table CSV ------------------------------------------------------------

TRIAL_COLUMNS = ("trial_id", "stop_id", "site", "vision_class", "seed", "policy", "success",
                 "gap_m", "failure_reason")


def trials_to_csv(table: Iterable[TrialRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for row in table:
        for pol in POLICIES:
            o = row.outcomes[pol]
            w.writerow([row.trial_id, row.stop_id, row.site, row.vision_class, row.seed,
                        pol.value, "1" if o.success else "0",
                        "" if o.gap_m is None else f"{o.gap_m:.6f}", o.failure_reason.value])
    return buf.getvalue()


class TableError(ValueError):
    pass


def trials_from_csv(text: str | io.TextIOBase) -> TrialTable:
    """Parse a trial CSV back into rows; a trial missing one policy keeps only what it has."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.DictReader(stream)
    missing = [c for c in TRIAL_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise TableError(f"trial table: missing column(s) {', '.join(missing)}")
    rows: dict[int, TrialRow] = {}
    for rec in reader:
        line = reader.line_num
        try:
            tid = int(rec["trial_id"])
            pol = Policy(rec["policy"])
            success = rec["success"].strip() in ("1", "true", "True")
            gap = float(rec["gap_m"]) if rec["gap_m"].strip() else None
            out = TrialOutcome(pol, success, gap, FailureReason(rec["failure_reason"]))
            seed = int(rec["seed"])
        except ValueError as exc:
            raise TableError(f"trial table, line {line}: {exc}") from None
        row = rows.get(tid)
        if row is None:
            row = TrialRow(tid, rec["stop_id"], rec["site"], rec["vision_class"], seed, {})
            rows[tid] = row
        elif (row.stop_id, row.site, row.vision_class, row.seed) != \
                (rec["stop_id"], rec["site"], rec["vision_class"], seed):
            raise TableError(f"trial table, line {line}: trial {tid} rows disagree")
        if pol in row.outcomes:
            raise TableError(f"trial table, line {line}: duplicate {pol.value} row for trial {tid}")
        row.outcomes[pol] = out
    return [rows[k] for k in sorted(rows)]
