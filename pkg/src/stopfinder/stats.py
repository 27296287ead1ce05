"""Outcome statistics over paired trial tables.

Success rates carry Wilson score intervals; gap distances are summarised
over successful trials only (sign preserved) with a percentile bootstrap
interval for the mean.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .simulator import POLICIES, Policy, TrialRow

Z95 = NormalDist().inv_cdf(0.975)
DEFAULT_RESAMPLES = 10_000

Where = Optional[Callable[[TrialRow], bool]]


class EmptyGroupError(ValueError):
    pass


class PairingError(ValueError):
    pass


@dataclass(frozen=True)
class ProportionCI:
    successes: int
    total: int
    p_hat: float
    lo: float
    hi: float


@dataclass(frozen=True)
class GapSummary:
    n: int
    mean_m: float
    sd_m: float
    ci_lo_m: float
    ci_hi_m: float


@dataclass(frozen=True)
class JointTable2x2:
    both_success: int
    a_only: int
    g_only: int
    both_fail: int

    @property
    def total(self) -> int:
        return self.both_success + self.a_only + self.g_only + self.both_fail


def wilson_interval(successes: int, total: int, z: float = Z95) -> ProportionCI:
    if total <= 0:
        raise EmptyGroupError("cannot form a proportion over zero trials")
    if not 0 <= successes <= total:
        raise ValueError(f"successes must lie in [0, {total}]: {successes}")
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total))
    # clamp rounding so lo <= p_hat <= hi holds exactly at the boundaries
    lo = min(p, max(0.0, center - half))
    hi = max(p, min(1.0, center + half))
    return ProportionCI(successes, total, p, lo, hi)


def _select(trials: Iterable[TrialRow], where: Where) -> list[TrialRow]:
    return [r for r in trials if where is None or where(r)]


def _outcomes(trials: Iterable[TrialRow], policy: Policy | str, where: Where):
    policy = Policy(policy)
    return [r.outcomes[policy] for r in _select(trials, where) if policy in r.outcomes]


def success_rate_ci(trials: Iterable[TrialRow], policy: Policy | str,
                    where: Where = None) -> ProportionCI:
    outs = _outcomes(trials, policy, where)
    if not outs:
        raise EmptyGroupError(f"no {Policy(policy).value} trials in the selected group")
    return wilson_interval(sum(o.success for o in outs), len(outs))


def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample SD (n - 1 denominator); SD is nan for a single value."""
    n = len(values)
    if n == 0:
        raise EmptyGroupError("no values")
    mean = math.fsum(values) / n
    if n == 1:
        return mean, math.nan
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def bootstrap_mean_ci(values: Sequence[float], n_resamples: int = DEFAULT_RESAMPLES,
                      seed: int = 0, alpha: float = 0.05) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyGroupError("no values")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    rng = np.random.default_rng(seed)
    means = np.empty(n_resamples)
    chunk = max(1, 2_000_000 // arr.size)
    for start in range(0, n_resamples, chunk):
        stop = min(n_resamples, start + chunk)
        idx = rng.integers(0, arr.size, size=(stop - start, arr.size))
        means[start:stop] = arr[idx].mean(axis=1)
    lo, hi = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def gaps(trials: Iterable[TrialRow], policy: Policy | str, where: Where = None) -> list[float]:
    return [o.gap_m for o in _outcomes(trials, policy, where) if o.success]


def gap_summary(trials: Iterable[TrialRow], policy: Policy | str, where: Where = None,
                n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> GapSummary:
    vals = gaps(trials, policy, where)
    if not vals:
        raise EmptyGroupError(f"no successful {Policy(policy).value} trials in the selected group")
    mean, sd = mean_sd(vals)
    lo, hi = bootstrap_mean_ci(vals, n_resamples, seed)
    # the percentile interval can miss the sample mean by float rounding on constant data
    return GapSummary(len(vals), mean, sd, min(lo, mean), max(hi, mean))


def overshoot_fraction(trials: Iterable[TrialRow], policy: Policy | str = Policy.GPS_FOLLOW,
                       where: Where = None) -> float:
    """Share of successful trials that stopped past the sign (negative gap)."""
    vals = gaps(trials, policy, where)
    if not vals:
        raise EmptyGroupError("no successful trials")
    return sum(1 for g in vals if g < 0.0) / len(vals)


def joint_table(trials: Iterable[TrialRow], where: Where = None) -> JointTable2x2:
    """2x2 of (vision-guided, GPS-follow) success over paired trials."""
    counts = {(True, True): 0, (True, False): 0, (False, True): 0, (False, False): 0}
    for r in _select(trials, where):
        if set(r.outcomes) != set(POLICIES):
            raise PairingError(f"trial {r.trial_id} lacks an outcome for both policies")
        a = r.outcomes[Policy.VISION_GUIDED].success
        g = r.outcomes[Policy.GPS_FOLLOW].success
        counts[(a, g)] += 1
    return JointTable2x2(counts[(True, True)], counts[(True, False)],
                         counts[(False, True)], counts[(False, False)])


# report ---------------------------------------------------------------------

SITE_GROUPS = ("Both", "City", "Suburb")
VISION_GROUPS = ("all", "residual", "none")
REPORT_COLUMNS = ("site", "vision_class", "policy", "n", "successes", "success_rate",
                  "rate_lo", "rate_hi", "gap_n", "gap_mean_m", "gap_sd_m", "gap_ci_lo_m",
                  "gap_ci_hi_m", "abs_gap_mean_m", "overshoot_fraction")


def group_filter(site: str, vision: str) -> Callable[[TrialRow], bool]:
    def where(r: TrialRow) -> bool:
        return (site == "Both" or r.site == site) and (vision == "all" or r.vision_class == vision)
    return where


@dataclass
class ReportRow:
    site: str
    vision_class: str
    policy: str
    n: int
    successes: int
    success_rate: float
    rate_lo: float
    rate_hi: float
    gap_n: int = 0
    gap_mean_m: Optional[float] = None
    gap_sd_m: Optional[float] = None
    gap_ci_lo_m: Optional[float] = None
    gap_ci_hi_m: Optional[float] = None
    abs_gap_mean_m: Optional[float] = None
    overshoot_fraction: Optional[float] = None


@dataclass
class Report:
    rows: list[ReportRow]
    joint: dict[str, JointTable2x2]
    warnings: list[str]
    n_trials: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([_cell(getattr(r, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "n_trials": self.n_trials,
            "groups": [{k: _json_num(v) for k, v in asdict(r).items()} for r in self.rows],
            "joint": {k: asdict(v) for k, v in self.joint.items()},
            "warnings": list(self.warnings),
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_text(self) -> str:
        out = [f"Paired trials: {self.n_trials}", ""]
        hdr = (f"{'site':<7}{'vision':<10}{'app':<14}{'n':>5}{'succ':>6}{'rate%':>7}"
               f"{'95% CI':>15}{'gap m [SD]':>17}{'95% CI (m)':>17}{'|gap| m':>9}{'past%':>7}")
        out += [hdr, "-" * len(hdr)]
        for r in self.rows:
            ci = f"{100 * r.rate_lo:.0f}-{100 * r.rate_hi:.0f}"
            if r.gap_mean_m is None:
                gap, gci, agap, past = "-", "-", "-", "-"
            else:
                sd = "nan" if r.gap_sd_m is None else f"{r.gap_sd_m:.2f}"
                gap = f"{r.gap_mean_m:.2f} [{sd}]"
                gci = f"{r.gap_ci_lo_m:.2f}-{r.gap_ci_hi_m:.2f}"
                agap = f"{r.abs_gap_mean_m:.2f}"
                past = f"{100 * r.overshoot_fraction:.0f}"
            out.append(f"{r.site:<7}{r.vision_class:<10}{r.policy:<14}{r.n:>5}{r.successes:>6}"
                       f"{100 * r.success_rate:>7.1f}{ci:>15}{gap:>17}{gci:>17}{agap:>9}{past:>7}")
        for site, jt in self.joint.items():
            out += ["", f"Joint outcomes ({site}, n={jt.total})",
                    f"{'':<22}{'GPS success':>12}{'GPS failure':>12}",
                    f"{'Vision success':<22}{jt.both_success:>12}{jt.a_only:>12}",
                    f"{'Vision failure':<22}{jt.g_only:>12}{jt.both_fail:>12}"]
        for w in self.warnings:
            out.append(f"warning: {w}")
        return "\n".join(out) + "\n"


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else f"{v:.6f}"
    return str(v)


def report(trials: Sequence[TrialRow], n_resamples: int = DEFAULT_RESAMPLES,
           seed: int = 0) -> Report:
    """Success/gap statistics per site x vision class x app, plus joint tables per site."""
    trials = list(trials)
    if not trials:
        raise EmptyGroupError("empty trial table")
    rows, warnings, joint = [], [], {}
    for site in SITE_GROUPS:
        for vision in VISION_GROUPS:
            where = group_filter(site, vision)
            for pol in POLICIES:
                outs = _outcomes(trials, pol, where)
                if not outs:
                    warnings.append(f"no {pol.value} trials for site={site} vision={vision}; group omitted")
                    continue
                ci = success_rate_ci(trials, pol, where)
                row = ReportRow(site, vision, pol.value, ci.total, ci.successes, ci.p_hat, ci.lo, ci.hi)
                vals = gaps(trials, pol, where)
                if vals:
                    gs = gap_summary(trials, pol, where, n_resamples, seed)
                    row.gap_n = gs.n
                    row.gap_mean_m = gs.mean_m
                    row.gap_sd_m = None if math.isnan(gs.sd_m) else gs.sd_m
                    row.gap_ci_lo_m, row.gap_ci_hi_m = gs.ci_lo_m, gs.ci_hi_m
                    row.abs_gap_mean_m = math.fsum(abs(g) for g in vals) / len(vals)
                    row.overshoot_fraction = overshoot_fraction(trials, pol, where)
                else:
                    warnings.append(f"no successful {pol.value} trials for site={site} vision={vision}; "
                                    "gap statistics omitted")
                rows.append(row)
        sel = _select(trials, group_filter(site, "all"))
        if sel:
            try:
                joint[site] = joint_table(sel)
            except PairingError as exc:
                warnings.append(f"joint table for {site} omitted: {exc}")
    return Report(rows, joint, warnings, len(trials))
