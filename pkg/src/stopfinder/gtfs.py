"""GTFS ``stops.txt`` parsing and mapped-vs-surveyed stop position audit."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping, Sequence

from .geo import GeoPoint, LocalVec, haversine_distance, signed_gap, to_local_frame

DEFAULT_BUS_LENGTH_M = 12.0

_ORIGIN = LocalVec(0.0, 0.0)

STOP_COLUMNS = ("stop_id", "stop_name", "stop_lat", "stop_lon")
TRUTH_COLUMNS = ("stop_id", "lat", "lon", "heading_deg")


class GtfsError(ValueError):
    """Base class for feed and ground-truth problems."""


class SchemaError(GtfsError):
    def __init__(self, column: str, source: str = "stops.txt"):
        super().__init__(f"{source}: missing required column {column!r}")
        self.column = column


class RowError(GtfsError):
    def __init__(self, line: int, message: str, source: str = "stops.txt"):
        super().__init__(f"{source}, line {line}: {message}")
        self.line = line


class UniquenessError(GtfsError):
    def __init__(self, stop_id: str, line: int, first_line: int):
        super().__init__(
            f"duplicate stop_id {stop_id!r} on line {line} (first seen on line {first_line})"
        )
        self.stop_id = stop_id
        self.line = line


class EmptyJoinError(GtfsError):
    pass


@dataclass(frozen=True)
class StopRecord:
    stop_id: str
    stop_name: str
    mapped: GeoPoint

    def __post_init__(self):
        if not self.stop_id:
            raise ValueError("stop_id must be non-empty")


class StopRegistry(Mapping[str, StopRecord]):
    """Immutable stop_id -> StopRecord mapping preserving feed order."""

    def __init__(self, records: Iterable[StopRecord] = ()):
        self._records: dict[str, StopRecord] = {}
        for rec in records:
            if rec.stop_id in self._records:
                raise UniquenessError(rec.stop_id, -1, -1)
            self._records[rec.stop_id] = rec

    def __getitem__(self, key: str) -> StopRecord:
        return self._records[key]

    def __iter__(self):
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __eq__(self, other):
        if isinstance(other, StopRegistry):
            return self._records == other._records
        return NotImplemented

    def __repr__(self) -> str:
        return f"StopRegistry({len(self)} stops)"


@dataclass(frozen=True)
class GroundTruthRecord:
    stop_id: str
    surveyed: GeoPoint
    travel_heading_deg: float

    def __post_init__(self):
        if not (0.0 <= self.travel_heading_deg < 360.0):
            raise ValueError(f"heading must lie in [0, 360): {self.travel_heading_deg!r}")


@dataclass
class AuditReport:
    per_stop_error_m: dict[str, float]
    mean_m: float
    sd_m: float
    max_m: float
    fraction_exceeding: dict[float, float]
    unmatched_ids: list[str]
    # mapped minus surveyed, projected on the travel heading; positive = mapped past the sign
    per_stop_along_track_m: dict[str, float] = field(default_factory=dict)
    unmatched_registry_ids: list[str] = field(default_factory=list)
    unmatched_truth_ids: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "n_matched": len(self.per_stop_error_m),
            "mean_m": self.mean_m,
            "sd_m": self.sd_m,
            "max_m": self.max_m,
            "fraction_exceeding": {f"{t:g}": f for t, f in self.fraction_exceeding.items()},
            "unmatched_count": len(self.unmatched_ids),
            "unmatched_registry_count": len(self.unmatched_registry_ids),
            "unmatched_truth_count": len(self.unmatched_truth_ids),
            "unmatched_ids": list(self.unmatched_ids),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stop_id", "error_m"])
        for sid, err in self.per_stop_error_m.items():
            w.writerow([sid, f"{err:.4f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _text_stream(stream: BinaryIO | io.TextIOBase | str | bytes) -> io.TextIOBase:
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.TextIOBase):
        return stream
    # utf-8-sig: many agencies publish feeds with a BOM
    return io.TextIOWrapper(stream, encoding="utf-8-sig", newline="")


def _locate(header: Sequence[str], required: Sequence[str], source: str) -> dict[str, int]:
    names = [h.strip().lstrip("\ufeff") for h in header]
    cols = {}
    for col in required:
        if col not in names:
            raise SchemaError(col, source)
        cols[col] = names.index(col)
    return cols


def _coord(raw: str, name: str, lo: float, hi: float, line: int, source: str) -> float:
    raw = raw.strip()
    if not raw:
        raise RowError(line, f"blank {name}", source)
    try:
        val = float(raw)
    except ValueError:
        raise RowError(line, f"unparseable {name} {raw!r}", source) from None
    if not math.isfinite(val) or not lo <= val <= hi:
        raise RowError(line, f"{name} {raw!r} outside [{lo:g}, {hi:g}]", source)
    return val


def _rows(reader, source: str):
    """Yield (physical line number, row) for non-blank data rows."""
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        yield reader.line_num, row


def parse_stops(stops_csv) -> StopRegistry:
    """Parse a GTFS ``stops.txt`` stream into a :class:`StopRegistry`.

    Columns are located by header name; extra GTFS columns are ignored.
    """
    source = "stops.txt"
    reader = csv.reader(_text_stream(stops_csv))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(STOP_COLUMNS[0], source) from None
    cols = _locate(header, STOP_COLUMNS, source)
    width = max(cols.values()) + 1

    records: dict[str, StopRecord] = {}
    first_line: dict[str, int] = {}
    for line, row in _rows(reader, source):
        if len(row) < width:
            raise RowError(line, f"expected at least {width} fields, got {len(row)}", source)
        sid = row[cols["stop_id"]].strip()
        if not sid:
            raise RowError(line, "empty stop_id", source)
        lat = _coord(row[cols["stop_lat"]], "stop_lat", -90.0, 90.0, line, source)
        lon = _coord(row[cols["stop_lon"]], "stop_lon", -180.0, 180.0, line, source)
        if sid in records:
            raise UniquenessError(sid, line, first_line[sid])
        records[sid] = StopRecord(sid, row[cols["stop_name"]], GeoPoint(lat, lon))
        first_line[sid] = line
    return StopRegistry(records.values())


def parse_ground_truth(truth_csv) -> list[GroundTruthRecord]:
    """Parse the surveyed-position CSV (``stop_id,lat,lon,heading_deg``)."""
    source = "ground truth"
    reader = csv.reader(_text_stream(truth_csv))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(TRUTH_COLUMNS[0], source) from None
    cols = _locate(header, TRUTH_COLUMNS, source)
    width = max(cols.values()) + 1

    out = []
    seen: dict[str, int] = {}
    for line, row in _rows(reader, source):
        if len(row) < width:
            raise RowError(line, f"expected at least {width} fields, got {len(row)}", source)
        sid = row[cols["stop_id"]].strip()
        if not sid:
            raise RowError(line, "empty stop_id", source)
        if sid in seen:
            raise UniquenessError(sid, line, seen[sid])
        seen[sid] = line
        lat = _coord(row[cols["lat"]], "lat", -90.0, 90.0, line, source)
        lon = _coord(row[cols["lon"]], "lon", -180.0, 180.0, line, source)
        heading = _coord(row[cols["heading_deg"]], "heading_deg", 0.0, 360.0, line, source)
        if heading == 360.0:
            heading = 0.0
        out.append(GroundTruthRecord(sid, GeoPoint(lat, lon), heading))
    return out


def bus_length_thresholds(bus_length_m: float = DEFAULT_BUS_LENGTH_M,
                          multiples: Sequence[float] = (2.0,)) -> list[float]:
    return [bus_length_m * k for k in multiples]


def audit_mapping(registry: Mapping[str, StopRecord],
                  truth: Sequence[GroundTruthRecord],
                  thresholds_m: Sequence[float] | None = None) -> AuditReport:
    """Compare mapped stop coordinates against surveyed positions.

    Exceedance fractions are over matched stops only (strictly greater than
    each threshold). Ids present on one side only are listed in
    ``unmatched_ids``.
    """
    if thresholds_m is None:
        thresholds_m = bus_length_thresholds()
    thresholds = [float(t) for t in thresholds_m]
    if not thresholds or any(not (t > 0 and math.isfinite(t)) for t in thresholds):
        raise ValueError(f"thresholds must be positive: {list(thresholds_m)!r}")

    truth_ids = {t.stop_id for t in truth}
    errors: dict[str, float] = {}
    along: dict[str, float] = {}
    unmatched_truth = []
    for t in truth:
        rec = registry.get(t.stop_id)
        if rec is None:
            unmatched_truth.append(t.stop_id)
            continue
        errors[t.stop_id] = haversine_distance(rec.mapped, t.surveyed)
        if errors[t.stop_id] <= 4_000.0:
            offset = to_local_frame(t.surveyed, rec.mapped)
            along[t.stop_id] = signed_gap(offset, _ORIGIN, t.travel_heading_deg)
    unmatched_registry = [sid for sid in registry if sid not in truth_ids]
    if not errors:
        raise EmptyJoinError("no stop_id is shared by the feed and the ground truth")

    vals = list(errors.values())
    n = len(vals)
    mean = math.fsum(vals) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
    fractions = {t: sum(1 for v in vals if v > t) / n for t in thresholds}
    return AuditReport(
        per_stop_error_m=errors,
        mean_m=mean,
        sd_m=sd,
        max_m=max(vals),
        fraction_exceeding=fractions,
        unmatched_ids=unmatched_truth + unmatched_registry,
        per_stop_along_track_m=along,
        unmatched_registry_ids=unmatched_registry,
        unmatched_truth_ids=unmatched_truth,
    )

