"""Attach hourly station weather to trip endpoints.

Each endpoint is matched to the nearest station (great-circle distance),
then to the record at that station closest in time.  Records further than
``max_gap_minutes`` from the endpoint time leave the endpoint's weather
missing; the trip itself is kept.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Iterable, Sequence

from .choice_data import ChoiceObservation, RecordError

EARTH_RADIUS_MILES = 3958.8
DEFAULT_MAX_GAP_MINUTES = 180.0
WEATHER_VARIABLES = ("temperature", "precipitation", "humidity", "visibility", "wind_speed")
ENDPOINT_PREFIX = {"origin": "origin_", "destination": "dest_"}


def fused_covariate_names() -> list[str]:
    return [p + v for p in ENDPOINT_PREFIX.values() for v in WEATHER_VARIABLES]


def _check_coord(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0) or math.isnan(lat + lon):
        raise ValueError(f"coordinate out of range: ({lat}, {lon})")


def haversine_miles(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in miles between two (lat, lon) points in degrees."""
    _check_coord(*a)
    _check_coord(*b)
    # Differences are taken in degrees so that mirror-image pairs give
    # bitwise-equal distances and the station-id tie-break applies.
    dlat = math.radians(b[0] - a[0])
    dlon = math.radians(b[1] - a[1])
    h = (math.sin(dlat / 2) ** 2
         + math.cos(math.radians(a[0])) * math.cos(math.radians(b[0])) * math.sin(dlon / 2) ** 2)
    return 2 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class WeatherRecord:
    station_id: str
    lat: float
    lon: float
    timestamp: datetime
    temperature: float | None = None
    precipitation: float | None = None
    humidity: float | None = None
    visibility: float | None = None
    wind_speed: float | None = None

    def __post_init__(self):
        _check_coord(self.lat, self.lon)
        if self.humidity is not None and not 0 <= self.humidity <= 100:
            raise ValueError(f"humidity out of range: {self.humidity}")
        for name in ("visibility", "wind_speed", "precipitation"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative: {v}")

    def values(self) -> dict[str, float | None]:
        return {v: getattr(self, v) for v in WEATHER_VARIABLES}


@dataclass(frozen=True)
class WeatherAtEndpoint:
    endpoint: str
    matched_station: str
    time_gap: float | None
    values: dict
    missing: bool = False


class WeatherIndex:
    """Immutable per-station, time-sorted view over weather records."""

    def __init__(self, records: Iterable[WeatherRecord]):
        by_station: dict[str, list[WeatherRecord]] = {}
        for rec in records:
            by_station.setdefault(rec.station_id, []).append(rec)
        self._stations: list[tuple[str, float, float]] = []
        self._records: dict[str, tuple[WeatherRecord, ...]] = {}
        self._times: dict[str, tuple[datetime, ...]] = {}
        for sid in sorted(by_station):
            recs = sorted(by_station[sid], key=lambda r: r.timestamp)
            lat, lon = recs[0].lat, recs[0].lon
            if any(abs(r.lat - lat) > 1e-9 or abs(r.lon - lon) > 1e-9 for r in recs):
                raise ValueError(f"station {sid!r} has inconsistent coordinates")
            self._stations.append((sid, lat, lon))
            self._records[sid] = tuple(recs)
            self._times[sid] = tuple(r.timestamp for r in recs)

    def __len__(self) -> int:
        return len(self._stations)

    @property
    def station_ids(self) -> list[str]:
        return [s[0] for s in self._stations]

    def nearest_station(self, loc: tuple[float, float]) -> tuple[str, float]:
        if not self._stations:
            raise ValueError("weather index has no stations")
        # Stations are held sorted by id, so a strict '<' keeps the smaller id on ties.
        best_id, best_d = None, math.inf
        for sid, lat, lon in self._stations:
            d = haversine_miles(loc, (lat, lon))
            if d < best_d:
                best_id, best_d = sid, d
        return best_id, best_d

    def nearest_record(self, station_id: str, when: datetime) -> tuple[WeatherRecord, float]:
        """Closest record in time; an exact tie goes to the earlier record."""
        times = self._times[station_id]
        recs = self._records[station_id]
        i = bisect.bisect_left(times, when)
        candidates = [j for j in (i - 1, i) if 0 <= j < len(times)]
        best = min(candidates, key=lambda j: (abs((times[j] - when).total_seconds()), times[j]))
        return recs[best], abs((times[best] - when).total_seconds()) / 60.0


def match_weather(endpoint_time: datetime, endpoint_loc: tuple[float, float],
                  stations: WeatherIndex, max_gap_minutes: float = DEFAULT_MAX_GAP_MINUTES,
                  endpoint: str = "origin") -> WeatherAtEndpoint:
    if len(stations) == 0:
        raise ValueError("weather index has no stations")
    sid, _ = stations.nearest_station(endpoint_loc)
    record, gap = stations.nearest_record(sid, endpoint_time)
    if gap > max_gap_minutes:
        return WeatherAtEndpoint(endpoint, sid, gap, {v: None for v in WEATHER_VARIABLES}, missing=True)
    return WeatherAtEndpoint(endpoint, sid, gap, record.values())


def fuse(observations: Sequence[ChoiceObservation], weather_index: WeatherIndex,
         max_gap_minutes: float = DEFAULT_MAX_GAP_MINUTES) -> list[ChoiceObservation]:
    """Return copies of the observations with origin and destination weather covariates.

    Missing weather values are left out of the covariate map, so downstream
    estimation treats them as missing.
    """
    if len(weather_index) == 0:
        raise ValueError("weather index has no stations")
    new_names = fused_covariate_names()
    out = []
    for obs in observations:
        if obs.origin is None or obs.destination is None:
            raise ValueError(f"observation {obs.obs_id} has no endpoint coordinates/times")
        clash = [n for n in new_names if n in obs.covariates]
        if clash:
            raise ValueError(f"observation {obs.obs_id} already has covariate {clash[0]!r}")
        cov = dict(obs.covariates)
        for kind, ep in (("origin", obs.origin), ("destination", obs.destination)):
            m = match_weather(ep.time, (ep.lat, ep.lon), weather_index, max_gap_minutes, kind)
            for var, value in m.values.items():
                if value is not None:
                    cov[ENDPOINT_PREFIX[kind] + var] = float(value)
        out.append(replace(obs, covariates=cov))
    return out


def match_endpoints(observations: Sequence[ChoiceObservation], weather_index: WeatherIndex,
                    max_gap_minutes: float = DEFAULT_MAX_GAP_MINUTES) -> list[tuple[WeatherAtEndpoint, WeatherAtEndpoint]]:
    """Per-observation (origin, destination) match records, for audit output."""
    result = []
    for obs in observations:
        pair = tuple(
            match_weather(ep.time, (ep.lat, ep.lon), weather_index, max_gap_minutes, kind)
            for kind, ep in (("origin", obs.origin), ("destination", obs.destination))
        )
        result.append(pair)
    return result


WEATHER_COLUMNS = ("station_id", "lat", "lon", "timestamp", *WEATHER_VARIABLES)


def read_weather_csv(path) -> list[WeatherRecord]:
    """Read station-hourly records; blank value cells are missing."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in WEATHER_COLUMNS:
            if col not in header:
                raise RecordError(f"missing required column {col!r}", column=col)
        records = []
        for i, row in enumerate(reader, start=1):
            try:
                vals = {v: (float(row[v]) if row[v].strip() else None) for v in WEATHER_VARIABLES}
                records.append(WeatherRecord(
                    station_id=row["station_id"].strip(),
                    lat=float(row["lat"]), lon=float(row["lon"]),
                    timestamp=datetime.fromisoformat(row["timestamp"].strip()),
                    **vals,
                ))
            except (ValueError, TypeError, AttributeError) as exc:
                raise RecordError(str(exc), row=i) from exc
        return records


def write_weather_csv(path, records: Sequence[WeatherRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_COLUMNS)
        for r in records:
            w.writerow([r.station_id, repr(r.lat), repr(r.lon), r.timestamp.isoformat(),
                        *("" if getattr(r, v) is None else repr(getattr(r, v)) for v in WEATHER_VARIABLES)])

