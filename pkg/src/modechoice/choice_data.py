"""Trip-table ingestion, sample filtering and recoding into choice observations.

Raw trips arrive as CSV rows (one per trip) carrying NHTS-style person and
trip attributes.  :func:`filter_tld_adults` selects adults reporting a
travel-limiting disability, :func:`collapse_mode` maps detailed mode codes to
the four modelled alternatives, and :func:`recode` expands each record into
the binary indicators and log transforms used as utility covariates.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable, Mapping, Sequence


class Alternative(enum.IntEnum):
    PERSONAL_VEHICLE = 0
    PUBLIC_TRANSPORT = 1
    WALK = 2
    OTHER_MODE = 3

    @property
    def label(self) -> str:
        return _ALT_LABELS[self]

    @classmethod
    def parse(cls, value) -> "Alternative":
        """Accept an Alternative, its index, or a label such as ``"PublicTransport"``."""
        if isinstance(value, Alternative):
            return value
        if isinstance(value, (int,)) and not isinstance(value, bool):
            return cls(value)
        key = str(value).strip().replace("_", "").replace(" ", "").lower()
        if key.isdigit():
            return cls(int(key))
        try:
            return _ALT_BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown alternative {value!r}") from None


_ALT_LABELS = {
    Alternative.PERSONAL_VEHICLE: "PersonalVehicle",
    Alternative.PUBLIC_TRANSPORT: "PublicTransport",
    Alternative.WALK: "Walk",
    Alternative.OTHER_MODE: "OtherMode",
}
_ALT_BY_KEY = {lab.lower(): alt for alt, lab in _ALT_LABELS.items()}
_ALT_BY_KEY.update({a.name.replace("_", "").lower(): a for a in Alternative})

ALTERNATIVES: tuple[Alternative, ...] = tuple(Alternative)
N_ALTERNATIVES = len(ALTERNATIVES)


class UnknownModeError(ValueError):
    """Raised for a travel-mode code outside the documented code list."""

    def __init__(self, code):
        super().__init__(f"unrecognized travel mode code {code!r}")
        self.code = code


class RecordError(ValueError):
    """A malformed input row; ``row`` is the 1-based data row number (header excluded)."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = f"row {row}: " if row is not None else ""
        super().__init__(where + message)
        self.row = row
        self.column = column


# NHTS 2017 TRPTRANS codes.  Commuter rail shares code 15 with Amtrak.
MODE_CODES: dict[int, tuple[str, Alternative]] = {
    1: ("walk", Alternative.WALK),
    2: ("bicycle", Alternative.OTHER_MODE),
    3: ("car", Alternative.PERSONAL_VEHICLE),
    4: ("suv", Alternative.PERSONAL_VEHICLE),
    5: ("van", Alternative.PERSONAL_VEHICLE),
    6: ("pickup truck", Alternative.PERSONAL_VEHICLE),
    7: ("golf cart / segway", Alternative.OTHER_MODE),
    8: ("motorcycle / moped", Alternative.PERSONAL_VEHICLE),
    9: ("recreational vehicle", Alternative.OTHER_MODE),
    10: ("school bus", Alternative.OTHER_MODE),
    11: ("public or commuter bus", Alternative.PUBLIC_TRANSPORT),
    12: ("paratransit / dial-a-ride", Alternative.OTHER_MODE),
    13: ("private / charter / tour / shuttle bus", Alternative.OTHER_MODE),
    14: ("city-to-city bus", Alternative.PUBLIC_TRANSPORT),
    15: ("amtrak / commuter rail", Alternative.PUBLIC_TRANSPORT),
    16: ("subway / elevated / light rail / streetcar", Alternative.PUBLIC_TRANSPORT),
    17: ("taxi / limo / ride-hailing", Alternative.OTHER_MODE),
    18: ("rental car", Alternative.OTHER_MODE),
    19: ("airplane", Alternative.OTHER_MODE),
    20: ("boat / ferry / water taxi", Alternative.OTHER_MODE),
    97: ("something else", Alternative.OTHER_MODE),
}

_MODE_NAMES: dict[str, int] = {
    "walk": 1, "bicycle": 2, "car": 3, "suv": 4, "van": 5, "pickup": 6,
    "pickup_truck": 6, "golf_cart": 7, "motorcycle": 8, "rv": 9,
    "recreational_vehicle": 9, "school_bus": 10, "public_bus": 11, "bus": 11,
    "paratransit": 12, "private_bus": 13, "city_to_city_bus": 14,
    "amtrak": 15, "commuter_rail": 15, "subway": 16, "taxi": 17,
    "rental_car": 18, "airplane": 19, "boat": 20, "something_else": 97,
}


def collapse_mode(raw_mode) -> Alternative:
    """Map an NHTS mode code (int, numeric string or short name) to an Alternative."""
    code = raw_mode
    if isinstance(raw_mode, str):
        key = raw_mode.strip().lower().replace("-", "_").replace(" ", "_")
        if key.lstrip("+-").isdigit():
            code = int(key)
        elif key in _MODE_NAMES:
            code = _MODE_NAMES[key]
        else:
            raise UnknownModeError(raw_mode)
    if isinstance(code, bool) or not isinstance(code, int) or code not in MODE_CODES:
        raise UnknownModeError(raw_mode)
    return MODE_CODES[code][1]


MEDICAL_DEVICES = ("cane", "walker", "manual_wheelchair", "crutch", "dog_assistance")

INCOME_BANDS = {
    "lt50k": "income_lt50k",
    "50k_75k": "income_50k_75k",
    "75k_100k": "income_75k_100k",
    "100k_200k": "income_100k_200k",
    "200k_plus": "income_200k_plus",
}

# Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov fall.
SEASON_BY_MONTH = {
    12: "winter", 1: "winter", 2: "winter",
    3: "spring", 4: "spring", 5: "spring",
    6: "summer", 7: "summer", 8: "summer",
    9: "fall", 10: "fall", 11: "fall",
}

LOOP_TOLERANCE_DEG = 1e-6

# Indicator families: exactly one member is 1 whenever the source field is present.
INDICATOR_FAMILIES: dict[str, tuple[str, ...]] = {
    "age": ("age_18_24", "age_25_44", "age_45_64", "age_over_65"),
    "gender": ("male", "female"),
    "race": ("race_white", "race_nonwhite"),
    "education": ("edu_less_than_bachelor", "edu_bachelor_plus"),
    "income": tuple(INCOME_BANDS.values()),
    "origin_area": ("origin_rural", "origin_urban"),
    "dest_area": ("dest_rural", "dest_urban"),
    "day_of_week": ("weekday", "weekend"),
    "trip_purpose": ("purpose_work", "purpose_nonwork"),
    "trip_category": ("home_based", "non_home_based"),
    "time_of_day": ("tod_0700_0959", "tod_1000_1559", "tod_1600_1859", "tod_1900_0659"),
    "season": ("season_winter", "season_spring", "season_summer", "season_fall"),
}


@dataclass(frozen=True)
class Endpoint:
    lat: float
    lon: float
    time: datetime


@dataclass(frozen=True)
class RawTripRecord:
    person_id: str
    household_id: str
    trip_id: str
    age: int | None
    disability_flag: bool | None
    raw_mode: str
    trip_length: float | None
    trip_duration: float | None
    origin_lat: float
    origin_lon: float
    dest_lat: float
    dest_lon: float
    start_time: datetime
    end_time: datetime
    gender: str | None = None
    worker: bool | None = None
    driver: bool | None = None
    race: str | None = None
    hispanic: bool | None = None
    education: str | None = None
    income_band: str | None = None
    medical_devices: frozenset[str] = frozenset()
    health_poor: bool | None = None
    born_in_us: bool | None = None
    works_from_home: bool | None = None
    origin_urban: bool | None = None
    dest_urban: bool | None = None
    origin_nyc: bool | None = None
    dest_nyc: bool | None = None
    trip_purpose: str | None = None
    home_based: bool | None = None
    travel_month: int | None = None
    weekday: bool | None = None
    available: tuple[bool, ...] | None = None
    extra: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("origin_lat", "dest_lat"):
            if not -90.0 <= getattr(self, name) <= 90.0:
                raise ValueError(f"{name} out of range: {getattr(self, name)}")
        for name in ("origin_lon", "dest_lon"):
            if not -180.0 <= getattr(self, name) <= 180.0:
                raise ValueError(f"{name} out of range: {getattr(self, name)}")
        if self.start_time > self.end_time:
            raise ValueError("start_time is after end_time")


@dataclass(frozen=True)
class ChoiceObservation:
    """One trip ready for estimation.

    Covariates that could not be constructed are absent from ``covariates``;
    ``incomplete`` marks rows that are unusable regardless of the model.
    """

    obs_id: str
    chosen: Alternative
    available: tuple[bool, ...] = (True,) * N_ALTERNATIVES
    covariates: Mapping[str, float] = field(default_factory=dict)
    weight: float = 1.0
    person_id: str | None = None
    incomplete: bool = False
    origin: Endpoint | None = None
    destination: Endpoint | None = None

    def __post_init__(self):
        object.__setattr__(self, "chosen", Alternative.parse(self.chosen))
        if len(self.available) != N_ALTERNATIVES:
            raise ValueError(f"availability mask must have {N_ALTERNATIVES} entries")
        if not self.available[self.chosen]:
            raise ValueError(f"observation {self.obs_id}: chosen alternative is unavailable")
        if sum(bool(a) for a in self.available) < 2:
            raise ValueError(f"observation {self.obs_id}: fewer than two alternatives available")
        if not self.weight > 0:
            raise ValueError(f"observation {self.obs_id}: weight must be positive")

    def is_complete_for(self, covariates: Iterable[str]) -> bool:
        if self.incomplete:
            return False
        for name in covariates:
            value = self.covariates.get(name)
            if value is None or math.isnan(value):
                return False
        return True


def filter_tld_adults(records: Sequence[RawTripRecord]) -> list[RawTripRecord]:
    """Keep trips by adults (18+) who report a travel-limiting disability."""
    return [r for r in records if r.disability_flag and r.age is not None and r.age >= 18]


def _age_bin(age: int) -> str:
    if age < 25:
        return "age_18_24"
    if age < 45:
        return "age_25_44"
    if age < 65:
        return "age_45_64"
    return "age_over_65"


def _time_of_day_bin(t: datetime) -> str:
    h = t.hour
    if 7 <= h < 10:
        return "tod_0700_0959"
    if 10 <= h < 16:
        return "tod_1000_1559"
    if 16 <= h < 19:
        return "tod_1600_1859"
    return "tod_1900_0659"


def _set_family(cov: dict, family: str, member: str | None) -> None:
    if member is None:
        return
    for name in INDICATOR_FAMILIES[family]:
        cov[name] = 1.0 if name == member else 0.0


def _flag(cov: dict, name: str, value: bool | None, complement: str | None = None) -> None:
    if value is None:
        return
    cov[name] = 1.0 if value else 0.0
    if complement:
        cov[complement] = 0.0 if value else 1.0


def recode(record: RawTripRecord) -> ChoiceObservation:
    """Expand a raw trip into a :class:`ChoiceObservation`.

    Fields that are missing on the record leave the corresponding covariates
    absent.  A nonpositive trip length or duration marks the observation
    incomplete.
    """
    cov: dict[str, float] = {}

    if record.age is not None:
        _set_family(cov, "age", _age_bin(record.age))
    if record.gender is not None:
        g = record.gender.strip().lower()
        _set_family(cov, "gender", "male" if g in ("male", "m", "1") else "female")
    if record.race is not None:
        white = record.race.strip().lower() in ("white", "1")
        _set_family(cov, "race", "race_white" if white else "race_nonwhite")
    if record.education is not None:
        ed = record.education.strip().lower()
        _set_family(cov, "education",
                    "edu_bachelor_plus" if ed in ("bachelor_or_higher", "bachelor_plus", "graduate")
                    else "edu_less_than_bachelor")
    if record.income_band is not None:
        band = record.income_band.strip().lower()
        if band not in INCOME_BANDS:
            raise ValueError(f"unknown income band {record.income_band!r}")
        _set_family(cov, "income", INCOME_BANDS[band])
    if record.origin_urban is not None:
        _set_family(cov, "origin_area", "origin_urban" if record.origin_urban else "origin_rural")
    if record.dest_urban is not None:
        _set_family(cov, "dest_area", "dest_urban" if record.dest_urban else "dest_rural")
    if record.weekday is not None:
        _set_family(cov, "day_of_week", "weekday" if record.weekday else "weekend")
    if record.trip_purpose is not None:
        work = record.trip_purpose.strip().lower() in ("work", "1")
        _set_family(cov, "trip_purpose", "purpose_work" if work else "purpose_nonwork")
    if record.home_based is not None:
        _set_family(cov, "trip_category", "home_based" if record.home_based else "non_home_based")
    _set_family(cov, "time_of_day", _time_of_day_bin(record.start_time))
    if record.travel_month is not None:
        if record.travel_month not in SEASON_BY_MONTH:
            raise ValueError(f"travel_month out of range: {record.travel_month}")
        _set_family(cov, "season", "season_" + SEASON_BY_MONTH[record.travel_month])

    _flag(cov, "worker", record.worker)
    _flag(cov, "driver", record.driver)
    _flag(cov, "hispanic", record.hispanic)
    _flag(cov, "poor_health", record.health_poor)
    _flag(cov, "born_in_us", record.born_in_us)
    _flag(cov, "works_from_home", record.works_from_home)
    _flag(cov, "origin_nyc", record.origin_nyc)
    _flag(cov, "dest_nyc", record.dest_nyc)
    for device in MEDICAL_DEVICES:
        cov["device_" + device] = 1.0 if device in record.medical_devices else 0.0

    loop = (abs(record.origin_lat - record.dest_lat) <= LOOP_TOLERANCE_DEG
            and abs(record.origin_lon - record.dest_lon) <= LOOP_TOLERANCE_DEG)
    cov["loop_trip"] = 1.0 if loop else 0.0

    incomplete = False
    for name, value in (("log_trip_length", record.trip_length),
                        ("log_trip_duration", record.trip_duration)):
        if value is None:
            continue
        if value > 0:
            cov[name] = math.log(value)
        else:
            incomplete = True

    for name, text in record.extra.items():
        try:
            cov[name] = float(text)
        except (TypeError, ValueError):
            pass

    return ChoiceObservation(
        obs_id=record.trip_id,
        person_id=record.person_id,
        chosen=collapse_mode(record.raw_mode),
        available=record.available or (True,) * N_ALTERNATIVES,
        covariates=cov,
        incomplete=incomplete,
        origin=Endpoint(record.origin_lat, record.origin_lon, record.start_time),
        destination=Endpoint(record.dest_lat, record.dest_lon, record.end_time),
    )


# --------------------------------------------------------------------------
# CSV input/output
# --------------------------------------------------------------------------

REQUIRED_TRIP_COLUMNS = (
    "person_id", "household_id", "trip_id", "age", "disability_flag", "raw_mode",
    "trip_length", "trip_duration", "origin_lat", "origin_lon", "dest_lat",
    "dest_lon", "start_time", "end_time",
)
OPTIONAL_TRIP_COLUMNS = (
    "gender", "worker", "driver", "race", "hispanic", "education", "income_band",
    "medical_devices", "health_poor", "born_in_us", "works_from_home",
    "origin_urban", "dest_urban", "origin_nyc", "dest_nyc", "trip_purpose",
    "home_based", "travel_month", "weekday",
)
AVAILABILITY_COLUMNS = tuple(f"avail_{a.name.lower()}" for a in ALTERNATIVES)

_BOOL_FIELDS = {
    "disability_flag", "worker", "driver", "hispanic", "health_poor", "born_in_us",
    "works_from_home", "origin_urban", "dest_urban", "origin_nyc", "dest_nyc",
    "home_based", "weekday",
}
_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


def parse_bool(text: str) -> bool | None:
    t = text.strip().lower()
    if t == "":
        return None
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float | None:
    t = text.strip()
    return float(t) if t else None


def _parse_int(text: str) -> int | None:
    t = text.strip()
    return int(float(t)) if t else None


def _parse_time(text: str) -> datetime:
    return datetime.fromisoformat(text.strip())


def _parse_trip_row(row: dict[str, str], rownum: int, extra_cols: Sequence[str]) -> RawTripRecord:
    kw = {}
    column = None
    try:
        for column in REQUIRED_TRIP_COLUMNS:
            text = row[column] if row[column] is not None else ""
            if column in ("person_id", "household_id", "trip_id", "raw_mode"):
                if not text.strip():
                    raise ValueError("empty value")
                kw[column] = text.strip()
            elif column == "age":
                kw[column] = _parse_int(text)
            elif column == "disability_flag":
                kw[column] = parse_bool(text)
            elif column in ("start_time", "end_time"):
                kw[column] = _parse_time(text)
            elif column in ("trip_length", "trip_duration"):
                kw[column] = _parse_float(text)
            else:
                value = _parse_float(text)
                if value is None:
                    raise ValueError("empty coordinate")
                kw[column] = value
        for column in OPTIONAL_TRIP_COLUMNS:
            text = row.get(column)
            if text is None:
                continue
            if column in _BOOL_FIELDS:
                kw[column] = parse_bool(text)
            elif column == "travel_month":
                kw[column] = _parse_int(text)
            elif column == "medical_devices":
                kw[column] = frozenset(d.strip().lower() for d in text.split(";") if d.strip())
            else:
                kw[column] = text.strip() or None
        column = None
        if all(c in row for c in AVAILABILITY_COLUMNS):
            flags = []
            for column in AVAILABILITY_COLUMNS:
                b = parse_bool(row[column])
                flags.append(True if b is None else b)
            kw["available"] = tuple(flags)
        column = None
        kw["extra"] = {c: row[c] for c in extra_cols if row.get(c) not in (None, "")}
        return RawTripRecord(**kw)
    except (ValueError, TypeError) as exc:
        msg = f"column {column!r}: {exc}" if column else str(exc)
        raise RecordError(msg, row=rownum, column=column) from exc


def read_trips_csv(path, passthrough: bool = True) -> list[RawTripRecord]:
    """Read a raw trip table.

    Unknown columns are carried on ``RawTripRecord.extra`` when ``passthrough``
    is set and become numeric covariates on recoding; otherwise they are
    ignored.  Raises :class:`RecordError` naming the first bad row or a
    missing required column.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            return []
        header = [h.strip() for h in header]
        reader.fieldnames = header
        missing = [c for c in REQUIRED_TRIP_COLUMNS if c not in header]
        if missing:
            raise RecordError(f"missing required column {missing[0]!r}", column=missing[0])
        known = set(REQUIRED_TRIP_COLUMNS) | set(OPTIONAL_TRIP_COLUMNS) | set(AVAILABILITY_COLUMNS)
        extra_cols = [h for h in header if h not in known] if passthrough else []
        return [_parse_trip_row(row, i, extra_cols) for i, row in enumerate(reader, start=1)]


OBS_FIXED_COLUMNS = (
    "obs_id", "person_id", "chosen", *AVAILABILITY_COLUMNS, "weight", "incomplete",
    "origin_lat", "origin_lon", "start_time", "dest_lat", "dest_lon", "end_time",
)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_observations_csv(path, observations: Sequence[ChoiceObservation],
                           covariate_names: Sequence[str] | None = None) -> None:
    """Write observations; covariate columns are sorted by name unless given."""
    if covariate_names is None:
        names: set[str] = set()
        for obs in observations:
            names.update(obs.covariates)
        covariate_names = sorted(names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*OBS_FIXED_COLUMNS, *covariate_names])
        for obs in observations:
            o, d = obs.origin, obs.destination
            row = [
                obs.obs_id, obs.person_id or "", obs.chosen.label,
                *("1" if a else "0" for a in obs.available),
                _fmt(obs.weight), "1" if obs.incomplete else "0",
                _fmt(o.lat) if o else "", _fmt(o.lon) if o else "", o.time.isoformat() if o else "",
                _fmt(d.lat) if d else "", _fmt(d.lon) if d else "", d.time.isoformat() if d else "",
            ]
            for name in covariate_names:
                v = obs.covariates.get(name)
                row.append("" if v is None or math.isnan(v) else _fmt(v))
            writer.writerow(row)


def read_observations_csv(path) -> list[ChoiceObservation]:
    """Read observations written by :func:`write_observations_csv`.

    Only ``obs_id`` and ``chosen`` are required; blank covariate cells are
    treated as missing.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            return []
        for col in ("obs_id", "chosen"):
            if col not in header:
                raise RecordError(f"missing required column {col!r}", column=col)
        cov_cols = [h for h in header if h not in OBS_FIXED_COLUMNS]
        out = []
        for i, row in enumerate(reader, start=1):
            try:
                out.append(_parse_obs_row(row, cov_cols))
            except (ValueError, TypeError, KeyError) as exc:
                raise RecordError(str(exc), row=i) from exc
        return out


def _endpoint(row, lat, lon, time) -> Endpoint | None:
    if not (row.get(lat) or "").strip() or not (row.get(time) or "").strip():
        return None
    return Endpoint(float(row[lat]), float(row[lon]), _parse_time(row[time]))


def _parse_obs_row(row: dict[str, str], cov_cols: Sequence[str]) -> ChoiceObservation:
    avail = tuple(
        True if parse_bool(row.get(c) or "") is None else parse_bool(row[c])
        for c in AVAILABILITY_COLUMNS
    )
    cov = {}
    for c in cov_cols:
        v = _parse_float(row.get(c) or "")
        if v is not None:
            cov[c] = v
    weight = _parse_float(row.get("weight") or "")
    return ChoiceObservation(
        obs_id=row["obs_id"],
        person_id=(row.get("person_id") or "").strip() or None,
        chosen=Alternative.parse(row["chosen"]),
        available=avail,
        covariates=cov,
        weight=1.0 if weight is None else weight,
        incomplete=bool(parse_bool(row.get("incomplete") or "0")),
        origin=_endpoint(row, "origin_lat", "origin_lon", "start_time"),
        destination=_endpoint(row, "dest_lat", "dest_lon", "end_time"),
    )


def category_shares(observations: Sequence[ChoiceObservation], family: str) -> dict[str, tuple[int, float]]:
    """Count observations per indicator of a family, with shares of those observed."""
    members = INDICATOR_FAMILIES[family]
    counts = {m: 0 for m in members}
    for obs in observations:
        for m in members:
            if obs.covariates.get(m) == 1.0:
                counts[m] += 1
    total = sum(counts.values())
    return {m: (n, n / total if total else 0.0) for m, n in counts.items()}


def with_covariates(obs: ChoiceObservation, extra: Mapping[str, float]) -> ChoiceObservation:
    merged = dict(obs.covariates)
    merged.update(extra)
    return replace(obs, covariates=merged)
