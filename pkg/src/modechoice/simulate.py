"""Seeded synthetic data with known generating parameters.

Choices are sampled from the random-utility model itself: person-level
coefficients are drawn with pseudo-random normals (independent of the Halton
draws used for estimation) and i.i.d. Gumbel errors are added before taking
the utility-maximising alternative.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Mapping

import numpy as np

from .choice_data import (
    ALTERNATIVES, MODE_CODES, N_ALTERNATIVES, Alternative, ChoiceObservation, RawTripRecord,
    filter_tld_adults, recode,
)
from .likelihood import CONSTANT, ModelSpecification, Term
from .weather import WeatherIndex, WeatherRecord, fuse

PV, PT, WALK, OTHER = ALTERNATIVES


@dataclass(frozen=True)
class Fixture:
    """A specification with its true parameters and covariate generators."""

    spec: ModelSpecification
    truth: np.ndarray
    covariates: Mapping[str, tuple]


def draw_covariates(generators: Mapping[str, tuple], n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Sample covariate columns.

    Generators are ``("bernoulli", p)``, ``("normal", mean, sd)``,
    ``("uniform", lo, hi)`` or ``("onehot", (name, share), ...)`` where the
    one-hot group writes one indicator column per member.
    """
    cols: dict[str, np.ndarray] = {}
    for name, gen in generators.items():
        kind = gen[0]
        if kind == "bernoulli":
            cols[name] = (rng.random(n) < gen[1]).astype(float)
        elif kind == "normal":
            cols[name] = rng.normal(gen[1], gen[2], n)
        elif kind == "uniform":
            cols[name] = rng.uniform(gen[1], gen[2], n)
        elif kind == "onehot":
            members = gen[1:]
            shares = np.array([s for _, s in members], dtype=float)
            pick = rng.choice(len(members), size=n, p=shares / shares.sum())
            for i, (member, _) in enumerate(members):
                cols[member] = (pick == i).astype(float)
        else:
            raise ValueError(f"unknown generator {kind!r} for {name!r}")
    return cols


def sample_choices(spec: ModelSpecification, params, columns: Mapping[str, np.ndarray],
                   person: np.ndarray, available: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw chosen alternatives by utility maximisation with Gumbel errors."""
    params = np.asarray(params, dtype=float)
    n = len(person)
    n_people = int(person.max()) + 1 if n else 0
    v = np.zeros((n, N_ALTERNATIVES))
    for t, (i, j) in zip(spec.terms, spec.term_slices()):
        x = np.ones(n) if t.covariate == CONSTANT else np.asarray(columns[t.covariate], dtype=float)
        coef = params[i]
        if j is not None:
            coef = params[i] + abs(params[j]) * rng.standard_normal(n_people)[person]
        v[:, t.alternative] += coef * x
    u = v + rng.gumbel(size=v.shape)
    u = np.where(available, u, -np.inf)
    return np.argmax(u, axis=1)


def simulate_observations(fixture: Fixture, n: int, seed: int, trips_per_person: int = 1,
                          available: np.ndarray | None = None) -> list[ChoiceObservation]:
    rng = np.random.default_rng(seed)
    cols = draw_covariates(fixture.covariates, n, rng)
    person = np.arange(n) // trips_per_person
    avail = np.ones((n, N_ALTERNATIVES), dtype=bool) if available is None else np.asarray(available, dtype=bool)
    chosen = sample_choices(fixture.spec, fixture.truth, cols, person, avail, rng)
    names = list(cols)
    width = len(str(n))
    return [
        ChoiceObservation(
            obs_id=f"t{i:0{width}d}", person_id=f"p{person[i]:0{width}d}",
            chosen=Alternative(int(chosen[i])), available=tuple(bool(a) for a in avail[i]),
            covariates={c: float(cols[c][i]) for c in names},
        )
        for i in range(n)
    ]


def _constants() -> list[Term]:
    return [Term(f"asc_{a.label}", CONSTANT, a) for a in (PV, PT, WALK)]


def mnl_fixture() -> Fixture:
    """Four alternatives, six fixed terms."""
    terms = _constants() + [
        Term("x1_PersonalVehicle", "x1", PV),
        Term("x2_PublicTransport", "x2", PT),
        Term("x3_Walk", "x3", WALK),
    ]
    truth = np.array([0.8, -0.5, 0.3, 0.6, 1.0, -0.7])
    gens = {"x1": ("normal", 0.0, 1.0), "x2": ("bernoulli", 0.4), "x3": ("normal", 0.0, 1.0)}
    return Fixture(ModelSpecification(tuple(terms)), truth, gens)


def rpl_fixture() -> Fixture:
    """One normally distributed coefficient (mean -2.5, sd 2.8) on OtherMode."""
    terms = _constants() + [
        Term("x1_PersonalVehicle", "x1", PV),
        Term("z_OtherMode", "z", OTHER, "RandomNormal"),
    ]
    truth = np.array([0.5, -0.5, 0.2, 0.8, -2.5, 2.8])
    gens = {"x1": ("normal", 0.0, 1.0), "z": ("normal", 0.0, 1.0)}
    return Fixture(ModelSpecification(tuple(terms)), truth, gens)


def zero_coefficient_fixture() -> Fixture:
    """Five fixed slopes, one of which (``x_null_Walk``) has a true value of zero."""
    terms = _constants() + [
        Term("x1_PersonalVehicle", "x1", PV),
        Term("x2_PublicTransport", "x2", PT),
        Term("x_null_Walk", "x4", WALK),
        Term("x3_Walk", "x3", WALK),
        Term("x5_OtherMode", "x5", OTHER),
    ]
    truth = np.array([0.6, -0.4, 0.2, 0.7, 0.9, 0.0, -0.6, 0.5])
    gens = {"x1": ("normal", 0.0, 1.0), "x2": ("bernoulli", 0.5), "x3": ("normal", 0.0, 1.0),
            "x4": ("normal", 0.0, 1.0), "x5": ("bernoulli", 0.5)}
    return Fixture(ModelSpecification(tuple(terms)), truth, gens)


def zero_sd_fixture() -> Fixture:
    """A term declared random whose true coefficient is the constant -1.0."""
    terms = _constants() + [
        Term("x1_PersonalVehicle", "x1", PV),
        Term("z_OtherMode", "z", OTHER, "RandomNormal"),
    ]
    truth = np.array([0.5, -0.5, 0.2, 0.8, -1.0, 0.0])
    gens = {"x1": ("normal", 0.0, 1.0), "z": ("normal", 0.0, 1.0)}
    return Fixture(ModelSpecification(tuple(terms)), truth, gens)


def desk_scale_fixture() -> Fixture:
    """Full-size specification: 32 terms, 34 parameters, two random coefficients.

    Generating coefficients and covariate shares are set to realistic
    magnitudes for a four-mode disability travel sample, so estimation cost
    and conditioning resemble a production run.
    """
    T = Term
    terms = [
        T("asc_PersonalVehicle", CONSTANT, PV),
        T("age_over_65_PV", "age_over_65", PV),
        T("race_white_PV", "race_white", PV),
        T("income_100k_200k_PV", "income_100k_200k", PV),
        T("weekday_PV", "weekday", PV),
        T("home_based_PV", "home_based", PV),
        T("dest_nyc_PV", "dest_nyc", PV),
        T("device_cane_PV", "device_cane", PV),
        T("log_trip_duration_PV", "log_trip_duration", PV),
        T("log_trip_length_PV", "log_trip_length", PV),
        T("asc_PublicTransport", CONSTANT, PT),
        T("income_lt50k_PT", "income_lt50k", PT),
        T("dest_urban_PT", "dest_urban", PT),
        T("purpose_work_PT", "purpose_work", PT),
        T("non_home_based_PT", "non_home_based", PT),
        T("season_fall_PT", "season_fall", PT),
        T("origin_nyc_PT", "origin_nyc", PT),
        T("device_cane_PT", "device_cane", PT),
        T("origin_wind_speed_PT", "origin_wind_speed", PT),
        T("asc_Walk", CONSTANT, WALK),
        T("hispanic_Walk", "hispanic", WALK),
        T("income_lt50k_Walk", "income_lt50k", WALK),
        T("season_summer_Walk", "season_summer", WALK),
        T("season_winter_Walk", "season_winter", WALK),
        T("log_trip_length_Walk", "log_trip_length", WALK),
        T("edu_bachelor_plus_Other", "edu_bachelor_plus", OTHER),
        T("origin_rural_Other", "origin_rural", OTHER),
        T("purpose_nonwork_Other", "purpose_nonwork", OTHER, "RandomNormal"),
        T("non_home_based_Other", "non_home_based", OTHER),
        T("tod_0700_0959_Other", "tod_0700_0959", OTHER),
        T("season_summer_Other", "season_summer", OTHER, "RandomNormal"),
        T("device_manual_wheelchair_Other", "device_manual_wheelchair", OTHER),
    ]
    truth = np.array([
        8.33, 0.90, 0.84, 0.54, -0.26, -1.20, -1.16, 0.43, -2.10, 0.81,
        -2.73, 0.90, 1.08, 0.75, 0.74, 0.36, 0.88, 0.61, 0.03,
        1.00, 0.51, 0.40, -0.31, -0.29, -1.58,
        -0.74, -1.06, -2.54, 2.84, 0.70, 0.91, -1.04, 1.95, 2.42,
    ])
    gens = {
        "age_over_65": ("bernoulli", 0.524),
        "race_white": ("bernoulli", 0.901),
        "hispanic": ("bernoulli", 0.045),
        "edu_bachelor_plus": ("bernoulli", 0.300),
        "income": ("onehot", ("income_lt50k", 0.644), ("income_50k_75k", 0.156),
                   ("income_75k_100k", 0.076), ("income_100k_200k", 0.104),
                   ("income_200k_plus", 0.020)),
        "weekday": ("bernoulli", 0.770),
        "trip_category": ("onehot", ("home_based", 0.660), ("non_home_based", 0.340)),
        "trip_purpose": ("onehot", ("purpose_work", 0.047), ("purpose_nonwork", 0.953)),
        "origin_area": ("onehot", ("origin_rural", 0.486), ("origin_urban", 0.514)),
        "dest_urban": ("bernoulli", 0.514),
        "origin_nyc": ("bernoulli", 0.080),
        "dest_nyc": ("bernoulli", 0.080),
        "device_cane": ("bernoulli", 0.422),
        "device_manual_wheelchair": ("bernoulli", 0.066),
        "season": ("onehot", ("season_summer", 0.255), ("season_fall", 0.268),
                   ("season_winter", 0.284), ("season_spring", 0.193)),
        "time_of_day": ("onehot", ("tod_0700_0959", 0.159), ("tod_1000_1559", 0.573),
                        ("tod_1600_1859", 0.171), ("tod_1900_0659", 0.097)),
        "log_trip_length": ("normal", 0.85, 1.56),
        "log_trip_duration": ("normal", 2.63, 0.91),
        "origin_wind_speed": ("uniform", 0.0, 18.0),
    }
    return Fixture(ModelSpecification(tuple(terms)), truth, gens)


FIXTURES = {
    "mnl": mnl_fixture,
    "rpl": rpl_fixture,
    "zero-coefficient": zero_coefficient_fixture,
    "zero-sd": zero_sd_fixture,
    "desk-scale": desk_scale_fixture,
}


# ---------------------------------------------------------------------------
# Raw trip tables and station weather for end-to-end pipeline runs
# ---------------------------------------------------------------------------

STATIONS = (  # id, lat, lon: airports and city stations around New York State
    ("USW00094789", 40.6386, -73.7622),
    ("USW00014732", 40.7794, -73.8803),
    ("USW00094728", 40.7789, -73.9692),
    ("USW00014735", 42.7431, -73.8092),
    ("USW00014733", 42.9408, -78.7358),
    ("USW00014771", 43.1111, -76.1038),
    ("USW00014768", 43.1167, -77.6767),
)


def pipeline_spec() -> ModelSpecification:
    T = Term
    return ModelSpecification((
        T("asc_PersonalVehicle", CONSTANT, PV),
        T("asc_PublicTransport", CONSTANT, PT),
        T("asc_Walk", CONSTANT, WALK),
        T("driver_PV", "driver", PV),
        T("age_over_65_PV", "age_over_65", PV),
        T("log_trip_length_Walk", "log_trip_length", WALK),
        T("origin_nyc_PT", "origin_nyc", PT),
        T("origin_wind_speed_PT", "origin_wind_speed", PT),
        T("purpose_nonwork_Other", "purpose_nonwork", OTHER, "RandomNormal"),
    ))


PIPELINE_TRUTH = np.array([1.5, -0.8, 0.6, 2.5, 0.5, -1.2, 1.4, 0.05, -1.0, 1.0])

_CODES_BY_ALT = {a: sorted(c for c, (_, alt) in MODE_CODES.items() if alt is a) for a in ALTERNATIVES}


def simulate_weather(start: datetime, days: int, rng: np.random.Generator,
                     gap_probability: float = 0.02) -> list[WeatherRecord]:
    """Hourly records per station with occasional blank values and dropped hours."""
    records = []
    for sid, lat, lon in STATIONS:
        for h in range(days * 24):
            if rng.random() < gap_probability:
                continue
            ts = start + timedelta(hours=h)
            day = (ts - datetime(ts.year, 1, 1)).days
            seasonal = 52 - 22 * np.cos(2 * np.pi * (day - 15) / 365)
            temp = round(float(seasonal + 8 * np.sin(2 * np.pi * (ts.hour - 9) / 24) + rng.normal(0, 5)), 1)
            precip = round(float(max(0.0, rng.normal(-0.2, 0.3))), 2) if rng.random() > 0.2 else None
            records.append(WeatherRecord(
                station_id=sid, lat=lat, lon=lon, timestamp=ts,
                temperature=temp,
                precipitation=precip,
                humidity=round(float(np.clip(rng.normal(63, 18), 5, 100)), 0),
                visibility=round(float(np.clip(rng.normal(9.4, 2.6), 0, 10)), 1),
                wind_speed=round(float(abs(rng.normal(8.8, 5.6))), 1),
            ))
    return records


def simulate_raw_trips(n_persons: int, seed: int, days: int = 28,
                       start: datetime = datetime(2017, 1, 2)) -> tuple[list[RawTripRecord], list[WeatherRecord]]:
    """Raw survey-style trips and station weather with modes drawn from :func:`pipeline_spec`.

    About a quarter of the people fail the sample filter (minors or no
    travel-limiting disability).  Modes are sampled after recoding and
    weather fusion, then written back as a detailed mode code of the chosen
    class.
    """
    rng = np.random.default_rng(seed)
    weather = simulate_weather(start, days, rng)
    index = WeatherIndex(weather)
    records = []
    for p in range(n_persons):
        age = int(rng.choice([16, 22, 35, 55, 72])) + int(rng.integers(0, 8))
        person = dict(
            person_id=f"P{p:05d}", household_id=f"H{p // 2:05d}", age=age,
            disability_flag=bool(rng.random() < 0.8),
            gender=str(rng.choice(["male", "female"], p=[0.43, 0.57])),
            worker=bool(rng.random() < 0.16), driver=bool(rng.random() < 0.53),
            race=str(rng.choice(["white", "black", "asian", "other"], p=[0.9, 0.05, 0.03, 0.02])),
            hispanic=bool(rng.random() < 0.045),
            education=str(rng.choice(["less_than_bachelor", "bachelor_or_higher"], p=[0.7, 0.3])),
            income_band=str(rng.choice(["lt50k", "50k_75k", "75k_100k", "100k_200k", "200k_plus"],
                                       p=[0.644, 0.156, 0.076, 0.104, 0.020])),
            medical_devices=frozenset(d for d, s in (("cane", 0.42), ("walker", 0.25), ("manual_wheelchair", 0.07),
                                                     ("crutch", 0.03), ("dog_assistance", 0.01)) if rng.random() < s),
            health_poor=bool(rng.random() < 0.1), born_in_us=bool(rng.random() < 0.93),
            works_from_home=bool(rng.random() < 0.05),
        )
        sid, slat, slon = STATIONS[int(rng.integers(len(STATIONS)))]
        home = (slat + rng.normal(0, 0.08), slon + rng.normal(0, 0.08))
        nyc = abs(slat - 40.7) < 0.2
        for k in range(int(rng.integers(1, 4))):
            depart = start + timedelta(days=int(rng.integers(0, days)), hours=int(rng.integers(6, 22)),
                                       minutes=int(rng.integers(0, 60)))
            length = float(np.exp(rng.normal(0.85, 1.4)))
            loop = rng.random() < 0.03
            dest = home if loop else (home[0] + rng.normal(0, length / 69), home[1] + rng.normal(0, length / 52))
            duration = float(max(1.0, round(np.exp(rng.normal(2.6, 0.8)))))
            records.append(RawTripRecord(
                trip_id=f"P{p:05d}-{k + 1}", raw_mode="3",
                trip_length=round(length, 3), trip_duration=duration,
                origin_lat=round(home[0], 5), origin_lon=round(home[1], 5),
                dest_lat=round(dest[0], 5), dest_lon=round(dest[1], 5),
                start_time=depart, end_time=depart + timedelta(minutes=duration),
                origin_urban=bool(nyc or rng.random() < 0.4), dest_urban=bool(nyc or rng.random() < 0.4),
                origin_nyc=bool(nyc), dest_nyc=bool(nyc and rng.random() < 0.9),
                trip_purpose=str(rng.choice(["work", "shopping", "medical", "social"], p=[0.05, 0.4, 0.3, 0.25])),
                home_based=bool(rng.random() < 0.66), travel_month=depart.month,
                weekday=depart.weekday() < 5,
                **person,
            ))

    # Draw modes for the estimation sample from the pipeline model.
    spec = pipeline_spec()
    sample = filter_tld_adults(records)
    fused = fuse([recode(r) for r in sample], index)
    complete = [o.is_complete_for(spec.covariates) for o in fused]
    cols = {c: np.array([o.covariates.get(c, 0.0) for o in fused]) for c in spec.covariates}
    person_idx = {pid: i for i, pid in enumerate(dict.fromkeys(o.person_id for o in fused))}
    person = np.array([person_idx[o.person_id] for o in fused], dtype=int)
    chosen = sample_choices(spec, PIPELINE_TRUTH, cols, person, np.ones((len(fused), N_ALTERNATIVES), bool), rng)
    mode_for = {}
    for obs, ok, c in zip(fused, complete, chosen):
        alt = Alternative(int(c)) if ok else Alternative(int(rng.integers(N_ALTERNATIVES)))
        mode_for[obs.obs_id] = str(int(rng.choice(_CODES_BY_ALT[alt])))
    out = []
    for r in records:
        code = mode_for.get(r.trip_id) or str(int(rng.choice(list(MODE_CODES))))
        out.append(replace(r, raw_mode=code))
    return out, weather


RAW_TRIP_COLUMNS = (
    "person_id", "household_id", "trip_id", "age", "gender", "worker", "driver", "race", "hispanic",
    "education", "income_band", "disability_flag", "medical_devices", "health_poor", "born_in_us",
    "works_from_home", "raw_mode", "trip_length", "trip_duration", "origin_lat", "origin_lon",
    "dest_lat", "dest_lon", "start_time", "end_time", "origin_urban", "dest_urban", "origin_nyc",
    "dest_nyc", "trip_purpose", "home_based", "travel_month", "weekday",
)


def write_trips_csv(path, records) -> None:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "1" if v else "0"
        if isinstance(v, frozenset):
            return ";".join(sorted(v))
        if isinstance(v, datetime):
            return v.isoformat()
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_TRIP_COLUMNS)
        for r in records:
            w.writerow([cell(getattr(r, c)) for c in RAW_TRIP_COLUMNS])
