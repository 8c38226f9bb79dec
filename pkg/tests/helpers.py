"""Shared fixture builders for the test suite."""
from datetime import datetime
from pathlib import Path

from modechoice.choice_data import Alternative, ChoiceObservation, Endpoint

FIXTURES = Path(__file__).parent / "fixtures"
TRIPS_10 = FIXTURES / "trips_10.csv"
WEATHER_2 = FIXTURES / "weather_2stations.csv"


def _t(hhmm: str) -> datetime:
    return datetime.fromisoformat(f"2017-01-10T{hhmm}:00")


def weather_trips() -> list[ChoiceObservation]:
    """Three trips whose six endpoints are matched against ``weather_2stations.csv``."""
    spec = [
        ("T1", (40.75, -74.0, "09:20"), (40.55, -74.0, "10:10")),
        ("T2", (40.90, -74.0, "08:00"), (41.20, -73.9, "14:00")),
        ("T3", (40.60, -74.0, "10:59"), (40.74, -74.0, "09:40")),
    ]
    out = []
    for tid, o, d in spec:
        out.append(ChoiceObservation(
            obs_id=tid, person_id=tid, chosen=Alternative.WALK,
            covariates={"x": 1.0},
            origin=Endpoint(o[0], o[1], _t(o[2])),
            destination=Endpoint(d[0], d[1], _t(d[2])),
        ))
    return out


# Hand enumeration over both stations and all records:
#   T1 origin 40.75: 17.27 mi from both A and B -> A (smaller id); A records at
#      09:00 and 09:40 are both 20 min away -> earlier (09:00).
#   T1 dest 40.55: B is nearer; B 10:00 is 10 min away.
#   T2 origin 40.90: A is nearer; A 09:00 is 60 min away.
#   T2 dest 41.20: A is nearer; the closest A record (10:00) is 240 min away,
#      beyond the 180 min limit -> weather missing.
#   T3 origin 40.60: B; B 11:00 is 1 min away.
#   T3 dest 40.74: B is nearer (0.24 deg vs 0.26 deg) even though A has a
#      record at exactly 09:40; B 10:00 is 20 min away.
EXPECTED_MATCHES = {
    ("T1", "origin"): ("A", 20.0, 30.0),
    ("T1", "destination"): ("B", 10.0, 41.0),
    ("T2", "origin"): ("A", 60.0, 30.0),
    ("T2", "destination"): ("A", 240.0, None),
    ("T3", "origin"): ("B", 1.0, 42.0),
    ("T3", "destination"): ("B", 20.0, 41.0),
}
