import math
from datetime import datetime

import pytest
from hypothesis import given, strategies as st

from modechoice import choice_data as cd
from modechoice.choice_data import Alternative, ChoiceObservation, RawTripRecord

from helpers import TRIPS_10


def _record(**kw):
    base = dict(
        person_id="p", household_id="h", trip_id="t", age=40, disability_flag=True, raw_mode="3",
        trip_length=2.0, trip_duration=10.0, origin_lat=40.0, origin_lon=-74.0,
        dest_lat=40.1, dest_lon=-74.1, start_time=datetime(2017, 3, 1, 8, 0),
        end_time=datetime(2017, 3, 1, 8, 10),
    )
    base.update(kw)
    return RawTripRecord(**base)


class TestAlternative:
    def test_four_alternatives_bijective(self):
        assert [int(a) for a in cd.ALTERNATIVES] == [0, 1, 2, 3]
        assert {a.label for a in cd.ALTERNATIVES} == {"PersonalVehicle", "PublicTransport", "Walk", "OtherMode"}
        for a in cd.ALTERNATIVES:
            assert Alternative.parse(a.label) is a
            assert Alternative.parse(int(a)) is a


class TestFilter:
    def test_adult_boundary(self):
        assert len(cd.filter_tld_adults([_record(age=18)])) == 1
        assert cd.filter_tld_adults([_record(age=17)]) == []

    def test_requires_disability(self):
        assert cd.filter_tld_adults([_record(disability_flag=False)]) == []
        assert cd.filter_tld_adults([_record(disability_flag=None)]) == []

    def test_empty(self):
        assert cd.filter_tld_adults([]) == []

    def test_fixture_keeps_six_of_ten(self):
        records = cd.read_trips_csv(TRIPS_10)
        assert len(records) == 10
        kept = cd.filter_tld_adults(records)
        assert [r.person_id for r in kept] == ["P01", "P04", "P05", "P06", "P08", "P10"]


class TestCollapseMode:
    @pytest.mark.parametrize("code,alt", [
        (16, Alternative.PUBLIC_TRANSPORT), ("subway", Alternative.PUBLIC_TRANSPORT),
        (11, Alternative.PUBLIC_TRANSPORT), (14, Alternative.PUBLIC_TRANSPORT), (15, Alternative.PUBLIC_TRANSPORT),
        (12, Alternative.OTHER_MODE), ("paratransit", Alternative.OTHER_MODE),
        (17, Alternative.OTHER_MODE), (2, Alternative.OTHER_MODE), (97, Alternative.OTHER_MODE),
        (3, Alternative.PERSONAL_VEHICLE), ("8", Alternative.PERSONAL_VEHICLE),
        (1, Alternative.WALK), ("walk", Alternative.WALK),
    ])
    def test_known_codes(self, code, alt):
        assert cd.collapse_mode(code) is alt

    @pytest.mark.parametrize("code", [99, "99", 0, -1, "teleport", "", None, 3.5])
    def test_unknown_rejected(self, code):
        with pytest.raises(cd.UnknownModeError):
            cd.collapse_mode(code)

    def test_error_carries_code(self):
        with pytest.raises(cd.UnknownModeError) as exc:
            cd.collapse_mode(99)
        assert "99" in str(exc.value)

    @given(st.integers(min_value=-1000, max_value=1000))
    def test_total_over_code_list(self, code):
        if code in cd.MODE_CODES:
            assert cd.collapse_mode(code) in cd.ALTERNATIVES
        else:
            with pytest.raises(cd.UnknownModeError):
                cd.collapse_mode(code)


class TestRecode:
    def test_log_transforms(self):
        obs = cd.recode(_record(trip_length=0.275, trip_duration=1.0))
        assert obs.covariates["log_trip_length"] == pytest.approx(-1.29, abs=0.005)
        assert obs.covariates["log_trip_duration"] == 0.0

    @pytest.mark.parametrize("field", ["trip_length", "trip_duration"])
    def test_nonpositive_is_incomplete(self, field):
        obs = cd.recode(_record(**{field: 0.0}))
        assert obs.incomplete
        assert not obs.is_complete_for([])

    @pytest.mark.parametrize("month,season", [
        (1, "winter"), (2, "winter"), (12, "winter"), (3, "spring"), (5, "spring"),
        (6, "summer"), (8, "summer"), (9, "fall"), (11, "fall"),
    ])
    def test_season(self, month, season):
        cov = cd.recode(_record(travel_month=month)).covariates
        assert cov["season_" + season] == 1.0
        assert sum(cov[n] for n in cd.INDICATOR_FAMILIES["season"]) == 1.0

    @pytest.mark.parametrize("hhmm,bin_", [
        ((6, 59), "tod_1900_0659"), ((7, 0), "tod_0700_0959"), ((9, 59), "tod_0700_0959"),
        ((10, 0), "tod_1000_1559"), ((15, 59), "tod_1000_1559"), ((16, 0), "tod_1600_1859"),
        ((18, 59), "tod_1600_1859"), ((19, 0), "tod_1900_0659"), ((0, 30), "tod_1900_0659"),
    ])
    def test_time_of_day(self, hhmm, bin_):
        start = datetime(2017, 3, 1, *hhmm)
        cov = cd.recode(_record(start_time=start, end_time=start)).covariates
        assert cov[bin_] == 1.0

    @pytest.mark.parametrize("age,bin_", [(18, "age_18_24"), (24, "age_18_24"), (25, "age_25_44"),
                                          (44, "age_25_44"), (45, "age_45_64"), (64, "age_45_64"),
                                          (65, "age_over_65"), (99, "age_over_65")])
    def test_age_bins(self, age, bin_):
        assert cd.recode(_record(age=age)).covariates[bin_] == 1.0

    def test_loop_trip(self):
        assert cd.recode(_record(dest_lat=40.0, dest_lon=-74.0)).covariates["loop_trip"] == 1.0
        assert cd.recode(_record(dest_lat=40.0000005, dest_lon=-74.0)).covariates["loop_trip"] == 1.0
        assert cd.recode(_record(dest_lat=40.00001, dest_lon=-74.0)).covariates["loop_trip"] == 0.0

    def test_missing_fields_leave_covariates_absent(self):
        cov = cd.recode(_record()).covariates
        assert "income_lt50k" not in cov and "male" not in cov and "season_winter" not in cov

    def test_unknown_mode_propagates(self):
        with pytest.raises(cd.UnknownModeError):
            cd.recode(_record(raw_mode="99"))

    @given(age=st.integers(18, 110), month=st.integers(1, 12), hour=st.integers(0, 23),
           band=st.sampled_from(sorted(cd.INCOME_BANDS)))
    def test_families_mutually_exclusive(self, age, month, hour, band):
        start = datetime(2017, month, 1, hour, 0)
        obs = cd.recode(_record(age=age, travel_month=month, income_band=band,
                                start_time=start, end_time=start))
        for fam in ("age", "income", "season", "time_of_day"):
            assert sum(obs.covariates[n] for n in cd.INDICATOR_FAMILIES[fam]) == 1.0

    def test_deterministic(self):
        r = _record(income_band="lt50k", travel_month=4, gender="female")
        assert cd.recode(r) == cd.recode(r)


@pytest.fixture(scope="module")
def observations():
    return [cd.recode(r) for r in cd.filter_tld_adults(cd.read_trips_csv(TRIPS_10))]


class TestFixtureRecode:
    def test_modes(self, observations):
        labels = [o.chosen.label for o in observations]
        assert labels == ["PublicTransport", "OtherMode", "Walk", "PersonalVehicle",
                          "PublicTransport", "PersonalVehicle"]

    def test_shares_match_hand_count(self, observations):
        shares = cd.category_shares(observations, "season")
        assert shares["season_winter"] == (3, pytest.approx(0.5))
        assert shares["season_spring"][0] == shares["season_summer"][0] == shares["season_fall"][0] == 1
        tod = cd.category_shares(observations, "time_of_day")
        assert tod["tod_0700_0959"][0] == 2 and tod["tod_1900_0659"][0] == 2
        age = cd.category_shares(observations, "age")
        assert age["age_over_65"] == (2, pytest.approx(1 / 3))

    def test_loop_and_devices(self, observations):
        by_id = {o.obs_id: o.covariates for o in observations}
        assert by_id["P06-1"]["loop_trip"] == 1.0
        assert by_id["P04-1"]["device_walker"] == 1.0 and by_id["P04-1"]["device_cane"] == 1.0
        assert by_id["P05-1"]["log_trip_duration"] == 0.0

    def test_passthrough_column(self, observations):
        assert observations[0].covariates["survey_wave"] == 2.0

    def test_roundtrip_csv(self, observations, tmp_path):
        path = tmp_path / "obs.csv"
        cd.write_observations_csv(path, observations)
        back = cd.read_observations_csv(path)
        assert [o.obs_id for o in back] == [o.obs_id for o in observations]
        for a, b in zip(back, observations):
            assert a.chosen == b.chosen and a.available == b.available
            assert a.covariates == b.covariates
            assert a.origin == b.origin and a.destination == b.destination


class TestObservationInvariants:
    def test_chosen_must_be_available(self):
        with pytest.raises(ValueError):
            ChoiceObservation("o", Alternative.WALK, available=(True, True, False, True))

    def test_two_available(self):
        with pytest.raises(ValueError):
            ChoiceObservation("o", Alternative.WALK, available=(False, False, True, False))

    def test_positive_weight(self):
        with pytest.raises(ValueError):
            ChoiceObservation("o", Alternative.WALK, weight=0.0)

    def test_missing_covariate_incomplete(self):
        obs = ChoiceObservation("o", Alternative.WALK, covariates={"a": 1.0, "b": math.nan})
        assert obs.is_complete_for(["a"])
        assert not obs.is_complete_for(["a", "b"])
        assert not obs.is_complete_for(["c"])


class TestReadTrips:
    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(TRIPS_10.read_text().replace("disability_flag", "disabled"))
        with pytest.raises(cd.RecordError, match="disability_flag"):
            cd.read_trips_csv(p)

    def test_bad_value_row_numbered(self, tmp_path):
        lines = TRIPS_10.read_text().splitlines()
        lines[3] = lines[3].replace(",45,", ",forty,", 1)
        p = tmp_path / "t.csv"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(cd.RecordError) as exc:
            cd.read_trips_csv(p)
        assert exc.value.row == 3 and exc.value.column == "age"

    def test_header_only(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(TRIPS_10.read_text().splitlines()[0] + "\n")
        assert cd.read_trips_csv(p) == []

    def test_out_of_range_coordinate(self, tmp_path):
        lines = TRIPS_10.read_text().splitlines()
        lines[1] = lines[1].replace("40.75000,-73.99000", "95.0,-73.99000", 1)
        p = tmp_path / "t.csv"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(cd.RecordError) as exc:
            cd.read_trips_csv(p)
        assert exc.value.row == 1

    def test_no_passthrough(self):
        recs = cd.read_trips_csv(TRIPS_10, passthrough=False)
        assert "survey_wave" not in cd.recode(recs[0]).covariates
