"""Vocabulary coverage decay and the refresh-dominance guarantee."""

from __future__ import annotations

import csv

import pytest

from seqrec.coverage import (
    coverage_ratio,
    simulate_arrivals,
    warmup_series,
    write_series_csv,
)


class TestCoverageRatio:
    def test_full_coverage(self):
        assert coverage_ratio({"a", "b"}, [["a", "b", "a"]]) == [(0, 1.0)]

    def test_zero_coverage(self):
        assert coverage_ratio({"a"}, [["b", "c"]]) == [(0, 0.0)]

    def test_partial(self):
        series = coverage_ratio({"a"}, [["a", "b", "a", "c"]])
        assert series == [(0, 0.5)]

    def test_empty_days_omitted(self):
        series = coverage_ratio({"a"}, [["a"], [], ["a", "b"]])
        assert [d for d, _ in series] == [0, 2]

    def test_occurrences_not_distinct_items(self):
        # repeated exposure of a covered item counts every occurrence
        series = coverage_ratio({"a"}, [["a", "a", "a", "b"]])
        assert series == [(0, 0.75)]


class TestSimulateArrivals:
    def test_day_zero_is_initial_catalog(self):
        exposures = simulate_arrivals(3, initial_items=10, growth_rate=0.1)
        assert exposures[0] == [f"item{i}" for i in range(10)]

    def test_growth_is_compounding(self):
        exposures = simulate_arrivals(4, initial_items=100, growth_rate=0.1)
        assert [len(e) for e in exposures] == [100, 110, 121, 133]

    def test_growth_floor_of_one(self):
        exposures = simulate_arrivals(3, initial_items=2, growth_rate=0.01)
        assert [len(e) for e in exposures] == [2, 3, 4]

    def test_deterministic_with_full_exposure(self):
        a = simulate_arrivals(5, 20, 0.2)
        b = simulate_arrivals(5, 20, 0.2)
        assert a == b

    def test_partial_exposure_subsamples(self):
        exposures = simulate_arrivals(3, 50, 0.1, exposure_fraction=0.5, seed=1)
        assert len(exposures[0]) == 25
        assert set(exposures[0]) <= {f"item{i}" for i in range(50)}
        again = simulate_arrivals(3, 50, 0.1, exposure_fraction=0.5, seed=1)
        assert exposures == again

    def test_initial_items_validated(self):
        with pytest.raises(ValueError):
            simulate_arrivals(3, initial_items=0)


class TestWarmupSeries:
    def test_no_refresh_strictly_decreasing(self):
        exposures = simulate_arrivals(20, 100, 0.1)
        series = warmup_series(exposures, refresh_every=None)
        ratios = [r for _, r in series]
        assert ratios[0] == 1.0
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    def test_refresh_pointwise_dominates(self):
        exposures = simulate_arrivals(20, 100, 0.1)
        frozen = dict(warmup_series(exposures, refresh_every=None))
        for period in (1, 3, 5, 7):
            refreshed = dict(warmup_series(exposures, refresh_every=period))
            assert refreshed.keys() == frozen.keys()
            assert all(refreshed[d] >= frozen[d] for d in frozen), period

    def test_refresh_day_recovers_coverage(self):
        exposures = simulate_arrivals(10, 100, 0.1)
        series = dict(warmup_series(exposures, refresh_every=5))
        # day 5 retrains on days 0-4; only day 5's newborns are missing
        pop5 = len(exposures[5])
        assert series[5] == pytest.approx(len(exposures[4]) / pop5)
        assert series[5] > series[4]

    def test_refresh_never_sees_same_day_items(self):
        exposures = simulate_arrivals(6, 100, 0.1)
        series = dict(warmup_series(exposures, refresh_every=1))
        # even refreshing daily, today's arrivals are uncovered
        assert all(r < 1.0 for d, r in series.items() if d > 0)

    def test_empty_input(self):
        assert warmup_series([]) == []

    def test_refresh_period_validated(self):
        with pytest.raises(ValueError):
            warmup_series([["a"]], refresh_every=0)


def test_write_series_csv(tmp_path):
    path = tmp_path / "series.csv"
    write_series_csv([(0, 1.0), (3, 0.5)], str(path))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["day", "ratio"]
    assert rows[1] == ["0", "1.000000"]
    assert rows[2] == ["3", "0.500000"]
