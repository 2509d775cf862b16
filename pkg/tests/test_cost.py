import numpy as np
import pytest

from hydrograd.cost import (
    flood_signatures,
    improvement_rate,
    kge,
    multi_gauge_cost,
    nse,
    segment_events,
)
from hydrograd.errors import (
    AllGaugesDegenerateError,
    ConfigError,
    DegenerateGaugeWarning,
    DegenerateObservationsError,
    EmptyEventError,
    ZeroBaselineError,
)


class TestNse:
    def test_hand_value(self):
        # errors 0.01+0.01+0.04+0.01 = 0.07, spread 2.25+0.25+0.25+2.25 = 5
        v = nse([1.1, 1.9, 3.2, 3.9], [1.0, 2.0, 3.0, 4.0])
        assert v == pytest.approx(1.0 - 0.07 / 5.0, rel=1e-14)

    def test_perfect_and_climatology(self):
        obs = np.array([2.0, 5.0, 3.0, 8.0, 1.0])
        assert nse(obs, obs) == 1.0
        assert nse(np.full(5, obs.mean()), obs) == pytest.approx(0.0, abs=0)

    def test_missing_pairs_dropped(self):
        obs = np.array([1.0, np.nan, 3.0, 4.0])
        sim = np.array([1.1, 99.0, 3.2, 3.9])
        want = nse([1.1, 3.2, 3.9], [1.0, 3.0, 4.0])
        assert nse(sim, obs) == want

    def test_degenerate(self):
        with pytest.raises(DegenerateObservationsError):
            nse([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])
        with pytest.raises(DegenerateObservationsError):
            nse([1.0, 2.0], [np.nan, 5.0])
        with pytest.raises(DegenerateObservationsError):
            nse([1.0, 2.0], [1.0, 2.0, 3.0])


class TestKge:
    def test_doubled_simulation(self):
        obs = np.array([1.0, 4.0, 2.0, 6.0, 3.0])
        # r = 1, mean and spread ratios both 2: 1 - (0 + 1 + 1)/3
        assert kge(2.0 * obs, obs) == pytest.approx(1.0 / 3.0, rel=1e-14)

    def test_identity(self):
        obs = np.array([1.0, 4.0, 2.0, 6.0])
        assert kge(obs, obs) == 1.0

    def test_weights_must_sum_to_one(self):
        obs = np.array([1.0, 2.0, 3.0])
        with pytest.raises(ConfigError):
            kge(obs, obs, a1=0.5, a2=0.5, a3=0.5)
        v = kge(2 * obs, obs, a1=1.0, a2=0.0, a3=0.0)
        assert v == 1.0  # correlation-only weighting ignores the scaling

    def test_constant_simulation(self):
        obs = np.array([1.0, 4.0, 2.0, 6.0])
        sim = np.full(4, obs.mean())
        # zero sim spread pins r to 0 by convention
        want = 1.0 - (1.0 / 3.0 + 0.0 + 1.0 / 3.0)
        assert kge(sim, obs) == pytest.approx(want, rel=1e-14)

    def test_degenerate(self):
        with pytest.raises(DegenerateObservationsError):
            kge([1.0, 2.0], [3.0, 3.0])
        with pytest.raises(DegenerateObservationsError):
            kge([1.0, 2.0], [-1.0, 1.0])  # zero observed mean


class TestImprovementRate:
    def test_values(self):
        assert improvement_rate(0.8, 0.5) == pytest.approx(0.6, rel=1e-14)
        assert improvement_rate(0.5, 0.8) == pytest.approx(-0.375, rel=1e-14)
        # negative baseline: sign still reports direction of change
        assert improvement_rate(0.5, -0.5) == pytest.approx(2.0, rel=1e-14)

    def test_zero_baseline(self):
        with pytest.raises(ZeroBaselineError):
            improvement_rate(0.5, 0.0)


class TestMultiGaugeCost:
    def make_pair(self, seed, nt=40, n_gauges=3):
        rng = np.random.default_rng(seed)
        obs = rng.uniform(1.0, 10.0, (nt, n_gauges))
        sim = obs + rng.normal(0.0, 0.5, (nt, n_gauges))
        return sim, obs

    def test_equals_weighted_nse(self):
        sim, obs = self.make_pair(1)
        w = np.array([0.5, 0.3, 0.2])
        cost = multi_gauge_cost(sim, obs, w)
        want = sum(
            w[g] * (1.0 - nse(sim[:, g], obs[:, g])) for g in range(3)
        )
        assert cost == pytest.approx(want, rel=1e-14)

    def test_window(self):
        sim, obs = self.make_pair(2)
        w = np.array([0.5, 0.25, 0.25])
        cost = multi_gauge_cost(sim, obs, w, window=(10, 30))
        want = sum(
            w[g] * (1.0 - nse(sim[10:30, g], obs[10:30, g]))
            for g in range(3)
        )
        assert cost == pytest.approx(want, rel=1e-14)

    def test_seed_matches_finite_differences(self):
        sim, obs = self.make_pair(3, nt=20, n_gauges=2)
        w = np.array([0.7, 0.3])
        cost, seed = multi_gauge_cost(sim, obs, w, window=(2, 18),
                                      return_seed=True)
        h = 1e-7
        rng = np.random.default_rng(0)
        for _ in range(12):
            t = int(rng.integers(0, 20))
            g = int(rng.integers(0, 2))
            sp, sm = sim.copy(), sim.copy()
            sp[t, g] += h
            sm[t, g] -= h
            fd = (multi_gauge_cost(sp, obs, w, window=(2, 18))
                  - multi_gauge_cost(sm, obs, w, window=(2, 18))) / (2 * h)
            assert seed[t, g] == pytest.approx(fd, rel=1e-6, abs=1e-12)

    def test_degenerate_gauge_excluded(self):
        sim, obs = self.make_pair(4, n_gauges=2)
        obs[:, 1] = 7.0  # constant
        w = np.array([0.5, 0.5])
        with pytest.warns(DegenerateGaugeWarning):
            cost = multi_gauge_cost(sim, obs, w)
        assert cost == pytest.approx(
            1.0 - nse(sim[:, 0], obs[:, 0]), rel=1e-14
        )

    def test_all_degenerate(self):
        sim = np.ones((10, 2))
        obs = np.full((10, 2), 3.0)
        with pytest.raises(AllGaugesDegenerateError):
            multi_gauge_cost(sim, obs, np.array([0.5, 0.5]))

    def test_shape_guard(self):
        with pytest.raises(ConfigError):
            multi_gauge_cost(np.ones((10, 2)), np.ones((10, 3)),
                             np.array([0.5, 0.5]))


def staged_series():
    """Two separated floods over a flat baseline with explicit valleys."""
    q = np.full(90, 2.0)
    q[20:30] = [8, 9, 10, 11, 12, 13, 12, 10, 9, 8]
    q[30:40] = 1.0
    q[50:58] = [9, 10, 12, 11, 10, 9, 8, 8]
    q[58:66] = 1.0
    return q


class TestSegmentation:
    def test_two_events(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        assert [(e.start, e.end) for e in ev] == [(23, 30), (52, 58)]

    def test_merge(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=40)
        assert [(e.start, e.end) for e in ev] == [(23, 58)]

    def test_min_length_drops_all(self):
        q = staged_series()
        assert segment_events(q, end_run=6, min_length=25, merge_gap=8) == []

    def test_window_offsets(self):
        q = staged_series()
        ev = segment_events(q, window=(10, 90), end_run=6, min_length=4,
                            merge_gap=8)
        assert [(e.start, e.end) for e in ev] == [(23, 30), (52, 58)]

    def test_missing_counts_as_low(self):
        q = staged_series()
        q[32:36] = np.nan
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        assert [(e.start, e.end) for e in ev] == [(23, 30), (52, 58)]

    def test_deterministic(self):
        q = staged_series()
        a = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        b = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        assert [(e.start, e.end) for e in a] == [(e.start, e.end) for e in b]

    def test_default_thresholds(self):
        import inspect
        sig = inspect.signature(segment_events)
        assert sig.parameters["high_quantile"].default == 0.9
        assert sig.parameters["low_quantile"].default == 0.5
        assert sig.parameters["end_run"].default == 24
        assert sig.parameters["min_length"].default == 12
        assert sig.parameters["merge_gap"].default == 12

    def test_short_series(self):
        assert segment_events(np.array([np.nan, 3.0])) == []


class TestSignatures:
    def test_doubled_simulation(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        rain = np.full(90, 1000.0)
        sigs = flood_signatures(2.0 * q, q, rain, ev, dt=3600.0)
        assert len(sigs) == 2
        for s in sigs:
            assert s.epf == pytest.approx(1.0, rel=1e-14)
            assert s.eff == pytest.approx(1.0, rel=1e-14)
            assert s.erc == pytest.approx(1.0, rel=1e-14)
            assert not s.skipped

    def test_perfect_simulation(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        sigs = flood_signatures(q, q, np.full(90, 500.0), ev, dt=3600.0)
        assert all(s.epf == 0.0 and s.eff == 0.0 and s.erc == 0.0
                   for s in sigs)

    def test_zero_rain_skips_runoff_coefficient(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        sigs = flood_signatures(q, q, np.zeros(90), ev, dt=3600.0)
        for s in sigs:
            assert s.skipped and np.isnan(s.erc)
            assert s.reason == "zero rainfall"
            assert s.epf == 0.0  # peak and mean errors still reported

    def test_empty_event(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        qnan = q.copy()
        qnan[ev[0].start:ev[0].end] = np.nan
        with pytest.raises(EmptyEventError):
            flood_signatures(q, qnan, np.full(90, 1.0), ev, dt=3600.0)

    def test_non_positive_flow(self):
        q = staged_series()
        ev = segment_events(q, end_run=6, min_length=4, merge_gap=8)
        qneg = q.copy()
        qneg[ev[0].start:ev[0].end] = -1.0
        with pytest.raises(EmptyEventError):
            flood_signatures(q, qneg, np.full(90, 1.0), ev, dt=3600.0)
