import numpy as np
import pytest

from lobhawk.events import EventType, UP_TYPES, DOWN_TYPES
from lobhawk.midprice import (JumpDistribution, build_path, fit_jumps,
                              hurst_rs, stylized_stats)


def dist(up=((1, 0.9), (2, 0.1)), down=((1, 0.8), (2, 0.2))):
    us, up_ = zip(*up)
    ds, dp = zip(*down)
    return JumpDistribution(np.array(us), np.array(up_),
                            np.array(ds), np.array(dp))


class TestJumpDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            dist(up=((1, 0.5), (1, 0.5)))      # not strictly increasing
        with pytest.raises(ValueError):
            dist(up=((1, 0.5), (2, 0.4)))      # probs do not sum to 1
        with pytest.raises(ValueError):
            dist(up=((0, 1.0),))               # non-positive size

    def test_roundtrip(self, tmp_path):
        d = dist()
        d.to_json(tmp_path / "j.json")
        back = JumpDistribution.from_json(tmp_path / "j.json")
        np.testing.assert_array_equal(back.up_sizes, d.up_sizes)
        np.testing.assert_allclose(back.down_probs, d.down_probs)

    def test_sampling_total_variation(self):
        d = dist(up=((1, 0.9), (2, 0.09), (3, 0.01)))
        rng = np.random.default_rng(0)
        draws = np.array([d.sample("up", rng) for _ in range(10**6)])
        emp = np.bincount(draws, minlength=4)[1:4] / len(draws)
        tv = 0.5 * np.abs(emp - np.array([0.9, 0.09, 0.01])).sum()
        assert tv <= 0.01


class TestFitJumps:
    def test_normalization_example(self):
        # 900/90/10 up-jump counts -> probabilities 0.9/0.09/0.01
        etypes, mids = [EventType.LB_0], [1000]
        m = 1000
        for size, count in ((1, 900), (2, 90), (3, 10)):
            for _ in range(count):
                etypes.append(EventType.MB_UP)
                m += size
                mids.append(m)
        etypes.append(EventType.MS_DOWN)
        mids.append(m - 1)
        d = fit_jumps(etypes, mids)
        np.testing.assert_array_equal(d.up_sizes, [1, 2, 3])
        np.testing.assert_allclose(d.up_probs, [0.9, 0.09, 0.01], rtol=1e-12)
        assert d.n_sizes == 3

    def test_requires_both_directions(self):
        with pytest.raises(ValueError):
            fit_jumps([EventType.LB_0, EventType.MB_UP], [1000, 1001])

    def test_fixture_fit(self, fixture_stream):
        events, mids, _ = fixture_stream
        d = fit_jumps([e.etype for e in events], mids)
        # fixture plants one- and two-tick moves: 2 and 4 half-ticks
        assert set(d.up_sizes.tolist()) <= {1, 2, 3, 4}
        assert abs(d.up_probs.sum() - 1.0) < 1e-12


class TestBuildPath:
    def _stream(self, n=500, seed=3):
        rng = np.random.default_rng(seed)
        types = list(EventType)
        etypes = [types[i] for i in rng.integers(0, 12, n)]
        return np.cumsum(rng.exponential(0.1, n)), etypes

    def test_accounting_identity_exact(self):
        times, etypes = self._stream()
        path = build_path(times, etypes, dist(), v0_ticks=1000, tick=0.01, seed=1)
        # integer half-tick arithmetic: the identity is exact, not approximate
        assert path.prices[-1] - path.v0 == path.jumps.sum()
        np.testing.assert_array_equal(np.diff(path.prices, prepend=path.v0),
                                      path.jumps)

    def test_neutral_events_never_move_price(self):
        times, etypes = self._stream()
        path = build_path(times, etypes, dist(), v0_ticks=1000, tick=0.01, seed=1)
        for et, j in zip(etypes, path.jumps):
            if et not in UP_TYPES and et not in DOWN_TYPES:
                assert j == 0
            elif et in UP_TYPES:
                assert j > 0
            else:
                assert j < 0

    def test_unit_jump_special_case(self):
        times, etypes = self._stream()
        path = build_path(times, etypes, JumpDistribution.unit(),
                          v0_ticks=1000, tick=0.01, seed=1)
        signs = np.array([1 if e in UP_TYPES else (-1 if e in DOWN_TYPES else 0)
                          for e in etypes])
        np.testing.assert_array_equal(path.jumps, signs)

    def test_all_neutral_constant(self):
        times = np.arange(10.0)
        path = build_path(times, [EventType.LB_0] * 10, dist(),
                          v0_ticks=1000, tick=0.01, seed=0)
        assert np.all(path.prices == path.v0)

    def test_clamp_at_floor(self):
        times = np.arange(5.0)
        path = build_path(times, [EventType.MS_DOWN] * 5,
                          JumpDistribution.unit(), v0_ticks=2, tick=0.01, seed=0)
        assert path.prices.min() == 2  # one tick in half-ticks
        assert path.clamped > 0

    def test_csv_roundtrip(self, tmp_path):
        from lobhawk.cli import read_path_csv
        times, etypes = self._stream(n=100)
        path = build_path(times, etypes, dist(), v0_ticks=1000, tick=0.01, seed=2)
        path.write_csv(tmp_path / "p.csv")
        t, e, p = read_path_csv(tmp_path / "p.csv")
        np.testing.assert_allclose(t, times, atol=1e-9)
        assert e == list(etypes)
        np.testing.assert_allclose(p, path.prices_currency, atol=1e-6)


class TestHurst:
    def test_iid_gaussian_near_half(self):
        rng = np.random.default_rng(123)
        h = hurst_rs(rng.standard_normal(8192))
        assert abs(h - 0.5) < 0.05

    def test_alternating_antipersistent(self):
        r = np.tile([1.0, -1.0], 512)
        assert hurst_rs(r) < 0.3

    def test_trending_persistent(self):
        # cumulative long-memory proxy: smoothed Gaussian increments
        rng = np.random.default_rng(5)
        raw = rng.standard_normal(9000)
        smooth = np.convolve(raw, np.ones(32) / 32, mode="valid")
        assert hurst_rs(smooth) > 0.7

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            hurst_rs(np.ones(32))


class TestStylizedStats:
    def test_constant_path(self):
        st = stylized_stats(np.full(100, 50.0))
        assert st.volatility == 0.0
        assert st.abs_skewness is None and st.hurst is None

    def test_gaussian_walk_values(self):
        rng = np.random.default_rng(9)
        r = 0.001 * rng.standard_normal(5000)
        p = 100.0 * np.exp(np.cumsum(r))
        st = stylized_stats(p)
        assert st.volatility == pytest.approx(0.001, rel=0.05)
        assert st.abs_skewness < 0.2
        assert abs(st.excess_kurtosis) < 0.5
        assert abs(st.hurst - 0.5) < 0.07
        assert st.n_returns == 4999

    def test_positive_prices_required(self):
        with pytest.raises(ValueError):
            stylized_stats(np.linspace(-1, 1, 100))
