import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from lobhawk import hawkes
from lobhawk.hawkes import HawkesModel


def uni(base=0.5, a=0.8, b=1.2, transfer="identity"):
    return HawkesModel(base=np.array([base]), alpha=np.array([[a]]),
                       beta=np.array([[b]]), transfer=transfer)


class TestModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            uni(b=0.0)
        with pytest.raises(ValueError):
            uni(a=-0.1)  # identity transfer needs alpha >= 0
        with pytest.raises(ValueError):
            HawkesModel(base=np.zeros(2), alpha=np.zeros((3, 3)), beta=np.ones((3, 3)))
        # mixed-sign alpha is fine under softplus
        HawkesModel(base=np.array([0.5]), alpha=np.array([[-0.3]]),
                    beta=np.array([[1.0]]), transfer="softplus")

    def test_stability(self, hawkes3):
        assert hawkes3.is_stable()
        assert not uni(a=1.5, b=1.0).is_stable()

    def test_json_roundtrip(self, hawkes3, tmp_path):
        p = tmp_path / "model.json"
        hawkes3.to_json(p)
        back = HawkesModel.from_json(p)
        np.testing.assert_array_equal(back.base, hawkes3.base)
        np.testing.assert_array_equal(back.alpha, hawkes3.alpha)
        np.testing.assert_array_equal(back.beta, hawkes3.beta)


class TestIntensity:
    def test_known_value(self):
        # lambda(1) = 0.5 + 0.8 e^{-1.2} after a single event at t=0
        m = uni()
        lam = hawkes.intensity(m, [0.0], [0], 1.0)
        assert lam[0] == pytest.approx(0.5 + 0.8 * np.exp(-1.2), abs=1e-12)

    def test_recursion_matches_naive(self, hawkes3):
        rng = np.random.default_rng(1)
        times = np.sort(rng.uniform(0, 20, 200))
        types = rng.integers(0, 3, 200)
        for t in (5.0, 21.0, 30.0):
            hist = times < t
            fast = hawkes.intensity(hawkes3, times[hist], types[hist], t)
            slow = hawkes.intensity(hawkes3, times[hist], types[hist], t, naive=True)
            np.testing.assert_allclose(fast, slow, rtol=1e-12)

    def test_history_order_enforced(self):
        with pytest.raises(ValueError):
            hawkes.intensity(uni(), [1.0, 2.0], [0, 0], 1.5)


class TestLogLikelihood:
    def test_poisson_special_case(self):
        # alpha=0 reduces to homogeneous Poisson: LL = n log(mu) - mu T
        m = uni(base=2.0, a=0.0)
        times = np.array([0.5, 1.0, 2.5])
        ll = hawkes.log_likelihood(m, times, np.zeros(3, dtype=int), T=4.0)
        assert ll == pytest.approx(3 * np.log(2.0) - 8.0, abs=1e-12)

    def test_linear_compensator_vs_quadrature(self, hawkes3):
        times, types = hawkes.simulate_thinning(hawkes3, 30.0, seed=5)
        ll = hawkes.log_likelihood(hawkes3, times, types, T=30.0)
        # independent oracle: integrate the total intensity numerically
        log_term = sum(
            np.log(hawkes.intensity(hawkes3, times[:k], types[:k], times[k],
                                    naive=True)[types[k]])
            for k in range(len(times)))

        def total(t):
            hist = times < t
            return hawkes.intensity(hawkes3, times[hist], types[hist], t,
                                    naive=True).sum()

        knots = [0.0, *times.tolist(), 30.0]
        comp = sum(quad(total, a, b, epsrel=1e-10, epsabs=0.0, limit=200)[0]
                   for a, b in zip(knots[:-1], knots[1:]) if b > a)
        assert ll == pytest.approx(log_term - comp, abs=1e-6)

    def test_softplus_path_agrees_on_linearish_regime(self):
        # with strongly positive pre-transfer values, softplus ~ identity
        m_lin = uni(base=20.0)
        m_sp = uni(base=20.0, transfer="softplus")
        times, types = hawkes.simulate_thinning(m_lin, 2.0, seed=9)
        ll_lin = hawkes.log_likelihood(m_lin, times, types, T=2.0)
        ll_sp = hawkes.log_likelihood(m_sp, times, types, T=2.0)
        assert ll_sp == pytest.approx(ll_lin, rel=1e-6)

    def test_true_model_beats_perturbed(self, hawkes3):
        times, types = hawkes.simulate_thinning(hawkes3, 2000.0, seed=11)
        ll_true = hawkes.log_likelihood(hawkes3, times, types, T=2000.0)
        worse = HawkesModel(base=hawkes3.base * 2.0, alpha=hawkes3.alpha,
                            beta=hawkes3.beta)
        assert ll_true > hawkes.log_likelihood(worse, times, types, T=2000.0)


class TestResiduals:
    def test_time_rescaling_ks(self, hawkes3):
        times, types = hawkes.simulate_thinning(hawkes3, 3000.0, seed=21)
        res = hawkes.rescaled_residuals(hawkes3, times, types, T=3000.0)
        assert stats.kstest(res, "expon").pvalue > 0.01

    def test_wrong_model_fails_rescaling(self, hawkes3):
        times, types = hawkes.simulate_thinning(hawkes3, 3000.0, seed=21)
        wrong = HawkesModel(base=hawkes3.base * 3.0, alpha=hawkes3.alpha,
                            beta=hawkes3.beta)
        res = hawkes.rescaled_residuals(wrong, times, types, T=3000.0)
        assert stats.kstest(res, "expon").pvalue < 0.01


class TestSimulation:
    def test_deterministic_in_seed(self, hawkes3):
        a = hawkes.simulate_thinning(hawkes3, 50.0, seed=3)
        b = hawkes.simulate_thinning(hawkes3, 50.0, seed=3)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        c = hawkes.simulate_thinning(hawkes3, 50.0, seed=4)
        assert len(c[0]) != len(a[0]) or not np.array_equal(a[0], c[0])

    def test_mean_rate_matches_simulation(self, hawkes3):
        T = 4000.0
        times, types = hawkes.simulate_thinning(hawkes3, T, seed=13)
        target = hawkes.mean_rate(hawkes3)
        counts = np.bincount(types, minlength=3)
        # Hawkes counts are overdispersed; allow a generous band around
        # 3 Poisson standard errors
        for i in range(3):
            se = np.sqrt(target[i] * T)
            assert abs(counts[i] - target[i] * T) < 6 * se

    def test_poisson_special_case_ks(self):
        m = uni(base=1.5, a=0.0)
        times, _ = hawkes.simulate_thinning(m, 3000.0, seed=7)
        gaps = np.diff(times, prepend=0.0)
        assert stats.kstest(gaps, "expon", args=(0, 1 / 1.5)).pvalue > 0.01

    def test_softplus_inhibition_runs(self):
        m = HawkesModel(base=np.array([1.0, 1.0]),
                        alpha=np.array([[0.3, -0.5], [-0.5, 0.3]]),
                        beta=np.ones((2, 2)), transfer="softplus")
        times, types = hawkes.simulate_thinning(m, 200.0, seed=17)
        assert len(times) > 50
        assert np.all(np.diff(times) >= 0)

    def test_max_events_cap(self, hawkes3):
        times, _ = hawkes.simulate_thinning(hawkes3, 1e6, seed=1, max_events=100)
        assert len(times) == 100
