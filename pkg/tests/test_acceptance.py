"""End-to-end acceptance gates for the whole pipeline.

Each test states its tolerance inline; the heavier fixtures (oracle stream,
fitted model, simulated stream) are module-scoped so the suite stays inside
its runtime budgets.
"""

import time

import numpy as np
import pytest
from scipy import stats

from lobhawk import ctlstm, event_sim, hawkes, midprice, mm_env, sac
from lobhawk.autodiff import Tensor
from lobhawk.events import (EventType, UP_TYPES, DOWN_TYPES, build_stream,
                            count_events, parse_lobster)
from lobhawk.midprice import JumpDistribution, build_path, fit_jumps, hurst_rs


# ---- shared heavy fixtures --------------------------------------------------


@pytest.fixture(scope="module")
def oracle_recovery(hawkes3):
    """50k oracle events + a 10-epoch neural fit (shared by criterion 2)."""
    t0 = time.monotonic()
    times, types = hawkes.simulate_thinning(hawkes3, T=5e5, seed=42,
                                            max_events=50_000)
    assert len(times) == 50_000
    mkts = np.ones(len(times), dtype=int)
    cfg = ctlstm.CtLstmConfig(m=3, hidden=32, n_states=3, epochs=10,
                              batch=256, window=100, lr=0.002, seed=0)
    result = ctlstm.train(cfg, times, types, mkts)
    return times, types, result, time.monotonic() - t0


@pytest.fixture(scope="module")
def fitted_model(fixture_stream):
    """Small CT-LSTM fit on the bundled fixture stream."""
    events, _, _ = fixture_stream
    times = np.array([e.time for e in events])
    types = np.array([e.etype.value - 1 for e in events])
    mkts = np.array([e.market_state for e in events])
    cfg = ctlstm.CtLstmConfig(m=12, hidden=16, n_states=3, epochs=10,
                              batch=64, window=50, lr=0.002, seed=0)
    return ctlstm.train(cfg, times, types, mkts), cfg


@pytest.fixture(scope="module")
def sim_stream(fitted_model):
    """One 5000-event thinning run from the fitted model."""
    result, cfg = fitted_model
    dyn = event_sim.CtLstmDynamics(result.params, cfg)
    sim_cfg = event_sim.SimConfig(runs=1, events_per_run=5000, seed=3)
    return event_sim.simulate_stream(dyn, sim_cfg, seed=101)


@pytest.fixture(scope="module")
def fixture_jumps(fixture_stream):
    events, mids, _ = fixture_stream
    return fit_jumps([e.etype for e in events], mids)


# ---- criteria ----------------------------------------------------------------


def test_criterion_1_event_classification(lobster_fixture):
    """Fixture counts match the manifest exactly; probabilities sum to 1."""
    t0 = time.monotonic()
    msg, book, manifest = lobster_fixture
    messages, books, _, tick = parse_lobster(msg, book)
    events, _, discards = build_stream(messages, books)
    counts, probs = count_events(events)
    assert {et.label: counts[et] for et in EventType} == manifest["counts"]
    assert discards.total == manifest["discarded"]
    assert abs(sum(probs.values()) - 1.0) <= 1e-12
    assert time.monotonic() - t0 < 30.0


def test_criterion_2_oracle_recovery(hawkes3, oracle_recovery):
    """Neural fit recovers the generator within 0.1 nats/event held out."""
    times, types, result, elapsed = oracle_recovery
    n = len(times)
    cut = int(n * 0.8)
    ll_full = hawkes.log_likelihood(hawkes3, times, types, T=times[-1])
    ll_head = hawkes.log_likelihood(hawkes3, times[:cut], types[:cut],
                                    T=times[cut - 1])
    gen_nll = -(ll_full - ll_head) / (n - cut)
    assert result.test_nll - gen_nll < 0.1
    majority = np.bincount(types[cut:], minlength=3).max() / (n - cut)
    assert result.test_accuracy >= majority
    assert elapsed < 600.0


def test_criterion_3_sampler_correctness():
    """Thinning with frozen rates (1, 3): KS on gaps, chi-square on types."""
    t0 = time.monotonic()
    dyn = event_sim.FrozenDynamics([1.0, 3.0])
    cfg = event_sim.SimConfig(runs=1, events_per_run=10_000, seed=0)
    run = event_sim.simulate_stream(dyn, cfg, seed=7)
    gaps = np.diff(run.times, prepend=0.0)
    assert stats.kstest(gaps, "expon", args=(0, 1.0 / 4.0)).pvalue > 0.01
    counts = run.counts(2)
    expected = len(run.times) * np.array([0.25, 0.75])
    assert stats.chisquare(counts, f_exp=expected).pvalue > 0.01
    assert time.monotonic() - t0 < 60.0


def test_criterion_4_gradient_suite():
    """FD checks at 100 random points: CT-LSTM < 1e-4, SAC losses < 1e-3."""
    t0 = time.monotonic()
    eps = 1e-5

    def rel_err(fd, an):
        return abs(fd - an) / max(1e-6, abs(fd), abs(an))

    # CT-LSTM full step (event update + decay + read-out + compensator term)
    cfg = ctlstm.CtLstmConfig(m=3, hidden=8, n_states=3, window=5, seed=0)
    rng = np.random.default_rng(2024)
    for point in range(100):
        params = ctlstm.init_params(cfg, seed=point)
        J = 5
        types = rng.integers(0, 3, J)
        mkts = rng.integers(0, 3, J)
        dts = rng.exponential(0.4, J)
        dts[0] = 0.0
        mc = rng.uniform(size=(J - 1, 1))
        loss_t, params_t, _ = ctlstm.nll_tape(params, types, mkts, dts, cfg, mc)
        loss_t.backward()
        k = ("Wx", "Wh", "b", "wout")[point % 4]
        flat = params[k].ravel()
        i = int(rng.integers(flat.size))
        orig = flat[i]
        flat[i] = orig + eps
        fp, _ = ctlstm.window_nll_np(params, types, mkts, dts, cfg, mc)
        flat[i] = orig - eps
        fm, _ = ctlstm.window_nll_np(params, types, mkts, dts, cfg, mc)
        flat[i] = orig
        assert rel_err((fp - fm) / (2 * eps), params_t[k].grad.ravel()[i]) < 1e-4

    # SAC critic and policy losses
    for point in range(100):
        prng = np.random.default_rng(10_000 + point)
        agent = sac.SacAgent(sac.SacConfig(hidden=(8, 8), seed=point),
                             sac.Normalizer(100.0, 1.0, 5))
        for v in agent.params.values():
            # fully random point: jitter the zero-initialised biases off the
            # relu kinks, where the two-sided difference is undefined
            v += 0.01 * prng.standard_normal(v.shape)
        states = prng.standard_normal((8, 2))
        actions = prng.integers(0, 3, 8)
        targets = prng.standard_normal(8)
        masks = prng.uniform(size=(8, 3)) > 0.2
        masks[:, 0] = True
        q_min = prng.standard_normal((8, 3))

        for name, loss_fn in (
            ("q1_", lambda ps: sac.critic_loss(ps, "q1_", states, actions, targets)),
            ("pi_", lambda ps: sac.policy_loss(ps, states, masks, q_min, 0.2)),
        ):
            params = {k: v for k, v in agent.params.items() if k.startswith(name)}
            params_t = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
            loss_fn(params_t).backward()
            k = prng.choice(list(params))
            flat = params[k].ravel()
            i = int(prng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(loss_fn({kk: Tensor(vv) for kk, vv in params.items()}).value)
            flat[i] = orig - eps
            fm = float(loss_fn({kk: Tensor(vv) for kk, vv in params.items()}).value)
            flat[i] = orig
            assert rel_err((fp - fm) / (2 * eps), params_t[k].grad.ravel()[i]) < 1e-3

    assert time.monotonic() - t0 < 120.0


def test_criterion_5_midprice_accounting(sim_stream, fixture_jumps):
    """Exact accounting identity, unit-jump equivalence, neutral invariance."""
    run = sim_stream
    etypes = [EventType(j + 1) for j in run.types]
    for seed in range(5):
        path = build_path(run.times, etypes, fixture_jumps,
                          v0_ticks=10_000, tick=0.01, seed=seed)
        # V(t) - V(0) equals the signed jump sum exactly, at every index
        np.testing.assert_array_equal(
            path.prices - path.v0, np.cumsum(path.jumps))
        for et, j in zip(etypes, path.jumps):
            if et in UP_TYPES:
                assert j > 0
            elif et in DOWN_TYPES:
                assert j < 0
            else:
                assert j == 0
    unit = build_path(run.times, etypes, JumpDistribution.unit(),
                      v0_ticks=10_000, tick=0.01, seed=0)
    signs = np.array([1 if e in UP_TYPES else (-1 if e in DOWN_TYPES else 0)
                      for e in etypes])
    np.testing.assert_array_equal(unit.jumps, signs)


def test_criterion_6_stylized_stats(fixture_stream, sim_stream, fixture_jumps):
    """Simulated volatility within a factor of 2 of the real-data value."""
    events, mids, tick = fixture_stream
    tick_currency = tick / 10_000.0
    real_prices = mids * (tick_currency / 2.0)
    real = midprice.stylized_stats(real_prices)

    etypes = [EventType(j + 1) for j in sim_stream.types]
    v0_ticks = mids[0] / 2.0
    path = build_path(sim_stream.times, etypes, fixture_jumps,
                      v0_ticks=v0_ticks, tick=tick_currency, seed=1)
    sim = midprice.stylized_stats(path.prices_currency)

    assert real.volatility > 0 and sim.volatility > 0
    ratio = sim.volatility / real.volatility
    assert 0.5 < ratio < 2.0, f"volatility ratio {ratio:.3f} outside [0.5, 2]"

    rng = np.random.default_rng(77)
    h = hurst_rs(rng.standard_normal(8192))
    assert abs(h - 0.5) < 0.05


def test_criterion_7_mm_invariants(fixture_stream):
    """Random-policy episode invariants + analytic always-quote fill ratio."""
    t0 = time.monotonic()
    events, mids, tick = fixture_stream
    tick_currency = tick / 10_000.0
    times = np.array([e.time for e in events])
    etypes = [e.etype for e in events]
    prices = mids * (tick_currency / 2.0)
    cfg = mm_env.MmConfig(q_max=5)

    for ep_i in range(100):
        rng = np.random.default_rng(500 + ep_i)
        env = mm_env.MarketMakingEnv(times[:4000], etypes[:4000], prices[:4000],
                                     cfg, tick_currency, seed=ep_i)
        ep = mm_env.run_episode(
            lambda obs, legal: legal[int(rng.integers(len(legal)))], env)
        assert np.max(np.abs(ep.q_trace)) <= cfg.q_max
        for f in ep.fills:
            if f.kind == "adverse":
                assert f.trigger in (EventType.MB_UP, EventType.MS_DOWN)
            else:
                assert f.trigger in (EventType.MB_0, EventType.MS_0)
        recomputed = ep.q_trace * ep.v_trace + ep.cash_trace
        assert abs(recomputed[-1] - ep.terminal_wealth) < 1e-9
        assert abs(ep.terminal_reward
                   - (ep.terminal_wealth - ep.initial_wealth - ep.penalty_total)) < 1e-9

    # always-quote ratio vs N_aggMO / (p * N_nonAggMO); a large cap isolates
    # the fill mechanics from the inventory constraint
    wide = mm_env.MmConfig(q_max=10_000)
    env = mm_env.MarketMakingEnv(times, etypes, prices, wide,
                                 tick_currency, seed=9)
    ep = mm_env.run_episode(lambda obs, legal: 0, env)
    scored = etypes[1:]
    n_agg = sum(1 for e in scored if e in (EventType.MB_UP, EventType.MS_DOWN))
    n_non = sum(1 for e in scored if e in (EventType.MB_0, EventType.MS_0))
    assert ep.adverse_count == n_agg
    se = np.sqrt(n_non * wide.fill_prob * (1 - wide.fill_prob))
    assert abs(ep.nonadverse_count - wide.fill_prob * n_non) < 3 * se
    assert mm_env.fill_ratio([ep]) == pytest.approx(n_agg / ep.nonadverse_count)
    assert time.monotonic() - t0 < 120.0


@pytest.fixture(scope="module")
def mm_on_sim(fitted_model, fixture_jumps, fixture_stream):
    """SAC agent trained on simulated streams; each episode a fresh run."""
    result, cfg_model = fitted_model
    _, mids, tick = fixture_stream
    tick_currency = tick / 10_000.0
    dyn = event_sim.CtLstmDynamics(result.params, cfg_model)
    cfg = mm_env.MmConfig(q_max=5, seed=0)

    def sim_env(n_events, sim_seed, env_seed):
        run = event_sim.simulate_stream(
            dyn, event_sim.SimConfig(runs=1, events_per_run=n_events,
                                     seed=sim_seed), seed=400 + sim_seed)
        etypes = [EventType(j + 1) for j in run.types]
        path = build_path(run.times, etypes, fixture_jumps,
                          v0_ticks=mids[0] / 2.0, tick=tick_currency,
                          seed=sim_seed)
        return mm_env.MarketMakingEnv(run.times, etypes, path.prices_currency,
                                      cfg, tick_currency, seed=env_seed)

    agent = sac.SacAgent(
        sac.SacConfig(hidden=(32, 32), seed=0, warmup_steps=500, update_every=2),
        sac.make_normalizer(mids * (tick_currency / 2.0), cfg.q_max))
    sac.train_agent(agent, lambda ep: sim_env(2500, ep, 1_000 + ep), episodes=2)
    return agent, lambda ep: sim_env(2000, 50 + ep, 2_000 + ep)


def test_criterion_8_fill_ratio_band(mm_on_sim):
    """Trained-agent adverse:non-adverse ratio lands in [1.5, 4.5]."""
    agent, eval_factory = mm_on_sim
    episodes = sac.evaluate_agent(agent, eval_factory, episodes=8)
    ratio = mm_env.fill_ratio(episodes)
    assert ratio is not None
    assert 1.5 <= ratio <= 4.5, f"fill ratio {ratio:.3f} outside [1.5, 4.5]"
    counts = mm_env.fill_counts_by_trigger(episodes)
    aggressive = counts["MB+"] + counts["MS-"]
    nonaggressive = counts["MB0"] + counts["MS0"]
    assert aggressive > nonaggressive


def test_criterion_9_learning_smoke():
    """Inventory-penalty training strictly reduces mean terminal |Q|."""
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    pool = ([EventType.MB_UP] * 2 + [EventType.MS_DOWN] * 2 +
            [EventType.MB_0] * 4 + [EventType.MS_0] * 4 +
            [EventType.LB_0] * 4 + [EventType.LS_0] * 4)
    n = 2000
    etypes = [pool[i] for i in rng.integers(0, len(pool), n)]
    times = np.arange(n) * 0.1
    prices = np.full(n, 100.0)  # zero-jump environment
    # penalty dominates the half-spread so low inventory is unambiguously
    # optimal; seed 1's untrained argmax policy is a plain inventory random
    # walk rather than an accidentally mean-reverting one
    cfg = mm_env.MmConfig(q_max=5, inv_penalty=0.2, seed=0)
    tick = 0.01

    def factory(base):
        def inner(ep):
            return mm_env.MarketMakingEnv(times[:1000], etypes[:1000],
                                          prices[:1000], cfg, tick,
                                          seed=base + ep)
        return inner

    norm = sac.make_normalizer(np.array([99.9, 100.0, 100.1]), cfg.q_max)
    sac_cfg = sac.SacConfig(hidden=(32, 32), seed=1, warmup_steps=300,
                            update_every=2)
    untrained = sac.SacAgent(sac_cfg, norm)
    trained = sac.SacAgent(sac_cfg, norm)
    sac.train_agent(trained, factory(10_000), episodes=4)

    def mean_abs_qt(agent):
        eps = sac.evaluate_agent(agent, factory(50_000), episodes=100)
        return float(np.mean([abs(e.q_trace[-1]) for e in eps]))

    q_untrained = mean_abs_qt(untrained)
    q_trained = mean_abs_qt(trained)
    assert q_trained < q_untrained, (
        f"trained mean |Q_T| {q_trained:.3f} !< untrained {q_untrained:.3f}")
    assert time.monotonic() - t0 < 300.0
