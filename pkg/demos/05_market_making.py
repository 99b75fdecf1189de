"""Train a discrete SAC market maker on an event-driven midprice stream.

Builds the environment over the fixture's classified events and aligned
midprices, trains briefly, and compares fill statistics against an
always-quote-both baseline.
"""

from pathlib import Path

import numpy as np

from lobhawk import mm_env, sac
from lobhawk.events import build_stream, parse_lobster

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "synthetic"

messages, books, _, tick_units = parse_lobster(FIXTURE / "message.csv",
                                               FIXTURE / "orderbook.csv")
events, mids, _ = build_stream(messages, books)
times = np.array([e.time for e in events])
etypes = [e.etype for e in events]
tick = tick_units / 10_000.0
prices = mids * (tick / 2.0)

cfg = mm_env.MmConfig(q_max=5, fill_prob=0.2, inv_penalty=0.001)
n_train = int(0.6 * len(times))

def train_env(ep):
    return mm_env.MarketMakingEnv(times[:n_train], etypes[:n_train],
                                  prices[:n_train], cfg, tick, seed=100 + ep)

def test_env(ep):
    return mm_env.MarketMakingEnv(times[n_train:], etypes[n_train:],
                                  prices[n_train:], cfg, tick, seed=900 + ep)

agent = sac.SacAgent(sac.SacConfig(hidden=(32, 32), seed=0, update_every=2),
                     sac.make_normalizer(prices[:n_train], cfg.q_max))
history = sac.train_agent(agent, train_env, episodes=2)
for h in history:
    print(f"episode {h['episode']}: reward {h['reward']:+.4f}  steps {h['steps']}")

episodes = sac.evaluate_agent(agent, test_env, episodes=5)
baseline = [mm_env.run_episode(lambda obs, legal: 0, test_env(ep))
            for ep in range(5)]

for name, eps in (("trained", episodes), ("always-quote", baseline)):
    rewards = [e.terminal_reward for e in eps]
    ratio = mm_env.fill_ratio(eps)
    print(f"\n{name}: mean terminal reward {np.mean(rewards):+.4f}, "
          f"adverse:non-adverse ratio {ratio:.2f}")
    print("  fills by trigger:", mm_env.fill_counts_by_trigger(eps))
