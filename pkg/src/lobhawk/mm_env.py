"""Event-driven market-making environment with adverse/non-adverse fill logic.

The agent re-pegs quotes to the best bid/ask (midprice -/+ half a tick)
every event. Aggressive market orders (MB+/MS-) fill the matching resting
quote with certainty, non-aggressive ones (MB0/MS0) with probability p.
Fills execute at the quote price before the event's midprice jump, which is
exactly the adverse-selection mechanism: an adverse fill is immediately out
of the money.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import EventType

__all__ = ["MmConfig", "MmState", "FillRecord", "MmEpisode", "MarketMakingEnv",
           "run_episode", "fill_ratio", "legal_actions", "ACTIONS"]

# action -1: quote ask only; 0: quote both (inventory permitting); +1: bid only
ACTIONS = (-1, 0, 1)

_ADVERSE_TRIGGERS = {EventType.MB_UP, EventType.MS_DOWN}
_NONADVERSE_TRIGGERS = {EventType.MB_0, EventType.MS_0}


@dataclass(frozen=True)
class MmConfig:
    q_max: int = 5
    trade_size: int = 1
    fill_prob: float = 0.2        # non-adverse fill probability p
    inv_penalty: float = 0.001    # psi
    train_events: int = 5000
    test_events: int = 2500
    seed: int = 0

    def __post_init__(self):
        if self.q_max < 1:
            raise ValueError("q_max >= 1 required")
        if not 0.0 <= self.fill_prob <= 1.0:
            raise ValueError("fill probability must lie in [0,1]")
        if self.inv_penalty < 0:
            raise ValueError("inventory penalty must be non-negative")


def legal_actions(q: int, q_max: int) -> tuple[int, ...]:
    """Inventory-constrained action set."""
    if q <= -q_max:
        return (0, 1)
    if q >= q_max:
        return (-1, 0)
    return ACTIONS


@dataclass
class MmState:
    v: float        # midprice, currency
    q: int
    cash: float
    bid_on: bool = False
    ask_on: bool = False
    t: float = 0.0

    @property
    def wealth(self) -> float:
        return self.q * self.v + self.cash


@dataclass(frozen=True)
class FillRecord:
    time: float
    side: str            # 'bid' or 'ask'
    kind: str            # 'adverse' or 'non-adverse'
    trigger: EventType
    price: float

    def __post_init__(self):
        if self.kind == "adverse" and self.trigger not in _ADVERSE_TRIGGERS:
            raise ValueError(f"adverse fill with trigger {self.trigger}")
        if self.kind == "non-adverse" and self.trigger not in _NONADVERSE_TRIGGERS:
            raise ValueError(f"non-adverse fill with trigger {self.trigger}")


@dataclass
class MmEpisode:
    rewards: np.ndarray
    fills: list[FillRecord]
    q_trace: np.ndarray
    cash_trace: np.ndarray
    v_trace: np.ndarray
    terminal_wealth: float
    initial_wealth: float
    penalty_total: float

    @property
    def terminal_reward(self) -> float:
        return float(self.rewards.sum())

    @property
    def adverse_count(self) -> int:
        return sum(1 for f in self.fills if f.kind == "adverse")

    @property
    def nonadverse_count(self) -> int:
        return sum(1 for f in self.fills if f.kind == "non-adverse")

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "q", "cash", "v", "reward"])
            for i in range(len(self.rewards)):
                w.writerow([i, int(self.q_trace[i]), f"{self.cash_trace[i]:.6f}",
                            f"{self.v_trace[i]:.6f}", f"{self.rewards[i]:.9f}"])


class MarketMakingEnv:
    """Sequential environment over one event stream with aligned prices.

    times/etypes/prices describe the stream; prices[i] is the midprice in
    currency after event i. One env step consumes one event.
    """

    def __init__(self, times, etypes: list[EventType], prices, cfg: MmConfig,
                 tick: float, seed: int):
        self.times = np.asarray(times, dtype=float)
        self.etypes = list(etypes)
        self.prices = np.asarray(prices, dtype=float)
        if not (len(self.times) == len(self.etypes) == len(self.prices)):
            raise ValueError("stream arrays must align")
        self.cfg = cfg
        self.tick = tick
        self.seed = seed
        self.reset()

    def __len__(self):
        return len(self.times)

    def reset(self) -> tuple[float, int]:
        self.rng = np.random.default_rng(self.seed)
        self.i = 0
        v0 = float(self.prices[0])
        self.state = MmState(v=v0, q=0, cash=0.0, t=float(self.times[0]))
        self.w0 = self.state.wealth
        self.fills: list[FillRecord] = []
        self.penalty_total = 0.0
        return (self.state.v, self.state.q)

    @property
    def done(self) -> bool:
        return self.i >= len(self.times) - 1

    def legal(self) -> tuple[int, ...]:
        return legal_actions(self.state.q, self.cfg.q_max)

    def step(self, action: int) -> tuple[tuple[float, int], float, bool, dict]:
        """Apply an action, consume the next event, return (obs, reward, done, info)."""
        st, cfg = self.state, self.cfg
        if self.done:
            raise RuntimeError("event stream exhausted")
        if action not in self.legal():
            raise ValueError(f"illegal action {action} at inventory {st.q}")

        # quote placement; the inventory cap masks the breaching side
        st.bid_on = action in (0, 1) and st.q < cfg.q_max
        st.ask_on = action in (-1, 0) and st.q > -cfg.q_max
        bid_px = st.v - self.tick / 2.0
        ask_px = st.v + self.tick / 2.0

        self.i += 1
        et = self.etypes[self.i]
        t_new = float(self.times[self.i])
        dt = t_new - st.t
        w_before = st.wealth

        fill: FillRecord | None = None
        if st.ask_on and et is EventType.MB_UP:
            fill = FillRecord(t_new, "ask", "adverse", et, ask_px)
        elif st.ask_on and et is EventType.MB_0:
            if self.rng.uniform() < cfg.fill_prob:
                fill = FillRecord(t_new, "ask", "non-adverse", et, ask_px)
        elif st.bid_on and et is EventType.MS_DOWN:
            fill = FillRecord(t_new, "bid", "adverse", et, bid_px)
        elif st.bid_on and et is EventType.MS_0:
            if self.rng.uniform() < cfg.fill_prob:
                fill = FillRecord(t_new, "bid", "non-adverse", et, bid_px)

        if fill is not None:
            dq = cfg.trade_size if fill.side == "bid" else -cfg.trade_size
            st.q += dq
            st.cash -= dq * fill.price
            self.fills.append(fill)

        st.v = float(self.prices[self.i])
        st.t = t_new

        penalty = cfg.inv_penalty * abs(st.q) * dt
        self.penalty_total += penalty
        reward = (st.wealth - w_before) - penalty
        info = {"fill": fill, "event": et, "dt": dt}
        return (st.v, st.q), reward, self.done, info


def run_episode(policy, env: MarketMakingEnv) -> MmEpisode:
    """Roll a policy (callable obs, legal -> action) through a full stream."""
    obs = env.reset()
    rewards, qs, cs, vs = [], [], [], []
    while not env.done:
        action = policy(obs, env.legal())
        obs, r, done, _ = env.step(action)
        rewards.append(r)
        qs.append(env.state.q)
        cs.append(env.state.cash)
        vs.append(env.state.v)
    return MmEpisode(
        rewards=np.asarray(rewards),
        fills=list(env.fills),
        q_trace=np.asarray(qs),
        cash_trace=np.asarray(cs),
        v_trace=np.asarray(vs),
        terminal_wealth=env.state.wealth,
        initial_wealth=env.w0,
        penalty_total=env.penalty_total,
    )


def fill_ratio(episodes: list[MmEpisode]) -> float | None:
    """Total adverse fills / total non-adverse fills; None if no non-adverse."""
    adverse = sum(e.adverse_count for e in episodes)
    nonadverse = sum(e.nonadverse_count for e in episodes)
    if nonadverse == 0:
        return None
    return adverse / nonadverse


def fill_counts_by_trigger(episodes: list[MmEpisode]) -> dict[str, int]:
    counts = {et.label: 0 for et in sorted(_ADVERSE_TRIGGERS | _NONADVERSE_TRIGGERS,
                                           key=lambda e: e.value)}
    for ep in episodes:
        for f in ep.fills:
            counts[f.trigger.label] += 1
    return counts


def write_summary_json(episodes: list[MmEpisode], path: str | Path) -> None:
    ratio = fill_ratio(episodes)
    payload = {
        "episodes": len(episodes),
        "terminal_rewards": [e.terminal_reward for e in episodes],
        "fill_counts_by_trigger": fill_counts_by_trigger(episodes),
        "adverse_nonadverse_ratio": ratio,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))
