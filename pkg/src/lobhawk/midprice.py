"""Event-driven midprice paths, jump-size distributions, stylized statistics.

Prices are integer half-ticks internally so the accounting identity
V(t) - V(0) = sum of signed jumps holds exactly; the half-spread conversion
to currency happens only at the reporting boundary.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from .events import EventType, UP_TYPES, DOWN_TYPES

__all__ = ["JumpDistribution", "PricePath", "StylizedStats", "fit_jumps",
           "build_path", "stylized_stats", "hurst_rs"]


@dataclass(frozen=True)
class JumpDistribution:
    """Direction-specific discrete jump-size tables, sizes in half-ticks."""

    up_sizes: np.ndarray
    up_probs: np.ndarray
    down_sizes: np.ndarray
    down_probs: np.ndarray

    def __post_init__(self):
        for sizes, probs in ((self.up_sizes, self.up_probs),
                             (self.down_sizes, self.down_probs)):
            sizes = np.asarray(sizes)
            probs = np.asarray(probs)
            if np.any(sizes <= 0) or np.any(np.diff(sizes) <= 0):
                raise ValueError("jump sizes must be strictly positive and increasing")
            if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("jump probabilities must be positive and sum to 1")

    @property
    def n_sizes(self) -> int:
        return len(set(self.up_sizes.tolist()) | set(self.down_sizes.tolist()))

    def sample(self, direction: str, rng: np.random.Generator) -> int:
        if direction == "up":
            return int(rng.choice(self.up_sizes, p=self.up_probs))
        return int(rng.choice(self.down_sizes, p=self.down_probs))

    def to_json(self, path: str | Path) -> None:
        payload = {
            "version": 1,
            "up": {"sizes": self.up_sizes.tolist(), "probs": self.up_probs.tolist()},
            "down": {"sizes": self.down_sizes.tolist(), "probs": self.down_probs.tolist()},
        }
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "JumpDistribution":
        d = json.loads(Path(path).read_text())
        return cls(
            up_sizes=np.array(d["up"]["sizes"], dtype=int),
            up_probs=np.array(d["up"]["probs"], dtype=float),
            down_sizes=np.array(d["down"]["sizes"], dtype=int),
            down_probs=np.array(d["down"]["probs"], dtype=float),
        )

    @classmethod
    def unit(cls) -> "JumpDistribution":
        """Degenerate one-tick-only distribution (the unit-jump special case)."""
        one = np.array([1]); p = np.array([1.0])
        return cls(one, p, one.copy(), p.copy())


def fit_jumps(etypes: list[EventType], mids_halfticks) -> JumpDistribution:
    """Empirical per-direction jump histograms from a classified stream.

    mids_halfticks[i] is the midprice (half-ticks) after event i; the jump
    attributed to aggressive event i is |mid_i - mid_{i-1}|.
    """
    mids = np.asarray(mids_halfticks, dtype=np.int64)
    if len(etypes) != len(mids):
        raise ValueError("etypes and mids must align")
    ups: dict[int, int] = {}
    downs: dict[int, int] = {}
    for i in range(1, len(etypes)):
        et = etypes[i]
        if et in UP_TYPES:
            j = int(mids[i] - mids[i - 1])
            if j > 0:
                ups[j] = ups.get(j, 0) + 1
        elif et in DOWN_TYPES:
            j = int(mids[i - 1] - mids[i])
            if j > 0:
                downs[j] = downs.get(j, 0) + 1
    if not ups or not downs:
        raise ValueError("need at least one aggressive event in each direction")

    def table(d):
        sizes = np.array(sorted(d), dtype=int)
        counts = np.array([d[s] for s in sizes], dtype=float)
        return sizes, counts / counts.sum()

    us, up = table(ups)
    ds, dp = table(downs)
    return JumpDistribution(us, up, ds, dp)


@dataclass
class PricePath:
    """Event-aligned midprice trajectory; prices in half-ticks."""

    times: np.ndarray
    etypes: list[EventType]
    jumps: np.ndarray          # signed, half-ticks
    prices: np.ndarray         # half-ticks, after each event
    v0: int                    # half-ticks
    tick: float                # currency per tick
    clamped: int = 0           # events clamped at the one-tick floor

    @property
    def prices_currency(self) -> np.ndarray:
        return self.prices * (self.tick / 2.0)

    @property
    def v0_currency(self) -> float:
        return self.v0 * (self.tick / 2.0)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "type", "jump_halfticks", "price"])
            for t, et, j, p in zip(self.times, self.etypes, self.jumps, self.prices):
                w.writerow([f"{t:.9f}", et.value, int(j), f"{p * self.tick / 2.0:.6f}"])


def build_path(times, etypes: list[EventType], jumps: JumpDistribution,
               v0_ticks: float, tick: float, seed: int) -> PricePath:
    """Signed-jump midprice construction over an event stream.

    Up events add a sampled positive jump, down events subtract one,
    neutral events leave the price unchanged. Prices that would drop to or
    below zero are clamped at one tick (clamp count recorded).
    """
    if v0_ticks <= 0 or tick <= 0:
        raise ValueError("v0 and tick must be positive")
    rng = np.random.default_rng(seed)
    times = np.asarray(times, dtype=float)
    v0 = int(round(2 * v0_ticks))
    v = v0
    out_j = np.zeros(len(etypes), dtype=np.int64)
    out_p = np.zeros(len(etypes), dtype=np.int64)
    clamped = 0
    floor = 2  # one tick, in half-ticks
    for i, et in enumerate(etypes):
        if et in UP_TYPES:
            j = jumps.sample("up", rng)
        elif et in DOWN_TYPES:
            j = -jumps.sample("down", rng)
        else:
            j = 0
        if v + j < floor:
            j = floor - v
            clamped += 1
        v += j
        out_j[i] = j
        out_p[i] = v
    return PricePath(times=times, etypes=list(etypes), jumps=out_j, prices=out_p,
                     v0=v0, tick=tick, clamped=clamped)


def hurst_rs(returns) -> float:
    """Rescaled-range Hurst estimate over dyadic windows (8 .. n/4).

    OLS slope of log(R/S) against log(window length), clamped to (0, 1).
    """
    r = np.asarray(returns, dtype=float)
    n = len(r)
    if n < 64:
        raise ValueError("need at least 64 observations")
    sizes = []
    w = 8
    while w <= n // 4:
        sizes.append(w)
        w *= 2
    log_w, log_rs = [], []
    for w in sizes:
        rs_vals = []
        for start in range(0, n - w + 1, w):
            seg = r[start:start + w]
            mu = seg.mean()
            dev = np.cumsum(seg - mu)
            rng_ = dev.max() - dev.min()
            sd = seg.std()
            if sd > 0 and rng_ > 0:
                rs_vals.append(rng_ / sd)
        if rs_vals:
            log_w.append(np.log(w))
            log_rs.append(np.log(np.mean(rs_vals)))
    if len(log_w) < 2:
        raise ValueError("not enough usable windows for the R/S regression")
    slope = np.polyfit(log_w, log_rs, 1)[0]
    return float(min(max(slope, 1e-6), 1.0 - 1e-6))


@dataclass(frozen=True)
class StylizedStats:
    volatility: float
    abs_skewness: float | None
    excess_kurtosis: float | None
    hurst: float | None
    n_returns: int

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({
            "volatility": self.volatility,
            "abs_skewness": self.abs_skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "hurst": self.hurst,
            "n_returns": self.n_returns,
        }, indent=2))


def stylized_stats(prices) -> StylizedStats:
    """Per-event log-return statistics of a (currency or tick) price series."""
    p = np.asarray(prices, dtype=float)
    if len(p) < 64:
        raise ValueError("need at least 64 price points")
    if np.any(p <= 0):
        raise ValueError("prices must be positive")
    r = np.diff(np.log(p))
    vol = float(r.std())
    if vol == 0.0:
        return StylizedStats(0.0, None, None, None, len(r))
    return StylizedStats(
        volatility=vol,
        abs_skewness=float(abs(sstats.skew(r))),
        excess_kurtosis=float(sstats.kurtosis(r, fisher=True)),
        hurst=hurst_rs(r),
        n_returns=len(r),
    )
