"""Ogata-thinning simulation of LOB event streams from intensity dynamics.

Works against a small dynamics protocol (initial state, intensity vector at
an elapsed offset, state advance on an event) so the fitted CT-LSTM and
frozen homogeneous intensities share one sampler. Type selection on
acceptance is proportional to the per-type intensities.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ctlstm
from .ctlstm import CtLstmConfig, CtLstmState

__all__ = ["SimConfig", "SimRun", "CtLstmDynamics", "FrozenDynamics",
           "simulate_stream", "run_many", "count_report", "fit_state_markov",
           "write_sim_stream"]


@dataclass(frozen=True)
class SimConfig:
    runs: int = 200
    events_per_run: int = 1000
    horizon: float | None = None      # wall-clock cap; None = event-count only
    seed: int = 0
    safety: float = 2.0               # dominating-bound multiplier
    grid_points: int = 16
    max_violations: int = 1000
    state_mode: str = "fixed"         # 'fixed' (balanced) or 'markov'

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs >= 1 required")
        if self.safety <= 1.0:
            raise ValueError("safety factor must exceed 1")


class CtLstmDynamics:
    """Fitted neural model as thinning dynamics."""

    def __init__(self, params, cfg: CtLstmConfig):
        self.params = params
        self.cfg = cfg
        self.m = cfg.m

    def initial(self):
        return CtLstmState.initial(self.cfg)

    def intensity(self, state, offset: float) -> np.ndarray:
        return ctlstm.intensities(self.params, state, offset)

    def advance(self, state, etype: int, mkt: int, dt: float):
        return ctlstm.step(self.params, state, etype, mkt, dt, self.cfg)


class FrozenDynamics:
    """Constant intensity vector; the homogeneous-Poisson test harness."""

    def __init__(self, rates):
        self.rates = np.asarray(rates, dtype=float)
        self.m = len(self.rates)

    def initial(self):
        return None

    def intensity(self, state, offset: float) -> np.ndarray:
        return self.rates

    def advance(self, state, etype, mkt, dt):
        return state


@dataclass
class SimRun:
    times: np.ndarray
    types: np.ndarray                 # 0-based type indices
    mkt_states: np.ndarray
    bound_violations: int = 0

    def counts(self, m: int) -> np.ndarray:
        return np.bincount(self.types, minlength=m)


def fit_state_markov(mkt_states) -> np.ndarray:
    """Row-stochastic 3x3 transition matrix from an observed state sequence."""
    mkt_states = np.asarray(mkt_states, dtype=int)
    T = np.zeros((3, 3))
    for a, b in zip(mkt_states[:-1], mkt_states[1:]):
        T[a, b] += 1
    rows = T.sum(axis=1, keepdims=True)
    uniform = np.full(3, 1.0 / 3)
    return np.where(rows > 0, T / np.where(rows == 0, 1, rows), uniform)


def _bound(dyn, state, cfg: SimConfig) -> float:
    """Grid-max dominating rate times the safety factor.

    Neural intensities are not monotone in the elapsed offset, so the bound
    scans a grid out to several expected inter-arrival times plus the
    long-offset asymptote.
    """
    lam0 = float(dyn.intensity(state, 0.0).sum())
    span = 10.0 / max(lam0, 1e-9)
    best = lam0
    for u in np.linspace(0.0, span, cfg.grid_points)[1:]:
        best = max(best, float(dyn.intensity(state, u).sum()))
    best = max(best, float(dyn.intensity(state, 1e6).sum()))
    return cfg.safety * best


def simulate_stream(dyn, cfg: SimConfig, seed: int,
                    state_markov: np.ndarray | None = None) -> SimRun:
    """One thinning run; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    state = dyn.initial()
    t = 0.0
    mkt = 1
    times, types, mkts = [], [], []
    violations = 0
    while len(times) < cfg.events_per_run:
        bound = _bound(dyn, state, cfg)
        offset = 0.0
        consecutive = 0
        while True:
            offset += rng.exponential(1.0 / bound)
            if cfg.horizon is not None and t + offset > cfg.horizon:
                return SimRun(np.asarray(times), np.asarray(types, dtype=int),
                              np.asarray(mkts, dtype=int), violations)
            lam = dyn.intensity(state, offset)
            total = float(lam.sum())
            if total > bound:
                violations += 1
                consecutive += 1
                if consecutive >= cfg.max_violations:
                    raise RuntimeError(
                        f"{consecutive} consecutive dominating-bound violations; "
                        "model intensity is pathological"
                    )
                bound *= 2.0
                continue
            if rng.uniform() <= total / bound:
                j = int(rng.choice(dyn.m, p=lam / total))
                t += offset
                if cfg.state_mode == "markov":
                    if state_markov is None:
                        raise ValueError("state_mode='markov' needs a transition matrix")
                    mkt = int(rng.choice(3, p=state_markov[mkt]))
                times.append(t)
                types.append(j)
                mkts.append(mkt)
                state = dyn.advance(state, j, mkt, offset)
                break
    return SimRun(np.asarray(times), np.asarray(types, dtype=int),
                  np.asarray(mkts, dtype=int), violations)


def run_many(dyn, cfg: SimConfig, state_markov: np.ndarray | None = None) -> list[SimRun]:
    """Independent runs with per-run derived seeds."""
    root = np.random.SeedSequence(cfg.seed)
    seeds = [int(s.generate_state(1)[0]) for s in root.spawn(cfg.runs)]
    return [simulate_stream(dyn, cfg, s, state_markov) for s in seeds]


def count_report(runs: list[SimRun], m: int) -> tuple[np.ndarray, np.ndarray]:
    """(pooled counts over all runs, per-run counts matrix)."""
    if not runs:
        raise ValueError("no completed runs")
    per_run = np.stack([r.counts(m) for r in runs])
    return per_run.sum(axis=0), per_run


def write_sim_stream(run: SimRun, path: str | Path) -> None:
    """Canonical stream CSV minus price/size: seq,time,type-code,market-state."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for i, (t, j, s) in enumerate(zip(run.times, run.types, run.mkt_states)):
            w.writerow([i, f"{t:.9f}", int(j) + 1, int(s)])


def write_counts(pooled: np.ndarray, per_run: np.ndarray, labels: list[str],
                 json_path: str | Path, csv_path: str | Path | None = None) -> None:
    payload = {"pooled": {lab: int(c) for lab, c in zip(labels, pooled)},
               "runs": per_run.shape[0]}
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True))
    if csv_path is not None:
        with Path(csv_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run"] + labels)
            for i, row in enumerate(per_run):
                w.writerow([i] + [int(c) for c in row])
