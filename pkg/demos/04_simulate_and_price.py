"""Simulate event streams by thinning and turn them into midprice paths.

Uses frozen per-type intensities (calibrated to the fixture's empirical
rates) so the script is fast; swap in CtLstmDynamics with a trained model
for neural simulation. Jump sizes come from the fixture's empirical
conditional jump distribution.
"""

from pathlib import Path

import numpy as np

from lobhawk import event_sim, midprice
from lobhawk.events import EventType, build_stream, parse_lobster

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "synthetic"

messages, books, _, tick_units = parse_lobster(FIXTURE / "message.csv",
                                               FIXTURE / "orderbook.csv")
events, mids, _ = build_stream(messages, books)
etypes_real = [e.etype for e in events]
real_times = np.array([e.time for e in events])

# empirical per-type rates over the day
duration = real_times[-1] - real_times[0]
rates = np.bincount([e.etype.value - 1 for e in events], minlength=12) / duration
print("empirical rates (events/s):", np.round(rates, 3))

dyn = event_sim.FrozenDynamics(rates)
cfg = event_sim.SimConfig(runs=4, events_per_run=5000, seed=11)
runs = event_sim.run_many(dyn, cfg)
pooled, per_run = event_sim.count_report(runs, m=12)
print("pooled simulated counts:", pooled.astype(int))

jumps = midprice.fit_jumps(etypes_real, mids)
print(f"\njump distribution: {jumps.n_sizes} sizes, "
      f"up sizes {jumps.up_sizes} probs {np.round(jumps.up_probs, 3)}")

tick = tick_units / 10_000.0  # currency per tick
path = midprice.build_path(runs[0].times,
                           [EventType(k + 1) for k in runs[0].types],
                           jumps, v0_ticks=mids[0] / 2.0, tick=tick, seed=0)
stats_sim = midprice.stylized_stats(path.prices_currency)
stats_real = midprice.stylized_stats(mids * tick / 2.0)
print(f"\nper-event volatility  sim {stats_sim.volatility:.3e}  "
      f"real {stats_real.volatility:.3e}")
print(f"Hurst (R/S)           sim {stats_sim.hurst:.3f}  real {stats_real.hurst:.3f}")
print(f"excess kurtosis       sim {stats_sim.excess_kurtosis:.2f}  "
      f"real {stats_real.excess_kurtosis:.2f}")
