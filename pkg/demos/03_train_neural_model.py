"""Fit the continuous-time LSTM intensity model to a classified event stream.

Short run (a few epochs, small hidden size) on the bundled fixture so the
script finishes in about a minute; raise epochs/hidden for a real fit.
"""

from pathlib import Path

import numpy as np

from lobhawk import ctlstm
from lobhawk.events import build_stream, parse_lobster

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "synthetic"

messages, books, _, _ = parse_lobster(FIXTURE / "message.csv",
                                      FIXTURE / "orderbook.csv")
events, _, _ = build_stream(messages, books)
times = np.array([e.time for e in events])
types = np.array([e.etype.value - 1 for e in events])
mkts = np.array([e.market_state for e in events])
print(f"{len(events)} events, {len(np.unique(types))} types, "
      f"{len(np.unique(mkts))} market states")

cfg = ctlstm.CtLstmConfig(m=12, hidden=16, n_states=3, epochs=3,
                          batch=64, window=50, lr=0.002, seed=0)
result = ctlstm.train(cfg, times, types, mkts, verbose=True)

print(f"\nbest epoch {result.best_epoch}")
print(f"held-out NLL {result.test_nll:.4f} nats/event, "
      f"next-type accuracy {result.test_accuracy:.4f}")
majority = np.bincount(types).max() / len(types)
print(f"(majority-class frequency: {majority:.4f})")

out = Path("/tmp/lobhawk_demo_model")
ctlstm.save_model(result.params, cfg, out,
                  metrics={"test_nll": result.test_nll})
print(f"model saved to {out}")
