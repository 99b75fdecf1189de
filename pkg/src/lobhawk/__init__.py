"""Event-driven limit-order-book modeling toolkit.

Classifies LOB messages into 12 event types, fits classical and neural
(continuous-time LSTM) multivariate Hawkes intensity models, simulates
event streams and event-driven midprice paths, and backtests a soft
actor-critic market-making strategy with event-based fill logic.
"""

from . import autodiff, ctlstm, event_sim, events, hawkes, midprice, mm_env, report, sac

__version__ = "0.1.0"
