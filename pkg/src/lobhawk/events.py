"""LOB event taxonomy, LOBSTER parsing, and event-stream construction.

Twelve event types: limit/market/cancel orders on each side, split by
whether the event moved the midprice up, down, or not at all. Classification
works off the midprice change between the book snapshots surrounding each
message, so the taxonomy is a total function of (message, book before,
book after) up to an explicit discard set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "EventType",
    "LobEvent",
    "BookSnapshot",
    "MarketStateConfig",
    "ParseError",
    "parse_lobster",
    "classify",
    "market_state",
    "build_stream",
    "count_events",
    "write_stream",
    "read_stream",
    "write_counts_json",
    "UP_TYPES",
    "DOWN_TYPES",
    "NEUTRAL_TYPES",
]


class ParseError(ValueError):
    """Raised for structurally broken input files."""


class EventType(Enum):
    """The 12 LOB event types, coded 1-12 in canonical table order."""

    LB_UP = 1    # aggressive limit buy, midprice up
    LS_DOWN = 2  # aggressive limit sell, midprice down
    MB_UP = 3    # aggressive market buy, midprice up
    MS_DOWN = 4  # aggressive market sell, midprice down
    BC_DOWN = 5  # aggressive buy-side cancel, midprice down
    SC_UP = 6    # aggressive sell-side cancel, midprice up
    LB_0 = 7     # non-aggressive limit buy
    LS_0 = 8     # non-aggressive limit sell
    MB_0 = 9     # non-aggressive market buy
    MS_0 = 10    # non-aggressive market sell
    BC_0 = 11    # non-aggressive buy-side cancel
    SC_0 = 12    # non-aggressive sell-side cancel

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def direction(self) -> str:
        """Midprice direction: 'up', 'down', or 'none'."""
        if self in UP_TYPES:
            return "up"
        if self in DOWN_TYPES:
            return "down"
        return "none"

    @property
    def category(self) -> str:
        """Order-flow category: 'limit', 'market', or 'cancel'."""
        return _CATEGORY[self]

    @property
    def side(self) -> str:
        """'buy' or 'sell' (the side of the order, not the resting quote)."""
        return _SIDE[self]

    @property
    def aggressive(self) -> bool:
        return self.direction != "none"


_LABELS = {
    EventType.LB_UP: "LB+", EventType.LS_DOWN: "LS-",
    EventType.MB_UP: "MB+", EventType.MS_DOWN: "MS-",
    EventType.BC_DOWN: "BC-", EventType.SC_UP: "SC+",
    EventType.LB_0: "LB0", EventType.LS_0: "LS0",
    EventType.MB_0: "MB0", EventType.MS_0: "MS0",
    EventType.BC_0: "BC0", EventType.SC_0: "SC0",
}

_CATEGORY = {
    EventType.LB_UP: "limit", EventType.LS_DOWN: "limit",
    EventType.LB_0: "limit", EventType.LS_0: "limit",
    EventType.MB_UP: "market", EventType.MS_DOWN: "market",
    EventType.MB_0: "market", EventType.MS_0: "market",
    EventType.BC_DOWN: "cancel", EventType.SC_UP: "cancel",
    EventType.BC_0: "cancel", EventType.SC_0: "cancel",
}

_SIDE = {
    EventType.LB_UP: "buy", EventType.LB_0: "buy",
    EventType.LS_DOWN: "sell", EventType.LS_0: "sell",
    EventType.MB_UP: "buy", EventType.MB_0: "buy",
    EventType.MS_DOWN: "sell", EventType.MS_0: "sell",
    EventType.BC_DOWN: "buy", EventType.BC_0: "buy",
    EventType.SC_UP: "sell", EventType.SC_0: "sell",
}

UP_TYPES = frozenset({EventType.MB_UP, EventType.LB_UP, EventType.SC_UP})
DOWN_TYPES = frozenset({EventType.MS_DOWN, EventType.LS_DOWN, EventType.BC_DOWN})
NEUTRAL_TYPES = frozenset(
    {EventType.LB_0, EventType.LS_0, EventType.MB_0, EventType.MS_0,
     EventType.BC_0, EventType.SC_0}
)

# (category, side, mid direction) -> event type; missing keys are discards
# (e.g. a buy-side cancel cannot push the midprice up).
_CLASSIFY_TABLE = {
    ("limit", "buy", "up"): EventType.LB_UP,
    ("limit", "buy", "none"): EventType.LB_0,
    ("limit", "sell", "down"): EventType.LS_DOWN,
    ("limit", "sell", "none"): EventType.LS_0,
    ("market", "buy", "up"): EventType.MB_UP,
    ("market", "buy", "none"): EventType.MB_0,
    ("market", "sell", "down"): EventType.MS_DOWN,
    ("market", "sell", "none"): EventType.MS_0,
    ("cancel", "buy", "down"): EventType.BC_DOWN,
    ("cancel", "buy", "none"): EventType.BC_0,
    ("cancel", "sell", "up"): EventType.SC_UP,
    ("cancel", "sell", "none"): EventType.SC_0,
}


@dataclass(frozen=True)
class BookSnapshot:
    """Best-level book state in integer ticks/shares."""

    best_bid_price: int
    best_ask_price: int
    best_bid_vol: int
    best_ask_vol: int

    def __post_init__(self):
        if self.best_ask_price <= self.best_bid_price:
            raise ValueError(
                f"crossed book: ask {self.best_ask_price} <= bid {self.best_bid_price}"
            )
        if self.best_bid_vol < 0 or self.best_ask_vol < 0:
            raise ValueError("negative book volume")

    @property
    def mid_halfticks(self) -> int:
        """Midprice in half-tick units (always an integer)."""
        return self.best_bid_price + self.best_ask_price


@dataclass(frozen=True)
class MarketStateConfig:
    theta: float = 0.4

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0,1), got {self.theta}")


@dataclass(frozen=True)
class LobEvent:
    """One classified LOB event."""

    seq: int
    time: float           # seconds after midnight
    etype: EventType
    price: int            # event price, integer ticks
    size: int             # shares
    market_state: int     # 0 / 1 / 2


@dataclass(frozen=True)
class RawMessage:
    time: float
    code: int        # LOBSTER message type
    order_id: int
    size: int
    price: int       # integer ticks
    direction: int   # +1 buy limit order, -1 sell limit order


@dataclass
class DiscardCounter:
    """Tally of messages rejected by the parser/classifier, by reason."""

    counts: dict[str, int] = field(default_factory=dict)

    def bump(self, reason: str) -> None:
        self.counts[reason] = self.counts.get(reason, 0) + 1

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def market_state(snapshot: BookSnapshot, cfg: MarketStateConfig = MarketStateConfig()) -> int:
    """Three-way volume-imbalance market state from the best-level book.

    I = (v_bid - v_ask)/(v_bid + v_ask); state 0 if I < -theta, 1 if
    |I| <= theta, 2 if I > theta.
    """
    vb, va = snapshot.best_bid_vol, snapshot.best_ask_vol
    if vb + va == 0:
        raise ValueError("empty book: both best-level volumes are zero")
    imbalance = (vb - va) / (vb + va)
    if imbalance < -cfg.theta:
        return 0
    if imbalance > cfg.theta:
        return 2
    return 1


def infer_tick(prices) -> int:
    """Smallest positive gap among quoted prices (raw integer price units)."""
    uniq = np.unique(np.asarray(prices, dtype=np.int64))
    if len(uniq) < 2:
        raise ParseError("cannot infer tick size from fewer than two distinct prices")
    return int(np.diff(uniq).min())


def parse_lobster(
    message_file: str | Path,
    orderbook_file: str | Path,
    tick: int | None = None,
) -> tuple[list[RawMessage], list[BookSnapshot], DiscardCounter, int]:
    """Read an aligned LOBSTER message/orderbook CSV pair.

    Message columns: time, type, order_id, size, price, direction.
    Orderbook columns: ask_p1, ask_v1, bid_p1, bid_v1, [deeper levels...];
    row i of the book is the state after message i. Prices arrive in
    1e-4-dollar integers and are converted to integer ticks; tick size is
    inferred from the data unless given.

    Returns (messages, snapshots, discards, tick). Rows with unknown type
    codes are kept in the message list (classification discards them);
    malformed rows are dropped and counted with their line number.
    """
    message_file, orderbook_file = Path(message_file), Path(orderbook_file)
    discards = DiscardCounter()

    msg_rows: list[tuple[float, int, int, int, int, int]] = []
    bad_msg_lines: list[int] = []
    with message_file.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                t = float(row[0])
                code, oid, size, px, direction = (int(float(v)) for v in row[1:6])
            except (ValueError, IndexError):
                bad_msg_lines.append(lineno)
                continue
            msg_rows.append((t, code, oid, size, px, direction))

    book_rows: list[tuple[int, int, int, int]] = []
    bad_book_lines: list[int] = []
    with orderbook_file.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                ask_p, ask_v, bid_p, bid_v = (int(float(v)) for v in row[:4])
            except (ValueError, IndexError):
                bad_book_lines.append(lineno)
                continue
            book_rows.append((ask_p, ask_v, bid_p, bid_v))

    for lineno in bad_msg_lines:
        discards.bump(f"malformed message row (line {lineno})")
    for lineno in bad_book_lines:
        discards.bump(f"malformed orderbook row (line {lineno})")

    if len(msg_rows) != len(book_rows):
        raise ParseError(
            f"row count mismatch: {len(msg_rows)} messages vs {len(book_rows)} book rows"
        )
    if not msg_rows:
        raise ParseError("empty input files")

    if tick is None:
        all_prices = [r[4] for r in msg_rows] + [
            p for (ap, _, bp, _) in book_rows for p in (ap, bp)
        ]
        tick = infer_tick(all_prices)

    messages = [
        RawMessage(t, code, oid, size, px // tick, direction)
        for (t, code, oid, size, px, direction) in msg_rows
    ]
    snapshots = [
        BookSnapshot(bp // tick, ap // tick, bv, av)
        for (ap, av, bp, bv) in book_rows
    ]
    return messages, snapshots, discards, tick


def classify(
    msg: RawMessage, before: BookSnapshot, after: BookSnapshot
) -> EventType | None:
    """Map one message plus surrounding book states to an event type.

    Returns None for message codes outside {1,2,3,4} (hidden executions,
    crosses, halts) and for (category, side, direction) combinations with
    no defined type. Total function: never raises on valid snapshots.
    """
    if msg.code == 1:
        category = "limit"
        side = "buy" if msg.direction == 1 else "sell"
    elif msg.code in (2, 3):
        category = "cancel"
        side = "buy" if msg.direction == 1 else "sell"
    elif msg.code == 4:
        # Execution direction refers to the resting limit order; the
        # aggressing market order is on the opposite side.
        category = "market"
        side = "buy" if msg.direction == -1 else "sell"
    else:
        return None

    dmid = after.mid_halfticks - before.mid_halfticks
    direction = "up" if dmid > 0 else ("down" if dmid < 0 else "none")
    return _CLASSIFY_TABLE.get((category, side, direction))


def build_stream(
    messages: list[RawMessage],
    snapshots: list[BookSnapshot],
    cfg: MarketStateConfig = MarketStateConfig(),
) -> tuple[list[LobEvent], np.ndarray, DiscardCounter]:
    """Classify an aligned message/book sequence into a canonical stream.

    Row 0 has no prior book state and is skipped. Returns the events, the
    aligned midprices in half-ticks (after each kept event), and the
    discard tally. Timestamp ties keep file order via seq.
    """
    discards = DiscardCounter()
    events: list[LobEvent] = []
    mids: list[int] = []
    seq = 0
    for i in range(1, len(messages)):
        msg, before, after = messages[i], snapshots[i - 1], snapshots[i]
        if msg.code not in (1, 2, 3, 4):
            discards.bump(f"message code {msg.code}")
            continue
        etype = classify(msg, before, after)
        if etype is None:
            discards.bump("undefined (category, side, direction) combination")
            continue
        events.append(
            LobEvent(
                seq=seq,
                time=msg.time,
                etype=etype,
                price=msg.price,
                size=msg.size,
                market_state=market_state(before, cfg),
            )
        )
        mids.append(after.mid_halfticks)
        seq += 1
    return events, np.asarray(mids, dtype=np.int64), discards


def count_events(stream: list[LobEvent]) -> tuple[dict[EventType, int], dict[EventType, float]]:
    """Per-type counts and conditional probabilities (sum to 1)."""
    if not stream:
        raise ValueError("empty event stream")
    counts = {et: 0 for et in EventType}
    for ev in stream:
        counts[ev.etype] += 1
    total = len(stream)
    probs = {et: counts[et] / total for et in EventType}
    return counts, probs


def write_stream(events: list[LobEvent], path: str | Path) -> None:
    """Canonical on-disk format: seq,time,type-code,price,size,market-state."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for ev in events:
            w.writerow(
                [ev.seq, f"{ev.time:.9f}", ev.etype.value, ev.price, ev.size, ev.market_state]
            )


def read_stream(path: str | Path) -> list[LobEvent]:
    events = []
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            events.append(
                LobEvent(
                    seq=int(row[0]),
                    time=float(row[1]),
                    etype=EventType(int(row[2])),
                    price=int(row[3]),
                    size=int(row[4]),
                    market_state=int(row[5]),
                )
            )
    return events


def write_counts_json(
    counts: dict[EventType, int],
    probs: dict[EventType, float],
    discards: DiscardCounter,
    path: str | Path,
) -> None:
    payload = {
        "counts": {et.label: counts[et] for et in EventType},
        "probabilities": {et.label: probs[et] for et in EventType},
        "discards": discards.counts,
        "total": sum(counts.values()),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))
