"""Classify a LOBSTER message/orderbook day into the 12 canonical event types.

Uses the synthetic fixture bundled with the test suite; point the paths at a
real LOBSTER level-1 CSV pair to run on market data.
"""

from pathlib import Path

from lobhawk.events import EventType, build_stream, count_events, parse_lobster

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "synthetic"

messages, books, parse_discards, tick = parse_lobster(
    FIXTURE / "message.csv", FIXTURE / "orderbook.csv")
print(f"parsed {len(messages)} messages, tick size {tick} (1e-4 currency units)")

events, mids, discards = build_stream(messages, books)
print(f"classified {len(events)} events, discarded {discards.total}:")
for reason, n in sorted(discards.counts.items()):
    print(f"  {n:5d}  {reason}")

counts, probs = count_events(events)
print("\ntype   count   frequency")
for et in EventType:
    print(f"{et.label:5s} {counts[et]:6d}   {probs[et]:.5f}")
print(f"\nfrequencies sum to {sum(probs.values()):.15f}")

aggressive = sum(probs[et] for et in EventType if et.aggressive)
print(f"price-moving (aggressive) event share: {aggressive:.4f}")
