import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lobhawk import hawkes

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "synthetic"


@pytest.fixture(scope="session")
def lobster_fixture():
    """(message_path, orderbook_path, manifest dict) of the bundled fixture."""
    manifest = json.loads((FIXTURE_DIR / "manifest.json").read_text())
    return FIXTURE_DIR / "message.csv", FIXTURE_DIR / "orderbook.csv", manifest


@pytest.fixture(scope="session")
def hawkes3():
    """Stable 3-type linear Hawkes generator used across the oracle tests."""
    return hawkes.HawkesModel(
        base=np.array([0.3, 0.2, 0.25]),
        alpha=np.array([[0.4, 0.1, 0.0], [0.1, 0.3, 0.1], [0.0, 0.2, 0.3]]),
        beta=np.array([[1.5] * 3, [2.0] * 3, [1.0] * 3]),
    )


@pytest.fixture(scope="session")
def fixture_stream(lobster_fixture):
    """Classified stream from the bundled fixture: (events, mids, tick)."""
    from lobhawk.events import parse_lobster, build_stream

    msg, book, _ = lobster_fixture
    messages, books, _, tick = parse_lobster(msg, book)
    events, mids, _ = build_stream(messages, books)
    return events, mids, tick
