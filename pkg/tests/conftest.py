import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from robolab.booking import BookingStore
from robolab.config import LabConfig
from robolab.server import LabServer


@pytest.fixture
def lab_server(tmp_path):
    """A running LabServer on ephemeral ports with example + alice users."""
    store = BookingStore()
    store.add_user("alice", "wonderland")
    now = time.time()
    store.reserve("alice", now - 60.0, now + 3600.0)
    store.add_user("carol", "nope")  # carol has no slot
    cfg = LabConfig().without_defects()
    cfg.data_root = str(tmp_path / "data")
    server = LabServer(cfg, store, tcp_port=0, ws_port=0)
    server.start()
    yield server
    server.stop()
