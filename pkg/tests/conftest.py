import sys
from pathlib import Path

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent))

from hybridmon.config import parse_config, validate_config  # noqa: E402


def make_config(doc: dict):
    return parse_config(yaml.safe_dump(doc))


def star_doc(n_links=3, *, monitor=None, epochs=10, seed=7, invariants=True, attacks=()):
    """A microcontroller joined to a DGI node by ``n_links`` parallel cords."""
    doc = {
        "seed": seed,
        "epochs": epochs,
        "entities": [{"id": "mic1", "kind": "Microcontroller"}, {"id": "dgi1", "kind": "DgiNode"}],
        "links": [{"id": f"e{i}", "endpoints": ["mic1", "dgi1"]} for i in range(n_links)],
        "channels": [{"id": "c", "source": "mic1", "destination": "dgi1"}],
        "domains": [{"id": "field", "members": ["mic1"]}, {"id": "dgi", "members": ["dgi1"]}],
        "plant": {"balancing": "dgi1"},
        "attacks": list(attacks),
    }
    if invariants:
        doc["invariants"] = [
            {"id": "conservation", "kind": "ConservationSum", "operands": "conservation", "epsilon": 1e-6}
        ]
    if monitor is not None:
        doc["monitor"] = {"overseer": "ovs", **monitor}
    return doc


@pytest.fixture
def star():
    def build(**kw):
        cfg = make_config(star_doc(**kw))
        return cfg, validate_config(cfg)

    return build


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
