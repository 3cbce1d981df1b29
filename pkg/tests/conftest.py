import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shadowrating.ingest import SynthSpec, generate_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SynthSpec(n_rows=600, seed=3, missing_rate=0.05))


@pytest.fixture
def tiny_csv(tmp_path):
    text = (
        "num_a,num_b,cat,sector,rating\n"
        "1.5,10.0,red,wholesale retail trade,Baa2\n"
        ",12.0,blue,\"air transport, passenger\",A1\n"
        "3.0,,,air transport,Caa\n"
    )
    p = tmp_path / "tiny.csv"
    p.write_text(text, encoding="utf-8")
    return p


@pytest.fixture
def tiny_schema():
    from shadowrating.ingest import FeatureSchema

    return FeatureSchema.from_dict({"columns": [
        {"name": "num_a", "kind": "numeric"},
        {"name": "num_b", "kind": "numeric"},
        {"name": "cat", "kind": "categorical"},
        {"name": "sector", "kind": "text"},
        {"name": "rating", "kind": "label"},
    ]})


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
