import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tagdrive.model import ActivationRecord, CodeDatabase, Source, VisibleSerial, parse_code  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "golden"

FIG5_CODES = ("0b1000", "0b1001", "0b1010", "0b1011")

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance_report():
    return _acceptance_lines.append


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


def make_db(codes, width, t0=0):
    db = CodeDatabase(width)
    for i, c in enumerate(codes):
        code = parse_code(c, width) if isinstance(c, str) else c
        db = db.insert(code, ActivationRecord(VisibleSerial(f"SER-{i:04d}"), t0, Source.LocalProvision))
    return db


@pytest.fixture
def fig5_db():
    return make_db(FIG5_CODES, 4)
