from tagdrive.controller import DriveState, Sample, SignalTrace
from tagdrive.trace import from_csv, parse_vcd, to_csv, to_vcd

from conftest import GOLDEN

S = DriveState
TRACE = SignalTrace([Sample(0, S.Idle, 0, 0), Sample(5, S.SpinningUp, 0, 0), Sample(9, S.Running, 1, 0),
                     Sample(12, S.Idle, 0, 0), Sample(20, S.SpinningUp, 0, 0), Sample(30, S.Ejecting, 0, 1)])


def test_csv_layout():
    text = to_csv(TRACE)
    lines = text.splitlines()
    assert lines[0] == "t_ms,state,run,eject"
    assert lines[1] == "0,Idle,0,0"
    assert lines[3] == "9,Running,1,0"
    assert text.endswith("\n") and "\r" not in text


def test_csv_round_trip():
    assert from_csv(to_csv(TRACE)) == TRACE


def test_vcd_header_declares_signals():
    text = to_vcd(TRACE)
    assert "$timescale 1 ms $end" in text
    assert "$var wire 1 ! run $end" in text
    assert '$var wire 1 " eject $end' in text
    assert "$var wire 3 # state $end" in text
    assert "$date" not in text


def test_vcd_values_match_samples():
    rows = parse_vcd(to_vcd(TRACE))
    assert rows == [(s.t_ms, s.run, s.eject, s.state.value) for s in TRACE]


def test_golden_vcd_agrees_with_golden_csv():
    trace = from_csv((GOLDEN / "fig5.csv").read_text())
    rows = parse_vcd((GOLDEN / "fig5.vcd").read_text())
    assert rows == [(s.t_ms, s.run, s.eject, s.state.value) for s in trace]
