"""CSV and VCD export of signal traces."""

from __future__ import annotations

import csv
import io

from .controller import DriveState, Sample, SignalTrace

CSV_HEADER = ("t_ms", "state", "run", "eject")

_STATE_BITS = 3
_ID_RUN, _ID_EJECT, _ID_STATE = "!", '"', "#"


def to_csv(trace: SignalTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in trace.samples:
        w.writerow((s.t_ms, s.state.name, s.run, s.eject))
    return buf.getvalue()


def from_csv(text: str) -> SignalTrace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("missing t_ms,state,run,eject header")
    return SignalTrace(Sample(int(t), DriveState[st], int(r), int(e)) for t, st, r, e in rows[1:])


def _state_value(state: DriveState) -> str:
    return "b" + format(state.value, f"0{_STATE_BITS}b") + " " + _ID_STATE


def to_vcd(trace: SignalTrace) -> str:
    """Value change dump with 1-bit ``run``/``eject`` and a 3-bit ``state``.

    No ``$date`` section is written so repeated runs are byte-identical.
    """
    encoding = " ".join(f"{s.value}={s.name}" for s in DriveState)
    lines = [
        "$version tagdrive $end",
        "$timescale 1 ms $end",
        "$scope module drive $end",
        f"$var wire 1 {_ID_RUN} run $end",
        f"$var wire 1 {_ID_EJECT} eject $end",
        f"$var wire {_STATE_BITS} {_ID_STATE} state $end",
        "$upscope $end",
        f"$comment state encoding: {encoding} $end",
        "$enddefinitions $end",
    ]
    prev = None
    for s in trace.samples:
        lines.append(f"#{s.t_ms}")
        if prev is None:
            lines += ["$dumpvars", f"{s.run}{_ID_RUN}", f"{s.eject}{_ID_EJECT}", _state_value(s.state), "$end"]
        else:
            if s.run != prev.run:
                lines.append(f"{s.run}{_ID_RUN}")
            if s.eject != prev.eject:
                lines.append(f"{s.eject}{_ID_EJECT}")
            if s.state is not prev.state:
                lines.append(_state_value(s.state))
        prev = s
    return "\n".join(lines) + "\n"


def parse_vcd(text: str) -> list[tuple[int, int, int, int]]:
    """Read back (t, run, eject, state) rows from a file written by :func:`to_vcd`."""
    vals = {}
    rows = []
    t = None
    ids = {_ID_RUN: "run", _ID_EJECT: "eject", _ID_STATE: "state"}
    body = text.split("$enddefinitions $end", 1)[1]
    for tok in body.split("\n"):
        tok = tok.strip()
        if not tok or tok in ("$dumpvars", "$end"):
            continue
        if tok.startswith("#"):
            if t is not None:
                rows.append((t, vals["run"], vals["eject"], vals["state"]))
            t = int(tok[1:])
        elif tok.startswith("b"):
            bits, ident = tok[1:].split()
            vals[ids[ident]] = int(bits, 2)
        else:
            vals[ids[tok[1:]]] = int(tok[0])
    if t is not None:
        rows.append((t, vals["run"], vals["eject"], vals["state"]))
    return rows
