"""Time series and summary numbers over a revision history.

The two CSV layouts are ``mg_growth.csv`` and
``agent_history.csv``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence, Union

from .devfile import DevFile, count_normalized_lines, count_raw_lines, parse_text
from .ledger import (
    ADMIN,
    EventKind,
    LedgerError,
    MarketEvent,
    MarketRules,
    apply_event,
    ledger_from_devfile,
)

GROWTH_HEADER = ("commit_index", "line_count")


class ZeroElapsed(ValueError):
    pass


class ReplayFailure(ValueError):
    pass


@dataclass(frozen=True)
class Revision:
    text: str
    time: datetime | None = None
    committer: str | None = None

    @property
    def line_count(self) -> int:
        return count_raw_lines(self.text)


RevisionLike = Union[Revision, str, DevFile]


def _text(rev: RevisionLike) -> str:
    if isinstance(rev, Revision):
        return rev.text
    if isinstance(rev, DevFile):
        return rev.source
    return rev


def growth_series(revisions: Iterable[RevisionLike]) -> list[tuple[int, int]]:
    """(commit_index, raw line count) per revision; dips are kept as-is."""
    return [(i, count_raw_lines(_text(r))) for i, r in enumerate(revisions)]


def write_csv(header: Sequence[str], rows: Iterable[Sequence], fh=None) -> str:
    buf = fh or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue() if fh is None else ""


def growth_csv(revisions: Iterable[RevisionLike]) -> str:
    return write_csv(GROWTH_HEADER, growth_series(revisions))


def _is_reset(ev: MarketEvent) -> bool:
    return ev.kind is EventKind.ADMIN_ADJUST and "reset" in ev.note.lower()


def agent_history(
    events: Sequence[MarketEvent],
    revisions: Sequence[Revision],
    agents: Sequence[str] | None = None,
    rules: MarketRules | None = None,
    reset_columns: bool | None = None,
) -> tuple[list[str], list[list[int]]]:
    """Replay *events* against the first revision's ledger, sampling after each revision.

    An event belongs to the first revision whose time is >= the event time.
    ``reset_columns`` adds ``cum_collected_<agent>_reset`` series re-based at
    every AdminAdjust whose reason mentions "reset"; by default they appear
    only when such an event exists.
    """
    if not revisions:
        return [], []
    if any(r.time is None for r in revisions):
        raise ValueError("agent_history needs timestamped revisions")
    state = ledger_from_devfile(parse_text(revisions[0].text), rules)
    state = _unclocked(state)
    if agents is None:
        agents = list(state.balances)
    if reset_columns is None:
        reset_columns = any(_is_reset(e) for e in events)

    header = ["commit_index"]
    for prefix in ("balance", "cum_collected", "cum_locks", "cum_bounties_made"):
        header += [f"{prefix}_{a.lower()}" for a in agents]
    if reset_columns:
        header += [f"cum_collected_{a.lower()}_reset" for a in agents]

    collected = dict.fromkeys(agents, 0)
    locks = dict.fromkeys(agents, 0)
    placed = dict.fromkeys(agents, 0)
    base = dict.fromkeys(agents, 0)
    rows = []
    ev_iter = iter(events)
    pending = next(ev_iter, None)
    for idx, rev in enumerate(revisions):
        while pending is not None and pending.time <= rev.time:
            ev = pending
            try:
                state = apply_event(state, ev)
            except LedgerError as exc:
                raise ReplayFailure(f"event {ev.to_line()!r}: {exc}") from None
            if ev.kind is EventKind.COLLECT and ev.agent in collected:
                collected[ev.agent] += ev.amount
            elif ev.kind is EventKind.LOCK and ev.agent in locks:
                locks[ev.agent] += 1
            elif ev.kind in (EventKind.PLACE_BOUNTY, EventKind.PLACE_SUB_BOUNTY) and ev.agent in placed:
                placed[ev.agent] += ev.amount
            elif _is_reset(ev) and ev.agent in base:
                base[ev.agent] = collected[ev.agent]
            pending = next(ev_iter, None)
        row = [idx]
        row += [state.balances.get(a, 0) for a in agents]
        row += [collected[a] for a in agents]
        row += [locks[a] for a in agents]
        row += [placed[a] for a in agents]
        if reset_columns:
            row += [collected[a] - base[a] for a in agents]
        rows.append(row)
    if pending is not None:
        raise ReplayFailure(f"event after the last revision: {pending.to_line()!r}")
    return header, rows


def _unclocked(state):
    return dataclasses.replace(state, clock=None)


def agent_history_csv(events, revisions, **kw) -> str:
    header, rows = agent_history(events, revisions, **kw)
    return write_csv(header, rows)


def throughput(revisions: Sequence[Union[int, RevisionLike]], wall_times: Sequence[datetime]) -> float:
    """Normalized lines gained per day between the first and last revision."""
    if len(revisions) < 2 or len(wall_times) != len(revisions):
        raise ValueError("need at least two revisions, each with a time")
    elapsed = (wall_times[-1] - wall_times[0]).total_seconds() / 86400.0
    if elapsed <= 0:
        raise ZeroElapsed("first and last revision share a timestamp")
    return (_normalized(revisions[-1]) - _normalized(revisions[0])) / elapsed


def _normalized(rev) -> int:
    if isinstance(rev, int):
        return rev
    if isinstance(rev, DevFile):
        return rev.normalized_line_count
    return count_normalized_lines(_text(rev))


def round_sig(x: float, digits: int = 3) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def collected_by_agent(events: Iterable[MarketEvent]) -> dict[str, int]:
    out: dict[str, int] = {}
    for ev in events:
        if ev.kind is EventKind.COLLECT and ev.agent != ADMIN:
            out[ev.agent] = out.get(ev.agent, 0) + ev.amount
    return out
