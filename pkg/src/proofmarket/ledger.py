"""Bounty/lock economy as a pure state machine.

Every operation takes a ``LedgerState`` and returns a new one; nothing is
mutated in place and no operation reads the wall clock.  Token amounts are
integers.  The admin account (``admin_sink``) funds admin bounties and
receives lock fees, so that::

    sum(balances) + sum(open bounties) + admin_sink == total_supply

holds after every transition.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Iterable, Mapping

from ._time import format_rfc3339, parse_rfc3339
from .devfile import Bounty, Collected, DevFile, Lock, SubBounty

ADMIN = "Admin"
DEFAULT_INITIAL_BALANCE = 500
DEFAULT_TOTAL_SUPPLY = 45_000


class LedgerError(Exception):
    code = "LedgerError"

    def __init__(self, message: str, item: str | None = None, agent: str | None = None):
        super().__init__(message)
        self.item = item
        self.agent = agent


class InsufficientBalance(LedgerError):
    code = "InsufficientBalance"


class NonPositiveAmount(LedgerError):
    code = "NonPositiveAmount"


class AlreadyProved(LedgerError):
    code = "AlreadyProved"


class DuplicateBounty(LedgerError):
    code = "DuplicateBounty"


class LockLimitExceeded(LedgerError):
    code = "LockLimitExceeded"


class AlreadyLocked(LedgerError):
    code = "AlreadyLocked"


class LockTooLong(LedgerError):
    code = "LockTooLong"


class NoBounty(LedgerError):
    code = "NoBounty"


class NotProved(LedgerError):
    code = "NotProved"


class WouldGoNegative(LedgerError):
    code = "WouldGoNegative"


class UnknownAgent(LedgerError):
    code = "UnknownAgent"


class ClockWentBackwards(LedgerError):
    code = "ClockWentBackwards"


class ReplayError(LedgerError):
    code = "ReplayError"


class EventKind(Enum):
    PLACE_BOUNTY = "PlaceBounty"
    PLACE_SUB_BOUNTY = "PlaceSubBounty"
    LOCK = "Lock"
    REMOVE_EXPIRED_LOCK = "RemoveExpiredLock"
    COLLECT = "Collect"
    ADMIN_ADJUST = "AdminAdjust"
    REMOVE_BOUNTY = "RemoveBounty"


@dataclass(frozen=True)
class MarketEvent:
    """One ledger transition.

    ``agent`` is the acting party; for ``Collect`` it is the beneficiary
    (the note records ``prover=<name>``), for ``Lock`` the amount is the fee
    and the note records ``until=<expiry>``.
    """

    time: datetime
    kind: EventKind
    agent: str
    item: str
    amount: int
    note: str = ""

    def to_line(self) -> str:
        parts = [format_rfc3339(self.time), self.kind.value, self.agent, self.item or "-", str(self.amount)]
        if self.note:
            parts.append(self.note)
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "MarketEvent":
        parts = line.strip().split(maxsplit=5)
        if len(parts) < 5:
            raise ValueError(f"event line needs 5 fields: {line!r}")
        ts, kind, agent, item, amount = parts[:5]
        return cls(
            time=parse_rfc3339(ts),
            kind=EventKind(kind),
            agent=agent,
            item="" if item == "-" else item,
            amount=int(amount),
            note=parts[5] if len(parts) > 5 else "",
        )

    def note_field(self, key: str) -> str | None:
        for word in self.note.split():
            if word.startswith(key + "="):
                return word[len(key) + 1:]
        return None


def parse_event_log(text: str) -> list[MarketEvent]:
    events = []
    for line in text.splitlines():
        if line.strip() and not line.lstrip().startswith("#"):
            events.append(MarketEvent.from_line(line))
    return events


def render_event_log(events: Iterable[MarketEvent]) -> str:
    return "".join(e.to_line() + "\n" for e in events)


@dataclass(frozen=True)
class MarketRules:
    lock_cap: int = 10
    lock_fee_percent: int = 10
    lock_duration: timedelta = timedelta(hours=24)
    refund_fee_on_collect: bool = False

    def lock_fee(self, bounty: int) -> int:
        # ceil(bounty * pct / 100) in integers
        return -(-bounty * self.lock_fee_percent // 100)


@dataclass(frozen=True)
class OpenBounty:
    amount: int
    creator: str


@dataclass(frozen=True)
class LockRecord:
    holder: str
    placed: datetime
    expires: datetime
    fee_paid: int

    def live(self, now: datetime) -> bool:
        return self.expires >= now


@dataclass(frozen=True)
class CollectRecord:
    item: str
    agent: str
    amount: int
    time: datetime | None = None
    creator: str | None = None
    prover: str | None = None


@dataclass(frozen=True)
class LedgerState:
    balances: Mapping[str, int]
    open_bounties: Mapping[str, OpenBounty] = field(default_factory=dict)
    locks: Mapping[str, LockRecord] = field(default_factory=dict)
    collected: tuple[CollectRecord, ...] = ()
    clock: datetime | None = None
    total_supply: int = 0
    admin_sink: int = 0
    events: tuple[MarketEvent, ...] = field(default=(), compare=False, repr=False)
    rules: MarketRules = field(default_factory=MarketRules, compare=False)

    def live_locks(self, agent: str, now: datetime | None = None) -> int:
        now = now or self.clock
        return sum(1 for r in self.locks.values() if r.holder == agent and (now is None or r.live(now)))

    @property
    def escrow(self) -> int:
        return sum(b.amount for b in self.open_bounties.values())


def new_ledger(
    agents: Iterable[str] | Mapping[str, int],
    initial_balance: int = DEFAULT_INITIAL_BALANCE,
    total_supply: int = DEFAULT_TOTAL_SUPPLY,
    rules: MarketRules | None = None,
    clock: datetime | None = None,
) -> LedgerState:
    """Fresh economy; agent balances are drawn from *total_supply*."""
    if isinstance(agents, Mapping):
        balances = dict(agents)
    else:
        balances = {a: initial_balance for a in agents}
    for a, v in balances.items():
        if not a or a == ADMIN:
            raise UnknownAgent(f"invalid agent name {a!r}", agent=a)
        if v < 0:
            raise WouldGoNegative(f"negative initial balance for {a}", agent=a)
    return LedgerState(
        balances=balances,
        clock=clock,
        total_supply=total_supply,
        admin_sink=total_supply - sum(balances.values()),
        rules=rules or MarketRules(),
    )


def conservation_residual(state: LedgerState) -> int:
    """Zero when the supply identity holds."""
    return sum(state.balances.values()) + state.escrow + state.admin_sink - state.total_supply


def _tick(state: LedgerState, now: datetime) -> None:
    if state.clock is not None and now < state.clock:
        raise ClockWentBackwards(f"{format_rfc3339(now)} precedes ledger clock {format_rfc3339(state.clock)}")


def _agent(state: LedgerState, agent: str) -> None:
    if agent not in state.balances:
        raise UnknownAgent(f"unknown agent {agent!r}", agent=agent)


def _drop_expired(state: LedgerState, item: str, now: datetime) -> LedgerState:
    rec = state.locks.get(item)
    if rec is None or rec.live(now):
        return state
    locks = dict(state.locks)
    del locks[item]
    ev = MarketEvent(now, EventKind.REMOVE_EXPIRED_LOCK, rec.holder, item, 0)
    return dataclasses.replace(state, locks=locks, events=state.events + (ev,))


def place_bounty(
    state: LedgerState,
    agent: str,
    item: str,
    amount: int,
    now: datetime,
    *,
    proved: bool = False,
    sub: bool = False,
) -> LedgerState:
    """Escrow *amount* on *item*, paid by *agent* (or by the admin account)."""
    _tick(state, now)
    if amount <= 0:
        raise NonPositiveAmount(f"bounty amount must be positive, got {amount}", item, agent)
    if proved:
        raise AlreadyProved(f"{item} is already proved", item, agent)
    if item in state.open_bounties:
        raise DuplicateBounty(f"{item} already carries a bounty", item, agent)
    balances = state.balances
    sink = state.admin_sink
    if agent == ADMIN:
        if sub:
            raise UnknownAgent("sub-bounties are placed by agents", item, agent)
        sink -= amount
    else:
        _agent(state, agent)
        if balances[agent] < amount:
            raise InsufficientBalance(f"{agent} has {balances[agent]}, needs {amount}", item, agent)
        balances = dict(balances)
        balances[agent] -= amount
    bounties = dict(state.open_bounties)
    bounties[item] = OpenBounty(amount, agent)
    kind = EventKind.PLACE_SUB_BOUNTY if sub else EventKind.PLACE_BOUNTY
    ev = MarketEvent(now, kind, agent, item, amount)
    return dataclasses.replace(
        state, balances=balances, open_bounties=bounties, admin_sink=sink, clock=now, events=state.events + (ev,)
    )


def place_sub_bounty(state: LedgerState, agent: str, item: str, amount: int, now: datetime, **kw) -> LedgerState:
    return place_bounty(state, agent, item, amount, now, sub=True, **kw)


def lock(
    state: LedgerState, agent: str, item: str, now: datetime, expires: datetime | None = None
) -> LedgerState:
    """Buy the exclusive claim on *item*'s bounty until *expires* (default now + 24h)."""
    _tick(state, now)
    _agent(state, agent)
    rules = state.rules
    if expires is None:
        expires = now + rules.lock_duration
    if expires <= now or expires - now > rules.lock_duration:
        raise LockTooLong(f"lock expiry {format_rfc3339(expires)} outside (now, now+{rules.lock_duration}]", item, agent)
    bounty = state.open_bounties.get(item)
    if bounty is None:
        raise NoBounty(f"{item} has no open bounty", item, agent)
    state = _drop_expired(state, item, now)
    current = state.locks.get(item)
    if current is not None:
        raise AlreadyLocked(f"{item} is locked by {current.holder}", item, agent)
    if state.live_locks(agent, now) >= rules.lock_cap:
        raise LockLimitExceeded(f"{agent} already holds {rules.lock_cap} live locks", item, agent)
    fee = rules.lock_fee(bounty.amount)
    if state.balances[agent] < fee:
        raise InsufficientBalance(f"{agent} has {state.balances[agent]}, lock fee is {fee}", item, agent)
    balances = dict(state.balances)
    balances[agent] -= fee
    locks = dict(state.locks)
    locks[item] = LockRecord(agent, now, expires, fee)
    ev = MarketEvent(now, EventKind.LOCK, agent, item, fee, f"until={format_rfc3339(expires)}")
    return dataclasses.replace(
        state,
        balances=balances,
        locks=locks,
        admin_sink=state.admin_sink + fee,
        clock=now,
        events=state.events + (ev,),
    )


def expire_locks(state: LedgerState, now: datetime) -> tuple[LedgerState, list[tuple[str, LockRecord]]]:
    """Remove every lock with ``expires < now``.  Fees are not refunded."""
    _tick(state, now)
    removed = sorted((k, r) for k, r in state.locks.items() if not r.live(now))
    if not removed:
        return dataclasses.replace(state, clock=now), []
    locks = {k: r for k, r in state.locks.items() if r.live(now)}
    evs = tuple(MarketEvent(now, EventKind.REMOVE_EXPIRED_LOCK, r.holder, k, 0) for k, r in removed)
    return dataclasses.replace(state, locks=locks, clock=now, events=state.events + evs), removed


def beneficiary(state: LedgerState, prover: str, item: str, now: datetime) -> str:
    rec = state.locks.get(item)
    if rec is not None and rec.live(now):
        return rec.holder
    return prover


def collect(state: LedgerState, prover: str, item: str, now: datetime, *, proved: bool = True) -> LedgerState:
    """Pay out *item*'s bounty.  A live lock holder is paid instead of the prover."""
    _tick(state, now)
    _agent(state, prover)
    bounty = state.open_bounties.get(item)
    if bounty is None:
        raise NoBounty(f"{item} has no open bounty", item, prover)
    if not proved:
        raise NotProved(f"{item} is not proved (no Qed)", item, prover)
    state = _drop_expired(state, item, now)
    payee = beneficiary(state, prover, item, now)
    balances = dict(state.balances)
    balances[payee] += bounty.amount
    sink = state.admin_sink
    locks = dict(state.locks)
    rec = locks.pop(item, None)
    if rec is not None and state.rules.refund_fee_on_collect:
        balances[rec.holder] += rec.fee_paid
        sink -= rec.fee_paid
    bounties = dict(state.open_bounties)
    del bounties[item]
    record = CollectRecord(item, payee, bounty.amount, now, bounty.creator, prover)
    ev = MarketEvent(now, EventKind.COLLECT, payee, item, bounty.amount, f"prover={prover}")
    return dataclasses.replace(
        state,
        balances=balances,
        open_bounties=bounties,
        locks=locks,
        collected=state.collected + (record,),
        admin_sink=sink,
        clock=now,
        events=state.events + (ev,),
    )


def admin_adjust(state: LedgerState, agent: str, delta: int, reason: str, now: datetime) -> LedgerState:
    """Manual balance correction funded by (or returned to) the admin account."""
    _tick(state, now)
    _agent(state, agent)
    if state.balances[agent] + delta < 0:
        raise WouldGoNegative(f"{agent} balance {state.balances[agent]} + {delta} < 0", agent=agent)
    balances = dict(state.balances)
    balances[agent] += delta
    ev = MarketEvent(now, EventKind.ADMIN_ADJUST, agent, "", delta, reason)
    return dataclasses.replace(
        state, balances=balances, admin_sink=state.admin_sink - delta, clock=now, events=state.events + (ev,)
    )


def remove_bounty(state: LedgerState, item: str, now: datetime, reason: str = "") -> LedgerState:
    """Admin withdrawal of an open bounty; escrow goes back to its creator."""
    _tick(state, now)
    bounty = state.open_bounties.get(item)
    if bounty is None:
        raise NoBounty(f"{item} has no open bounty", item)
    balances = state.balances
    sink = state.admin_sink
    if bounty.creator == ADMIN or bounty.creator not in balances:
        sink += bounty.amount
    else:
        balances = dict(balances)
        balances[bounty.creator] += bounty.amount
    bounties = dict(state.open_bounties)
    del bounties[item]
    locks = dict(state.locks)
    locks.pop(item, None)
    ev = MarketEvent(now, EventKind.REMOVE_BOUNTY, ADMIN, item, bounty.amount, reason)
    return dataclasses.replace(
        state,
        balances=balances,
        open_bounties=bounties,
        locks=locks,
        admin_sink=sink,
        clock=now,
        events=state.events + (ev,),
    )


def apply_event(state: LedgerState, event: MarketEvent) -> LedgerState:
    """Re-execute a logged event through the checked operations."""
    k = event.kind
    t = event.time
    if k is EventKind.PLACE_BOUNTY:
        new = place_bounty(state, event.agent, event.item, event.amount, t)
    elif k is EventKind.PLACE_SUB_BOUNTY:
        new = place_sub_bounty(state, event.agent, event.item, event.amount, t)
    elif k is EventKind.LOCK:
        until = event.note_field("until")
        new = lock(state, event.agent, event.item, t, parse_rfc3339(until) if until else None)
        if new.locks[event.item].fee_paid != event.amount:
            raise ReplayError(f"logged lock fee {event.amount} != computed {new.locks[event.item].fee_paid}", event.item)
    elif k is EventKind.REMOVE_EXPIRED_LOCK:
        rec = state.locks.get(event.item)
        if rec is None or rec.live(t):
            raise ReplayError(f"no expired lock on {event.item} at {format_rfc3339(t)}", event.item)
        _tick(state, t)
        new = _drop_expired(state, event.item, t)
        new = dataclasses.replace(new, clock=t)
    elif k is EventKind.COLLECT:
        prover = event.note_field("prover") or event.agent
        new = collect(state, prover, event.item, t)
        if new.collected[-1].agent != event.agent or new.collected[-1].amount != event.amount:
            raise ReplayError(f"collect on {event.item} does not match the log", event.item)
    elif k is EventKind.ADMIN_ADJUST:
        new = admin_adjust(state, event.agent, event.amount, event.note, t)
    elif k is EventKind.REMOVE_BOUNTY:
        new = remove_bounty(state, event.item, t, event.note)
    else:  # pragma: no cover
        raise ReplayError(f"unknown event kind {k}")
    # keep the log verbatim (implicit expiry events are folded into the logged ones)
    return dataclasses.replace(new, events=state.events + (event,))


def replay(events: Iterable[MarketEvent], state: LedgerState) -> LedgerState:
    for ev in events:
        state = apply_event(state, ev)
    return state


@dataclass(frozen=True)
class LifecycleReport:
    placed_total: int = 0
    self_collected: int = 0
    cross_collected: int = 0
    still_open: int = 0
    removed: int = 0

    @property
    def balanced(self) -> bool:
        return self.placed_total == self.self_collected + self.cross_collected + self.still_open + self.removed


def lifecycle_report(events: Iterable[MarketEvent]) -> LifecycleReport:
    """Partition agent-created bounty tokens by how each bounty ended.

    Admin bounties are skipped: only bounties with an agent creator count.
    """
    open_: dict[str, tuple[str, int]] = {}
    placed = self_c = cross = removed = 0
    for ev in events:
        if ev.kind in (EventKind.PLACE_BOUNTY, EventKind.PLACE_SUB_BOUNTY):
            if ev.agent != ADMIN:
                open_[ev.item] = (ev.agent, ev.amount)
                placed += ev.amount
        elif ev.kind is EventKind.COLLECT:
            entry = open_.pop(ev.item, None)
            if entry is not None:
                if entry[0] == ev.agent:
                    self_c += entry[1]
                else:
                    cross += entry[1]
        elif ev.kind is EventKind.REMOVE_BOUNTY:
            entry = open_.pop(ev.item, None)
            if entry is not None:
                removed += entry[1]
    return LifecycleReport(placed, self_c, cross, sum(v for _, v in open_.values()), removed)


def ledger_from_devfile(
    devfile: DevFile, rules: MarketRules | None = None, clock: datetime | None = None
) -> LedgerState:
    """Read the economy out of a development's annotations.

    The file does not record the admin account, so the derived state has
    ``admin_sink = 0`` and a total supply equal to balances plus escrow.
    """
    rules = rules or MarketRules()
    balances: dict[str, int] = {}
    for b in devfile.balances:
        if b.agent in balances:
            raise DuplicateBounty(f"two BALANCE lines for {b.agent}", agent=b.agent)
        balances[b.agent] = b.amount
    bounties: dict[str, OpenBounty] = {}
    locks: dict[str, LockRecord] = {}
    collected: list[CollectRecord] = []
    for item in devfile.items:
        offers = [a for a in item.annotations if isinstance(a, (Bounty, SubBounty))]
        if len(offers) > 1:
            raise DuplicateBounty(f"{item.name} carries {len(offers)} bounty annotations", item.name)
        creator = None
        amount = 0
        if offers:
            o = offers[0]
            creator = ADMIN if isinstance(o, Bounty) else o.creator
            amount = o.amount
        done = item.find(Collected)
        if len(done) > 1:
            raise DuplicateBounty(f"{item.name} collected twice", item.name)
        if done:
            c = done[0]
            collected.append(CollectRecord(item.name, c.agent, c.amount, None, creator))
        elif offers:
            bounties[item.name] = OpenBounty(amount, creator)
        held = item.find(Lock)
        if len(held) > 1:
            raise AlreadyLocked(f"{item.name} carries {len(held)} locks", item.name)
        if held:
            lk = held[0]
            locks[item.name] = LockRecord(lk.agent, lk.expires - rules.lock_duration, lk.expires, rules.lock_fee(amount))
    return LedgerState(
        balances=balances,
        open_bounties=bounties,
        locks=locks,
        collected=tuple(collected),
        clock=clock,
        total_supply=sum(balances.values()) + sum(b.amount for b in bounties.values()),
        admin_sink=0,
        rules=rules,
    )


def item_annotations(state: LedgerState, item: str, creator_hint: str | None = None) -> list:
    """Annotations describing *item*'s ledger entries, in canonical order."""
    out = []
    b = state.open_bounties.get(item)
    done = [c for c in state.collected if c.item == item]
    creator = b.creator if b else (done[-1].creator if done else creator_hint)
    amount = b.amount if b else (done[-1].amount if done else None)
    if amount is not None and creator is not None:
        out.append(Bounty(amount) if creator == ADMIN else SubBounty(creator, amount))
    if done:
        out.append(Collected(done[-1].agent, done[-1].amount))
    rec = state.locks.get(item)
    if rec is not None:
        out.append(Lock(rec.holder, rec.expires))
    return out

