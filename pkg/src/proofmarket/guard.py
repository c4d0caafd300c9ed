"""Revision guard: validate a proposed development against its predecessor.

``check_revision`` is the token-stream checker.  ``naive_line_check`` is the
older line/regex checker, kept as a differential baseline: it reads
annotation text wherever it appears, comments included.
"""

from __future__ import annotations

import dataclasses
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from ._time import format_rfc3339, parse_rfc3339
from .depgraph import AxiomIndex, ProofClass, classify_file
from .devfile import (
    Bounty,
    Collected,
    DevFile,
    DevFileError,
    Item,
    ItemKind,
    Lock,
    ProofStatus,
    SubBounty,
    parse_text,
    smuggled_annotations,
)
from .ledger import (
    ADMIN,
    AlreadyLocked,
    InsufficientBalance,
    LedgerError,
    LedgerState,
    LockLimitExceeded,
    LockTooLong,
    MarketRules,
    NotProved,
    beneficiary,
    collect,
    expire_locks,
    ledger_from_devfile,
    lock,
    place_bounty,
)


class Code(Enum):
    STATEMENT_MUTATED = "StatementMutated"
    DEFINITION_MUTATED = "DefinitionMutated"
    FOREIGN_LOCK_TOUCHED = "ForeignLockTouched"
    FOREIGN_PROOF_OVERWRITTEN_WHILE_LOCKED = "ForeignProofOverwrittenWhileLocked"
    BALANCE_TRANSITION_INVALID = "BalanceTransitionInvalid"
    LOCK_COUNT_EXCEEDED = "LockCountExceeded"
    LOCK_EXPIRY_TOO_FAR = "LockExpiryTooFar"
    NEGATIVE_BALANCE = "NegativeBalance"
    NON_POSITIVE_BOUNTY = "NonPositiveBounty"
    COLLECT_WITHOUT_QED = "CollectWithoutQed"
    COLLECT_WRONG_BENEFICIARY = "CollectWrongBeneficiary"
    KEYWORD_IN_COMMENT_ABUSE = "KeywordInCommentAbuse"
    ITEM_DELETED = "ItemDeleted"
    AXIOM_INTRODUCED = "AxiomIntroduced"


@dataclass(frozen=True)
class Violation:
    code: Code
    item: str | None = None
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code.value} {self.item or '-'} {self.detail}".rstrip()


class ParseFailure(Exception):
    def __init__(self, side: str, cause: Exception):
        super().__init__(f"{side}: {cause}")
        self.side = side
        self.cause = cause


@dataclass(frozen=True)
class RevisionPair:
    previous: DevFile
    proposed: DevFile
    committer: str
    now: datetime
    previous_ledger: LedgerState | None = None
    proposed_ledger: LedgerState | None = None
    rules: MarketRules = field(default_factory=MarketRules)
    axioms: AxiomIndex = field(default_factory=AxiomIndex)

    def ledgers(self) -> tuple[LedgerState, LedgerState]:
        try:
            old = self.previous_ledger or ledger_from_devfile(self.previous, self.rules)
        except LedgerError as exc:
            raise ParseFailure("previous", exc) from None
        try:
            new = self.proposed_ledger or ledger_from_devfile(self.proposed, self.rules)
        except LedgerError as exc:
            raise ParseFailure("proposed", exc) from None
        return old, new


def load_pair(
    previous: str | bytes,
    proposed: str | bytes,
    committer: str,
    now: datetime,
    rules: MarketRules | None = None,
    axioms: AxiomIndex | None = None,
) -> RevisionPair:
    """Parse both sides, raising ParseFailure naming the side that failed."""
    try:
        prev = parse_text(previous)
    except DevFileError as exc:
        raise ParseFailure("previous", exc) from None
    try:
        prop = parse_text(proposed)
    except DevFileError as exc:
        raise ParseFailure("proposed", exc) from None
    pair = RevisionPair(prev, prop, committer, now, rules=rules or MarketRules(), axioms=axioms or AxiomIndex())
    pair.ledgers()
    return pair


def _offer(item: Item | None):
    if item is None:
        return None
    for a in item.annotations:
        if isinstance(a, (Bounty, SubBounty)):
            return a
    return None


def _one(item: Item | None, kind):
    if item is None:
        return None
    found = item.find(kind)
    return found[0] if found else None


class _Report:
    def __init__(self):
        self.violations: list[Violation] = []
        self._seen: set = set()
        self.agents: set[str] = set()
        self.items: set[str] = set()
        self.flagged: set[tuple[Code, str | None]] = set()

    def add(self, code: Code, item: str | None, detail: str, agents=(), subject=None):
        key = (code, item, detail)
        if key not in self._seen:
            self._seen.add(key)
            self.violations.append(Violation(code, item, detail))
        self.flagged.add((code, subject if subject is not None else item))
        if item is not None:
            self.items.add(item)
        self.agents.update(a for a in agents if a)


def check_revision(pair: RevisionPair) -> list[Violation]:
    """Return every rule violation in the proposed revision (empty list = accept)."""
    prev, prop = pair.previous, pair.proposed
    now, who = pair.now, pair.committer
    old_ledger, new_ledger = pair.ledgers()
    rep = _Report()

    # immutability of statements, deletions
    for item in prev.items:
        new = prop.by_name.get(item.name)
        if new is None:
            rep.add(Code.ITEM_DELETED, item.name, f"{item.kind.value} removed")
        elif new.statement_text != item.statement_text or new.kind is not item.kind:
            code = Code.DEFINITION_MUTATED if item.kind is ItemKind.DEFINITION else Code.STATEMENT_MUTATED
            rep.add(code, item.name, "statement changed")

    for item in prop.items:
        old = prev.by_name.get(item.name)
        if old is None and item.kind is ItemKind.AXIOM:
            rep.add(Code.AXIOM_INTRODUCED, item.name, "new Axiom items are forbidden")
        smuggled = Counter(t.text for t in smuggled_annotations(item))
        if old is not None:
            smuggled -= Counter(t.text for t in smuggled_annotations(old))
        for text in sorted(smuggled):
            rep.add(Code.KEYWORD_IN_COMMENT_ABUSE, item.name, f"ledger annotation inside item body: {text}")

    # partial proofs under someone else's live lock stay untouched
    for item in prev.items:
        new = prop.by_name.get(item.name)
        rec = old_ledger.locks.get(item.name)
        if new is None or rec is None or not rec.live(now) or rec.holder == who:
            continue
        if item.has_proof_body and (new.proof_text != item.proof_text or new.proof_status is not item.proof_status):
            rep.add(
                Code.FOREIGN_PROOF_OVERWRITTEN_WHILE_LOCKED,
                item.name,
                f"partial proof locked by {rec.holder} was modified by {who}",
            )

    _check_ledger(pair, old_ledger, new_ledger, rep)
    return rep.violations


def _check_ledger(pair: RevisionPair, old_ledger: LedgerState, new_ledger: LedgerState, rep: _Report) -> None:
    prev, prop = pair.previous, pair.proposed
    now, who, rules = pair.now, pair.committer, pair.rules
    deleted = {it.name for it in prev.items if it.name not in prop.by_name}
    rep.items.update(deleted)

    state = old_ledger
    if state.clock is not None and state.clock > now:
        state = _with_clock(state, None)
    try:
        state, _ = expire_locks(state, now)
    except LedgerError as exc:  # pragma: no cover - clock was reset above
        rep.add(Code.BALANCE_TRANSITION_INVALID, None, str(exc))
        return

    classes: dict[str, ProofClass] | None = None

    for new_item in prop.items:
        name = new_item.name
        old_item = prev.by_name.get(name)

        # bounty placement / removal
        old_offer, new_offer = _offer(old_item), _offer(new_item)
        old_coll, new_coll = _one(old_item, Collected), _one(new_item, Collected)
        if old_offer != new_offer:
            if old_offer is None:
                amount = new_offer.amount
                creator = ADMIN if isinstance(new_offer, Bounty) else new_offer.creator
                if amount <= 0:
                    rep.add(Code.NON_POSITIVE_BOUNTY, name, f"bounty amount {amount}", (creator,))
                elif creator == ADMIN:
                    rep.add(Code.BALANCE_TRANSITION_INVALID, name, "BOUNTY is admin-only; agents place SUBBOUNTY")
                elif creator != who:
                    rep.add(Code.BALANCE_TRANSITION_INVALID, name, f"sub-bounty in the name of {creator}", (creator,))
                else:
                    ref = old_item or new_item
                    try:
                        state = place_bounty(
                            state, who, name, amount, now,
                            proved=ref.proof_status is ProofStatus.QED and old_item is not None,
                            sub=old_item is None,
                        )
                    except InsufficientBalance as exc:
                        rep.add(Code.NEGATIVE_BALANCE, name, str(exc), (who,), subject=who)
                    except LedgerError as exc:
                        rep.add(Code.BALANCE_TRANSITION_INVALID, name, str(exc), (who,))
            elif new_offer is None and new_coll is not None:
                pass  # collected bounties may drop their offer line
            else:
                rep.add(Code.BALANCE_TRANSITION_INVALID, name, "open bounty removed or altered without collect")

        # collection
        if old_coll != new_coll:
            if old_coll is not None:
                rep.add(Code.BALANCE_TRANSITION_INVALID, name, "collection record removed or altered")
            elif name in rep.items:
                pass
            else:
                if classes is None:
                    classes = classify_file(prop, pair.axioms)
                proved = new_item.proof_status is ProofStatus.QED and classes.get(name) is ProofClass.FULLY_PROVED
                if name not in state.open_bounties:
                    rep.add(Code.BALANCE_TRANSITION_INVALID, name, "COLLECTED on an item without open bounty")
                elif not proved:
                    why = "ends Admitted" if new_item.proof_status is not ProofStatus.QED else "dependencies not fully proved"
                    rep.add(Code.COLLECT_WITHOUT_QED, name, why, (new_coll.agent, who))
                else:
                    payee = beneficiary(state, who, name, now)
                    bounty = state.open_bounties[name].amount
                    if new_coll.agent != payee:
                        rep.add(
                            Code.COLLECT_WRONG_BENEFICIARY,
                            name,
                            f"bounty belongs to {payee}, annotated {new_coll.agent}",
                            (new_coll.agent, payee),
                        )
                    elif new_coll.amount != bounty:
                        rep.add(Code.BALANCE_TRANSITION_INVALID, name, f"collected {new_coll.amount}, bounty is {bounty}")
                    else:
                        try:
                            state = collect(state, who, name, now, proved=True)
                        except NotProved as exc:  # pragma: no cover - checked above
                            rep.add(Code.COLLECT_WITHOUT_QED, name, str(exc))
                        except LedgerError as exc:
                            rep.add(Code.BALANCE_TRANSITION_INVALID, name, str(exc))

        # locks
        old_lock, new_lock = _one(old_item, Lock), _one(new_item, Lock)
        if old_lock == new_lock or name in rep.items:
            continue
        consumed = new_coll is not None and old_coll is None
        if old_lock is not None and old_lock.expires >= now and not consumed:
            if old_lock.agent != who:
                rep.add(Code.FOREIGN_LOCK_TOUCHED, name, f"live lock of {old_lock.agent} changed by {who}")
                continue
            if new_lock is None:
                rep.add(Code.BALANCE_TRANSITION_INVALID, name, "live lock dropped without collect")
                continue
        if new_lock is None:
            continue
        if new_lock.agent != who:
            rep.add(Code.FOREIGN_LOCK_TOUCHED, name, f"{who} wrote a lock for {new_lock.agent}")
            continue
        if new_lock.expires <= now or new_lock.expires - now > rules.lock_duration:
            rep.add(
                Code.LOCK_EXPIRY_TOO_FAR,
                name,
                f"expiry {format_rfc3339(new_lock.expires)} not within (now, now+{rules.lock_duration}]",
                (who,),
            )
            continue
        try:
            state = lock(state, who, name, now, new_lock.expires)
        except LockLimitExceeded as exc:
            rep.add(Code.LOCK_COUNT_EXCEEDED, name, str(exc), (who,), subject=who)
        except InsufficientBalance as exc:
            rep.add(Code.NEGATIVE_BALANCE, name, str(exc), (who,), subject=who)
        except LockTooLong as exc:  # pragma: no cover - checked above
            rep.add(Code.LOCK_EXPIRY_TOO_FAR, name, str(exc), (who,))
        except (AlreadyLocked, LedgerError) as exc:
            rep.add(Code.BALANCE_TRANSITION_INVALID, name, str(exc), (who,))

    # literal checks on the proposed table
    for agent, amount in sorted(new_ledger.balances.items()):
        if amount < 0:
            if (Code.NEGATIVE_BALANCE, agent) not in rep.flagged:
                rep.add(Code.NEGATIVE_BALANCE, None, f"{agent} balance {amount}", (agent,), subject=agent)
            rep.agents.add(agent)
    held = Counter(r.holder for r in new_ledger.locks.values() if r.live(now))
    for agent, n in sorted(held.items()):
        if n > rules.lock_cap and (Code.LOCK_COUNT_EXCEEDED, agent) not in rep.flagged:
            rep.add(Code.LOCK_COUNT_EXCEEDED, None, f"{agent} holds {n} live locks", (agent,), subject=agent)
    for name, rec in sorted(new_ledger.locks.items()):
        if rec.expires - now > rules.lock_duration and name not in rep.items:
            rep.add(Code.LOCK_EXPIRY_TOO_FAR, name, f"expiry {format_rfc3339(rec.expires)}")
    for item in prop.items:
        offer = _offer(item)
        if offer is not None and offer.amount <= 0 and item.name not in rep.items:
            rep.add(Code.NON_POSITIVE_BOUNTY, item.name, f"bounty amount {offer.amount}")

    # the replayed economy must match the proposed annotations
    for agent in sorted(set(state.balances) | set(new_ledger.balances)):
        if agent in rep.agents:
            continue
        want, got = state.balances.get(agent), new_ledger.balances.get(agent)
        if want != got:
            rep.add(Code.BALANCE_TRANSITION_INVALID, None, f"{agent} balance {got}, expected {want}")
    for name in sorted(set(state.open_bounties) | set(new_ledger.open_bounties)):
        if name in rep.items:
            continue
        if state.open_bounties.get(name) != new_ledger.open_bounties.get(name):
            rep.add(Code.BALANCE_TRANSITION_INVALID, name, "open bounty table mismatch")
    for name in sorted(set(state.locks) | set(new_ledger.locks)):
        if name in rep.items:
            continue
        a, b = state.locks.get(name), new_ledger.locks.get(name)
        if (a and (a.holder, a.expires)) != (b and (b.holder, b.expires)):
            detail = "expired lock must be removed" if b is not None and not b.live(now) else "lock table mismatch"
            rep.add(Code.BALANCE_TRANSITION_INVALID, name, detail)


def _with_clock(state: LedgerState, clock):
    return dataclasses.replace(state, clock=clock)


def implied_ledger(pair: RevisionPair) -> LedgerState:
    """Ledger obtained by replaying the revision's implied events.

    Only meaningful for accepted revisions; the caller can compare it with
    the proposed file's own ledger.
    """
    old_ledger, _ = pair.ledgers()
    state, _ = expire_locks(_with_clock(old_ledger, None), pair.now)
    classes = None
    for new_item in pair.proposed.items:
        name = new_item.name
        old_item = pair.previous.by_name.get(name)
        old_offer, new_offer = _offer(old_item), _offer(new_item)
        if old_offer is None and new_offer is not None:
            state = place_bounty(state, pair.committer, name, new_offer.amount, pair.now, sub=old_item is None)
        if _one(old_item, Collected) is None and _one(new_item, Collected) is not None:
            if classes is None:
                classes = classify_file(pair.proposed, pair.axioms)
            state = collect(state, pair.committer, name, pair.now,
                            proved=classes.get(name) is ProofClass.FULLY_PROVED)
        old_lock, new_lock = _one(old_item, Lock), _one(new_item, Lock)
        if new_lock is not None and new_lock != old_lock:
            state = lock(state, pair.committer, name, pair.now, new_lock.expires)
    return state


# ---------------------------------------------------------------------------
# first-generation checker

_NAIVE_BALANCE = re.compile(r"BALANCE:\s*(\S+)\s+(-?\d+)")
_NAIVE_BOUNTY = re.compile(r"(?<!SUB)BOUNTY:\s*(-?\d+)")
_NAIVE_SUBBOUNTY = re.compile(r"SUBBOUNTY:\s*\S+\s+(-?\d+)")
_NAIVE_LOCK = re.compile(r"LOCK:\s*(\S+)\s+UNTIL\s+(\S+)")
_NAIVE_COLLECTED = re.compile(r"COLLECTED:\s*(\S+)\s+(-?\d+)")
_NAIVE_ITEM = re.compile(r"^\s*(Definition|Theorem|Lemma|Axiom)\s+([\w']+)")
_NAIVE_END = re.compile(r"\b(Qed|Admitted)\s*\.")


def naive_line_check(pair: RevisionPair) -> list[Violation]:
    """Line-oriented checker: balances, bounty signs, lock count/expiry, collect-on-Qed.

    Reads the proposed source line by line and does not know about comments.
    """
    lines = pair.proposed.source.splitlines()
    now, rules = pair.now, pair.rules
    headers = [(i, m.group(2)) for i, line in enumerate(lines) if (m := _NAIVE_ITEM.match(line))]

    def next_item(i):
        for j, name in headers:
            if j >= i:
                return j, name
        return None, None

    out: list[Violation] = []
    locks: Counter = Counter()
    for i, line in enumerate(lines):
        for m in _NAIVE_BALANCE.finditer(line):
            if int(m.group(2)) < 0:
                out.append(Violation(Code.NEGATIVE_BALANCE, None, f"{m.group(1)} balance {m.group(2)}"))
        for rx in (_NAIVE_BOUNTY, _NAIVE_SUBBOUNTY):
            for m in rx.finditer(line):
                if int(m.group(1)) <= 0:
                    out.append(Violation(Code.NON_POSITIVE_BOUNTY, next_item(i)[1], f"bounty amount {m.group(1)}"))
        for m in _NAIVE_LOCK.finditer(line):
            locks[m.group(1)] += 1
            try:
                expires = parse_rfc3339(m.group(2).rstrip("*)").strip())
            except ValueError:
                continue
            if expires - now > rules.lock_duration:
                out.append(Violation(Code.LOCK_EXPIRY_TOO_FAR, next_item(i)[1], f"expiry {m.group(2)}"))
        for m in _NAIVE_COLLECTED.finditer(line):
            j, name = next_item(i + 1)
            if j is None:
                continue
            status = None
            for k in range(j, len(lines)):
                e = _NAIVE_END.search(lines[k])
                if e:
                    status = e.group(1)
                    break
            if status != "Qed":
                out.append(Violation(Code.COLLECT_WITHOUT_QED, name, "no Qed found"))
    for agent, n in sorted(locks.items()):
        if n > rules.lock_cap:
            out.append(Violation(Code.LOCK_COUNT_EXCEEDED, None, f"{agent} holds {n} locks"))
    return out


@dataclass(frozen=True)
class Divergence:
    naive: frozenset[Code]
    stream: frozenset[Code]

    @property
    def diverges(self) -> bool:
        return self.naive != self.stream

    @property
    def only_naive(self) -> frozenset[Code]:
        return self.naive - self.stream

    @property
    def only_stream(self) -> frozenset[Code]:
        return self.stream - self.naive


# codes the naive checker is able to emit at all
NAIVE_SCOPE = frozenset({
    Code.NEGATIVE_BALANCE,
    Code.NON_POSITIVE_BOUNTY,
    Code.LOCK_COUNT_EXCEEDED,
    Code.LOCK_EXPIRY_TOO_FAR,
    Code.COLLECT_WITHOUT_QED,
})


def differential_check(pair: RevisionPair) -> Divergence:
    """Run both checkers and compare the codes within the naive checker's scope."""
    naive = frozenset(v.code for v in naive_line_check(pair))
    stream = frozenset(v.code for v in check_revision(pair)) & NAIVE_SCOPE
    return Divergence(naive, stream)
