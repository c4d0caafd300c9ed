"""Seeded discrete-event simulation of agents working a bounty market.

Each commit period every agent (in a seeded-shuffled order) pulls the
latest accepted revision, picks a target, maybe locks it, attempts a proof,
maybe splits off a sub-lemma with a sub-bounty, and pushes.  Every push
goes through ``guard.check_revision``; rejected pushes are logged and
dropped.
"""

from __future__ import annotations

import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Sequence

from ._time import format_rfc3339, parse_rfc3339
from .depgraph import AxiomIndex, DepGraph, ProofClass, build_graph, classify
from .devfile import (
    Bounty,
    DevFile,
    Estimate,
    ItemKind,
    ProofStatus,
    format_annotation,
    parse_text,
)
from .guard import RevisionPair, check_revision
from .ledger import (
    ADMIN,
    EventKind,
    LedgerError,
    LedgerState,
    MarketEvent,
    MarketRules,
    collect,
    expire_locks,
    item_annotations,
    ledger_from_devfile,
    lifecycle_report,
    lock,
    place_sub_bounty,
    render_event_log,
)
from .metrics import GROWTH_HEADER, Revision, agent_history, write_csv

DEFAULT_START = datetime(2026, 2, 16, 20, 0, tzinfo=timezone.utc)


class ConfigInvalid(ValueError):
    pass


class InitialRevisionRejected(ValueError):
    pass


class Strategy(Enum):
    GREEDY_LOCKER = "GreedyLocker"
    COLLABORATOR = "Collaborator"
    COMPETITOR = "Competitor"
    SNIPER = "Sniper"


@dataclass(frozen=True)
class AgentPolicy:
    name: str
    strategy: Strategy
    skill: float = 1.0
    sub_bounty_propensity: float = 0.2

    def __post_init__(self):
        if not self.name or self.name == ADMIN:
            raise ConfigInvalid(f"bad agent name {self.name!r}")
        if not 0 < self.skill <= 2:
            raise ConfigInvalid(f"{self.name}: skill must be in (0, 2]")
        if not 0 <= self.sub_bounty_propensity <= 1:
            raise ConfigInvalid(f"{self.name}: sub_bounty_propensity must be in [0, 1]")


DEFAULT_AGENTS = (
    AgentPolicy("Alice", Strategy.GREEDY_LOCKER, 1.0, 0.2),
    AgentPolicy("Bob", Strategy.COLLABORATOR, 1.2, 0.4),
    AgentPolicy("Charlie", Strategy.COMPETITOR, 0.9, 0.2),
    AgentPolicy("Dave", Strategy.SNIPER, 1.0, 0.1),
)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    agents: tuple[AgentPolicy, ...] = DEFAULT_AGENTS
    horizon_hours: float = 48.0
    commit_period_minutes: float = 30.0
    attempts_scale: float = 2.0
    initial_source: str | None = None
    market_items: int = 16
    initial_balance: int = 500
    rules: MarketRules = field(default_factory=MarketRules)
    start: datetime = DEFAULT_START
    axioms: AxiomIndex = field(default_factory=AxiomIndex)
    label: str = ""

    def validate(self) -> None:
        if self.horizon_hours <= 0:
            raise ConfigInvalid("horizon must be positive")
        if self.commit_period_minutes <= 0:
            raise ConfigInvalid("commit period must be positive")
        if self.attempts_scale <= 0:
            raise ConfigInvalid("attempts_scale must be positive")
        if not self.agents:
            raise ConfigInvalid("at least one agent")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigInvalid("agent names must be unique")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------------------
# synthetic markets

def generate_market(
    n_theorems: int,
    seed: int,
    agents: Sequence[str],
    initial_balance: int = 500,
) -> tuple[str, dict[str, list[str]]]:
    """Source text of a fresh market plus the hidden dependency map.

    Every theorem starts ``Admitted`` with an empty proof, an ESTIMATE and an
    admin BOUNTY.  Bounty = estimated USD at $100/hour, with hours taken as
    ``lines * difficulty / 40``.
    """
    rng = random.Random(seed ^ 0x5EED)
    n_defs = max(1, n_theorems // 4)
    out = ["(* synthetic market *)"]
    out += [format_annotation_balance(a, initial_balance) for a in agents]
    for d in range(n_defs):
        out.append(f"Definition space_{d} := carrier_set {d}.")
    needs: dict[str, list[str]] = {}
    names: list[str] = []
    for i in range(n_theorems):
        name = f"thm_{i}"
        lines = rng.randint(2, 30)
        difficulty = rng.randint(1, 10)
        usd = max(10, round(100 * lines * difficulty / 40 / 5) * 5)
        k = min(len(names), rng.choice((0, 0, 1, 1, 2)))
        needs[name] = sorted(rng.sample(names, k)) if k else []
        out.append(format_annotation(Bounty(usd)))
        out.append(format_annotation(Estimate(lines, difficulty, usd)))
        out.append(f"Theorem {name} : prop_{i} space_{rng.randrange(n_defs)}.")
        out.append("Admitted.")
        names.append(name)
    return "\n".join(out) + "\n", needs


def format_annotation_balance(agent: str, amount: int) -> str:
    return f"(* BALANCE: {agent} {amount} *)"


# ---------------------------------------------------------------------------
# trace

@dataclass(frozen=True)
class Snapshot:
    commit_index: int
    time: datetime
    committer: str | None
    line_count: int
    normalized_line_count: int
    balances: dict
    cum_collected: dict
    cum_locks: dict
    cum_bounties: dict
    live_locks: dict


@dataclass(frozen=True)
class Rejection:
    time: datetime
    agent: str
    codes: tuple[str, ...]
    details: tuple[str, ...] = ()


@dataclass
class SimTrace:
    agents: tuple[str, ...]
    events: tuple[MarketEvent, ...] = ()
    snapshots: list[Snapshot] = field(default_factory=list)
    revisions: list[Revision] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)
    rules: MarketRules = field(default_factory=MarketRules)
    axioms: AxiomIndex = field(default_factory=AxiomIndex)
    self_collected: int = 0
    cross_collected: int = 0

    def event_log(self) -> str:
        return render_event_log(self.events)

    def growth_csv(self) -> str:
        return write_csv(GROWTH_HEADER, [(s.commit_index, s.line_count) for s in self.snapshots])

    def history_rows(self) -> tuple[list[str], list[list[int]]]:
        header = ["commit_index"]
        for prefix in ("balance", "cum_collected", "cum_locks", "cum_bounties_made"):
            header += [f"{prefix}_{a.lower()}" for a in self.agents]
        rows = []
        for s in self.snapshots:
            row = [s.commit_index]
            for series in (s.balances, s.cum_collected, s.cum_locks, s.cum_bounties):
                row += [series[a] for a in self.agents]
            rows.append(row)
        return header, rows

    def history_csv(self) -> str:
        return write_csv(*self.history_rows())

    def replayed_history(self):
        """The same table recomputed from the raw event log (independent of the snapshots)."""
        return agent_history(list(self.events), self.revisions, list(self.agents), self.rules, reset_columns=False)

    def to_bytes(self) -> bytes:
        rej = "".join(f"{format_rfc3339(r.time)} {r.agent} {','.join(r.codes)}\n" for r in self.rejected)
        return (self.growth_csv() + "--\n" + self.history_csv() + "--\n" + self.event_log() + "--\n" + rej).encode()


# ---------------------------------------------------------------------------
# working model

@dataclass
class _Work:
    name: str
    kind: ItemKind
    statement: str
    status: ProofStatus
    proof: list[str]
    needs: list[str]
    difficulty: int
    estimate: Estimate | None = None
    author: str | None = None
    complete: bool = False
    subs: int = 0

    def clone(self) -> "_Work":
        return replace(self, proof=list(self.proof), needs=list(self.needs))

    @property
    def theorem(self) -> bool:
        return self.kind in (ItemKind.THEOREM, ItemKind.LEMMA)


def _model_from_devfile(devfile: DevFile, needs: dict[str, list[str]] | None, axioms: AxiomIndex):
    graph = build_graph(devfile, axioms)
    deps: dict[str, set[str]] = {it.name: set() for it in devfile.items}
    for u, v in graph.edges:
        if v in deps:
            deps[u].add(v)
    work = []
    for it in devfile.items:
        raw_stmt = "".join(t.text for t in it.statement_tokens).strip()
        body = "".join(t.text for t in it.proof_tokens).strip("\n")
        proof = [ln for ln in body.split("\n") if ln.strip()] if body.strip() else []
        extra = (needs or {}).get(it.name, [])
        d = it.estimate.difficulty if it.estimate else 5
        work.append(
            _Work(
                name=it.name,
                kind=it.kind,
                statement=raw_stmt,
                status=it.proof_status,
                proof=proof,
                needs=sorted(deps[it.name] | set(extra)),
                difficulty=d,
                estimate=it.estimate,
            )
        )
    header = []
    first = devfile.items[0].statement_tokens[0].pos if devfile.items else len(devfile.source)
    ann = set(devfile.annotation_tokens)
    for idx, t in enumerate(devfile.tokens):
        if t.pos >= first:
            break
        if idx not in ann:
            header.append(t.text)
    head = "\n".join(ln.rstrip() for ln in "".join(header).split("\n") if ln.strip())
    return head, work


def _render(head: str, items: list[_Work], ledger: LedgerState) -> str:
    out = [head] if head else []
    out += [format_annotation_balance(a, v) for a, v in ledger.balances.items()]
    for w in items:
        for a in item_annotations(ledger, w.name):
            out.append(format_annotation(a))
        if w.estimate is not None:
            out.append(format_annotation(w.estimate))
        out.append(w.statement)
        if w.theorem and w.status is not ProofStatus.OPEN:
            out.extend(w.proof)
            out.append(f"{w.status.value}.")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# engine

class _Engine:
    def __init__(self, config: SimConfig, needs: dict[str, list[str]] | None = None):
        config.validate()
        self.cfg = config
        self.rng = random.Random(config.seed)
        self.rules = config.rules
        names = [a.name for a in config.agents]
        if config.initial_source is None:
            source, needs = generate_market(config.market_items, config.seed, names, config.initial_balance)
        else:
            source = config.initial_source
        devfile = parse_text(source)
        self.head, self.items = _model_from_devfile(devfile, needs, config.axioms)
        ledger = ledger_from_devfile(devfile, self.rules)
        balances = dict(ledger.balances)
        for a in names:
            balances.setdefault(a, config.initial_balance)
        self.ledger = replace(ledger, balances=balances, total_supply=ledger.total_supply + sum(
            balances[a] for a in names if a not in ledger.balances), clock=config.start)
        for a in self.ledger.balances:
            if a not in names:
                raise ConfigInvalid(f"file has a balance for {a}, who is not a configured agent")

        text = _render(self.head, self.items, self.ledger)
        self.devfile = parse_text(text)
        violations = check_revision(
            RevisionPair(self.devfile, self.devfile, names[0], config.start, rules=self.rules, axioms=config.axioms)
        )
        if violations:
            raise InitialRevisionRejected("; ".join(str(v) for v in violations))
        self.trace = SimTrace(agents=tuple(names), rules=self.rules, axioms=config.axioms)
        self.cum_collected = dict.fromkeys(names, 0)
        self.cum_locks = dict.fromkeys(names, 0)
        self.cum_bounties = dict.fromkeys(names, 0)
        self.n_events = 0
        self._snapshot(config.start, None, text)

    # -- bookkeeping ----------------------------------------------------

    def _snapshot(self, now: datetime, committer: str | None, text: str) -> None:
        events = self.ledger.events
        for ev in events[self.n_events:]:
            if ev.kind is EventKind.COLLECT and ev.agent in self.cum_collected:
                self.cum_collected[ev.agent] += ev.amount
            elif ev.kind is EventKind.LOCK:
                self.cum_locks[ev.agent] += 1
            elif ev.kind in (EventKind.PLACE_BOUNTY, EventKind.PLACE_SUB_BOUNTY) and ev.agent in self.cum_bounties:
                self.cum_bounties[ev.agent] += ev.amount
        self.n_events = len(events)
        agents = self.trace.agents
        snap = Snapshot(
            commit_index=len(self.trace.snapshots),
            time=now,
            committer=committer,
            line_count=self.devfile.raw_line_count,
            normalized_line_count=self.devfile.normalized_line_count,
            balances={a: self.ledger.balances[a] for a in agents},
            cum_collected=dict(self.cum_collected),
            cum_locks=dict(self.cum_locks),
            cum_bounties=dict(self.cum_bounties),
            live_locks={a: self.ledger.live_locks(a, now) for a in agents},
        )
        self.trace.snapshots.append(snap)
        self.trace.revisions.append(Revision(text, now, committer))

    # -- views ------------------------------------------------------------

    def _classes(self, items: list[_Work]) -> dict[str, ProofClass]:
        kinds = {w.name: w.kind for w in items}
        edges = frozenset((w.name, n) for w in items for n in w.needs if n in kinds)
        graph = DepGraph(tuple(kinds), edges, frozenset(), kinds)
        return classify(graph, {w.name: w.status for w in items})

    def _p(self, agent: AgentPolicy, w: _Work) -> float:
        return min(1.0, max(0.0, agent.skill / (w.difficulty * self.cfg.attempts_scale)))

    # -- one agent turn -------------------------------------------------

    def turn(self, agent: AgentPolicy, now: datetime) -> None:
        items = [w.clone() for w in self.items]
        by_name = {w.name: w for w in items}
        ledger, expired = expire_locks(self.ledger, now)
        classes = self._classes(items)
        target = self._choose(agent, items, ledger, classes, now)
        changed = bool(expired)
        if target is not None:
            ledger, touched = self._attempt(agent, target, items, by_name, ledger, classes, now)
            # a claim only makes sense on work still unfinished after this push
            ledger = self._maybe_lock(agent, target, ledger, now, extra=items)
            changed = changed or touched
        if ledger is not self.ledger and ledger.events != self.ledger.events:
            changed = True
        if not changed:
            return
        text = _render(self.head, items, ledger)
        proposed = parse_text(text)
        pair = RevisionPair(self.devfile, proposed, agent.name, now, rules=self.rules, axioms=self.cfg.axioms)
        violations = check_revision(pair)
        if violations:
            self.trace.rejected.append(Rejection(
                    now,
                    agent.name,
                    tuple(sorted({v.code.value for v in violations})),
                    tuple(str(v) for v in violations),
                )
            )
            return
        for rec in ledger.collected[len(self.ledger.collected):]:
            if rec.creator not in (None, ADMIN):
                if rec.creator == rec.agent:
                    self.trace.self_collected += rec.amount
                else:
                    self.trace.cross_collected += rec.amount
        self.items, self.ledger, self.devfile = items, ledger, proposed
        self._snapshot(now, agent.name, text)

    def _workable(self, w: _Work, ledger: LedgerState, now: datetime, name: str, respect_locks=True) -> bool:
        if not w.theorem or w.status is ProofStatus.QED:
            return False
        rec = ledger.locks.get(w.name)
        if rec is not None and rec.live(now) and rec.holder != name and respect_locks:
            return False
        return True

    def _choose(self, agent, items, ledger, classes, now):
        name = agent.name
        bounty = lambda w: ledger.open_bounties[w.name].amount if w.name in ledger.open_bounties else 0
        mine = lambda w: (r := ledger.locks.get(w.name)) is not None and r.holder == name and r.live(now)
        ready = lambda w: all(classes.get(n) is ProofClass.FULLY_PROVED for n in w.needs)
        s = agent.strategy
        if s is Strategy.COMPETITOR:
            pool = [w for w in items if self._workable(w, ledger, now, name, respect_locks=False)]
        else:
            pool = [w for w in items if self._workable(w, ledger, now, name)]
        if not pool:
            return None
        if s is Strategy.GREEDY_LOCKER:
            own = [w for w in pool if mine(w)]
            if own:
                return max(own, key=lambda w: (ready(w), bounty(w), -w.difficulty))
            return max(pool, key=lambda w: (bounty(w) > 0, ready(w), bounty(w), -w.difficulty))
        if s is Strategy.COLLABORATOR:
            dependents = {w.name: 0 for w in items}
            for w in items:
                if w.status is not ProofStatus.QED:
                    for n in w.needs:
                        if n in dependents:
                            dependents[n] += 1
            return max(pool, key=lambda w: (mine(w), ready(w), dependents[w.name], bounty(w) > 0, -w.difficulty))
        if s is Strategy.COMPETITOR:
            return max(pool, key=lambda w: (ready(w), bounty(w) / w.difficulty, -w.difficulty))
        # sniper: most advanced work of others first
        return max(
            pool,
            key=lambda w: (
                w.complete and ready(w) and w.author != name,
                ready(w),
                len(w.proof) if w.author != name else 0,
                bounty(w) / w.difficulty,
            ),
        )

    def _lock_worthwhile(self, agent, w: _Work, ledger: LedgerState, now) -> bool:
        if agent.strategy is Strategy.SNIPER:
            return False
        b = ledger.open_bounties.get(w.name)
        if b is None or w.name in ledger.locks:
            return False
        fee = self.rules.lock_fee(b.amount)
        if fee >= b.amount or ledger.balances[agent.name] < fee:
            return False
        if ledger.live_locks(agent.name, now) >= self.rules.lock_cap:
            return False
        if agent.strategy is Strategy.COLLABORATOR and b.amount < 50:
            return False
        window = self.rules.lock_duration / timedelta(minutes=self.cfg.commit_period_minutes)
        tries = window / (1 + ledger.live_locks(agent.name, now))
        p_win = 1 - (1 - self._p(agent, w)) ** tries
        return p_win * b.amount - fee > 0

    def _maybe_lock(self, agent, target, ledger, now, extra):
        if target.status is not ProofStatus.QED and self._lock_worthwhile(agent, target, ledger, now):
            ledger = lock(ledger, agent.name, target.name, now)
        if agent.strategy is Strategy.GREEDY_LOCKER:
            # hoard one more high-value item per turn
            spare = [
                w for w in extra
                if w is not target and self._workable(w, ledger, now, agent.name) and w.name in ledger.open_bounties
            ]
            spare.sort(key=lambda w: (-ledger.open_bounties[w.name].amount, w.name))
            for w in spare[:1]:
                if self._lock_worthwhile(agent, w, ledger, now):
                    ledger = lock(ledger, agent.name, w.name, now)
        return ledger

    def _attempt(self, agent, w: _Work, items, by_name, ledger, classes, now):
        name = agent.name
        rng = self.rng
        if w.author not in (None, name) and w.proof:
            # start over with an own proof (the previous one is replaced)
            if not w.complete:
                w.proof = []
            w.author = name
        elif w.author is None:
            w.author = name
        success = w.complete or rng.random() < self._p(agent, w)
        if success and not w.complete:
            step = len(w.proof)
            for n in w.needs:
                w.proof.append(f"  apply {n}.")
            w.proof.append(f"  exact closing_{step} (* {name} *).")
            w.complete = True
        elif not success:
            for _ in range(rng.randint(1, 3)):
                k = len(w.proof)
                w.proof.append(f"  have h{k} : step {k}. (* {name} *)")
            if w.status is ProofStatus.OPEN:
                w.status = ProofStatus.ADMITTED
            if rng.random() < agent.sub_bounty_propensity and w.difficulty >= 3:
                ledger = self._split(agent, w, items, by_name, ledger, now)
        if w.complete:
            if all(classes.get(n) is ProofClass.FULLY_PROVED for n in w.needs):
                w.status = ProofStatus.QED
                if w.name in ledger.open_bounties:
                    try:
                        ledger = collect(ledger, name, w.name, now)
                    except LedgerError:
                        pass
            elif w.status is ProofStatus.OPEN:
                w.status = ProofStatus.ADMITTED
        return ledger, True

    def _split(self, agent, parent: _Work, items, by_name, ledger, now):
        parent.subs += 1
        sub = f"{parent.name}_sub{parent.subs}"
        while sub in by_name:
            parent.subs += 1
            sub = f"{parent.name}_sub{parent.subs}"
        d = max(1, round(parent.difficulty * self.rng.uniform(0.3, 0.6)))
        parent_bounty = ledger.open_bounties.get(parent.name)
        base = parent_bounty.amount if parent_bounty else 10 * parent.difficulty
        amount = max(1, base * d // (2 * parent.difficulty))
        if ledger.balances[agent.name] < amount:
            return ledger
        try:
            ledger = place_sub_bounty(ledger, agent.name, sub, amount, now)
        except LedgerError:
            return ledger
        w = _Work(
            name=sub,
            kind=ItemKind.LEMMA,
            statement=f"Lemma {sub} : aux_{parent.subs} {parent.name.replace('thm', 'prop')}_part.",
            status=ProofStatus.ADMITTED,
            proof=[],
            needs=[],
            difficulty=d,
            estimate=Estimate(2 * d, d, amount),
        )
        items.insert(items.index(parent), w)
        by_name[sub] = w
        parent.needs.append(sub)
        parent.proof.append(f"  apply {sub}. (* {agent.name} *)")
        parent.difficulty = max(1, parent.difficulty - d // 2)
        return ledger

    # -- main loop --------------------------------------------------------

    def run(self) -> SimTrace:
        cfg = self.cfg
        period = timedelta(minutes=cfg.commit_period_minutes)
        ticks = int(math.floor(cfg.horizon_hours * 60 / cfg.commit_period_minutes + 1e-9))
        slot = period / (len(cfg.agents) + 1)
        for k in range(1, ticks + 1):
            tick = cfg.start + k * period - period + slot
            order = list(cfg.agents)
            self.rng.shuffle(order)
            for i, agent in enumerate(order):
                self.turn(agent, tick + i * slot)
        self.trace.events = self.ledger.events
        return self.trace


def run(config: SimConfig, needs: dict[str, list[str]] | None = None) -> SimTrace:
    """Run one simulation.  Identical configs give byte-identical traces."""
    return _Engine(config, needs).run()


@dataclass(frozen=True)
class SweepRow:
    label: str
    seed: int
    total_collected: int
    self_collected: int
    cross_collected: int
    placed_by_agents: int
    rejected_commits: int
    accepted_commits: int
    locks_placed: int
    max_live_locks: int
    final_lines: int
    partition_ok: bool


SWEEP_HEADER = [f.name for f in SweepRow.__dataclass_fields__.values()]


def summarize(config: SimConfig, trace: SimTrace) -> SweepRow:
    report = lifecycle_report(trace.events)
    last = trace.snapshots[-1]
    return SweepRow(
        label=config.label or f"seed{config.seed}",
        seed=config.seed,
        total_collected=sum(last.cum_collected.values()),
        self_collected=trace.self_collected,
        cross_collected=trace.cross_collected,
        placed_by_agents=report.placed_total,
        rejected_commits=len(trace.rejected),
        accepted_commits=len(trace.snapshots) - 1,
        locks_placed=sum(last.cum_locks.values()),
        max_live_locks=max((max(s.live_locks.values()) for s in trace.snapshots), default=0),
        final_lines=last.line_count,
        partition_ok=report.balanced
        and report.self_collected == trace.self_collected
        and report.cross_collected == trace.cross_collected,
    )


def _sweep_one(config: SimConfig) -> SweepRow:
    return summarize(config, run(config))


def sweep(configs: Sequence[SimConfig], workers: int = 1) -> list[SweepRow]:
    """Run every config and summarize; independent runs may go in parallel."""
    if not configs:
        raise ConfigInvalid("sweep needs at least one config")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_one, configs))
    return [_sweep_one(c) for c in configs]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return write_csv(SWEEP_HEADER, [[getattr(r, k) for k in SWEEP_HEADER] for r in rows])


# ---------------------------------------------------------------------------
# config files

def parse_config(text: str, base_dir=None) -> SimConfig:
    """Read a ``key = value`` config.  ``agent = <name> <strategy> <skill> <propensity>`` repeats."""
    kw: dict = {}
    agents = []
    rules: dict = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "agent":
                parts = value.split()
                name, strat = parts[0], Strategy(parts[1])
                skill = float(parts[2]) if len(parts) > 2 else 1.0
                prop = float(parts[3]) if len(parts) > 3 else 0.2
                agents.append(AgentPolicy(name, strat, skill, prop))
            elif key == "seed":
                kw["seed"] = int(value, 0)
            elif key in ("horizon_hours", "commit_period_minutes", "attempts_scale"):
                kw[key] = float(value)
            elif key in ("market_items", "initial_balance"):
                kw[key] = int(value)
            elif key == "start":
                kw["start"] = parse_rfc3339(value)
            elif key == "label":
                kw["label"] = value
            elif key == "devfile":
                path = value if base_dir is None else os.path.join(base_dir, value)
                with open(path, encoding="utf-8") as fh:
                    kw["initial_source"] = fh.read()
            elif key == "lock_cap":
                rules["lock_cap"] = int(value)
            elif key == "lock_fee_percent":
                rules["lock_fee_percent"] = int(value)
            elif key == "lock_hours":
                rules["lock_duration"] = timedelta(hours=float(value))
            elif key == "refund_fee_on_collect":
                rules["refund_fee_on_collect"] = value.lower() in ("1", "true", "yes")
            else:
                raise ConfigInvalid(f"line {n}: unknown key {key!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"line {n}: {exc}") from None
    if agents:
        kw["agents"] = tuple(agents)
    if rules:
        kw["rules"] = MarketRules(**rules)
    cfg = SimConfig(**kw)
    cfg.validate()
    return cfg
