"""End-to-end acceptance checks.  Each test carries a ``criterion`` mark and the
run ends with one PASS/FAIL line per criterion (see conftest.py)."""

import random
import time
from datetime import timedelta

import pytest

from proofmarket.cli import main
from proofmarket.depgraph import ProofClass, build_graph, classify, classify_file, report_table
from proofmarket.devfile import TokenKind, annotation_marker, parse_text, tokenize
from proofmarket.guard import check_revision, load_pair
from proofmarket.ledger import (
    ADMIN,
    EventKind,
    collect,
    conservation_residual,
    lifecycle_report,
    lock,
    new_ledger,
    place_bounty,
    place_sub_bounty,
    remove_bounty,
    render_event_log,
)
from proofmarket.metrics import round_sig, throughput
from proofmarket.sim import SimConfig, run

from conftest import T0
from fixtures import brouwer_source
from guard_corpus import clean_pairs, violation_pairs
from ledger_driver import AGENTS, random_steps
from oracles import classify_oracle, random_dag


def report(msg):
    print(msg)


# --- 1 ---------------------------------------------------------------------------

@pytest.mark.criterion(1, "guard violation matrix, one pair per code, clean pairs pass, < 5 s")
def test_guard_matrix():
    t = time.perf_counter()
    bad = violation_pairs()
    good = clean_pairs()
    for label, prev, nxt, who, now, expected in bad:
        got = {v.code.value for v in check_revision(load_pair(prev, nxt, who, now))}
        assert got == expected, label
    for label, prev, nxt, who, now in good:
        assert check_revision(load_pair(prev, nxt, who, now)) == [], label
    elapsed = time.perf_counter() - t
    report(f"{len(bad)} violation pairs, {len(good)} clean pairs, {elapsed:.2f}s")
    assert len(good) >= 10
    assert elapsed < 5


# --- simulation traces shared by 2 and 8 ------------------------------------------------

FULL = SimConfig(seed=1, horizon_hours=48)


@pytest.fixture(scope="module")
def full_run():
    t = time.perf_counter()
    trace = run(FULL)
    return trace, time.perf_counter() - t


@pytest.fixture(scope="module")
def extra_run():
    return run(SimConfig(seed=2, horizon_hours=24))


# --- 2 ---------------------------------------------------------------------------

NOISE = [
    "Qed.",
    "Admitted.",
    "Qed",
    "Theorem fake : False.",
    "Lemma x : True. Qed.",
    "Axiom cheat : False.",
    "Definition d := 0.",
    "BOUNTY 500",
    "see BOUNTY: 999",
    "was BALANCE: Alice 99999",
    "old LOCK: Bob UNTIL 2030-01-01T00:00:00Z",
    "then COLLECTED: Dave 100",
    "SUBBOUNTY Alice 7",
    "(* Admitted. *)",
    "(* nested Qed. (* deeper Theorem t : P. *) *)",
    "ESTIMATE lines=1",
]


def noise(rng):
    words = [rng.choice(NOISE) for _ in range(rng.randint(1, 3))]
    if rng.random() < 0.3:
        words.insert(0, "".join(rng.choice("abc xyz.:") for _ in range(rng.randint(1, 8))))
    text = " ".join(words)
    # a comment that opens with a marker is a ledger entry, not prose
    return text if annotation_marker("(* " + text) is None else "note " + text


def inject(text, rng, count):
    """Add keyword noise inside existing plain comments or as new comments at line starts."""
    for _ in range(count):
        toks = tokenize(text)
        plain = [t for t in toks if t.kind is TokenKind.COMMENT and annotation_marker(t.text) is None]
        breaks = [t.pos + i + 1 for t in toks if t.kind is TokenKind.WHITESPACE for i, c in enumerate(t.text) if c == "\n"]
        if plain and rng.random() < 0.5:
            at = rng.choice(plain).pos + 2
            text = text[:at] + " " + noise(rng) + " " + text[at:]
        elif breaks:
            at = rng.choice(breaks)
            text = text[:at] + "(* " + noise(rng) + " *)\n" + text[at:]
    return text


def statuses(devfile):
    return [(i.name, i.proof_status) for i in devfile.items]


@pytest.mark.criterion(2, "comment injection changes no guard outcome and no proof status (500 accepted pairs)")
def test_comment_injection_immunity(full_run, extra_run):
    trace, _ = full_run
    pool = []
    for tr in (trace, extra_run):
        revs = tr.revisions
        pool += [(a.text, b.text, b.committer, b.time, tr.rules) for a, b in zip(revs, revs[1:])]
    rng = random.Random(2024)
    pairs = rng.sample(pool, 500) if len(pool) >= 500 else [rng.choice(pool) for _ in range(500)]
    changed = 0
    for prev, nxt, who, now, rules in pairs:
        clean = load_pair(prev, nxt, who, now, rules=rules)
        before = check_revision(clean)
        assert before == []
        p2 = inject(prev, rng, rng.randint(0, 3))
        n2 = inject(nxt, rng, rng.randint(1, 4))
        changed += n2 != nxt
        noisy = load_pair(p2, n2, who, now, rules=rules)
        after = check_revision(noisy)
        assert after == before, [str(v) for v in after]
        assert statuses(noisy.previous) == statuses(clean.previous)
        assert statuses(noisy.proposed) == statuses(clean.proposed)
    report(f"500 pairs from a pool of {len(pool)}, {changed} proposed revisions altered")
    assert changed == 500


# --- 3 ---------------------------------------------------------------------------

@pytest.mark.criterion(3, "ledger conservation, no negative balance, at most 10 live locks (10,000 sequences)")
def test_ledger_conservation_and_caps():
    at_cap = steps = 0
    for seed in range(10_000):
        rng = random.Random(seed)
        burst = seed % 4 == 0
        seq = random_steps(rng, 120, n_items=40, initial=5000, burst=True) if burst else random_steps(rng, 40)
        top = 0
        for state in seq:
            steps += 1
            assert conservation_residual(state) == 0, seed
            assert min(state.balances.values()) >= 0, seed
            live = max(state.live_locks(a) for a in AGENTS)
            assert live <= 10, seed
            top = max(top, live)
        at_cap += top == 10
    report(f"{steps} states checked, {at_cap} sequences reached the lock cap")
    assert at_cap > 0


# --- 4 ---------------------------------------------------------------------------

@pytest.mark.criterion(4, "live lock holder is paid; after expiry the prover is paid")
def test_locker_beneficiary():
    rng = random.Random(4)
    live = expired = 0
    for _ in range(5000):
        holder, prover = rng.sample(AGENTS, 2)
        amount = rng.randint(1, 400)
        state = new_ledger(AGENTS, initial_balance=rng.randint(50, 500), clock=T0)
        state = place_bounty(state, ADMIN, "goal", amount, T0)
        t_lock = T0 + timedelta(minutes=rng.randint(0, 600))
        hours = rng.choice((1, 6, 24))
        state = lock(state, holder, "goal", t_lock, t_lock + timedelta(hours=hours))
        fee = state.locks["goal"].fee_paid
        if rng.random() < 0.5:
            t = t_lock + timedelta(seconds=rng.randint(0, hours * 3600))
            payee = holder
            live += 1
        else:
            t = t_lock + timedelta(hours=hours, seconds=rng.randint(1, 86400))
            payee = prover
            expired += 1
        before = dict(state.balances)
        after = collect(state, prover, "goal", t)
        assert after.collected[-1].agent == payee
        assert after.events[-1].kind is EventKind.COLLECT and after.events[-1].agent == payee
        assert after.balances[payee] == before[payee] + amount
        other = prover if payee == holder else holder
        assert after.balances[other] == before[other]
        assert fee == -(-amount // 10)
    report(f"{live} live-lock scenarios, {expired} expired-lock scenarios")


# --- 5 ---------------------------------------------------------------------------

@pytest.mark.criterion(5, "classification equals brute-force closure on 1,000 random DAGs, < 10 s")
def test_classification_oracle():
    rng = random.Random(5)
    graphs = [random_dag(rng, max_nodes=50, max_edges=200) for _ in range(1000)]
    t = time.perf_counter()
    for g, st in graphs:
        got = classify(g, st)
        assert got == classify_oracle(g.nodes, g.edges, g.kinds, st, g.allowed_axioms)
    elapsed = time.perf_counter() - t
    with_axioms = sum(1 for g, _ in graphs if g.allowed_axioms)
    report(f"1000 DAGs ({with_axioms} with allowed axioms), {elapsed:.2f}s including the oracle")
    assert elapsed < 10


# --- 6 ---------------------------------------------------------------------------

def lifecycle_log():
    """A real ledger run whose agent bounties end 279 self / 114 cross / 312 open / 4 removed."""
    s = new_ledger({"Alice": 600, "Bob": 400, "Charlie": 100}, clock=T0)
    plan = [
        ("Alice", "s1", 100, "Alice"),
        ("Alice", "s2", 100, "Alice"),
        ("Bob", "s3", 79, "Bob"),
        ("Bob", "c1", 100, "Charlie"),
        ("Charlie", "c2", 14, "Alice"),
        ("Alice", "o1", 300, None),
        ("Bob", "o2", 12, None),
        ("Charlie", "r1", 4, "removed"),
    ]
    t = T0
    for creator, item, amount, _ in plan:
        s = place_sub_bounty(s, creator, item, amount, t)
    s = place_bounty(s, ADMIN, "admin_goal", 250, t)
    for _, item, _, fate in plan:
        t += timedelta(minutes=5)
        if fate == "removed":
            s = remove_bounty(s, item, t, "duplicate")
        elif fate is not None:
            s = collect(s, fate, item, t)
    s = collect(s, "Bob", "admin_goal", t + timedelta(minutes=1))
    return s


@pytest.mark.criterion(6, "lifecycle partition 709 = 279 + 114 + 312 + 4, identity on random logs")
def test_lifecycle_partition(tmp_path, capsys):
    s = lifecycle_log()
    r = lifecycle_report(s.events)
    assert (r.placed_total, r.self_collected, r.cross_collected, r.still_open, r.removed) == (709, 279, 114, 312, 4)
    log = tmp_path / "events.log"
    log.write_text(render_event_log(s.events))
    assert main(["ledger", "report", "--events", str(log)]) == 0
    out = capsys.readouterr().out.split()
    assert out == ["bucket,tokens", "placed,709", "self_collected,279", "cross_collected,114", "open,312", "removed,4"]
    n = 0
    for seed in range(2000):
        *_, final = random_steps(random.Random(seed), 60)
        rep = lifecycle_report(final.events)
        assert rep.balanced
        n += rep.placed_total > 0
    report(f"schema log reproduced; 2000 random logs balanced ({n} with agent bounties)")
    assert n > 0


# --- 7 ---------------------------------------------------------------------------

@pytest.mark.criterion(7, "throughput 38,900 +/- 100 and 6,770 +/- 50 lines/day")
def test_throughput(capsys):
    fast = throughput([19_000, 121_000], [T0, T0 + timedelta(hours=63)])
    slow = throughput([0, 406_000], [T0, T0 + timedelta(days=60)])
    assert abs(round_sig(fast, 3) - 38_900) <= 100
    assert abs(round_sig(slow, 3) - 6_770) <= 50
    assert main(["metrics", "throughput", "--start-lines", "19000", "--end-lines", "121000",
                 "--start", "2026-02-17T00:00:00Z", "--end", "2026-02-19T15:00:00Z"]) == 0
    assert abs(float(capsys.readouterr().out.split()[1]) - 38_900) <= 100
    report(f"{fast:.1f} -> {round_sig(fast, 3):g}, {slow:.1f} -> {round_sig(slow, 3):g}")


# --- 8 ---------------------------------------------------------------------------

@pytest.mark.criterion(8, "simulation is deterministic, every accepted revision re-validates, 48 h run < 60 s")
def test_simulation(full_run):
    trace, elapsed = full_run
    again = run(FULL)
    assert again.to_bytes() == trace.to_bytes()
    revs = trace.revisions
    for a, b in zip(revs, revs[1:]):
        assert check_revision(load_pair(a.text, b.text, b.committer, b.time, rules=trace.rules)) == [], b.time
    assert trace.replayed_history() == trace.history_rows()
    report(
        f"{len(FULL.agents)} agents, {FULL.horizon_hours:g} h: {len(revs) - 1} accepted, "
        f"{len(trace.rejected)} rejected, {elapsed:.1f}s"
    )
    assert len(FULL.agents) == 4 and elapsed < 60


# --- 9 ---------------------------------------------------------------------------

@pytest.mark.criterion(9, "Brouwer chain classification and table ordering")
def test_brouwer_table(tmp_path, capsys):
    dev = parse_text(brouwer_source())
    classes = classify_file(dev)
    assert classes["brouwer_fixed_point"] is ProofClass.ADMITTED_CLOSURE
    assert classes["pi1_circle_iso_Z"] is ProofClass.ADMITTED
    above = ("inclusion_circle_not_nulhomotopic", "nonvanishing_field_points_in_and_out", "brouwer_fixed_point")
    below = ("circle_covering_map", "path_lifting_unique")
    assert all(classes[n] is ProofClass.ADMITTED_CLOSURE for n in above)
    assert all(classes[n] is ProofClass.FULLY_PROVED for n in below)
    rows = report_table(dev, build_graph(dev), classes, only=None)
    lengths = [r.length for r in rows]
    assert lengths == sorted(lengths, reverse=True)
    path = tmp_path / "brouwer.mg"
    path.write_text(brouwer_source())
    assert main(["deps", "table", str(path), "--all"]) == 0
    cli = [line.split(",") for line in capsys.readouterr().out.split()[1:]]
    assert [int(r[1]) for r in cli] == lengths
    assert [r[0] for r in cli][:3] == ["nonvanishing_field_points_in_and_out", "inclusion_circle_not_nulhomotopic", "brouwer_fixed_point"]
    report("chain above the admitted node: AdmittedClosure; below: FullyProved; table sorted")
