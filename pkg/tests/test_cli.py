import csv
import io
import subprocess
import sys

import pytest

from proofmarket.cli import main

from fixtures import LONG_PROOFS, brouwer_source, long_proofs_source
from guard_corpus import BASE, balance, edit

NOW = "2026-02-17T00:00:00Z"
COLLECT = balance(
    edit(BASE, ("(* BOUNTY: 40 *)\nLemma helper : Q carrier.\nAdmitted.", "(* BOUNTY: 40 *)\n(* COLLECTED: Alice 40 *)\nLemma helper : Q carrier.\n  exact q.\nQed.")),
    "Alice",
    540,
)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def guard(files, prev, nxt, *extra):
    return main(["guard", "check", "--prev", files("a.mg", prev), "--next", files("b.mg", nxt), "--agent", "Alice", "--now", NOW, *extra])


def test_guard_clean(files, capsys):
    assert guard(files, BASE, COLLECT) == 0
    assert capsys.readouterr().out == ""


def test_guard_violation_lines(files, capsys):
    assert guard(files, BASE, balance(BASE, "Alice", -5)) == 1
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.split()[0] == "NegativeBalance" for line in out)


def test_guard_statement_line(files, capsys):
    assert guard(files, BASE, edit(BASE, ("group carrier", "monoid carrier"))) == 1
    code, item, *_ = capsys.readouterr().out.split()
    assert (code, item) == ("StatementMutated", "fg_is_group")


def test_guard_override(files, capsys):
    assert guard(files, BASE, balance(BASE, "Alice", -5), "--override") == 0
    cap = capsys.readouterr()
    assert "NegativeBalance" in cap.out and "override" in cap.err


def test_guard_parse_failure(files, capsys):
    assert guard(files, BASE, BASE + "Theorem x : (* open") == 2
    assert "proposed" in capsys.readouterr().err


def test_guard_naive(files, capsys):
    assert guard(files, BASE, BASE, "--naive") == 0


def test_unknown_flag(files, capsys):
    assert main(["guard", "check", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_required(capsys):
    assert main(["ledger", "status", "x.mg"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["parse", "/nonexistent/x.mg"]) == 2


def test_parse(files, capsys):
    assert main(["parse", files("a.mg", BASE)]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0] == ["name", "kind", "status", "length"]
    assert ["fg_is_group", "Theorem", "Admitted", "0"] in out


def test_deps_table_fixture(files, capsys):
    assert main(["deps", "table", files("t.mg", long_proofs_source()), "--min-length", "400"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[1] == ["cyclic_infinite_order_iff_Z", "1999", "FullyProved"]
    assert [(r[0], int(r[1])) for r in out[1:]] == LONG_PROOFS


def test_deps_classify_and_axiom_env(files, capsys, monkeypatch):
    path = files("ax.mg", "Axiom lem : P.\nTheorem t : Q. apply lem. Qed.\n")
    assert main(["deps", "classify", path]) == 0
    assert ["t", "1", "AdmittedClosure"] in rows(capsys.readouterr().out)
    monkeypatch.setenv("PROOFMARKET_AXIOM_INDEX", files("idx.txt", "lem\n"))
    assert main(["deps", "classify", path]) == 0
    assert ["t", "1", "FullyProved"] in rows(capsys.readouterr().out)


def test_deps_table_all(files, capsys):
    assert main(["deps", "table", files("b.mg", brouwer_source()), "--all"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[1][:2] == ["nonvanishing_field_points_in_and_out", "3729"]


def test_ledger_status(files, capsys):
    assert main(["ledger", "status", files("a.mg", BASE), "--now", "2026-02-17T13:00:00Z"]) == 0
    out = rows(capsys.readouterr().out)
    assert ["balance", "Alice", "500", ""] in out
    assert ["bounty", "fg_is_group", "100", "Admin"] in out
    assert ["lock", "locked_thm", "Bob", "2026-02-17T12:00:00Z expired"] in out


def test_ledger_apply(files, capsys, tmp_path):
    path = files("c.mg", COLLECT.replace("(* COLLECTED: Alice 40 *)\n", "").replace("Alice 540", "Alice 500"))
    before = open(path).read()
    log = files("ev.log", "2026-02-17T01:00:00Z Collect Alice helper 40 prover=Alice\n")
    assert main(["ledger", "apply", path, "--events", log]) == 0
    out = capsys.readouterr().out
    assert "(* COLLECTED: Alice 40 *)" in out and "(* BALANCE: Alice 540 *)" in out
    assert open(path).read() == before  # nothing written without --in-place
    assert main(["ledger", "apply", path, "--events", log, "--in-place"]) == 0
    assert open(path).read() == out


def test_ledger_apply_refuses_unproved(files, capsys):
    log = files("ev.log", "2026-02-17T01:00:00Z Collect Alice fg_is_group 100 prover=Alice\n")
    assert main(["ledger", "apply", files("a.mg", BASE), "--events", log]) == 1


def test_ledger_report(files, capsys):
    log = files(
        "ev.log",
        "2026-02-17T00:00:00Z PlaceSubBounty Alice a 30\n"
        "2026-02-17T00:00:00Z PlaceSubBounty Bob b 20\n"
        "2026-02-17T01:00:00Z Collect Alice a 30 prover=Alice\n",
    )
    assert main(["ledger", "report", "--events", log]) == 0
    out = dict(rows(capsys.readouterr().out)[1:])
    assert out == {"placed": "50", "self_collected": "30", "cross_collected": "0", "open": "20", "removed": "0"}


def test_metrics_throughput(capsys):
    argv = ["metrics", "throughput", "--start-lines", "19000", "--end-lines", "121000",
            "--start", "2026-02-17T00:00:00Z", "--end", "2026-02-19T15:00:00Z"]
    assert main(argv) == 0
    assert rows(capsys.readouterr().out) == [["lines_per_day"], ["38900"]]
    argv[-1] = argv[-3]
    assert main(argv) == 1


def test_metrics_growth_and_agents(files, capsys):
    files("r0.mg", BASE)
    files("r1.mg", COLLECT)
    manifest = files("m.txt", "2026-02-17T00:00:00Z r0.mg\n2026-02-17T02:00:00Z r1.mg Alice\n")
    assert main(["metrics", "growth", "--manifest", manifest]) == 0
    assert rows(capsys.readouterr().out) == [["commit_index", "line_count"], ["0", str(BASE.count("\n"))], ["1", str(COLLECT.count("\n"))]]
    log = files("ev.log", "2026-02-17T01:00:00Z Collect Alice helper 40 prover=Alice\n")
    assert main(["metrics", "agents", "--manifest", manifest, "--events", log, "--agents", "Alice"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0] == ["commit_index", "balance_alice", "cum_collected_alice", "cum_locks_alice", "cum_bounties_made_alice"]
    assert out[1:] == [["0", "500", "0", "0", "0"], ["1", "540", "40", "0", "0"]]


def test_sim_run_out(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sim", "run", "--seed", "3", "--hours", "3", "--out", str(out)]) == 0
    summary = rows(capsys.readouterr().out)
    assert summary[0][0] == "label" and summary[1][-1] == "True"
    assert sorted(p.name for p in out.iterdir()) == ["agent_history.csv", "events.log", "final.mg", "mg_growth.csv"]
    growth = rows((out / "mg_growth.csv").read_text())
    assert growth[0] == ["commit_index", "line_count"]


def test_sim_sweep(files, capsys):
    cfg = files("a.cfg", "horizon_hours = 2\nagent = Ann Collaborator\nagent = Ben Sniper\n")
    assert main(["sim", "sweep", cfg, "--seeds", "2"]) == 0
    out = rows(capsys.readouterr().out)
    assert [r[0] for r in out[1:]] == ["a/seed0", "a/seed1"]
    bad = files("b.cfg", "colour = blue\n")
    assert main(["sim", "sweep", bad]) == 2


def test_module_entry_point(tmp_path):
    p = tmp_path / "a.mg"
    p.write_text(BASE)
    res = subprocess.run([sys.executable, "-m", "proofmarket", "parse", str(p)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("name,kind,status,length")
