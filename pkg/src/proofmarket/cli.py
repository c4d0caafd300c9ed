"""Command line entry point: ``proofmarket <group> <command> ...``.

Exit codes: 0 success, 1 domain violation (guard findings, ledger errors),
2 usage or parse errors.  Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path

from ._time import format_rfc3339, parse_rfc3339
from .depgraph import DependencyCycle, ProofClass, build_graph, classify, load_axiom_index, report_table, statuses_of
from .devfile import DevFileError, ProofStatus, load, proof_length, rewrite_annotations
from .guard import ParseFailure, check_revision, load_pair, naive_line_check
from .ledger import (
    EventKind,
    LedgerError,
    item_annotations,
    ledger_from_devfile,
    lifecycle_report,
    parse_event_log,
    replay,
)
from .metrics import (
    GROWTH_HEADER,
    ReplayFailure,
    Revision,
    ZeroElapsed,
    agent_history,
    growth_series,
    round_sig,
    throughput,
    write_csv,
)
from .sim import ConfigInvalid, InitialRevisionRejected, SimConfig, parse_config, run, summarize, sweep, sweep_csv

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input the user can fix; reported with exit 2."""


class DomainError(Exception):
    """A well-formed request the market rules refuse; exit 1."""


def _err(msg: str) -> None:
    print(f"proofmarket: {msg}", file=sys.stderr)


def _timestamp(text: str) -> datetime:
    try:
        return parse_rfc3339(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def _load(path: str):
    _read(path)
    try:
        return load(path)
    except DevFileError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _axioms(args):
    try:
        return load_axiom_index(getattr(args, "axiom_index", None))
    except OSError as exc:
        raise UsageError(f"axiom index: {exc}") from None


def _events(path: str):
    try:
        return parse_event_log(_read(path).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _manifest(path: str) -> list[Revision]:
    """Lines ``<rfc3339> <path> [committer]``; relative paths resolve against the manifest."""
    base = Path(path).parent
    revs = []
    for n, raw in enumerate(_read(path).decode("utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise UsageError(f"{path}:{n}: expected '<time> <file> [committer]'")
        try:
            ts = parse_rfc3339(parts[0])
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: {exc}") from None
        text = _read(str(base / parts[1])).decode("utf-8", errors="replace")
        revs.append(Revision(text, ts, parts[2] if len(parts) > 2 else None))
    return revs


# ---------------------------------------------------------------------------
# commands

def cmd_parse(args) -> int:
    dev = _load(args.file)
    rows = [(it.name, it.kind.value, it.proof_status.value, proof_length(it)) for it in dev.items]
    sys.stdout.write(write_csv(("name", "kind", "status", "length"), rows))
    print(
        f"{len(dev.items)} items, {dev.raw_line_count} lines, {dev.normalized_line_count} normalized",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_guard_check(args) -> int:
    try:
        pair = load_pair(_read(args.prev), _read(args.next), args.agent, args.now, axioms=_axioms(args))
    except ParseFailure as exc:
        raise UsageError(f"parse failure in {exc}") from None
    violations = naive_line_check(pair) if args.naive else check_revision(pair)
    for v in violations:
        print(v)
    if violations and args.override:
        _err(f"override: {len(violations)} violation(s) recorded and bypassed by {args.agent}")
        return EXIT_OK
    return EXIT_VIOLATION if violations else EXIT_OK


def _ledger(dev):
    try:
        return ledger_from_devfile(dev)
    except LedgerError as exc:
        raise UsageError(str(exc)) from None


def cmd_ledger_status(args) -> int:
    dev = _load(args.file)
    state = _ledger(dev)
    rows = [("balance", a, v, "") for a, v in state.balances.items()]
    rows += [("bounty", k, b.amount, b.creator) for k, b in sorted(state.open_bounties.items())]
    for k, rec in sorted(state.locks.items()):
        status = "live" if rec.live(args.now) else "expired"
        rows.append(("lock", k, rec.holder, f"{format_rfc3339(rec.expires)} {status}"))
    rows += [("collected", c.item, c.amount, c.agent) for c in state.collected]
    sys.stdout.write(write_csv(("kind", "key", "value", "extra"), rows))
    return EXIT_OK


def cmd_ledger_apply(args) -> int:
    dev = _load(args.file)
    state = _ledger(dev)
    events = _events(args.events)
    for ev in events:
        if ev.kind is EventKind.COLLECT:
            item = dev.by_name.get(ev.item)
            if item is None or item.proof_status is not ProofStatus.QED:
                raise DomainError(f"collect on {ev.item}: not closed with Qed in {args.file}")
        elif ev.item and ev.item not in dev.by_name and ev.kind is not EventKind.ADMIN_ADJUST:
            raise DomainError(f"event on unknown item {ev.item}")
    try:
        state = replay(events, state)
    except LedgerError as exc:
        raise DomainError(str(exc)) from None
    touched = {ev.item for ev in events if ev.item}
    anns = {}
    for it in dev.items:
        if it.name in touched:
            anns[it.name] = item_annotations(state, it.name) + ([it.estimate] if it.estimate else [])
    text = rewrite_annotations(dev, balances=state.balances, annotations=anns)
    if args.in_place:
        Path(args.file).write_text(text, encoding="utf-8")
        _err(f"applied {len(events)} event(s) to {args.file}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_ledger_report(args) -> int:
    r = lifecycle_report(_events(args.events))
    rows = [
        ("placed", r.placed_total),
        ("self_collected", r.self_collected),
        ("cross_collected", r.cross_collected),
        ("open", r.still_open),
        ("removed", r.removed),
    ]
    sys.stdout.write(write_csv(("bucket", "tokens"), rows))
    if not r.balanced:
        _err("lifecycle partition does not balance")
        return EXIT_VIOLATION
    return EXIT_OK


def _classified(args):
    dev = _load(args.file)
    graph = build_graph(dev, _axioms(args))
    try:
        classes = classify(graph, statuses_of(dev))
    except DependencyCycle as exc:
        raise DomainError(str(exc)) from None
    return dev, graph, classes


def cmd_deps_classify(args) -> int:
    dev, _, classes = _classified(args)
    rows = [(it.name, proof_length(it), classes[it.name].value) for it in dev.items]
    sys.stdout.write(write_csv(("name", "length", "class"), rows))
    return EXIT_OK


def cmd_deps_table(args) -> int:
    dev, graph, classes = _classified(args)
    only = None if args.all else ProofClass.FULLY_PROVED
    rows = report_table(dev, graph, classes, min_length=args.min_length, only=only)
    sys.stdout.write(write_csv(("name", "length", "class"), [(r.name, r.length, r.proof_class.value) for r in rows]))
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    try:
        if args.config:
            cfg = parse_config(_read(args.config).decode("utf-8"), base_dir=os.path.dirname(args.config))
        else:
            cfg = SimConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.hours is not None:
            overrides["horizon_hours"] = args.hours
        if overrides:
            cfg = replace(cfg, **overrides)
        cfg.validate()
        return cfg
    except (ConfigInvalid, OSError) as exc:
        raise UsageError(f"config: {exc}") from None


def cmd_sim_run(args) -> int:
    cfg = _sim_config(args)
    try:
        trace = run(cfg)
    except InitialRevisionRejected as exc:
        raise DomainError(f"initial revision rejected: {exc}") from None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "mg_growth.csv").write_text(trace.growth_csv(), encoding="utf-8")
        (out / "agent_history.csv").write_text(trace.history_csv(), encoding="utf-8")
        (out / "events.log").write_text(trace.event_log(), encoding="utf-8")
        (out / "final.mg").write_text(trace.revisions[-1].text, encoding="utf-8")
    row = summarize(cfg, trace)
    sys.stdout.write(sweep_csv([row]))
    for r in trace.rejected:
        _err(f"rejected {format_rfc3339(r.time)} {r.agent} {','.join(r.codes)}")
    return EXIT_OK


def cmd_sim_sweep(args) -> int:
    configs = []
    for path in args.configs:
        try:
            cfg = parse_config(_read(path).decode("utf-8"), base_dir=os.path.dirname(path))
        except ConfigInvalid as exc:
            raise UsageError(f"{path}: {exc}") from None
        if not cfg.label:
            cfg = replace(cfg, label=Path(path).stem)
        configs.append(cfg)
    if args.seeds:
        configs = [replace(c, seed=s, label=f"{c.label}/seed{s}") for c in configs for s in range(args.seeds)]
    try:
        rows = sweep(configs, workers=args.workers)
    except InitialRevisionRejected as exc:
        raise DomainError(f"initial revision rejected: {exc}") from None
    sys.stdout.write(sweep_csv(rows))
    return EXIT_OK


def _revisions(args) -> list[Revision]:
    if args.manifest:
        return _manifest(args.manifest)
    return [Revision(_read(p).decode("utf-8", errors="replace")) for p in args.files]


def cmd_metrics_growth(args) -> int:
    sys.stdout.write(write_csv(GROWTH_HEADER, growth_series(_revisions(args))))
    return EXIT_OK


def cmd_metrics_agents(args) -> int:
    revs = _manifest(args.manifest)
    agents = args.agents.split(",") if args.agents else None
    try:
        header, rows = agent_history(_events(args.events), revs, agents)
    except (ReplayFailure, LedgerError) as exc:
        raise DomainError(str(exc)) from None
    except DevFileError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(write_csv(header, rows))
    return EXIT_OK


def cmd_metrics_throughput(args) -> int:
    if args.manifest:
        revs = _manifest(args.manifest)
        points, times = revs, [r.time for r in revs]
    else:
        if None in (args.start_lines, args.end_lines, args.start, args.end):
            raise UsageError("give --manifest, or all of --start-lines --end-lines --start --end")
        points, times = [args.start_lines, args.end_lines], [args.start, args.end]
    try:
        rate = throughput(points, times)
    except ZeroElapsed as exc:
        raise DomainError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(write_csv(("lines_per_day",), [(f"{round_sig(rate, 3):g}",)]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proofmarket", description="Bounty market tooling for a shared formal development.")
    groups = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    sp = groups.add_parser("parse", help="parse a development and list its items")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_parse)

    guard = groups.add_parser("guard", help="revision guard").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = guard.add_parser("check", help="check a proposed revision against its predecessor")
    sp.add_argument("--prev", required=True)
    sp.add_argument("--next", required=True)
    sp.add_argument("--agent", required=True)
    sp.add_argument("--now", required=True, type=_timestamp)
    sp.add_argument("--naive", action="store_true", help="use the line/regex checker instead")
    sp.add_argument("--override", action="store_true", help="admin: report violations but exit 0")
    sp.add_argument("--axiom-index")
    sp.set_defaults(func=cmd_guard_check)

    ledger = groups.add_parser("ledger", help="ledger operations").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = ledger.add_parser("status", help="balances, bounties and locks of a development")
    sp.add_argument("file")
    sp.add_argument("--now", required=True, type=_timestamp)
    sp.set_defaults(func=cmd_ledger_status)
    sp = ledger.add_parser("apply", help="replay an event log onto a development's annotations")
    sp.add_argument("file")
    sp.add_argument("--events", required=True)
    sp.add_argument("--in-place", action="store_true")
    sp.set_defaults(func=cmd_ledger_apply)
    sp = ledger.add_parser("report", help="bounty lifecycle partition of an event log")
    sp.add_argument("--events", required=True)
    sp.set_defaults(func=cmd_ledger_report)

    deps = groups.add_parser("deps", help="dependency classification").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = deps.add_parser("classify", help="class of every item")
    sp.add_argument("file")
    sp.add_argument("--axiom-index")
    sp.set_defaults(func=cmd_deps_classify)
    sp = deps.add_parser("table", help="fully proved theorems by proof length")
    sp.add_argument("file")
    sp.add_argument("--min-length", type=int)
    sp.add_argument("--all", action="store_true", help="include theorems of every class")
    sp.add_argument("--axiom-index")
    sp.set_defaults(func=cmd_deps_table)

    sim = groups.add_parser("sim", help="market simulation").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = sim.add_parser("run", help="run one simulation")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--hours", type=float)
    sp.add_argument("--out", help="directory for mg_growth.csv, agent_history.csv, events.log, final.mg")
    sp.set_defaults(func=cmd_sim_run)
    sp = sim.add_parser("sweep", help="summarize several configs")
    sp.add_argument("configs", nargs="+")
    sp.add_argument("--seeds", type=int, help="run each config with seeds 0..N-1")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sim_sweep)

    metrics = groups.add_parser("metrics", help="history metrics").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = metrics.add_parser("growth", help="raw line count per revision")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("files", nargs="*", default=[])
    sp.set_defaults(func=cmd_metrics_growth)
    sp = metrics.add_parser("agents", help="per-agent balance and cumulative series")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--events", required=True)
    sp.add_argument("--agents", help="comma-separated column order")
    sp.set_defaults(func=cmd_metrics_agents)
    sp = metrics.add_parser("throughput", help="normalized lines per day")
    sp.add_argument("--manifest")
    sp.add_argument("--start-lines", type=int)
    sp.add_argument("--end-lines", type=int)
    sp.add_argument("--start", type=_timestamp)
    sp.add_argument("--end", type=_timestamp)
    sp.set_defaults(func=cmd_metrics_throughput)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except DomainError as exc:
        _err(str(exc))
        return EXIT_VIOLATION
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
