"""Name-reference dependency graph and the Qed gate.

An item may close with ``Qed`` only when everything it (transitively)
mentions is itself closed with ``Qed``, is a definition, or is whitelisted
in the allowed-axiom index.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping

from .devfile import DevFile, ItemKind, ProofStatus, TokenKind, proof_length


class DependencyCycle(ValueError):
    def __init__(self, names):
        super().__init__("dependency cycle: " + " -> ".join(names))
        self.names = list(names)


class ProofClass(Enum):
    FULLY_PROVED = "FullyProved"
    ADMITTED_CLOSURE = "AdmittedClosure"
    ADMITTED = "Admitted"
    OPEN = "Open"


@dataclass(frozen=True)
class AxiomIndex:
    """Allowed axioms, by name or by ``sha256`` of the canonical statement."""

    names: frozenset[str] = frozenset()
    hashes: frozenset[str] = frozenset()

    def resolve(self, devfile: DevFile | None = None) -> frozenset[str]:
        allowed = set(self.names)
        if devfile is not None and self.hashes:
            for item in devfile.items:
                if item.kind is ItemKind.AXIOM and statement_hash(item.statement_text) in self.hashes:
                    allowed.add(item.name)
        return frozenset(allowed)


def statement_hash(canonical: str) -> str:
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_axiom_index(text: str) -> AxiomIndex:
    names, hashes = set(), set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("sha256:"):
            hashes.add(line[len("sha256:"):].lower())
        else:
            names.add(line)
    return AxiomIndex(frozenset(names), frozenset(hashes))


def load_axiom_index(path=None) -> AxiomIndex:
    """Load the index from *path*, else from ``$PROOFMARKET_AXIOM_INDEX``, else empty."""
    path = path or os.environ.get("PROOFMARKET_AXIOM_INDEX")
    if not path:
        return AxiomIndex()
    with open(path, encoding="utf-8") as fh:
        return parse_axiom_index(fh.read())


@dataclass(frozen=True)
class DepGraph:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]  # (user, used)
    allowed_axioms: frozenset[str] = frozenset()
    kinds: Mapping[str, ItemKind] = field(default_factory=dict, compare=False)

    def successors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for u, v in sorted(self.edges):
            out.setdefault(u, []).append(v)
            out.setdefault(v, [])
        return out


def build_graph(devfile: DevFile, allowed_axioms: Iterable[str] | AxiomIndex = ()) -> DepGraph:
    """Edge (u, v) whenever v's name occurs as an identifier in u's statement or proof."""
    if isinstance(allowed_axioms, AxiomIndex):
        allowed = allowed_axioms.resolve(devfile)
    else:
        allowed = frozenset(allowed_axioms)
    known = set(devfile.by_name) | allowed
    edges = set()
    for item in devfile.items:
        u = item.name
        for t in item.statement_tokens + item.proof_tokens:
            if t.kind is TokenKind.IDENTIFIER and t.text != u and t.text in known:
                edges.add((u, t.text))
    kinds = {it.name: it.kind for it in devfile.items}
    return DepGraph(tuple(it.name for it in devfile.items), frozenset(edges), allowed, kinds)


def statuses_of(devfile: DevFile) -> dict[str, ProofStatus]:
    return {it.name: it.proof_status for it in devfile.items}


def _satisfied(name: str, graph: DepGraph, statuses: Mapping[str, ProofStatus]) -> bool:
    if name in graph.allowed_axioms:
        return True
    kind = graph.kinds.get(name)
    if kind is ItemKind.DEFINITION:
        return True
    if kind is ItemKind.AXIOM:
        return False
    return statuses.get(name) is ProofStatus.QED


def classify(graph: DepGraph, statuses: Mapping[str, ProofStatus]) -> dict[str, ProofClass]:
    """Classify every item node.

    Definitions and allowed axioms count as closed; an Axiom missing from
    the index never does.  Raises DependencyCycle on cyclic graphs.
    """
    succ = graph.successors()
    ts = TopologicalSorter({n: succ[n] for n in sorted(succ)})
    try:
        order = list(ts.static_order())  # dependencies first
    except CycleError as exc:
        raise DependencyCycle(exc.args[1]) from None
    clean: dict[str, bool] = {}
    for n in order:
        clean[n] = _satisfied(n, graph, statuses) and all(clean[m] for m in succ[n])
    out = {}
    for n in graph.nodes:
        status = statuses.get(n, ProofStatus.OPEN)
        kind = graph.kinds.get(n)
        if clean[n]:
            out[n] = ProofClass.FULLY_PROVED
        elif status is ProofStatus.ADMITTED:
            out[n] = ProofClass.ADMITTED
        elif _satisfied(n, graph, statuses) or kind is ItemKind.DEFINITION:
            out[n] = ProofClass.ADMITTED_CLOSURE
        else:
            out[n] = ProofClass.OPEN
    return out


def classify_file(devfile: DevFile, allowed_axioms: Iterable[str] | AxiomIndex = ()) -> dict[str, ProofClass]:
    return classify(build_graph(devfile, allowed_axioms), statuses_of(devfile))


@dataclass(frozen=True)
class TableRow:
    name: str
    length: int
    proof_class: ProofClass


def report_table(
    devfile: DevFile,
    graph: DepGraph,
    classes: Mapping[str, ProofClass] | None = None,
    min_length: int | None = None,
    only: ProofClass | None = ProofClass.FULLY_PROVED,
) -> list[TableRow]:
    """Theorem rows sorted by normalized proof length, longest first.

    ``min_length`` is a strict lower bound (``length > min_length``).
    """
    if classes is None:
        classes = classify(graph, statuses_of(devfile))
    rows = []
    for item in devfile.items:
        if not item.is_theorem:
            continue
        cls = classes[item.name]
        if only is not None and cls is not only:
            continue
        length = proof_length(item)
        if min_length is not None and length <= min_length:
            continue
        rows.append((-length, item.position, TableRow(item.name, length, cls)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return [r[2] for r in rows]
