"""Stream tokenizer and item parser for single-file formal developments.

A development is a sequence of ``Definition``/``Theorem``/``Lemma``/``Axiom``
items.  Marketplace state lives in comments placed between items::

    (* BALANCE: Alice 500 *)
    (* BOUNTY: 100 *)
    (* LOCK: Bob UNTIL 2026-02-17T12:00:00Z *)
    Theorem fundamental_group_is_group : is_group (pi1 X x).
    Admitted.

Comments nest, and nothing inside a comment is ever a keyword.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence, Union

from ._time import format_rfc3339, parse_rfc3339


class DevFileError(ValueError):
    """Base class for tokenizer and parser failures."""

    def __init__(self, message: str, span: tuple[int, int] | None = None, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.span = span
        self.line = line


class InvalidUtf8(DevFileError):
    pass


class UnterminatedComment(DevFileError):
    pass


class DuplicateName(DevFileError):
    def __init__(self, name: str, span=None, line=None):
        super().__init__(f"duplicate item name {name!r}", span, line)
        self.name = name


class MissingTerminator(DevFileError):
    def __init__(self, item: str, span=None, line=None):
        super().__init__(f"item {item!r} has no terminating 'Qed.'/'Admitted.' (or statement '.')", span, line)
        self.item = item


class OrphanAnnotation(DevFileError):
    pass


class MalformedAnnotation(DevFileError):
    pass


class MalformedItem(DevFileError):
    pass


# ---------------------------------------------------------------------------
# tokens

class TokenKind(Enum):
    COMMENT = "Comment"
    KEYWORD = "Keyword"
    IDENTIFIER = "Identifier"
    PUNCT = "Punct"
    WHITESPACE = "Whitespace"


ITEM_KEYWORDS = frozenset({"Definition", "Theorem", "Lemma", "Axiom"})
TERMINATORS = frozenset({"Qed", "Admitted"})
KEYWORDS = ITEM_KEYWORDS | TERMINATORS


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokenKind
    text: str
    byte_span: tuple[int, int]  # (offset, length) in the UTF-8 source
    line: int
    pos: int  # character offset, used when rewriting the source

    @property
    def significant(self) -> bool:
        return self.kind is not TokenKind.WHITESPACE and self.kind is not TokenKind.COMMENT


_LEX = re.compile(r"(?P<ws>\s+)|(?P<com>\(\*)|(?P<word>[\w']+)|(?P<punct>:=|<->|->|<-|=>|.)", re.DOTALL)
_COMMENT_DELIM = re.compile(r"\(\*|\*\)")


def tokenize(source: Union[bytes, str]) -> list[Token]:
    """Split *source* into tokens whose texts concatenate back to the input.

    ``bytes`` input must be valid UTF-8.  Comments are ``(* ... *)`` and nest.
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            text = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(f"invalid UTF-8 at byte {exc.start}", (exc.start, 1)) from None
    else:
        text = source

    tokens: list[Token] = []
    append = tokens.append
    pos = 0
    boff = 0
    line = 1
    n = len(text)
    ws, kw, ident, punct, comment = (
        TokenKind.WHITESPACE,
        TokenKind.KEYWORD,
        TokenKind.IDENTIFIER,
        TokenKind.PUNCT,
        TokenKind.COMMENT,
    )
    ascii_text = text.isascii()
    while pos < n:
        # scan plain tokens until the next comment opener, then restart after it
        for m in _LEX.finditer(text, pos):
            group = m.lastgroup
            if group == "com":
                break
            chunk = m.group()
            if group == "ws":
                kind = ws
            elif group == "word":
                kind = kw if chunk in KEYWORDS else ident
            else:
                kind = punct
            blen = len(chunk) if ascii_text or chunk.isascii() else len(chunk.encode("utf-8"))
            append(Token(kind, chunk, (boff, blen), line, pos))
            if kind is ws:
                line += chunk.count("\n")
            boff += blen
            pos = m.end()
        else:
            break
        depth = 0
        end = None
        for d in _COMMENT_DELIM.finditer(text, pos):
            if d.group() == "(*":
                depth += 1
            else:
                depth -= 1
                if depth == 0:
                    end = d.end()
                    break
        if end is None:
            raise UnterminatedComment("unterminated comment", (boff, len(text[pos:].encode())), line)
        chunk = text[pos:end]
        blen = len(chunk) if ascii_text or chunk.isascii() else len(chunk.encode("utf-8"))
        append(Token(comment, chunk, (boff, blen), line, pos))
        line += chunk.count("\n")
        boff += blen
        pos = end
    return tokens


# ---------------------------------------------------------------------------
# annotations

@dataclass(frozen=True)
class Bounty:
    amount: int
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SubBounty:
    creator: str
    amount: int
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lock:
    agent: str
    expires: datetime
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Collected:
    agent: str
    amount: int
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Estimate:
    textbook_lines: int
    difficulty: int
    usd_cost: int
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.difficulty <= 10:
            raise ValueError(f"difficulty {self.difficulty} outside 1..10")
        if self.textbook_lines < 0 or self.usd_cost < 0:
            raise ValueError("estimate fields must be non-negative")


@dataclass(frozen=True)
class Balance:
    agent: str
    amount: int
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)


Annotation = Union[Bounty, SubBounty, Lock, Collected]

MARKERS = ("BOUNTY", "SUBBOUNTY", "LOCK", "COLLECTED", "ESTIMATE", "BALANCE")
_MARKER_RE = re.compile(r"\s*(%s):" % "|".join(MARKERS))
_AGENT = r"([A-Za-z_][\w-]*)"
_INT = r"([+-]?\d+)"
_ANNOTATION_GRAMMAR = {
    "BOUNTY": re.compile(rf"BOUNTY:\s*{_INT}"),
    "SUBBOUNTY": re.compile(rf"SUBBOUNTY:\s*{_AGENT}\s+{_INT}"),
    "LOCK": re.compile(rf"LOCK:\s*{_AGENT}\s+UNTIL\s+(\S+)"),
    "COLLECTED": re.compile(rf"COLLECTED:\s*{_AGENT}\s+{_INT}"),
    "ESTIMATE": re.compile(r"ESTIMATE:\s*lines=(\d+)\s+difficulty=(\d+)\s+usd=(\d+)"),
    "BALANCE": re.compile(rf"BALANCE:\s*{_AGENT}\s+{_INT}"),
}


def annotation_marker(comment: str) -> str | None:
    """Return the marker word if *comment* is annotation-shaped, else None."""
    if not comment.startswith("(*"):
        return None
    m = _MARKER_RE.match(comment, 2)
    return m.group(1) if m else None


def parse_annotation(token: Token):
    """Parse an annotation comment; None for ordinary comments.

    Amounts may be zero or negative here; rejecting them is the guard's job
    (it reports NonPositiveBounty / NegativeBalance).
    """
    marker = annotation_marker(token.text)
    if marker is None:
        return None
    inner = token.text[2:-2].strip()
    m = _ANNOTATION_GRAMMAR[marker].fullmatch(inner)
    if m is None:
        raise MalformedAnnotation(f"malformed {marker} annotation: {token.text!r}", token.byte_span, token.line)
    span = token.byte_span
    g = m.groups()
    if marker == "BOUNTY":
        return Bounty(int(g[0]), span)
    if marker == "SUBBOUNTY":
        return SubBounty(g[0], int(g[1]), span)
    if marker == "COLLECTED":
        return Collected(g[0], int(g[1]), span)
    if marker == "BALANCE":
        return Balance(g[0], int(g[1]), span)
    if marker == "LOCK":
        try:
            expires = parse_rfc3339(g[1])
        except ValueError as exc:
            raise MalformedAnnotation(f"bad LOCK timestamp: {exc}", span, token.line) from None
        return Lock(g[0], expires, span)
    try:
        return Estimate(int(g[0]), int(g[1]), int(g[2]), span)
    except ValueError as exc:
        raise MalformedAnnotation(f"bad ESTIMATE: {exc}", span, token.line) from None


def format_annotation(ann) -> str:
    if isinstance(ann, Bounty):
        return f"(* BOUNTY: {ann.amount} *)"
    if isinstance(ann, SubBounty):
        return f"(* SUBBOUNTY: {ann.creator} {ann.amount} *)"
    if isinstance(ann, Lock):
        return f"(* LOCK: {ann.agent} UNTIL {format_rfc3339(ann.expires)} *)"
    if isinstance(ann, Collected):
        return f"(* COLLECTED: {ann.agent} {ann.amount} *)"
    if isinstance(ann, Estimate):
        return f"(* ESTIMATE: lines={ann.textbook_lines} difficulty={ann.difficulty} usd={ann.usd_cost} *)"
    if isinstance(ann, Balance):
        return f"(* BALANCE: {ann.agent} {ann.amount} *)"
    raise TypeError(f"not an annotation: {ann!r}")


# ---------------------------------------------------------------------------
# items

class ItemKind(Enum):
    DEFINITION = "Definition"
    THEOREM = "Theorem"
    LEMMA = "Lemma"
    AXIOM = "Axiom"


class ProofStatus(Enum):
    QED = "Qed"
    ADMITTED = "Admitted"
    OPEN = "Open"


@dataclass(frozen=True)
class Item:
    name: str
    kind: ItemKind
    statement_text: str
    proof_status: ProofStatus
    proof_tokens: tuple[Token, ...]
    annotations: tuple[Annotation, ...]
    position: int
    estimate: Estimate | None = None
    statement_tokens: tuple[Token, ...] = field(default=(), repr=False, compare=False)
    line: int = field(default=0, compare=False)

    @property
    def is_theorem(self) -> bool:
        return self.kind in (ItemKind.THEOREM, ItemKind.LEMMA)

    @cached_property
    def proof_text(self) -> str:
        """Canonical proof body (comments and layout removed)."""
        return " ".join(t.text for t in self.proof_tokens if t.significant)

    @property
    def has_proof_body(self) -> bool:
        return any(t.significant for t in self.proof_tokens)

    def find(self, kind: type):
        return [a for a in self.annotations if isinstance(a, kind)]


@dataclass(frozen=True)
class DevFile:
    items: tuple[Item, ...]
    header_line_count: int
    raw_line_count: int
    normalized_line_count: int
    balances: tuple[Balance, ...] = ()
    source: str = field(default="", repr=False, compare=False)
    tokens: tuple[Token, ...] = field(default=(), repr=False, compare=False)
    # token indices of gap annotation comments (for rewrite_annotations)
    annotation_tokens: tuple[int, ...] = field(default=(), repr=False, compare=False)

    @cached_property
    def by_name(self) -> dict[str, Item]:
        return {it.name: it for it in self.items}

    def __getitem__(self, name: str) -> Item:
        return self.by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self.by_name


_OPEN = frozenset("([{")
_CLOSE = frozenset(")]}")


def _next_significant(tokens: Sequence[Token], i: int) -> int:
    n = len(tokens)
    while i < n and not tokens[i].significant:
        i += 1
    return i


def parse(tokens: Sequence[Token], source: str | None = None) -> DevFile:
    """Parse a token stream into a DevFile."""
    tokens = tuple(tokens)
    if source is None:
        source = "".join(t.text for t in tokens)
    n = len(tokens)
    items: list[Item] = []
    names: set[str] = set()
    balances: list[Balance] = []
    pending: list = []
    ann_tokens: list[int] = []
    first_item_line = None
    i = 0
    while i < n:
        tok = tokens[i]
        kind = tok.kind
        if kind is TokenKind.COMMENT:
            ann = parse_annotation(tok)
            if ann is not None:
                ann_tokens.append(i)
                if isinstance(ann, Balance):
                    if first_item_line is not None:
                        raise MalformedAnnotation("BALANCE lines belong in the header block", tok.byte_span, tok.line)
                    balances.append(ann)
                else:
                    pending.append(ann)
            i += 1
            continue
        if kind is TokenKind.KEYWORD:
            if tok.text in TERMINATORS:
                raise MalformedItem(f"stray {tok.text!r} outside any item", tok.byte_span, tok.line)
            item, i = _parse_item(tokens, i, len(items), pending)
            if item.name in names:
                raise DuplicateName(item.name, tok.byte_span, tok.line)
            names.add(item.name)
            items.append(item)
            if first_item_line is None:
                first_item_line = tok.line
            pending = []
            continue
        i += 1
    if pending:
        raise OrphanAnnotation("annotation after the last item", pending[0].span)
    raw = count_raw_lines(source)
    header = raw if first_item_line is None else first_item_line - 1
    return DevFile(
        items=tuple(items),
        header_line_count=header,
        raw_line_count=raw,
        normalized_line_count=_normalized_lines(tokens),
        balances=tuple(balances),
        source=source,
        tokens=tokens,
        annotation_tokens=tuple(ann_tokens),
    )


def _parse_item(tokens: tuple[Token, ...], start: int, position: int, pending: list):
    n = len(tokens)
    head = tokens[start]
    kind = ItemKind(head.text)
    j = _next_significant(tokens, start + 1)
    if j >= n or tokens[j].kind is not TokenKind.IDENTIFIER:
        raise MalformedItem(f"{head.text} without a name", head.byte_span, head.line)
    name = tokens[j].text

    # statement: up to the first '.' at bracket depth 0
    depth = 0
    body = 0
    colon = kind is ItemKind.DEFINITION  # a leading ':' is not statement body
    k = j + 1
    while True:
        if k >= n:
            raise MissingTerminator(name, head.byte_span, head.line)
        t = tokens[k]
        if t.kind is TokenKind.KEYWORD:
            raise MissingTerminator(name, head.byte_span, head.line)
        if t.significant:
            if t.kind is TokenKind.PUNCT:
                c = t.text
                if c in _OPEN:
                    depth += 1
                elif c in _CLOSE:
                    depth -= 1
                elif c == "." and depth <= 0:
                    break
                elif c == ":" and not colon and body == 0:
                    colon = True
                    k += 1
                    continue
            body += 1
        k += 1
    if body == 0:
        raise MalformedItem(f"{head.text} {name}: empty statement", head.byte_span, head.line)
    dot = k
    stmt_tokens = tokens[start : dot + 1]
    statement = " ".join(t.text for t in stmt_tokens if t.significant)

    estimate = None
    anns: list = []
    for a in pending:
        if isinstance(a, Estimate):
            if estimate is not None:
                raise MalformedAnnotation(f"two ESTIMATE annotations on {name}", a.span)
            estimate = a
        else:
            anns.append(a)

    status = ProofStatus.OPEN
    proof: tuple[Token, ...] = ()
    nxt = dot + 1
    if kind in (ItemKind.THEOREM, ItemKind.LEMMA):
        k = dot + 1
        seen_body = False
        while k < n:
            t = tokens[k]
            if t.kind is TokenKind.KEYWORD:
                if t.text in TERMINATORS:
                    d = _next_significant(tokens, k + 1)
                    if d >= n or tokens[d].text != ".":
                        raise MissingTerminator(name, t.byte_span, t.line)
                    status = ProofStatus(t.text)
                    proof = tokens[dot + 1 : k]
                    nxt = d + 1
                    break
                # next item begins
                if seen_body:
                    raise MissingTerminator(name, head.byte_span, head.line)
                break
            if t.significant:
                seen_body = True
            k += 1
        else:
            if seen_body:
                raise MissingTerminator(name, head.byte_span, head.line)
    item = Item(
        name=name,
        kind=kind,
        statement_text=statement,
        proof_status=status,
        proof_tokens=proof,
        annotations=tuple(anns),
        position=position,
        estimate=estimate,
        statement_tokens=stmt_tokens,
        line=head.line,
    )
    return item, nxt


def parse_text(source: Union[bytes, str]) -> DevFile:
    """tokenize + parse."""
    toks = tokenize(source)
    text = source if isinstance(source, str) else bytes(source).decode("utf-8")
    return parse(toks, text)


def load(path) -> DevFile:
    with open(path, "rb") as fh:
        return parse_text(fh.read())


# ---------------------------------------------------------------------------
# canonical forms and line counts

def canonical_statement(item: Union[Item, str]) -> str:
    """Statement with comments dropped and tokens joined by single spaces.

    Joining significant tokens (instead of squeezing whitespace in the raw
    text) makes ``P .`` and ``P.`` canonical-equal as well.
    """
    if isinstance(item, Item):
        return item.statement_text
    return " ".join(t.text for t in tokenize(item) if t.significant)


def count_raw_lines(source: str) -> int:
    if not source:
        return 0
    return source.count("\n") + (0 if source.endswith("\n") else 1)


def _normalized_lines(tokens: Iterable[Token]) -> int:
    # A logical line ends at a newline that follows a '.' at depth 0; shorter
    # physical lines are continuation lines and join the next one.
    groups = 0
    in_group = False
    ends_step = False
    depth = 0
    for t in tokens:
        kind = t.kind
        if kind is TokenKind.COMMENT:
            continue
        if kind is TokenKind.WHITESPACE:
            if in_group and ends_step and "\n" in t.text:
                groups += 1
                in_group = False
            continue
        in_group = True
        text = t.text
        if kind is TokenKind.PUNCT:
            if text in _OPEN:
                depth += 1
            elif text in _CLOSE:
                depth -= 1
        ends_step = text == "." and depth <= 0
    if in_group:
        groups += 1
    return groups


def count_normalized_lines(devfile: Union[DevFile, Sequence[Token], str]) -> int:
    """Count logical lines: comments and blank lines dropped, continuation lines joined."""
    if isinstance(devfile, DevFile):
        return devfile.normalized_line_count
    if isinstance(devfile, str):
        return _normalized_lines(tokenize(devfile))
    return _normalized_lines(devfile)


def proof_length(item: Item) -> int:
    """Normalized line count of an item's proof body."""
    return _normalized_lines(item.proof_tokens)


def smuggled_annotations(item: Item) -> list[Token]:
    """Annotation-shaped comments inside an item's statement or proof.

    The parser treats them as plain comments, but a line-based reader
    would take them for ledger entries.
    """
    out = []
    for t in item.statement_tokens + item.proof_tokens:
        if t.kind is TokenKind.COMMENT and annotation_marker(t.text):
            out.append(t)
    return out


# ---------------------------------------------------------------------------
# rewriting

def _line_bounds(source: str, start: int, end: int) -> tuple[int, int] | None:
    """If [start, end) is alone on its line, return the whole line's bounds."""
    ls = source.rfind("\n", 0, start) + 1
    le = source.find("\n", end)
    le = len(source) if le < 0 else le + 1
    if source[ls:start].strip() or source[end:le].strip():
        return None
    return ls, le


def rewrite_annotations(devfile: DevFile, balances=None, annotations=None) -> str:
    """Return the source with its ledger comments replaced.

    *balances* maps agent -> amount and replaces the header BALANCE block
    (None keeps it).  *annotations* maps item name -> list of annotations
    (including an Estimate) and replaces that item's leading annotations;
    items missing from the mapping keep theirs.
    """
    src = devfile.source
    toks = devfile.tokens
    annotations = annotations or {}
    edits: list[tuple[int, int, str]] = []  # (start, end, replacement)

    item_starts = {it.name: it.statement_tokens[0].pos for it in devfile.items}
    starts = sorted((pos, name) for name, pos in item_starts.items())

    balance_anchor = None
    for idx in devfile.annotation_tokens:
        tok = toks[idx]
        start, end = tok.pos, tok.pos + len(tok.text)
        ann = parse_annotation(tok)
        owner = None
        if isinstance(ann, Balance):
            if balances is None:
                continue
            if balance_anchor is None:
                balance_anchor = start
        else:
            owner = _owner_after(starts, tok.pos)
            if owner not in annotations:
                continue
        bounds = _line_bounds(src, start, end)
        if bounds is None:
            edits.append((start, end, ""))
        else:
            edits.append((bounds[0], bounds[1], ""))
            if isinstance(ann, Balance) and balance_anchor == start:
                balance_anchor = bounds[0]

    if balances is not None:
        block = "".join(format_annotation(Balance(a, v)) + "\n" for a, v in balances.items())
        if balance_anchor is None:
            balance_anchor = 0
        edits.append((balance_anchor, balance_anchor, block))

    for name, anns in annotations.items():
        if name not in item_starts:
            raise KeyError(name)
        pos = item_starts[name]
        ls = src.rfind("\n", 0, pos) + 1
        indent = src[ls:pos]
        if indent.strip():
            ls, indent = pos, ""
        text = "".join(indent + format_annotation(a) + "\n" for a in anns)
        edits.append((ls, ls, text))

    edits.sort(key=lambda e: (e[0], e[1]))
    out = []
    cursor = 0
    for start, end, repl in edits:
        if start < cursor:
            start = cursor
        out.append(src[cursor:start])
        out.append(repl)
        cursor = max(cursor, end)
    out.append(src[cursor:])
    return "".join(out)


def _owner_after(starts: list[tuple[int, str]], pos: int) -> str | None:
    i = bisect.bisect_right(starts, (pos, ""))
    return starts[i][1] if i < len(starts) else None
