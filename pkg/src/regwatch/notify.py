"""Subscription rules, taxonomy similarity and alert generation.

Rule file syntax, one block per subscriber::

    # comment
    subscriber risk-team
    when direction = "increase" and quantity.value >= 1000000000

    subscriber compliance
    role "community bank compliance officer" threshold 0.7

Expressions combine ``field op literal`` comparisons with ``and``/``or``
(``and`` binds tighter) and parentheses. Operators: ``= != >= <= contains``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .errors import CycleDetected, MalformedInput, MultipleRoots, OrphanTerm, RuleSyntaxError, UnknownField, UnknownTerm
from .fuse import DataModelInstance, Direction
from .resources import iter_entries
from .textcore import TokenKind, format_decimal, tokenize

FIELDS = (
    "authority",
    "regulated_entity",
    "threshold",
    "direction",
    "quantity.value",
    "quantity.unit",
    "citation",
)
OPERATORS = ("=", "!=", ">=", "<=", "contains")


class SubscriptionKind(str, enum.Enum):
    RULE = "RULE"
    ROLE = "ROLE"


class AlertReason(str, enum.Enum):
    RULE_MATCH = "RULE_MATCH"
    SIMILARITY = "SIMILARITY"


# --------------------------------------------------------------------------- predicate trees


@dataclass(frozen=True)
class Comparison:
    field: str
    op: str
    literal: str | Decimal

    def evaluate(self, values: dict, matched: set | None = None) -> bool:
        result = _compare(values.get(self.field), self.op, self.literal)
        if result and matched is not None:
            matched.add(self.field)
        return result


@dataclass(frozen=True)
class And:
    operands: tuple

    def evaluate(self, values: dict, matched: set | None = None) -> bool:
        results = [op.evaluate(values, matched) for op in self.operands]
        return all(results)


@dataclass(frozen=True)
class Or:
    operands: tuple

    def evaluate(self, values: dict, matched: set | None = None) -> bool:
        results = [op.evaluate(values, matched) for op in self.operands]
        return any(results)


def _as_decimal(value) -> Decimal | None:
    if isinstance(value, Decimal):
        return value
    try:
        return Decimal(str(value))
    except InvalidOperation:
        return None


def _compare(value, op: str, literal) -> bool:
    if value is None:
        return False
    if isinstance(literal, Decimal):
        left = _as_decimal(value)
        if left is None or not left.is_finite():
            return False
        right = literal
    else:
        left = (format_decimal(value) if isinstance(value, Decimal) else str(value)).casefold()
        right = literal.casefold()
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if op == ">=":
        return left >= right
    if op == "<=":
        return left <= right
    if op == "contains":
        return str(right) in str(left) if isinstance(left, str) else False
    return False


def instance_fields(instance: DataModelInstance) -> dict:
    """Field values visible to rules; unfilled slots are absent."""
    slots = instance.slots
    values = {
        "authority": slots.authority,
        "regulated_entity": slots.regulated_entity,
        "threshold": slots.threshold,
        "citation": slots.citation,
    }
    if slots.direction is not Direction.UNSPECIFIED:
        values["direction"] = slots.direction.value
    if slots.quantity is not None:
        values["quantity.value"] = slots.quantity.value
        values["quantity.unit"] = slots.quantity.unit.value
    return {k: v for k, v in values.items() if v is not None}


# --------------------------------------------------------------------------- rule parser


_LEXEME = re.compile(
    r'(?P<space>[ \t\r]+)'
    r'|(?P<newline>\n)'
    r'|(?P<comment>#[^\n]*)'
    r'|(?P<string>"(?:[^"\\\n]|\\.)*")'
    r'|(?P<number>-?[0-9]+(?:\.[0-9]+)?(?![A-Za-z_]))'
    r'|(?P<op>>=|<=|!=|=)'
    r'|(?P<lparen>\()'
    r'|(?P<rparen>\))'
    r'|(?P<ident>[A-Za-z0-9_][A-Za-z0-9_.\-]*)'
)


@dataclass(frozen=True)
class _Lexeme:
    kind: str
    text: str
    line: int
    column: int


def _lex(text: str) -> list[_Lexeme]:
    out = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _LEXEME.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "newline":
            line, line_start = line + 1, m.end()
        elif kind not in ("space", "comment"):
            out.append(_Lexeme(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    out.append(_Lexeme("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str, fields: Iterable[str] | None):
        self.items = _lex(text)
        self.pos = 0
        self.fields = None if fields is None else frozenset(fields)

    @property
    def current(self) -> _Lexeme:
        return self.items[self.pos]

    def error(self, message: str, at: _Lexeme | None = None):
        at = at or self.current
        raise RuleSyntaxError(message, at.line, at.column)

    def advance(self) -> _Lexeme:
        item = self.items[self.pos]
        self.pos += 1
        return item

    def keyword(self, word: str) -> bool:
        return self.current.kind == "ident" and self.current.text == word

    def expect_keyword(self, word: str) -> _Lexeme:
        if not self.keyword(word):
            self.error(f"expected {word!r}, found {self.current.text or 'end of input'!r}")
        return self.advance()

    def expr(self):
        operands = [self.conjunction()]
        while self.keyword("or"):
            self.advance()
            operands.append(self.conjunction())
        return operands[0] if len(operands) == 1 else Or(tuple(operands))

    def conjunction(self):
        operands = [self.atom()]
        while self.keyword("and"):
            self.advance()
            operands.append(self.atom())
        return operands[0] if len(operands) == 1 else And(tuple(operands))

    def atom(self):
        if self.current.kind == "lparen":
            self.advance()
            inner = self.expr()
            if self.current.kind != "rparen":
                self.error("expected ')'")
            self.advance()
            return inner
        if self.current.kind != "ident" or self.current.text in ("and", "or", "subscriber", "when", "role"):
            self.error(f"expected a field name, found {self.current.text or 'end of input'!r}")
        field_item = self.advance()
        if self.fields is not None and field_item.text not in self.fields:
            raise UnknownField(field_item.text)
        if self.current.kind == "op" or self.keyword("contains"):
            op = self.advance().text
        else:
            self.error(f"expected an operator, found {self.current.text or 'end of input'!r}")
        literal = self.current
        if literal.kind == "string":
            self.advance()
            value = _unquote(literal.text)
        elif literal.kind == "number":
            self.advance()
            value = Decimal(literal.text)
        else:
            self.error(f"expected a string or number literal, found {literal.text or 'end of input'!r}")
        return Comparison(field_item.text, op, value)

    def subscriptions(self) -> list["Subscription"]:
        result = []
        while self.current.kind != "eof":
            self.expect_keyword("subscriber")
            if self.current.kind not in ("ident", "number"):
                self.error("expected a subscriber id")
            subscriber = self.advance().text
            if self.keyword("when"):
                self.advance()
                rule = self.expr()
                result.append(Subscription(subscriber, SubscriptionKind.RULE, rule=rule))
            elif self.keyword("role"):
                self.advance()
                if self.current.kind != "string":
                    self.error("expected a quoted role description")
                description = _unquote(self.advance().text)
                self.expect_keyword("threshold")
                number = self.current
                if number.kind != "number":
                    self.error("expected a similarity threshold")
                self.advance()
                threshold = Fraction(number.text)
                if not 0 < threshold <= 1:
                    self.error("similarity threshold must be in (0, 1]", number)
                words = tuple(t.lower for t in tokenize(description) if t.kind is TokenKind.WORD)
                if not words:
                    self.error("role description has no words")
                result.append(Subscription(
                    subscriber, SubscriptionKind.ROLE,
                    role_description=words, similarity_threshold=threshold,
                ))
            else:
                self.error(f"expected 'when' or 'role', found {self.current.text or 'end of input'!r}")
        return result


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


@dataclass(frozen=True)
class Subscription:
    subscriber_id: str
    kind: SubscriptionKind
    rule: Comparison | And | Or | None = None
    role_description: tuple[str, ...] = ()
    similarity_threshold: Fraction | None = None

    def __post_init__(self):
        if self.kind is SubscriptionKind.RULE and self.rule is None:
            raise ValueError("RULE subscription without a rule")
        if self.kind is SubscriptionKind.ROLE and (not self.role_description or self.similarity_threshold is None):
            raise ValueError("ROLE subscription needs a description and threshold")


def parse_expression(text: str, fields: Iterable[str] | None = None):
    """Parse a bare predicate expression; ``fields=None`` accepts any field name."""
    parser = _Parser(text, fields)
    tree = parser.expr()
    if parser.current.kind != "eof":
        parser.error(f"unexpected {parser.current.text!r}")
    return tree


def parse_rules(text: str) -> list[Subscription]:
    return _Parser(text, FIELDS).subscriptions()


# --------------------------------------------------------------------------- taxonomy


@dataclass(frozen=True)
class Taxonomy:
    parent: dict[str, str]
    root: str

    def __contains__(self, term: str) -> bool:
        return term in self.parent

    @cached_property
    def _depths(self) -> dict[str, int]:
        depths = {self.root: 1}

        def depth(term):
            if term not in depths:
                depths[term] = depth(self.parent[term]) + 1
            return depths[term]

        for term in self.parent:
            depth(term)
        return depths

    def depth(self, term: str) -> int:
        if term not in self.parent:
            raise UnknownTerm(term)
        return self._depths[term]

    def ancestors(self, term: str) -> list[str]:
        """``term`` and its ancestors, deepest first, ending at the root."""
        if term not in self.parent:
            raise UnknownTerm(term)
        chain = [term]
        while chain[-1] != self.root:
            chain.append(self.parent[chain[-1]])
        return chain


def load_taxonomy(text: str) -> Taxonomy:
    """Parse ``child<TAB>parent`` lines into a validated single-root tree."""
    parent: dict[str, str] = {}
    for number, line in iter_entries(text):
        child, sep, up = line.partition("\t")
        child, up = child.strip().lower(), up.strip().lower()
        if not sep or not child or not up:
            raise MalformedInput("expected child<TAB>parent", number)
        if parent.get(child, up) != up:
            raise MalformedInput(f"{child!r} has two parents", number)
        parent[child] = up
    if not parent:
        raise MalformedInput("empty taxonomy")
    orphans = sorted(p for p in set(parent.values()) if p not in parent)
    if orphans:
        raise OrphanTerm(f"parent terms never declared: {', '.join(orphans)}")

    state: dict[str, int] = {}  # 1 = on current path, 2 = reaches a root
    for start in parent:
        path = []
        term = start
        while state.get(term) != 2:
            if state.get(term) == 1:
                raise CycleDetected(f"cycle through {term!r}")
            if parent[term] == term:
                break
            state[term] = 1
            path.append(term)
            term = parent[term]
        state[term] = 2
        for t in path:
            state[t] = 2

    roots = sorted(t for t, p in parent.items() if p == t)
    if len(roots) != 1:
        raise MultipleRoots(f"expected one root, found {len(roots)}: {', '.join(roots)}")
    return Taxonomy(parent, roots[0])


def wup_similarity(tax: Taxonomy, a: str, b: str) -> Fraction:
    """Wu-Palmer similarity, ``2 * depth(lcs) / (depth(a) + depth(b))``, root depth 1."""
    a, b = a.lower(), b.lower()
    above_a = set(tax.ancestors(a))
    lcs = next(t for t in tax.ancestors(b) if t in above_a)
    return Fraction(2 * tax.depth(lcs), tax.depth(a) + tax.depth(b))


def _in_taxonomy(word: str, tax: Taxonomy) -> str | None:
    word = word.lower()
    if word in tax:
        return word
    if word.endswith("s") and word[:-1] in tax:
        return word[:-1]
    return None


def semantic_score(
    role_description: Sequence[str],
    metadata: Sequence[str],
    tax: Taxonomy,
    diagnostics: list[str] | None = None,
) -> Fraction:
    """Mean over role terms of the best Wu-Palmer match among metadata terms.

    Words outside the taxonomy are dropped (a trailing plural ``s`` is tried
    first); if either side ends up empty the score is 0.
    """
    role = [t for t in (_in_taxonomy(w, tax) for w in role_description) if t]
    meta = sorted({t for t in (_in_taxonomy(w, tax) for w in metadata) if t})
    if diagnostics is not None:
        dropped = len(role_description) - len(role) + len(metadata) - sum(
            1 for w in metadata if _in_taxonomy(w, tax))
        if dropped:
            diagnostics.append(f"{dropped} token(s) outside the taxonomy ignored")
    if not role or not meta:
        return Fraction(0)
    best = [max(wup_similarity(tax, r, m) for m in meta) for r in role]
    return sum(best, Fraction(0)) / len(best)


# --------------------------------------------------------------------------- alerts


@dataclass(frozen=True)
class Alert:
    subscriber_id: str
    article_id: str
    reason: AlertReason
    score: Fraction | None = None
    matched_fields: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "subscriber_id": self.subscriber_id,
            "article_id": self.article_id,
            "reason": self.reason.value,
            "score": None if self.score is None else str(self.score),
            "matched_fields": list(self.matched_fields),
        }


def metadata_tokens(instance: DataModelInstance) -> list[str]:
    """Lowercased words from filled slot surfaces and predicate labels."""
    slots = instance.slots
    texts = [slots.authority, slots.regulated_entity, slots.threshold, slots.citation]
    if slots.quantity is not None:
        texts.append(f"{format_decimal(slots.quantity.value)} {slots.quantity.unit.value}")
    if slots.effective_date is not None:
        texts.append(slots.effective_date.isoformat())
    texts.extend(t.predicate_label.replace("_", " ") for t in instance.triples)
    words = []
    for text in texts:
        if text:
            words.extend(t.lower for t in tokenize(text) if t.kind is TokenKind.WORD)
    return words


def generate_alerts(
    instance: DataModelInstance,
    subscriptions: Sequence[Subscription],
    tax: Taxonomy | None,
) -> list[Alert]:
    """At most one alert per subscriber; the first firing subscription wins."""
    values = instance_fields(instance)
    metadata = None
    alerts = {}
    for sub in subscriptions:
        if sub.subscriber_id in alerts:
            continue
        if sub.kind is SubscriptionKind.RULE:
            matched: set[str] = set()
            if sub.rule.evaluate(values, matched):
                alerts[sub.subscriber_id] = Alert(
                    sub.subscriber_id, instance.article_id, AlertReason.RULE_MATCH,
                    matched_fields=tuple(sorted(matched)),
                )
        elif tax is not None:
            if metadata is None:
                metadata = metadata_tokens(instance)
            score = semantic_score(sub.role_description, metadata, tax)
            if score >= sub.similarity_threshold:
                hits = sorted({t for t in (_in_taxonomy(w, tax) for w in metadata) if t})
                alerts[sub.subscriber_id] = Alert(
                    sub.subscriber_id, instance.article_id, AlertReason.SIMILARITY,
                    score=score, matched_fields=tuple(hits),
                )
    return [alerts[k] for k in sorted(alerts)]
