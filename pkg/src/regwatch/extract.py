"""Two independent mention streams over an article.

The custom stream tags tokens with a gazetteer plus quantity, date, citation
and change-verb lexicons. The SRL-shaped stream finds lexicon predicates and
takes adjacent token runs as their arguments, then types those arguments by
re-running the custom typing inside each one. Annotations produced by real
models can be loaded in place of either stream.
"""

from __future__ import annotations

import bisect
import enum
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import MalformedInput, SpanOutOfRange
from .ingest import Article
from .resources import iter_entries, read_text
from .textcore import (
    ByteIndex,
    Sentence,
    Span,
    Token,
    TokenKind,
    Unit,
    load_scale_words,
    normalize_quantities,
    segment_sentences,
    tokenize,
)


class EntityType(str, enum.Enum):
    REGULATORY_AUTHORITY = "regulatory_authority"
    REGULATED_ACTIVITY_THRESHOLD = "regulated_activity_threshold"
    REGULATED_ENTITY = "regulated_entity"
    MONETARY_VALUE = "monetary_value"
    EFFECTIVE_DATE = "effective_date"
    REGULATION_CITATION = "regulation_citation"
    CHANGE_ACTION = "change_action"


ENTITY_TYPES = tuple(t.value for t in EntityType)
# Reserved bucket for SRL arguments no typing rule covers; never survives intersection.
UNTYPED = "UNTYPED"
_TYPE_RANK = {name: rank for rank, name in enumerate(ENTITY_TYPES + (UNTYPED,))}


class Source(str, enum.Enum):
    CUSTOM = "CUSTOM"
    SRL = "SRL"
    EXTERNAL = "EXTERNAL"


class MatchMode(str, enum.Enum):
    EXACT = "EXACT"
    PREFIX = "PREFIX"


class Role(str, enum.Enum):
    ARG_BEFORE = "ARG_BEFORE"
    ARG_AFTER = "ARG_AFTER"


@dataclass(frozen=True)
class EntityMention:
    span: Span
    sentence_index: int
    entity_type: str
    source: Source
    surface: str
    # For EXTERNAL mentions: which stream (CUSTOM or SRL) the record belongs to.
    stream: Source | None = None

    @property
    def role(self) -> Source:
        return self.stream if self.source is Source.EXTERNAL and self.stream else self.source

    def to_dict(self) -> dict:
        data = {
            "span": self.span.to_list(),
            "sentence_index": self.sentence_index,
            "entity_type": self.entity_type,
            "source": self.source.value,
            "surface": self.surface,
        }
        if self.stream is not None:
            data["stream"] = self.stream.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EntityMention":
        stream = data.get("stream")
        return cls(
            span=Span(*data["span"]),
            sentence_index=data["sentence_index"],
            entity_type=data["entity_type"],
            source=Source(data["source"]),
            surface=data["surface"],
            stream=Source(stream) if stream else None,
        )


@dataclass(frozen=True)
class Argument:
    role: Role
    span: Span


@dataclass(frozen=True)
class PredicateFrame:
    predicate: Span
    lemma: str
    arguments: tuple[Argument, ...]
    sentence_index: int

    def __post_init__(self):
        if not self.arguments:
            raise ValueError("a predicate frame needs at least one argument")
        for arg in self.arguments:
            if arg.span.overlaps(self.predicate):
                raise ValueError("argument overlaps its predicate")


# --------------------------------------------------------------------------- lexicons


class VerbLexicon:
    """Verb lemmas plus an inflection table mapping surface forms to lemmas."""

    def __init__(self, lemmas: Iterable[str], forms: dict[str, str] | None = None):
        self.lemmas = frozenset(l.lower() for l in lemmas)
        if not self.lemmas:
            raise ValueError("verb lexicon is empty")
        table = {lemma: lemma for lemma in self.lemmas}
        for form, lemma in (forms or {}).items():
            if lemma in self.lemmas:
                table[form.lower()] = lemma
        self.forms = table

    @classmethod
    def from_text(cls, text: str) -> "VerbLexicon":
        forms = {}
        lemmas = []
        for _, line in iter_entries(text):
            lemma, *inflected = line.lower().split()
            lemmas.append(lemma)
            for form in inflected:
                forms[form] = lemma
        return cls(lemmas, forms)

    @classmethod
    def coerce(cls, value: "VerbLexicon | Iterable[str]") -> "VerbLexicon":
        """Accept a ready lexicon or a bare lemma set (inflected via the bundled table)."""
        if isinstance(value, VerbLexicon):
            return value
        return cls(value, default_verb_lexicon().forms)

    def lemma_of(self, surface: str) -> str | None:
        return self.forms.get(surface.lower())

    def label(self, surface: str) -> str:
        """Lemma if known, else the lowercased surface."""
        return self.forms.get(surface.lower(), surface.lower())

    def __contains__(self, lemma: str) -> bool:
        return lemma in self.lemmas


@lru_cache(maxsize=None)
def default_verb_lexicon() -> VerbLexicon:
    return VerbLexicon.from_text(read_text("verbs.txt"))


def load_word_set(source: str) -> frozenset[str]:
    return frozenset(line.lower() for _, line in iter_entries(read_text(source)))


@dataclass(frozen=True)
class DatePattern:
    regex: re.Pattern
    fmt: str

    def parse(self, text: str) -> date | None:
        try:
            return datetime.strptime(text, self.fmt).date()
        except ValueError:
            return None


def load_date_patterns(source: str = "dates.txt") -> tuple[DatePattern, ...]:
    patterns = []
    for number, line in iter_entries(read_text(source)):
        regex, sep, fmt = line.partition("\t")
        if not sep:
            raise MalformedInput(f"{source}: expected regex<TAB>format", number)
        patterns.append(DatePattern(re.compile(regex), fmt.strip()))
    return tuple(patterns)


def parse_date(text: str, patterns: Sequence[DatePattern]) -> date | None:
    for pattern in patterns:
        if pattern.regex.fullmatch(text):
            parsed = pattern.parse(text)
            if parsed is not None:
                return parsed
    return None


def load_citation_patterns(source: str = "citations.txt") -> tuple[re.Pattern, ...]:
    return tuple(re.compile(line) for _, line in iter_entries(read_text(source)))


# --------------------------------------------------------------------------- gazetteer


class Gazetteer:
    """Phrase lists per entity type, matched case-insensitively over tokens."""

    def __init__(self, entries: dict[str, list[tuple[str, MatchMode]]] | None = None):
        self.entries: dict[str, list[tuple[str, MatchMode]]] = {}
        self._first: dict[str, list[tuple[tuple[str, ...], str, MatchMode]]] = {}
        self._prefix_single: list[tuple[str, str]] = []
        for entity_type, phrases in (entries or {}).items():
            for phrase, mode in phrases:
                self.add(entity_type, phrase, mode)

    def add(self, entity_type: str, phrase: str, mode: MatchMode | str = MatchMode.EXACT) -> None:
        if entity_type not in ENTITY_TYPES:
            raise MalformedInput(f"unknown entity type {entity_type!r} in gazetteer")
        mode = MatchMode(mode)
        words = tuple(t.lower for t in tokenize(phrase))
        if not words:
            raise MalformedInput(f"empty gazetteer phrase for {entity_type}")
        existing = self.entries.setdefault(entity_type, [])
        if any(tuple(t.lower for t in tokenize(p)) == words for p, _ in existing):
            raise MalformedInput(f"duplicate gazetteer entry ({entity_type}, {phrase!r})")
        existing.append((phrase, mode))
        if mode is MatchMode.PREFIX and len(words) == 1:
            self._prefix_single.append((words[0], entity_type))
        else:
            self._first.setdefault(words[0], []).append((words, entity_type, mode))

    @classmethod
    def from_text(cls, text: str) -> "Gazetteer":
        gazetteer = cls()
        for number, line in iter_entries(text):
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise MalformedInput("expected type<TAB>phrase[<TAB>mode]", number)
            mode = fields[2].strip() if len(fields) == 3 else "EXACT"
            gazetteer.add(fields[0].strip(), fields[1].strip(), mode)
        return gazetteer

    @classmethod
    def from_institutions(cls, records, base: "Gazetteer | None" = None) -> "Gazetteer":
        """Extend ``base`` with institution names from NIC records."""
        gazetteer = cls(base.entries if base else None)
        for record in records:
            if record.kind.value in ("REGULATOR", "INSURER"):
                entity_type = EntityType.REGULATORY_AUTHORITY.value
            else:
                entity_type = EntityType.REGULATED_ENTITY.value
            try:
                gazetteer.add(entity_type, record.name)
            except MalformedInput:
                continue  # name already listed
        return gazetteer

    def match(self, tokens: Sequence[Token]) -> list[tuple[int, int, str]]:
        """All ``(first, last_exclusive, type)`` token-index matches, overlapping allowed."""
        hits = []
        lowered = [t.lower for t in tokens]
        for i, word in enumerate(lowered):
            for words, entity_type, mode in self._first.get(word, ()):
                n = len(words)
                if i + n > len(lowered):
                    continue
                if lowered[i:i + n - 1] != list(words[:-1]):
                    continue
                last = lowered[i + n - 1]
                if last == words[-1] or (mode is MatchMode.PREFIX and last.startswith(words[-1])):
                    hits.append((i, i + n, entity_type))
            for prefix, entity_type in self._prefix_single:
                if tokens[i].kind is TokenKind.WORD and word.startswith(prefix):
                    hits.append((i, i + 1, entity_type))
        return hits


@lru_cache(maxsize=None)
def default_gazetteer() -> Gazetteer:
    return Gazetteer.from_text(read_text("gazetteer.tsv"))


@dataclass(frozen=True)
class TypingRules:
    """Everything the custom typing pass consults."""

    gazetteer: Gazetteer
    change_lemmas: frozenset[str]
    verbs: VerbLexicon
    date_patterns: tuple[DatePattern, ...]
    citation_patterns: tuple[re.Pattern, ...]
    scale_words: dict = field(default_factory=load_scale_words)

    @classmethod
    def default(cls, gazetteer: Gazetteer | None = None) -> "TypingRules":
        return cls(
            gazetteer=gazetteer or default_gazetteer(),
            change_lemmas=load_word_set("change_verbs.txt"),
            verbs=default_verb_lexicon(),
            date_patterns=load_date_patterns(),
            citation_patterns=load_citation_patterns(),
        )


def _rules(typing: "TypingRules | Gazetteer | None") -> TypingRules:
    if typing is None:
        return TypingRules.default()
    if isinstance(typing, Gazetteer):
        return TypingRules.default(typing)
    return typing


# --------------------------------------------------------------------------- custom stream


def _candidates(text: str, base: int, tokens: Sequence[Token], rules: TypingRules):
    """Typed span candidates inside the text window ``text`` starting at byte ``base``."""
    found = []
    for first, last, entity_type in rules.gazetteer.match(tokens):
        found.append((Span(tokens[first].span.start, tokens[last - 1].span.end), entity_type))
    for quantity in normalize_quantities(tokens, rules.scale_words):
        if quantity.unit in (Unit.USD, Unit.PERCENT):
            found.append((quantity.span, EntityType.MONETARY_VALUE.value))
    for token in tokens:
        if token.kind is TokenKind.WORD:
            lemma = rules.verbs.label(token.surface)
            if lemma in rules.change_lemmas:
                found.append((token.span, EntityType.CHANGE_ACTION.value))
    index = ByteIndex(text)
    for patterns, entity_type in (
        ([p.regex for p in rules.date_patterns], EntityType.EFFECTIVE_DATE.value),
        (rules.citation_patterns, EntityType.REGULATION_CITATION.value),
    ):
        for regex in patterns:
            for m in regex.finditer(text):
                if m.end() > m.start():
                    found.append((Span(base + index.byte(m.start()), base + index.byte(m.end())), entity_type))
    return found


def resolve_overlaps(candidates) -> list[tuple[Span, str]]:
    """Keep a non-overlapping subset: longest first, then earliest start, then type order."""
    ordered = sorted(set(candidates), key=lambda c: (-len(c[0]), c[0].start, _TYPE_RANK[c[1]]))
    kept: list[tuple[Span, str]] = []
    for span, entity_type in ordered:
        if not any(span.overlaps(other) for other, _ in kept):
            kept.append((span, entity_type))
    kept.sort(key=lambda c: c[0])
    return kept


def type_window(
    index: ByteIndex,
    tokens: Sequence[Token],
    sentence_index: int,
    rules: TypingRules,
    source: Source,
) -> list[EntityMention]:
    """Run the custom typing over a contiguous token window."""
    if not tokens:
        return []
    window = Span(tokens[0].span.start, tokens[-1].span.end)
    text = index.slice(window)
    return [
        EntityMention(span, sentence_index, entity_type, source, index.slice(span))
        for span, entity_type in resolve_overlaps(_candidates(text, window.start, tokens, rules))
    ]


def extract_entities(
    article: Article,
    sentences: Sequence[Sentence],
    gazetteer: Gazetteer | TypingRules | None = None,
) -> list[EntityMention]:
    """Custom-stream mentions, sorted by span start and pairwise non-overlapping."""
    rules = _rules(gazetteer)
    index = ByteIndex(article.body_text)
    mentions = []
    for sentence in sentences:
        mentions.extend(type_window(index, sentence.tokens, sentence.index, rules, Source.CUSTOM))
    return mentions


# --------------------------------------------------------------------------- SRL-shaped stream


def _predicate_positions(tokens: Sequence[Token], verbs: VerbLexicon) -> list[int]:
    return [
        i for i, t in enumerate(tokens)
        if t.kind is TokenKind.WORD and verbs.lemma_of(t.surface) is not None
    ]


def extract_frames(
    article: Article,
    sentences: Sequence[Sentence],
    verb_lexicon: VerbLexicon | Iterable[str] | None = None,
) -> list[PredicateFrame]:
    """One frame per lexicon-verb occurrence.

    Arguments are the runs of non-punctuation tokens directly left and right of
    the predicate; a run stops at punctuation or at another predicate.
    Predicates with neither run produce no frame.
    """
    verbs = default_verb_lexicon() if verb_lexicon is None else VerbLexicon.coerce(verb_lexicon)
    frames = []
    for sentence in sentences:
        tokens = sentence.tokens
        positions = _predicate_positions(tokens, verbs)
        is_predicate = set(positions)

        def run(start, step):
            j = start
            while 0 <= j < len(tokens) and tokens[j].kind is not TokenKind.PUNCT and j not in is_predicate:
                j += step
            return j

        for i in positions:
            arguments = []
            left = run(i - 1, -1)
            if left < i - 1:
                arguments.append(Argument(Role.ARG_BEFORE, Span(tokens[left + 1].span.start, tokens[i - 1].span.end)))
            right = run(i + 1, 1)
            if right > i + 1:
                arguments.append(Argument(Role.ARG_AFTER, Span(tokens[i + 1].span.start, tokens[right - 1].span.end)))
            if arguments:
                frames.append(PredicateFrame(
                    predicate=tokens[i].span,
                    lemma=verbs.lemma_of(tokens[i].surface),
                    arguments=tuple(arguments),
                    sentence_index=sentence.index,
                ))
    return frames


def frames_to_entities(
    frames: Sequence[PredicateFrame],
    typing_rules: Gazetteer | TypingRules | None,
    article: Article,
    sentences: Sequence[Sentence] | None = None,
) -> list[EntityMention]:
    """SRL-stream mentions from frame arguments.

    Each argument is typed by the custom rules restricted to its own tokens;
    every typed match inside it becomes an SRL mention. An argument with no
    typed match is emitted whole as UNTYPED.
    """
    rules = _rules(typing_rules)
    if sentences is None:
        sentences = segment_sentences(article.body_text)
    index = ByteIndex(article.body_text)
    by_index = {s.index: s for s in sentences}
    seen = set()
    mentions = []
    for frame in frames:
        sentence = by_index[frame.sentence_index]
        for argument in frame.arguments:
            window = [t for t in sentence.tokens if argument.span.contains(t.span)]
            typed = type_window(index, window, frame.sentence_index, rules, Source.SRL)
            if not typed:
                typed = [EntityMention(argument.span, frame.sentence_index, UNTYPED, Source.SRL,
                                       index.slice(argument.span))]
            for mention in typed:
                key = (mention.span, mention.entity_type)
                if key not in seen:
                    seen.add(key)
                    mentions.append(mention)
    mentions.sort(key=lambda m: (m.span, _TYPE_RANK[m.entity_type]))
    return mentions


# --------------------------------------------------------------------------- external annotations


def _int_field(record: dict, key: str, where: str) -> int:
    value = record.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedInput(f"{where}: {key!r} must be an integer")
    return value


def _checked_span(record: dict, where: str, index: ByteIndex) -> Span:
    start = _int_field(record, "start", where)
    end = _int_field(record, "end", where)
    if not 0 <= start < end <= len(index.data):
        raise SpanOutOfRange(where, f"span ({start}, {end}) outside text of {len(index.data)} bytes")
    if not (index.is_boundary(start) and index.is_boundary(end)):
        raise SpanOutOfRange(where, f"span ({start}, {end}) splits a UTF-8 character")
    return Span(start, end)


def _sentence_of(span: Span, sentences: Sequence[Sentence], starts: list[int], where: str) -> int:
    i = bisect.bisect_right(starts, span.start) - 1
    if i < 0 or not sentences[i].span.contains(span):
        raise SpanOutOfRange(where, f"span ({span.start}, {span.end}) is not inside one sentence")
    return sentences[i].index


def load_external_annotations(raw: str, article: Article):
    """Parse model output into ``(mentions, frames)`` aligned with ``article``.

    Schema::

        {"article_id": ..., "entities": [{"start", "end", "type", "stream"}],
         "frames": [{"predicate": {"start", "end", "lemma"},
                     "arguments": [{"role", "start", "end"}]}]}
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"bad annotation JSON: {exc}") from None
    if not isinstance(data, dict):
        raise MalformedInput("annotation file must hold a JSON object")
    if "article_id" in data and data["article_id"] != article.id:
        raise MalformedInput(f"annotations are for {data['article_id']!r}, not {article.id!r}")
    entities = data.get("entities", [])
    frames = data.get("frames", [])
    if not isinstance(entities, list) or not isinstance(frames, list):
        raise MalformedInput("'entities' and 'frames' must be lists")

    index = ByteIndex(article.body_text)
    sentences = segment_sentences(article.body_text)
    starts = [s.span.start for s in sentences]

    mentions = []
    for n, record in enumerate(entities):
        where = f"entities[{n}]"
        if not isinstance(record, dict):
            raise MalformedInput(f"{where}: expected an object")
        span = _checked_span(record, where, index)
        entity_type = record.get("type")
        if entity_type not in ENTITY_TYPES and entity_type != UNTYPED:
            raise MalformedInput(f"{where}: unknown type {entity_type!r}")
        stream = record.get("stream")
        if stream not in ("CUSTOM", "SRL"):
            raise MalformedInput(f"{where}: stream must be CUSTOM or SRL")
        mentions.append(EntityMention(
            span, _sentence_of(span, sentences, starts, where), entity_type,
            Source.EXTERNAL, index.slice(span), stream=Source(stream),
        ))

    parsed_frames = []
    for n, record in enumerate(frames):
        where = f"frames[{n}]"
        if not isinstance(record, dict) or not isinstance(record.get("predicate"), dict):
            raise MalformedInput(f"{where}: expected an object with a predicate")
        predicate = _checked_span(record["predicate"], f"{where}.predicate", index)
        lemma = record["predicate"].get("lemma")
        if not isinstance(lemma, str) or not lemma:
            raise MalformedInput(f"{where}.predicate: missing lemma")
        sentence_index = _sentence_of(predicate, sentences, starts, f"{where}.predicate")
        arguments = []
        for k, arg in enumerate(record.get("arguments") or []):
            arg_where = f"{where}.arguments[{k}]"
            if not isinstance(arg, dict) or arg.get("role") not in Role.__members__:
                raise MalformedInput(f"{arg_where}: role must be ARG_BEFORE or ARG_AFTER")
            span = _checked_span(arg, arg_where, index)
            if _sentence_of(span, sentences, starts, arg_where) != sentence_index:
                raise SpanOutOfRange(arg_where, "argument outside its predicate's sentence")
            if span.overlaps(predicate):
                raise MalformedInput(f"{arg_where}: argument overlaps the predicate")
            arguments.append(Argument(Role(arg["role"]), span))
        if not arguments:
            raise MalformedInput(f"{where}: a frame needs at least one argument")
        parsed_frames.append(PredicateFrame(predicate, lemma.lower(), tuple(arguments), sentence_index))

    mentions.sort(key=lambda m: (m.span, _TYPE_RANK[m.entity_type]))
    return mentions, parsed_frames
