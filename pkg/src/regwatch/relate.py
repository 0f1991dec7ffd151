"""Verb-based relations between entity pairs and clause-level SVO triples."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

from .extract import _TYPE_RANK, UNTYPED, EntityMention, Source, VerbLexicon, default_verb_lexicon, load_word_set
from .textcore import ByteIndex, Sentence, Span, Token, TokenKind

COORDINATORS = frozenset({"and", "or", "but", "nor", "yet"})


class Provenance(str, enum.Enum):
    VERB_PATH = "VERB_PATH"
    CLAUSE_SVO = "CLAUSE_SVO"


@dataclass(frozen=True)
class RelationTriple:
    subject: EntityMention
    predicate_label: str
    object: EntityMention
    article_id: str
    sentence_index: int
    provenance: Provenance
    predicate_span: Span | None = None

    def __post_init__(self):
        if not self.subject.span.start < self.object.span.start:
            raise ValueError("subject must start before object")

    def to_dict(self) -> dict:
        data = {
            "subject": self.subject.to_dict(),
            "predicate_label": self.predicate_label,
            "object": self.object.to_dict(),
            "article_id": self.article_id,
            "sentence_index": self.sentence_index,
            "provenance": self.provenance.value,
        }
        if self.predicate_span is not None:
            data["predicate_span"] = self.predicate_span.to_list()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RelationTriple":
        span = data.get("predicate_span")
        return cls(
            subject=EntityMention.from_dict(data["subject"]),
            predicate_label=data["predicate_label"],
            object=EntityMention.from_dict(data["object"]),
            article_id=data["article_id"],
            sentence_index=data["sentence_index"],
            provenance=Provenance(data["provenance"]),
            predicate_span=Span(*span) if span else None,
        )


def default_prepositions() -> frozenset[str]:
    return load_word_set("prepositions.txt")


def _label(tokens: Sequence[Token], i: int, verbs: VerbLexicon, prepositions, limit: int | None = None):
    """Predicate label for the verb at ``i``, fused with a following preposition.

    Returns ``(label, consumed)`` where ``consumed`` is 2 when a particle fused.
    """
    label = verbs.label(tokens[i].surface)
    nxt = i + 1
    if nxt < len(tokens) and tokens[nxt].kind is TokenKind.WORD and tokens[nxt].lower in prepositions:
        if limit is None or tokens[nxt].span.end <= limit:
            return f"{label}_{tokens[nxt].lower}", 2
    return label, 1


def _sentence_map(sentences: Sequence[Sentence]) -> dict[int, Sentence]:
    return {s.index: s for s in sentences}


def extract_relations(
    sentences: Sequence[Sentence],
    pair: tuple[EntityMention, EntityMention],
    verb_lexicon: VerbLexicon | set[str] | None = None,
    article_id: str = "",
    prepositions: frozenset[str] | None = None,
) -> list[RelationTriple]:
    """Every lexicon verb strictly between the two mentions yields one triple.

    The earlier mention is always the subject, so the pair order does not
    matter. Mentions in different sentences relate to nothing.
    """
    verbs = default_verb_lexicon() if verb_lexicon is None else VerbLexicon.coerce(verb_lexicon)
    if prepositions is None:
        prepositions = default_prepositions()
    first, second = sorted(pair, key=lambda m: (m.span, _TYPE_RANK[m.entity_type]))
    if first.sentence_index != second.sentence_index or first.span.start >= second.span.start:
        return []
    sentence = _sentence_map(sentences).get(first.sentence_index)
    if sentence is None:
        return []
    tokens = sentence.tokens
    triples = []
    for i, token in enumerate(tokens):
        if token.span.start < first.span.end or token.span.end > second.span.start:
            continue
        if token.kind is not TokenKind.WORD or verbs.lemma_of(token.surface) is None:
            continue
        label, _ = _label(tokens, i, verbs, prepositions, limit=second.span.start)
        triples.append(RelationTriple(
            first, label, second, article_id, sentence.index, Provenance.VERB_PATH, token.span,
        ))
    return triples


def _clauses(tokens: Sequence[Token]) -> list[list[int]]:
    clauses, current = [], []
    for i, token in enumerate(tokens):
        if token.surface == ";" or (token.kind is TokenKind.WORD and token.lower in COORDINATORS):
            clauses.append(current)
            current = []
        else:
            current.append(i)
    clauses.append(current)
    return [c for c in clauses if c]


def _run_mention(index: ByteIndex, tokens: Sequence[Token], run: list[int], sentence_index: int) -> EntityMention:
    span = Span(tokens[run[0]].span.start, tokens[run[-1]].span.end)
    return EntityMention(span, sentence_index, UNTYPED, Source.SRL, index.slice(span))


def clause_svo(
    sentence: Sentence,
    verb_lexicon: VerbLexicon | set[str] | None,
    text: str,
    article_id: str = "",
    prepositions: frozenset[str] | None = None,
) -> list[RelationTriple]:
    """Subject-verb-object triples, one per clause at most.

    Clauses are delimited by semicolons and coordinating conjunctions. The
    first lexicon verb of a clause is its predicate; the punctuation-free
    token runs directly before and after it are subject and object.
    """
    verbs = default_verb_lexicon() if verb_lexicon is None else VerbLexicon.coerce(verb_lexicon)
    if prepositions is None:
        prepositions = default_prepositions()
    index = ByteIndex(text)
    tokens = sentence.tokens
    triples = []
    for clause in _clauses(tokens):
        verb_at = next(
            (pos for pos, i in enumerate(clause)
             if tokens[i].kind is TokenKind.WORD and verbs.lemma_of(tokens[i].surface) is not None),
            None,
        )
        if verb_at is None:
            continue
        subject = []
        for i in reversed(clause[:verb_at]):
            if tokens[i].kind is TokenKind.PUNCT:
                break
            subject.insert(0, i)
        verb = clause[verb_at]
        clause_tokens = [tokens[i] for i in clause]
        label, consumed = _label(clause_tokens, verb_at, verbs, prepositions)
        obj = []
        for i in clause[verb_at + consumed:]:
            if tokens[i].kind is TokenKind.PUNCT:
                break
            obj.append(i)
        if not subject or not obj:
            continue
        triples.append(RelationTriple(
            _run_mention(index, tokens, subject, sentence.index),
            label,
            _run_mention(index, tokens, obj, sentence.index),
            article_id,
            sentence.index,
            Provenance.CLAUSE_SVO,
            tokens[verb].span,
        ))
    return triples


def enumerate_pairs(entities: Sequence[EntityMention]) -> list[tuple[EntityMention, EntityMention]]:
    """All unordered pairs, ordered by the start offsets of first then second."""
    ordered = sorted(entities, key=lambda m: (m.span, _TYPE_RANK[m.entity_type]))
    return list(combinations(ordered, 2))
