"""Stream fusion, slot filling, summarization and the per-article pipeline."""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from fractions import Fraction
from typing import Sequence

from .errors import InvalidThreshold
from .extract import (
    _TYPE_RANK,
    EntityMention,
    EntityType,
    Source,
    extract_entities,
    extract_frames,
    frames_to_entities,
    load_external_annotations,
    parse_date,
)
from .ingest import Article
from .relate import RelationTriple, Provenance, clause_svo, enumerate_pairs, extract_relations
from .textcore import (
    QuantityMention,
    Span,
    Unit,
    count_content_tokens,
    format_decimal,
    normalize_quantities,
    segment_sentences,
    tokenize,
)


class Direction(str, enum.Enum):
    INCREASE = "INCREASE"
    DECREASE = "DECREASE"
    UNSPECIFIED = "UNSPECIFIED"


# Slot name -> entity type that fills it, in rendering order.
SLOT_TYPES = {
    "authority": EntityType.REGULATORY_AUTHORITY.value,
    "regulated_entity": EntityType.REGULATED_ENTITY.value,
    "threshold": EntityType.REGULATED_ACTIVITY_THRESHOLD.value,
    "quantity": EntityType.MONETARY_VALUE.value,
    "direction": EntityType.CHANGE_ACTION.value,
    "effective_date": EntityType.EFFECTIVE_DATE.value,
    "citation": EntityType.REGULATION_CITATION.value,
}
SLOT_NAMES = tuple(SLOT_TYPES)


@dataclass
class Slots:
    authority: str | None = None
    regulated_entity: str | None = None
    threshold: str | None = None
    quantity: QuantityMention | None = None
    direction: Direction = Direction.UNSPECIFIED
    effective_date: date | None = None
    citation: str | None = None

    def filled(self) -> dict[str, object]:
        """Filled slots only, in slot order."""
        values = {}
        for name in SLOT_NAMES:
            value = getattr(self, name)
            if value is None or value is Direction.UNSPECIFIED:
                continue
            values[name] = value
        return values

    def to_dict(self) -> dict:
        q = self.quantity
        return {
            "authority": self.authority,
            "regulated_entity": self.regulated_entity,
            "threshold": self.threshold,
            "quantity": None if q is None else {
                "span": q.span.to_list(),
                "value": format_decimal(q.value),
                "unit": q.unit.value,
                "scale_word": q.scale_word,
            },
            "direction": self.direction.value,
            "effective_date": self.effective_date.isoformat() if self.effective_date else None,
            "citation": self.citation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Slots":
        q = data.get("quantity")
        return cls(
            authority=data.get("authority"),
            regulated_entity=data.get("regulated_entity"),
            threshold=data.get("threshold"),
            quantity=None if q is None else QuantityMention(
                Span(*q["span"]), Decimal(q["value"]), Unit(q["unit"]), q.get("scale_word"),
            ),
            direction=Direction(data.get("direction", "UNSPECIFIED")),
            effective_date=date.fromisoformat(data["effective_date"]) if data.get("effective_date") else None,
            citation=data.get("citation"),
        )


@dataclass
class DataModelInstance:
    article_id: str
    slots: Slots = field(default_factory=Slots)
    triples: list[RelationTriple] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    # slot name -> (sentence_index, span) of the mention that filled it
    evidence: dict[str, tuple[int, Span]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "slots": self.slots.to_dict(),
            "triples": [t.to_dict() for t in self.triples],
            "diagnostics": list(self.diagnostics),
            "evidence": {
                name: {"sentence_index": i, "span": span.to_list()}
                for name, (i, span) in self.evidence.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DataModelInstance":
        return cls(
            article_id=data["article_id"],
            slots=Slots.from_dict(data["slots"]),
            triples=[RelationTriple.from_dict(t) for t in data.get("triples", [])],
            diagnostics=list(data.get("diagnostics", [])),
            evidence={
                name: (e["sentence_index"], Span(*e["span"]))
                for name, e in data.get("evidence", {}).items()
            },
        )


def dumps_instance(instance: DataModelInstance) -> str:
    """Canonical single-line JSON (sorted keys, decimal strings) plus newline."""
    return json.dumps(instance.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def loads_instance(text: str) -> DataModelInstance:
    return DataModelInstance.from_dict(json.loads(text))


# --------------------------------------------------------------------------- intersection


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def jaccard(a: Span, b: Span) -> Fraction:
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = (a.end - a.start) + (b.end - b.start) - inter
    return Fraction(inter, union)


def intersect_entities(
    custom: Sequence[EntityMention],
    srl: Sequence[EntityMention],
    overlap_threshold=Fraction(1, 2),
) -> list[EntityMention]:
    """Custom mentions confirmed by an SRL mention in the same sentence.

    Confirmation means byte-span Jaccard overlap of at least
    ``overlap_threshold``; the SRL mention's type is irrelevant, so UNTYPED
    arguments count.
    """
    try:
        threshold = _as_fraction(overlap_threshold)
    except (TypeError, ValueError):
        raise InvalidThreshold(f"bad overlap threshold {overlap_threshold!r}") from None
    if not 0 < threshold <= 1:
        raise InvalidThreshold(f"overlap threshold must be in (0, 1], got {overlap_threshold}")
    by_sentence = defaultdict(list)
    for mention in srl:
        by_sentence[mention.sentence_index].append(mention.span)
    survivors = {}
    for mention in custom:
        key = (mention.span, mention.entity_type)
        if key in survivors:
            continue
        if any(jaccard(mention.span, other) >= threshold for other in by_sentence.get(mention.sentence_index, ())):
            survivors[key] = mention
    return sorted(survivors.values(), key=lambda m: (m.span, _TYPE_RANK[m.entity_type]))


# --------------------------------------------------------------------------- slot filling


def _quantity_of(mention: EntityMention) -> QuantityMention | None:
    for quantity in normalize_quantities(tokenize(mention.surface, base=mention.span.start)):
        if quantity.unit in (Unit.USD, Unit.PERCENT):
            return quantity
    return None


def fill_data_model(
    article: Article,
    entities: Sequence[EntityMention],
    triples: Sequence[RelationTriple],
    direction_lexicon: dict[str, Direction | str],
    verbs=None,
    date_patterns=None,
) -> DataModelInstance:
    """Fill each slot from the first surviving mention of its type.

    Direction comes from the earliest change_action mention or VERB_PATH
    predicate whose lemma is in ``direction_lexicon``. Every slot left empty
    adds a ``missing slot`` diagnostic.
    """
    from .extract import default_verb_lexicon, load_date_patterns

    verbs = verbs or default_verb_lexicon()
    date_patterns = date_patterns if date_patterns is not None else load_date_patterns()
    directions = {lemma: Direction(d) for lemma, d in direction_lexicon.items()}
    instance = DataModelInstance(article.id, triples=list(triples))
    slots = instance.slots
    ordered = sorted(entities, key=lambda m: (m.span, _TYPE_RANK[m.entity_type]))

    def first(entity_type):
        return [m for m in ordered if m.entity_type == entity_type]

    for name in ("authority", "regulated_entity", "threshold", "citation"):
        hits = first(SLOT_TYPES[name])
        if hits:
            setattr(slots, name, hits[0].surface)
            instance.evidence[name] = (hits[0].sentence_index, hits[0].span)

    for mention in first(EntityType.MONETARY_VALUE.value):
        quantity = _quantity_of(mention)
        if quantity is not None:
            slots.quantity = quantity
            instance.evidence["quantity"] = (mention.sentence_index, mention.span)
            break
        instance.diagnostics.append(f"no quantity in monetary_value {mention.surface!r}")

    for mention in first(EntityType.EFFECTIVE_DATE.value):
        parsed = parse_date(mention.surface, date_patterns)
        if parsed is not None:
            slots.effective_date = parsed
            instance.evidence["effective_date"] = (mention.sentence_index, mention.span)
            break
        instance.diagnostics.append(f"unparseable effective_date {mention.surface!r}")

    signals = []
    for mention in first(EntityType.CHANGE_ACTION.value):
        signals.append((mention.span.start, verbs.label(mention.surface), mention))
    for triple in triples:
        if triple.provenance is Provenance.VERB_PATH and triple.predicate_span is not None:
            signals.append((triple.predicate_span.start, triple.predicate_label.split("_")[0], triple))
    signals.sort(key=lambda s: s[0])
    for _, lemma, origin in signals:
        if lemma in directions:
            slots.direction = directions[lemma]
            if isinstance(origin, EntityMention):
                instance.evidence["direction"] = (origin.sentence_index, origin.span)
            else:
                instance.evidence["direction"] = (origin.sentence_index, origin.predicate_span)
            break

    for name in SLOT_NAMES:
        value = getattr(slots, name)
        if value is None or value is Direction.UNSPECIFIED:
            instance.diagnostics.append(f"missing slot: {name}")
    return instance


# --------------------------------------------------------------------------- summarization


def render_summary(instance: DataModelInstance) -> str:
    """Plain-text view of filled slots and triples; the output side of the ratio."""
    lines = []
    for name, value in instance.slots.filled().items():
        if isinstance(value, QuantityMention):
            value = f"{format_decimal(value.value)} {value.unit.value}"
        elif isinstance(value, Direction):
            value = value.value.lower()
        elif isinstance(value, date):
            value = value.isoformat()
        lines.append(f"{name}: {value}")
    for triple in instance.triples:
        lines.append(f"{triple.subject.surface} | {triple.predicate_label} | {triple.object.surface}")
    return "\n".join(lines)


def summarization_ratio(article: Article, instance: DataModelInstance) -> Fraction:
    """Content tokens in the article over content tokens in the summary (floor 1)."""
    output = max(1, count_content_tokens(render_summary(instance)))
    return Fraction(count_content_tokens(article.body_text), output)


# --------------------------------------------------------------------------- pipeline


def run_pipeline(article: Article, config=None, annotations: str | None = None):
    """Run every extraction stage for one article.

    ``annotations`` optionally holds external model output (see
    :func:`regwatch.extract.load_external_annotations`); its CUSTOM-stream
    mentions replace the rule-based custom stream, and its SRL mentions and
    frames replace the rule-based SRL stream.
    """
    from .config import PipelineConfig

    config = config or PipelineConfig.default()
    sentences = segment_sentences(article.body_text, config.abbreviations)
    if annotations is None:
        custom = extract_entities(article, sentences, config.typing)
        frames = extract_frames(article, sentences, config.verbs)
        srl = frames_to_entities(frames, config.typing, article, sentences)
    else:
        external, frames = load_external_annotations(annotations, article)
        custom = [m for m in external if m.role is Source.CUSTOM]
        srl = [m for m in external if m.role is Source.SRL]
        srl += frames_to_entities(frames, config.typing, article, sentences)

    survivors = intersect_entities(custom, srl, config.overlap_threshold)
    triples = []
    for pair in enumerate_pairs(survivors):
        triples.extend(extract_relations(sentences, pair, config.verbs, article.id, config.prepositions))
    for sentence in sentences:
        triples.extend(clause_svo(sentence, config.verbs, article.body_text, article.id, config.prepositions))

    instance = fill_data_model(
        article, survivors, triples, config.direction_lexicon,
        verbs=config.verbs, date_patterns=config.typing.date_patterns,
    )
    return instance, summarization_ratio(article, instance)
