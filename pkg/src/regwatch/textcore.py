"""Sentence segmentation, tokenization and quantity normalization.

All positions are UTF-8 byte offsets into the article body. Python strings
are indexed by code point, so every function here converts once through a
:class:`ByteIndex` and hands out byte spans.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from functools import lru_cache
from itertools import accumulate

from .resources import iter_entries, read_text


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def to_list(self) -> list[int]:
        return [self.start, self.end]


class TokenKind(str, enum.Enum):
    WORD = "WORD"
    NUMBER = "NUMBER"
    CURRENCY = "CURRENCY"
    PUNCT = "PUNCT"


class Unit(str, enum.Enum):
    USD = "USD"
    PERCENT = "PERCENT"
    COUNT = "COUNT"


@dataclass(frozen=True)
class Token:
    span: Span
    surface: str
    kind: TokenKind

    @property
    def lower(self) -> str:
        return self.surface.lower()


@dataclass(frozen=True)
class Sentence:
    span: Span
    index: int
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class QuantityMention:
    span: Span
    value: Decimal
    unit: Unit
    scale_word: str | None = None


class ByteIndex:
    """Maps code-point offsets of ``text`` to UTF-8 byte offsets and back."""

    def __init__(self, text: str):
        self.text = text
        self.data = text.encode("utf-8")
        if len(self.data) == len(text):
            self._to_byte = None
        else:
            self._to_byte = list(accumulate((len(c.encode("utf-8")) for c in text), initial=0))
            self._to_char = {b: i for i, b in enumerate(self._to_byte)}

    def byte(self, char_offset: int) -> int:
        if self._to_byte is None:
            return char_offset
        return self._to_byte[char_offset]

    def char(self, byte_offset: int) -> int:
        """Inverse of :meth:`byte`; raises ``ValueError`` off a character boundary."""
        if self._to_byte is None:
            if not 0 <= byte_offset <= len(self.data):
                raise ValueError(f"byte offset {byte_offset} out of range")
            return byte_offset
        try:
            return self._to_char[byte_offset]
        except KeyError:
            raise ValueError(f"byte offset {byte_offset} is not a character boundary") from None

    def is_boundary(self, byte_offset: int) -> bool:
        try:
            self.char(byte_offset)
        except ValueError:
            return False
        return True

    def slice(self, span: Span) -> str:
        return self.data[span.start:span.end].decode("utf-8")


def span_text(text: str, span: Span) -> str:
    return text.encode("utf-8")[span.start:span.end].decode("utf-8")


@lru_cache(maxsize=None)
def load_abbreviations(source: str = "abbreviations.txt") -> frozenset[str]:
    return frozenset(line for _, line in iter_entries(read_text(source)))


@lru_cache(maxsize=None)
def load_scale_words(source: str = "scale_words.txt") -> dict[str, Decimal]:
    scales = {}
    for number, line in iter_entries(read_text(source)):
        word, _, multiplier = line.partition(" ")
        try:
            scales[word.lower()] = Decimal(multiplier.strip())
        except InvalidOperation:
            raise ValueError(f"{source}:{number}: bad multiplier {multiplier!r}") from None
    return scales


_TERMINATOR = re.compile(r"[.!?](?=\s+\S)")


def segment_sentences(text: str, abbreviations: frozenset[str] | None = None) -> list[Sentence]:
    """Split ``text`` into sentences with byte spans and tokens.

    A boundary falls after ``.``, ``!`` or ``?`` when whitespace and then an
    uppercase letter or digit follow, unless the word carrying the period is
    in the abbreviation stoplist. Whitespace between sentences is left out of
    every span.
    """
    if abbreviations is None:
        abbreviations = load_abbreviations()
    index = ByteIndex(text)
    cuts = [0]
    for match in _TERMINATOR.finditer(text):
        end = match.end()
        following = text[end:].lstrip()[:1]
        if not (following.isupper() or following.isdigit()):
            continue
        word_start = max(text.rfind(" ", 0, end), text.rfind("\n", 0, end), text.rfind("\t", 0, end)) + 1
        word = text[word_start:end].lstrip("([\"'")
        if text[match.start()] == "." and word in abbreviations:
            continue
        cuts.append(end)
    cuts.append(len(text))

    sentences = []
    for lo, hi in zip(cuts, cuts[1:]):
        chunk = text[lo:hi]
        stripped = chunk.strip()
        if not stripped:
            continue
        first = lo + (len(chunk) - len(chunk.lstrip()))
        last = first + len(stripped)
        span = Span(index.byte(first), index.byte(last))
        tokens = tuple(tokenize(stripped, base=span.start))
        sentences.append(Sentence(span=span, index=len(sentences), tokens=tokens))
    return sentences


_TOKEN = re.compile(
    r"(?P<CURRENCY>\$[0-9]+(?:[.,][0-9]+)*)"
    r"|(?P<NUMBER>[0-9]+(?:[.,][0-9]+)*)"
    r"|(?P<WORD>[^\W\d_]+)"
    r"|(?P<SPACE>\s+)"
    r"|(?P<PUNCT>.)",
    re.DOTALL,
)


def tokenize(sentence_text: str, base: int = 0) -> list[Token]:
    """Tokenize one sentence; spans are offset by ``base`` bytes."""
    index = ByteIndex(sentence_text)
    tokens = []
    for match in _TOKEN.finditer(sentence_text):
        kind = match.lastgroup
        if kind == "SPACE":
            continue
        span = Span(base + index.byte(match.start()), base + index.byte(match.end()))
        tokens.append(Token(span, match.group(), TokenKind[kind]))
    return tokens


_PLAIN_NUMBER = re.compile(r"[0-9]+(?:\.[0-9]+)?")
_GROUPED_NUMBER = re.compile(r"[0-9]{1,3}(?:,[0-9]{3})+(?:\.[0-9]+)?")

PERCENT_WORDS = frozenset({"percent", "%"})
DOLLAR_WORDS = frozenset({"dollars", "dollar"})


def parse_number(surface: str) -> Decimal | None:
    """Exact value of a NUMBER/CURRENCY surface, or None when ill-formed."""
    digits = surface.lstrip("$")
    if _PLAIN_NUMBER.fullmatch(digits) or _GROUPED_NUMBER.fullmatch(digits):
        return Decimal(digits.replace(",", ""))
    return None


def normalize_quantities(
    tokens: list[Token] | tuple[Token, ...],
    scale_words: dict[str, Decimal] | None = None,
    diagnostics: list[str] | None = None,
) -> list[QuantityMention]:
    """Turn numeric tokens into quantities, folding in scale and unit words.

    ``$``-prefixed numbers are USD; a trailing ``percent``/``%`` makes a
    PERCENT and a trailing ``dollars`` makes USD. Everything else is COUNT.
    """
    if scale_words is None:
        scale_words = load_scale_words()
    quantities = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token.kind not in (TokenKind.NUMBER, TokenKind.CURRENCY):
            i += 1
            continue
        value = parse_number(token.surface)
        if value is None:
            if diagnostics is not None:
                diagnostics.append(f"unparseable numeral {token.surface!r} at byte {token.span.start}")
            i += 1
            continue
        unit = Unit.USD if token.kind is TokenKind.CURRENCY else Unit.COUNT
        end = token.span.end
        scale_word = None
        j = i + 1
        if j < len(tokens) and tokens[j].lower in scale_words:
            scale_word = tokens[j].lower
            value *= scale_words[scale_word]
            end = tokens[j].span.end
            j += 1
        if j < len(tokens) and unit is Unit.COUNT:
            if tokens[j].lower in PERCENT_WORDS:
                unit = Unit.PERCENT
                end = tokens[j].span.end
                j += 1
            elif tokens[j].lower in DOLLAR_WORDS:
                unit = Unit.USD
                end = tokens[j].span.end
                j += 1
        quantities.append(QuantityMention(Span(token.span.start, end), value, unit, scale_word))
        i = j
    return quantities


def format_decimal(value: Decimal) -> str:
    """Fixed-point rendering with no exponent and no trailing zeros."""
    return format(value.normalize(), "f")


def count_content_tokens(text: str) -> int:
    """Number of non-punctuation tokens in ``text``."""
    return sum(1 for t in tokenize(text) if t.kind is not TokenKind.PUNCT)
