from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from regwatch.textcore import (
    Span,
    TokenKind,
    Unit,
    normalize_quantities,
    segment_sentences,
    span_text,
    tokenize,
)

texty = st.lists(
    st.sampled_from(list("abcXYZ019 .,!?$%-'é€\n") + ["U.S.", " Sec. ", " No. "]),
    max_size=40,
).map("".join)


def kinds(text):
    return [(t.surface, t.kind) for t in tokenize(text)]


def test_segment_canonical_split():
    sentences = segment_sentences("A rule. Another rule.")
    assert [span_text("A rule. Another rule.", s.span) for s in sentences] == ["A rule.", "Another rule."]
    assert [s.index for s in sentences] == [0, 1]


def test_segment_abbreviation_stoplist():
    # "U." is followed by "S.", not whitespace; "U.S." is followed by lowercase "bank".
    assert len(segment_sentences("The U.S. bank filed.")) == 1
    # Uppercase after the abbreviation would split without the stoplist.
    assert len(segment_sentences("Filed under Sec. 12 of the Act.")) == 1
    assert len(segment_sentences("The U.S. Treasury filed.")) == 1


def test_segment_no_terminator():
    [sentence] = segment_sentences("no terminator")
    assert sentence.span == Span(0, 13)


def test_segment_requires_uppercase_or_digit():
    assert len(segment_sentences("It rose. then fell.")) == 1
    assert len(segment_sentences("It rose! 2019 was busy? Yes.")) == 3


def test_segment_byte_offsets_with_multibyte_text():
    text = "Café rule. Next rule."
    first, second = segment_sentences(text)
    assert first.span == Span(0, 11)  # "é" is two bytes
    assert span_text(text, second.span) == "Next rule."


@given(texty)
def test_segmentation_reconstructs_text(text):
    sentences = segment_sentences(text)
    data = text.encode()
    pos = 0
    for sentence in sentences:
        assert data[pos:sentence.span.start].decode().strip() == ""
        pos = sentence.span.end
        for token in sentence.tokens:
            assert sentence.span.contains(token.span)
    assert data[pos:].decode().strip() == ""
    assert segment_sentences(text) == sentences


def test_tokenize_currency_example():
    assert kinds("raised to $250 million.") == [
        ("raised", TokenKind.WORD),
        ("to", TokenKind.WORD),
        ("$250", TokenKind.CURRENCY),
        ("million", TokenKind.WORD),
        (".", TokenKind.PUNCT),
    ]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_decimal():
    assert kinds("10.5 percent") == [("10.5", TokenKind.NUMBER), ("percent", TokenKind.WORD)]


def test_tokenize_separators_and_punct():
    assert kinds("$1,000,000; 5%") == [
        ("$1,000,000", TokenKind.CURRENCY),
        (";", TokenKind.PUNCT),
        ("5", TokenKind.NUMBER),
        ("%", TokenKind.PUNCT),
    ]
    assert kinds("$ 5") == [("$", TokenKind.PUNCT), ("5", TokenKind.NUMBER)]


@given(texty)
def test_tokens_round_trip_and_cover_non_whitespace(text):
    tokens = tokenize(text, base=0)
    covered = 0
    last_end = 0
    for token in tokens:
        assert span_text(text, token.span) == token.surface
        assert token.span.start >= last_end
        last_end = token.span.end
        covered += len(token.surface)
    assert covered == len("".join(text.split()))
    assert tokenize(text) == tokens


def test_quantity_scaled_usd():
    [q] = normalize_quantities(tokenize("$250 million"))
    assert q.value == Decimal(250) * 10**6
    assert q.unit is Unit.USD
    assert q.scale_word == "million"
    assert q.span == Span(0, 12)


def test_quantity_percent():
    [q] = normalize_quantities(tokenize("10 percent"))
    assert (q.value, q.unit, q.scale_word) == (Decimal(10), Unit.PERCENT, None)
    [q] = normalize_quantities(tokenize("7.5%"))
    assert (q.value, q.unit) == (Decimal("7.5"), Unit.PERCENT)


def test_quantity_count():
    [q] = normalize_quantities(tokenize("7"))
    assert (q.value, q.unit) == (Decimal(7), Unit.COUNT)


def test_quantity_scale_without_dollar_sign():
    [q] = normalize_quantities(tokenize("3 billion"))
    assert q.value == Decimal(3_000_000_000)
    assert q.unit is Unit.COUNT
    [q] = normalize_quantities(tokenize("3 billion dollars"))
    assert q.unit is Unit.USD


def test_quantity_exact_decimal():
    [half] = normalize_quantities(tokenize("0.5 billion"))
    [five_hundred] = normalize_quantities(tokenize("500 million"))
    assert half.value == five_hundred.value == Decimal(500_000_000)
    [q] = normalize_quantities(tokenize("$0.1 million"))
    assert q.value == Decimal(100_000)


def test_quantity_unparseable_is_reported():
    diagnostics = []
    assert normalize_quantities(tokenize("1,2345 banks"), diagnostics=diagnostics) == []
    assert len(diagnostics) == 1


@pytest.mark.parametrize("bad", [(-1, 2), (3, 3), (5, 2)])
def test_span_invariants(bad):
    with pytest.raises(ValueError):
        Span(*bad)
