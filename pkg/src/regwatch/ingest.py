"""Parsers for the three input sources and the update fetcher."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import re
import urllib.error
import urllib.parse
import urllib.request
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import date
from functools import lru_cache
from pathlib import Path

from .errors import (
    DuplicateCitation,
    EmptyBody,
    MalformedInput,
    MissingField,
    SourceUnavailable,
    UnknownEntityType,
)
from .resources import iter_entries, read_text

log = logging.getLogger(__name__)

_WHITESPACE = re.compile(r"\s+")


def normalize_whitespace(text: str) -> str:
    return _WHITESPACE.sub(" ", text).strip()


@dataclass(frozen=True)
class Article:
    id: str
    title: str
    publication_date: date
    agency_names: tuple[str, ...]
    body_text: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "publication_date": self.publication_date.isoformat(),
            "agencies": list(self.agency_names),
            "body": self.body_text,
        }


class InstitutionKind(str, enum.Enum):
    BANK = "BANK"
    BANK_BRANCH = "BANK_BRANCH"
    HOLDING_COMPANY = "HOLDING_COMPANY"
    REGULATOR = "REGULATOR"
    INSURER = "INSURER"


@dataclass(frozen=True)
class InstitutionRecord:
    rssd_id: str
    name: str
    kind: InstitutionKind
    parent_rssd_id: str | None = None
    properties: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RegulationSection:
    citation: str
    heading: str
    text: str


# --------------------------------------------------------------------------- articles

ARTICLE_FIELDS = ("id", "title", "publication_date", "agencies", "body")


def article_from_object(data) -> Article:
    if not isinstance(data, dict):
        raise MalformedInput("article must be a JSON object")
    for key in ARTICLE_FIELDS:
        if key not in data:
            raise MissingField(key)
    article_id, title, published, agencies, body = (data[k] for k in ARTICLE_FIELDS)
    if not isinstance(article_id, str) or not article_id.strip():
        raise MalformedInput("'id' must be a non-empty string")
    if not isinstance(title, str):
        raise MalformedInput("'title' must be a string")
    if not isinstance(agencies, list) or not all(isinstance(a, str) for a in agencies):
        raise MalformedInput("'agencies' must be a list of strings")
    if not isinstance(body, str):
        raise MalformedInput("'body' must be a string")
    try:
        publication_date = date.fromisoformat(published)
    except (TypeError, ValueError):
        raise MalformedInput(f"bad publication_date {published!r}") from None
    body_text = normalize_whitespace(body)
    if not body_text:
        raise EmptyBody(f"article {article_id} has an empty body")
    return Article(article_id, title, publication_date, tuple(agencies), body_text)


def parse_article(raw: str | bytes) -> Article:
    """Parse one article JSON object; the body is whitespace-normalized."""
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedInput(f"bad article JSON: {exc}") from None
    return article_from_object(data)


def dump_article(article: Article) -> str:
    return json.dumps(article.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------- NIC registry

REQUIRED_NIC_COLUMNS = ("ID_RSSD", "NAME", "ENTITY_TYPE")


@lru_cache(maxsize=None)
def load_entity_type_table(source: str = "entity_types.tsv") -> dict[str, InstitutionKind]:
    table = {}
    for number, line in iter_entries(read_text(source)):
        code, sep, kind = line.partition("\t")
        if not sep or kind.strip() not in InstitutionKind.__members__:
            raise MalformedInput(f"{source}: expected CODE<TAB>KIND", number)
        table[code.strip()] = InstitutionKind[kind.strip()]
    return table


def parse_nic_csv(raw: str, type_table: dict[str, InstitutionKind] | None = None) -> list[InstitutionRecord]:
    """Parse a header-first NIC extract.

    ``ID_RSSD``, ``NAME`` and ``ENTITY_TYPE`` are required, ``PARENT_RSSD`` is
    optional, and any other column is copied into ``properties`` under its
    header name.
    """
    if type_table is None:
        type_table = load_entity_type_table()
    reader = csv.reader(io.StringIO(raw, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedInput("empty CSV", 1) from None
    except csv.Error as exc:
        raise MalformedInput(str(exc), reader.line_num) from None
    header = [h.strip() for h in header]
    missing = [c for c in REQUIRED_NIC_COLUMNS if c not in header]
    if missing:
        raise MalformedInput(f"header lacks {', '.join(missing)}", 1)
    if len(set(header)) != len(header):
        raise MalformedInput("duplicate header column", 1)

    records = []
    seen = set()
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise MalformedInput(str(exc), reader.line_num) from None
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise MalformedInput(f"expected {len(header)} fields, got {len(row)}", line)
        values = dict(zip(header, row))
        rssd_id = values.pop("ID_RSSD").strip()
        name = values.pop("NAME").strip()
        code = values.pop("ENTITY_TYPE").strip()
        parent = (values.pop("PARENT_RSSD", "") or "").strip() or None
        if not rssd_id:
            raise MalformedInput("empty ID_RSSD", line)
        if rssd_id in seen:
            raise MalformedInput(f"duplicate ID_RSSD {rssd_id}", line)
        if parent == rssd_id:
            raise MalformedInput(f"rssd {rssd_id} is its own parent", line)
        if code not in type_table:
            raise UnknownEntityType(code)
        seen.add(rssd_id)
        records.append(InstitutionRecord(rssd_id, name, type_table[code], parent, values))
    return records


# --------------------------------------------------------------------------- CFR XML


def _flatten(element: ET.Element, skip: ET.Element | None = None) -> str:
    parts = []

    def walk(node):
        if node is skip:
            if node.tail:
                parts.append(node.tail)
            return
        if node.text:
            parts.append(node.text)
        for child in node:
            walk(child)
        if node is not element and node.tail:
            parts.append(node.tail)

    walk(element)
    return normalize_whitespace(" ".join(parts))


def parse_cfr_xml(raw: str | bytes) -> list[RegulationSection]:
    """Sections in document order with nested markup flattened to text."""
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        raise MalformedInput(f"bad XML: {exc}", exc.position[0]) from None
    sections = []
    seen = set()
    for element in root.iter("section"):
        citation = (element.get("citation") or "").strip()
        if not citation:
            raise MalformedInput("section without a citation attribute")
        if citation in seen:
            raise DuplicateCitation(citation)
        seen.add(citation)
        heading_el = element.find("heading")
        heading = _flatten(heading_el) if heading_el is not None else ""
        sections.append(RegulationSection(citation, heading, _flatten(element, skip=heading_el)))
    return sections


# --------------------------------------------------------------------------- fetching


@dataclass
class FetchResult:
    articles: list[Article]
    skipped: list[tuple[str, str]] = field(default_factory=list)


def _finish(candidates, since: date, skipped) -> FetchResult:
    kept = {}
    for name, article in candidates:
        if article.publication_date < since:
            continue
        if article.id in kept:
            skipped.append((name, f"duplicate article id {article.id}"))
            continue
        kept[article.id] = article
    articles = sorted(kept.values(), key=lambda a: (a.publication_date, a.id))
    return FetchResult(articles, skipped)


def fetch_updates(source: str | Path, since: date, timeout: float = 30.0) -> FetchResult:
    """Articles published on or after ``since``, ordered by (date, id).

    A directory ``source`` is read as a fixture corpus of ``*.json`` files;
    anything else is treated as a URL answering ``GET ?since=YYYY-MM-DD``
    with a JSON array of article objects. Documents that fail to parse are
    skipped and listed in ``FetchResult.skipped``.
    """
    skipped: list[tuple[str, str]] = []
    candidates = []
    path = Path(source)
    if path.is_dir():
        for file in sorted(path.glob("*.json")):
            try:
                candidates.append((file.name, parse_article(file.read_bytes())))
            except (MalformedInput, MissingField, EmptyBody) as exc:
                log.warning("skipping %s: %s", file.name, exc)
                skipped.append((file.name, str(exc)))
        return _finish(candidates, since, skipped)

    url = str(source)
    if urllib.parse.urlparse(url).scheme not in ("http", "https"):
        raise SourceUnavailable(f"{url} is neither a directory nor a URL")
    separator = "&" if "?" in url else "?"
    query = urllib.parse.urlencode({"since": since.isoformat()})
    try:
        with urllib.request.urlopen(f"{url}{separator}{query}", timeout=timeout) as response:
            payload = response.read()
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise SourceUnavailable(f"{url}: {exc}") from None
    try:
        documents = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SourceUnavailable(f"{url}: response is not JSON ({exc})") from None
    if not isinstance(documents, list):
        raise SourceUnavailable(f"{url}: expected a JSON array")
    for n, document in enumerate(documents):
        try:
            candidates.append((f"item[{n}]", article_from_object(document)))
        except (MalformedInput, MissingField, EmptyBody) as exc:
            skipped.append((f"item[{n}]", str(exc)))
    return _finish(candidates, since, skipped)
