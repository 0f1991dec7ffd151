"""Run configuration: lexicon paths, thresholds and NIC column mapping.

A config file is a JSON object; every key is optional and falls back to the
bundled data. Relative paths resolve against the config file's directory.

    {
      "gazetteer": "gazetteer.tsv",
      "nic_gazetteer": "nic.csv",
      "verbs": "verbs.txt",
      "change_verbs": "change_verbs.txt",
      "direction": "direction.txt",
      "prepositions": "prepositions.txt",
      "dates": "dates.txt",
      "citations": "citations.txt",
      "abbreviations": "abbreviations.txt",
      "scale_words": "scale_words.txt",
      "aliases": "aliases.tsv",
      "overlap_threshold": "0.5",
      "regulator_columns": ["REGULATOR_RSSD"],
      "insurer_columns": ["INSURER_RSSD"]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, RegwatchError
from .extract import (
    Gazetteer,
    TypingRules,
    VerbLexicon,
    load_citation_patterns,
    load_date_patterns,
    load_word_set,
)
from .fuse import Direction
from .ingest import parse_nic_csv
from .resources import iter_entries, read_text
from .textcore import load_abbreviations, load_scale_words

DEFAULT_REGULATOR_COLUMNS = ("REGULATOR_RSSD",)
DEFAULT_INSURER_COLUMNS = ("INSURER_RSSD",)


def load_direction_lexicon(source: str = "direction.txt") -> dict[str, Direction]:
    lexicon = {}
    for number, line in iter_entries(read_text(source)):
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("INCREASE", "DECREASE"):
            raise ConfigError(f"{source}:{number}: expected 'lemma INCREASE|DECREASE'")
        lexicon[parts[0].lower()] = Direction(parts[1])
    return lexicon


def load_aliases(source: str = "aliases.tsv") -> dict[str, str]:
    aliases = {}
    for number, line in iter_entries(read_text(source)):
        alias, sep, key = line.partition("\t")
        if not sep or not alias.strip() or not key.strip():
            raise ConfigError(f"{source}:{number}: expected alias<TAB>key")
        aliases[alias.strip()] = key.strip()
    return aliases


@dataclass(frozen=True)
class PipelineConfig:
    typing: TypingRules
    verbs: VerbLexicon
    prepositions: frozenset[str]
    direction_lexicon: dict[str, Direction]
    abbreviations: frozenset[str]
    overlap_threshold: Fraction = Fraction(1, 2)
    aliases: dict[str, str] = field(default_factory=dict)
    regulator_columns: tuple[str, ...] = DEFAULT_REGULATOR_COLUMNS
    insurer_columns: tuple[str, ...] = DEFAULT_INSURER_COLUMNS

    @classmethod
    def default(cls) -> "PipelineConfig":
        return cls.from_mapping({})

    @classmethod
    def from_mapping(cls, data: dict, base: Path | None = None) -> "PipelineConfig":
        def path(key, default):
            value = data.get(key)
            if value is None:
                return default
            p = Path(value)
            if base is not None and not p.is_absolute():
                p = base / p
            return str(p)

        try:
            verbs = VerbLexicon.from_text(read_text(path("verbs", "verbs.txt")))
            gazetteer = Gazetteer.from_text(read_text(path("gazetteer", "gazetteer.tsv")))
            if data.get("nic_gazetteer"):
                records = parse_nic_csv(read_text(path("nic_gazetteer", None)))
                gazetteer = Gazetteer.from_institutions(records, gazetteer)
            typing = TypingRules(
                gazetteer=gazetteer,
                change_lemmas=load_word_set(path("change_verbs", "change_verbs.txt")),
                verbs=verbs,
                date_patterns=load_date_patterns(path("dates", "dates.txt")),
                citation_patterns=load_citation_patterns(path("citations", "citations.txt")),
                scale_words=load_scale_words(path("scale_words", "scale_words.txt")),
            )
            threshold = Fraction(str(data.get("overlap_threshold", "0.5")))
            if not 0 < threshold <= 1:
                raise ConfigError(f"overlap_threshold must be in (0, 1], got {threshold}")
            return cls(
                typing=typing,
                verbs=verbs,
                prepositions=load_word_set(path("prepositions", "prepositions.txt")),
                direction_lexicon=load_direction_lexicon(path("direction", "direction.txt")),
                abbreviations=load_abbreviations(path("abbreviations", "abbreviations.txt")),
                overlap_threshold=threshold,
                aliases=load_aliases(path("aliases", "aliases.tsv")),
                regulator_columns=tuple(data.get("regulator_columns", DEFAULT_REGULATOR_COLUMNS)),
                insurer_columns=tuple(data.get("insurer_columns", DEFAULT_INSURER_COLUMNS)),
            )
        except ConfigError:
            raise
        except (OSError, ValueError, RegwatchError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls.default()
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_mapping(data, base=path.parent)
