"""Access to the line-oriented lexicon files bundled under ``data/``."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def read_text(name: str | Path) -> str:
    """Read a bundled data file by bare name, or any file by path."""
    path = Path(name)
    if path.parent != Path(".") or path.exists():
        return path.read_text(encoding="utf-8")
    return resources.files("regwatch").joinpath("data", str(name)).read_text(encoding="utf-8")


def iter_entries(text: str):
    """Yield ``(line_number, line)`` for non-blank, non-comment lines."""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield number, line
