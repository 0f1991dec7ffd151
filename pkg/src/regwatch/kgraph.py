"""In-memory domain knowledge graph with idempotent merging and a line format.

Nodes are keyed by canonical surface (or ``rssd:<id>`` for registry rows,
``event:<article id>`` for reified article events). Edges are unique per
``(from, label, to)``; inserting an existing edge only unions provenance.
"""

from __future__ import annotations

import copy
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DanglingParent, EmptySurface, MalformedInput, StorageFailure, UnsupportedPattern
from .extract import UNTYPED
from .fuse import SLOT_TYPES, DataModelInstance, Direction
from .ingest import InstitutionKind, InstitutionRecord
from .textcore import format_decimal

ARTICLES = frozenset({"the", "a", "an"})
NIC = "NIC"
EVENT_LABEL = "EVENT"
SURFACE_FORMS = "surface_forms"

BRANCH_OF = "BRANCH_OF"
HELD_BY = "HELD_BY"
REGULATED_BY = "REGULATED_BY"
INSURED_BY = "INSURED_BY"


def _normalize(surface: str) -> str:
    words = surface.casefold().split()
    if len(words) > 1 and words[0] in ARTICLES:
        words = words[1:]
    return " ".join(words)


def canonicalize(surface: str, aliases: dict[str, str] | None = None) -> str:
    """Node key for a surface form.

    Case-folds, collapses whitespace, drops one leading article and then
    resolves aliases (alias keys are normalized the same way).
    """
    key = _normalize(surface)
    if not key:
        raise EmptySurface("cannot canonicalize an empty surface")
    if aliases:
        table = {_normalize(alias): _normalize(target) for alias, target in aliases.items()}
        key = table.get(key, key)
    return key


def event_key(article_id: str) -> str:
    return f"event:{article_id}"


def rssd_key(rssd_id: str) -> str:
    return f"rssd:{rssd_id}"


@dataclass
class Node:
    key: str
    label: str
    properties: dict[str, str] = field(default_factory=dict)

    @property
    def surface_forms(self) -> list[str]:
        return json.loads(self.properties.get(SURFACE_FORMS, "[]"))


@dataclass
class Edge:
    source: str
    label: str
    target: str
    provenance: set = field(default_factory=set)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.label, self.target)


@dataclass
class MergeReport:
    nodes_added: int = 0
    edges_added: int = 0
    edges_deduplicated: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "nodes_added": self.nodes_added,
            "edges_added": self.edges_added,
            "edges_deduplicated": self.edges_deduplicated,
            "diagnostics": list(self.diagnostics),
        }


def _provenance_sort_key(item):
    if item == NIC:
        return (0, "", -1)
    article_id, sentence_index = item
    return (1, article_id, -1 if sentence_index is None else sentence_index)


class Graph:
    """Single-writer graph store.

    Mutations take an internal lock; readers that need a stable view should
    work on :meth:`snapshot`. With ``check_integrity=True`` every mutation is
    followed by a referential-integrity check.
    """

    def __init__(self, check_integrity: bool = False):
        self.nodes: dict[str, Node] = {}
        self.edges: dict[tuple[str, str, str], Edge] = {}
        self.check_integrity = check_integrity
        self._lock = threading.RLock()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __len__(self) -> int:
        return len(self.nodes)

    def snapshot(self) -> "Graph":
        with self._lock:
            clone = Graph()
            clone.nodes = copy.deepcopy(self.nodes)
            clone.edges = copy.deepcopy(self.edges)
            return clone

    def verify(self) -> None:
        """Raise ``AssertionError`` if any edge endpoint is missing."""
        for edge in self.edges.values():
            assert edge.source in self.nodes, f"dangling edge source {edge.source!r}"
            assert edge.target in self.nodes, f"dangling edge target {edge.target!r}"

    def _checked(self):
        if self.check_integrity:
            self.verify()

    def add_node(self, key: str, label: str, properties: dict[str, str] | None = None,
                 surface: str | None = None) -> bool:
        """Insert or update a node; returns True when the key was new."""
        with self._lock:
            node = self.nodes.get(key)
            added = node is None
            if added:
                node = self.nodes[key] = Node(key, label)
            elif node.label == UNTYPED and label != UNTYPED:
                node.label = label
            if properties:
                node.properties.update(properties)
            if surface is not None:
                forms = set(node.surface_forms)
                if surface not in forms:
                    forms.add(surface)
                    node.properties[SURFACE_FORMS] = json.dumps(sorted(forms), ensure_ascii=False)
            self._checked()
            return added

    def add_edge(self, source: str, label: str, target: str, provenance: Iterable) -> bool:
        """Insert an edge or union its provenance; returns True when new."""
        with self._lock:
            if source not in self.nodes or target not in self.nodes:
                raise KeyError(f"edge endpoint missing: {source!r} -> {target!r}")
            key = (source, label, target)
            edge = self.edges.get(key)
            added = edge is None
            if added:
                edge = self.edges[key] = Edge(source, label, target)
            edge.provenance.update(provenance)
            self._checked()
            return added


# --------------------------------------------------------------------------- merging


def _slot_node(name: str, value, aliases) -> tuple[str, str, dict[str, str], str]:
    """``(key, label, properties, surface)`` for a filled slot value."""
    label = SLOT_TYPES[name]
    if name == "quantity":
        text = f"{format_decimal(value.value)} {value.unit.value}"
        return canonicalize(text), label, {"value": format_decimal(value.value), "unit": value.unit.value}, text
    if name == "effective_date":
        return value.isoformat(), label, {}, value.isoformat()
    return canonicalize(value, aliases), label, {}, value


def merge_instance(graph: Graph, instance: DataModelInstance, aliases: dict[str, str] | None = None) -> MergeReport:
    """Fold one article's instance into the graph.

    The article becomes an ``event:<id>`` node; each filled slot links from
    it by a slot-named edge, and each triple adds subject and object nodes
    joined by the predicate label. Re-merging the same instance changes
    nothing.
    """
    report = MergeReport()
    event = event_key(instance.article_id)
    props = {"article_id": instance.article_id}
    if instance.slots.direction is not Direction.UNSPECIFIED:
        props["direction"] = instance.slots.direction.value
    report.nodes_added += graph.add_node(event, EVENT_LABEL, props)

    def link(source, label, target, provenance):
        if graph.add_edge(source, label, target, provenance):
            report.edges_added += 1
        else:
            report.edges_deduplicated += 1

    for name, value in instance.slots.filled().items():
        if name == "direction":
            continue
        try:
            key, label, properties, surface = _slot_node(name, value, aliases)
        except EmptySurface:
            report.diagnostics.append(f"slot {name}: empty surface")
            continue
        report.nodes_added += graph.add_node(key, label, properties, surface)
        evidence = instance.evidence.get(name)
        link(event, name, key, {(instance.article_id, evidence[0] if evidence else None)})

    for triple in instance.triples:
        try:
            subject = canonicalize(triple.subject.surface, aliases)
            obj = canonicalize(triple.object.surface, aliases)
        except EmptySurface:
            report.diagnostics.append(f"triple in sentence {triple.sentence_index}: empty surface")
            continue
        report.nodes_added += graph.add_node(subject, triple.subject.entity_type, surface=triple.subject.surface)
        report.nodes_added += graph.add_node(obj, triple.object.entity_type, surface=triple.object.surface)
        link(subject, triple.predicate_label, obj, {(triple.article_id, triple.sentence_index)})
    return report


def ingest_nic(
    graph: Graph,
    records: Sequence[InstitutionRecord],
    regulator_columns: Sequence[str] = ("REGULATOR_RSSD",),
    insurer_columns: Sequence[str] = ("INSURER_RSSD",),
) -> MergeReport:
    """Add registry institutions as ``rssd:<id>`` nodes with structural edges.

    Branches get BRANCH_OF to their parent, other institutions HELD_BY.
    Non-empty values in the regulator/insurer columns become REGULATED_BY /
    INSURED_BY edges. References to ids found neither in the batch nor in
    the graph are reported and skipped.
    """
    report = MergeReport()
    for record in records:
        properties = dict(record.properties)
        properties["name"] = record.name
        properties["rssd_id"] = record.rssd_id
        report.nodes_added += graph.add_node(rssd_key(record.rssd_id), record.kind.value, properties, record.name)

    def link(source, label, target_id, missing):
        target = rssd_key(target_id)
        if target not in graph.nodes:
            report.diagnostics.append(missing)
            return
        if graph.add_edge(source, label, target, {NIC}):
            report.edges_added += 1
        else:
            report.edges_deduplicated += 1

    for record in records:
        source = rssd_key(record.rssd_id)
        if record.parent_rssd_id:
            label = BRANCH_OF if record.kind is InstitutionKind.BANK_BRANCH else HELD_BY
            link(source, label, record.parent_rssd_id,
                 f"DanglingParent: {DanglingParent(record.rssd_id, record.parent_rssd_id)}")
        for columns, label in ((regulator_columns, REGULATED_BY), (insurer_columns, INSURED_BY)):
            for column in columns:
                target_id = (record.properties.get(column) or "").strip()
                if target_id:
                    link(source, label, target_id,
                         f"DanglingReference: rssd:{record.rssd_id} {column} -> missing rssd:{target_id}")
    return report


# --------------------------------------------------------------------------- queries

WILDCARD = "*"


def _bound(value) -> bool:
    return value is not None and value != WILDCARD


def _edges_matching(graph: Graph, source, label, target):
    for s, l, t in graph.edges:
        if (not _bound(source) or s == source) and (not _bound(label) or l == label) \
                and (not _bound(target) or t == target):
            yield s, l, t


def query_pattern(graph: Graph, pattern: Sequence, hops: int = 1) -> list[tuple]:
    """Match edge patterns; ``None`` or ``"*"`` is a wildcard.

    One hop takes ``(subject, label, object)`` and yields matching edges.
    Two hops take ``(subject, label1, label2, object)`` and yield
    ``(subject, label1, middle, label2, object)`` joined on the middle node;
    each hop may leave at most one of its own fields unbound.
    """
    if hops == 1:
        if len(pattern) != 3:
            raise UnsupportedPattern("a 1-hop pattern has 3 fields")
        return sorted(set(_edges_matching(graph, *pattern)))
    if hops == 2:
        if len(pattern) != 4:
            raise UnsupportedPattern("a 2-hop pattern has 4 fields: subject label1 label2 object")
        subject, first, second, obj = pattern
        if not (_bound(subject) or _bound(first)) or not (_bound(second) or _bound(obj)):
            raise UnsupportedPattern("each hop of a 2-hop pattern may leave at most one field unbound")
        by_source: dict[str, list[tuple[str, str]]] = {}
        for s, l, t in _edges_matching(graph, None, second, obj):
            by_source.setdefault(s, []).append((l, t))
        results = set()
        for s, l1, middle in _edges_matching(graph, subject, first, None):
            for l2, t in by_source.get(middle, ()):
                results.add((s, l1, middle, l2, t))
        return sorted(results)
    raise UnsupportedPattern(f"hops must be 1 or 2, got {hops}")


# --------------------------------------------------------------------------- persistence


def _provenance_json(provenance) -> str:
    items = [item if item == NIC else list(item) for item in sorted(provenance, key=_provenance_sort_key)]
    return json.dumps(items, ensure_ascii=False, separators=(",", ":"))


def _check_field(value: str, what: str) -> str:
    if not value or any(c in value for c in "\t\n\r"):
        raise StorageFailure(f"{what} {value!r} cannot be stored in the line format")
    return value


def dumps_graph(graph: Graph) -> str:
    lines = []
    with graph._lock:
        for key in sorted(graph.nodes):
            node = graph.nodes[key]
            props = json.dumps(node.properties, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
            lines.append(f"N\t{_check_field(key, 'node key')}\t{_check_field(node.label, 'label')}\t{props}")
        for key in sorted(graph.edges):
            edge = graph.edges[key]
            lines.append(
                f"E\t{_check_field(edge.source, 'node key')}\t{_check_field(edge.label, 'label')}"
                f"\t{_check_field(edge.target, 'node key')}\t{_provenance_json(edge.provenance)}"
            )
    return "".join(line + "\n" for line in lines)


def persist(graph: Graph, sink) -> None:
    """Write the graph to a path (atomically, via rename) or a text stream."""
    text = dumps_graph(graph)
    if hasattr(sink, "write"):
        sink.write(text)
        return
    path = Path(sink)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageFailure(f"cannot write {path}: {exc}") from None


def _parse_provenance(raw: str, line: int) -> set:
    try:
        items = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"bad provenance JSON: {exc}", line) from None
    if not isinstance(items, list):
        raise MalformedInput("provenance must be a list", line)
    provenance = set()
    for item in items:
        if item == NIC:
            provenance.add(NIC)
        elif (isinstance(item, list) and len(item) == 2 and isinstance(item[0], str)
              and (item[1] is None or (isinstance(item[1], int) and not isinstance(item[1], bool)))):
            provenance.add((item[0], item[1]))
        else:
            raise MalformedInput(f"bad provenance entry {item!r}", line)
    return provenance


def loads_graph(text: str) -> Graph:
    graph = Graph()
    seen_edge = False
    for number, raw in enumerate(text.split("\n"), start=1):
        if raw == "":
            continue
        fields = raw.split("\t")
        kind = fields[0]
        if kind == "N":
            if seen_edge:
                raise MalformedInput("node record after edge records", number)
            if len(fields) != 4:
                raise MalformedInput(f"node record needs 4 fields, got {len(fields)}", number)
            _, key, label, props = fields
            try:
                properties = json.loads(props)
            except json.JSONDecodeError as exc:
                raise MalformedInput(f"bad properties JSON: {exc}", number) from None
            if not isinstance(properties, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in properties.items()
            ):
                raise MalformedInput("properties must map strings to strings", number)
            if not key or not label:
                raise MalformedInput("empty node key or label", number)
            if key in graph.nodes:
                raise MalformedInput(f"duplicate node {key!r}", number)
            graph.nodes[key] = Node(key, label, properties)
        elif kind == "E":
            seen_edge = True
            if len(fields) != 5:
                raise MalformedInput(f"edge record needs 5 fields, got {len(fields)}", number)
            _, source, label, target, prov = fields
            if source not in graph.nodes or target not in graph.nodes:
                raise MalformedInput("edge references unknown node", number)
            if not label:
                raise MalformedInput("empty edge label", number)
            if (source, label, target) in graph.edges:
                raise MalformedInput("duplicate edge", number)
            graph.edges[(source, label, target)] = Edge(source, label, target, _parse_provenance(prov, number))
        else:
            raise MalformedInput(f"unknown record kind {kind!r}", number)
    return graph


def load(source) -> Graph:
    """Read a graph from a path or text stream."""
    if hasattr(source, "read"):
        return loads_graph(source.read())
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageFailure(f"cannot read {source}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise MalformedInput(f"not UTF-8: {exc}") from None
    return loads_graph(text)
