"""Command-line driver: ingest, extract, graph build|merge|query, notify, watch."""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import shlex
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from pathlib import Path

from . import kgraph
from .config import PipelineConfig
from .errors import RegwatchError, SourceUnavailable
from .fuse import DataModelInstance, dumps_instance, loads_instance, run_pipeline
from .ingest import dump_article, fetch_updates, parse_article, parse_nic_csv
from .notify import generate_alerts, load_taxonomy, parse_rules

log = logging.getLogger("regwatch")


class Fatal(Exception):
    """Aborts a command with exit code 2."""


@dataclass
class RunReport:
    articles_processed: int = 0
    instances_written: int = 0
    mean_summarization_ratio: Fraction | None = None
    alerts_emitted: int = 0
    diagnostics: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        ratio = self.mean_summarization_ratio
        data = {
            "articles_processed": self.articles_processed,
            "instances_written": self.instances_written,
            "mean_summarization_ratio": None if ratio is None else str(ratio),
            "mean_summarization_ratio_float": None if ratio is None else round(float(ratio), 6),
            "alerts_emitted": self.alerts_emitted,
            "diagnostics": self.diagnostics,
        }
        data.update(self.counts)
        return json.dumps(data, sort_keys=True, ensure_ascii=False)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    os.replace(tmp, path)


def safe_name(article_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", article_id) + ".json"


def read_instances(path: Path) -> list[DataModelInstance]:
    """Instances from a ``.jsonl`` file or a directory of ``*.json`` files."""
    if not path.exists():
        raise Fatal(f"{path} does not exist")
    try:
        if path.is_dir():
            texts = [f.read_text(encoding="utf-8") for f in sorted(path.glob("*.json"))]
        else:
            texts = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        instances = [loads_instance(text) for text in texts]
    except (ValueError, KeyError, TypeError) as exc:
        raise Fatal(f"cannot read instances from {path}: {exc}") from None
    return sorted(instances, key=lambda i: i.article_id)


def _config(args) -> PipelineConfig:
    try:
        return PipelineConfig.load(args.config)
    except RegwatchError as exc:
        raise Fatal(f"config error: {exc}") from None


# --------------------------------------------------------------------------- commands


def cmd_ingest(args) -> RunReport:
    report = RunReport()
    try:
        result = fetch_updates(args.source, args.since)
    except SourceUnavailable as exc:
        raise Fatal(f"SourceUnavailable: {exc}") from None
    out = Path(args.out)
    for article in result.articles:
        write_atomic(out / safe_name(article.id), dump_article(article))
        report.articles_processed += 1
    report.diagnostics.extend(f"skipped {name}: {message}" for name, message in result.skipped)
    return report


def _extract_one(config, path: Path, annotations_dir: Path | None):
    try:
        article = parse_article(path.read_bytes())
        annotations = None
        if annotations_dir is not None:
            candidate = annotations_dir / safe_name(article.id)
            if candidate.exists():
                annotations = candidate.read_text(encoding="utf-8")
        instance, ratio = run_pipeline(article, config, annotations)
    except RegwatchError as exc:
        return path.name, None, None, f"{path.name}: {type(exc).__name__}: {exc}"
    return path.name, instance, ratio, None


def extract_articles(config, paths, annotations_dir=None, jobs: int = 1):
    """Run the pipeline over article files; results keep input order."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda p: _extract_one(config, p, annotations_dir), paths))
    return [_extract_one(config, p, annotations_dir) for p in paths]


def _write_instances(out: Path, instances: list[DataModelInstance]) -> None:
    if out.suffix == ".jsonl":
        write_atomic(out, "".join(dumps_instance(i) for i in instances))
    else:
        out.mkdir(parents=True, exist_ok=True)
        for instance in instances:
            write_atomic(out / safe_name(instance.article_id), dumps_instance(instance))


def cmd_extract(args) -> RunReport:
    config = _config(args)
    source = Path(args.articles)
    if not source.is_dir():
        raise Fatal(f"{source} is not a directory")
    annotations = Path(args.annotations) if args.annotations else None
    report = RunReport()
    ratios = []
    instances = []
    for name, instance, ratio, problem in extract_articles(config, sorted(source.glob("*.json")), annotations, args.jobs):
        if problem:
            report.diagnostics.append(problem)
            continue
        instances.append(instance)
        ratios.append(ratio)
    instances.sort(key=lambda i: i.article_id)
    _write_instances(Path(args.out), instances)
    report.articles_processed = len(instances)
    report.instances_written = len(instances)
    if ratios:
        report.mean_summarization_ratio = sum(ratios, Fraction(0)) / len(ratios)
    return report


def _load_graph(path: Path) -> kgraph.Graph:
    if not path.exists():
        return kgraph.Graph()
    try:
        return kgraph.load(path)
    except RegwatchError as exc:
        raise Fatal(f"{type(exc).__name__}: {exc}") from None


def cmd_graph(args):
    graph_path = Path(args.graph)
    if args.graph_command == "query":
        if not graph_path.exists():
            raise Fatal(f"{graph_path} does not exist")
        graph = _load_graph(graph_path)
        try:
            fields = shlex.split(args.pattern)
        except ValueError as exc:
            raise Fatal(f"bad pattern: {exc}") from None
        hops = {3: 1, 4: 2}.get(len(fields))
        if hops is None:
            raise Fatal("pattern needs 3 fields (s l o) or 4 fields (s l1 l2 o)")
        try:
            return kgraph.query_pattern(graph, fields, hops)
        except RegwatchError as exc:
            raise Fatal(f"{type(exc).__name__}: {exc}") from None

    config = _config(args)
    report = RunReport()
    if args.graph_command == "build":
        try:
            records = parse_nic_csv(Path(args.input).read_text(encoding="utf-8"))
        except OSError as exc:
            raise Fatal(str(exc)) from None
        except RegwatchError as exc:
            raise Fatal(f"{type(exc).__name__}: {exc}") from None
        graph = kgraph.Graph()
        merged = kgraph.ingest_nic(graph, records, config.regulator_columns, config.insurer_columns)
    else:
        graph = _load_graph(graph_path)
        merged = kgraph.MergeReport()
        for instance in read_instances(Path(args.input)):
            part = kgraph.merge_instance(graph, instance, config.aliases)
            merged.nodes_added += part.nodes_added
            merged.edges_added += part.edges_added
            merged.edges_deduplicated += part.edges_deduplicated
            merged.diagnostics.extend(part.diagnostics)
            report.articles_processed += 1
    kgraph.persist(graph, graph_path)
    report.diagnostics.extend(merged.diagnostics)
    report.counts = {
        "nodes_added": merged.nodes_added,
        "edges_added": merged.edges_added,
        "edges_deduplicated": merged.edges_deduplicated,
        "nodes_total": len(graph.nodes),
        "edges_total": len(graph.edges),
    }
    return report


def cmd_notify(args) -> RunReport:
    try:
        subscriptions = parse_rules(Path(args.rules).read_text(encoding="utf-8"))
        taxonomy = load_taxonomy(Path(args.taxonomy).read_text(encoding="utf-8")) if args.taxonomy else None
    except OSError as exc:
        raise Fatal(str(exc)) from None
    except RegwatchError as exc:
        raise Fatal(f"{type(exc).__name__}: {exc}") from None
    instances = read_instances(Path(args.instances))
    alerts = []
    for instance in instances:
        alerts.extend(generate_alerts(instance, subscriptions, taxonomy))
    alerts.sort(key=lambda a: (a.subscriber_id, a.article_id))
    write_atomic(Path(args.out), "".join(
        json.dumps(a.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for a in alerts))
    return RunReport(articles_processed=len(instances), alerts_emitted=len(alerts))


def cmd_watch(args) -> RunReport:
    config = _config(args)
    articles_dir, instances_dir = Path(args.articles), Path(args.instances)
    report = RunReport()
    ratios = []
    iteration = 0
    while True:
        try:
            result = fetch_updates(args.source, args.since)
        except SourceUnavailable as exc:
            report.diagnostics.append(f"SourceUnavailable: {exc}")
            result = None
        if result is not None:
            report.diagnostics.extend(f"skipped {n}: {m}" for n, m in result.skipped)
            fresh = []
            for article in result.articles:
                target = articles_dir / safe_name(article.id)
                if not target.exists():
                    write_atomic(target, dump_article(article))
                    fresh.append(target)
            for name, instance, ratio, problem in extract_articles(config, fresh, None, args.jobs):
                if problem:
                    report.diagnostics.append(problem)
                    continue
                write_atomic(instances_dir / safe_name(instance.article_id), dumps_instance(instance))
                report.articles_processed += 1
                report.instances_written += 1
                ratios.append(ratio)
        iteration += 1
        if args.iterations and iteration >= args.iterations:
            break
        time.sleep(args.interval)
    if ratios:
        report.mean_summarization_ratio = sum(ratios, Fraction(0)) / len(ratios)
    return report


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regwatch", description=__doc__)
    parser.add_argument("--config", help="JSON config file (defaults to bundled lexicons)")
    parser.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    parser.add_argument("--jobs", type=int, default=1, help="articles processed in parallel")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fetch articles into a directory")
    p.add_argument("source", help="fixture directory or URL")
    p.add_argument("--since", type=date.fromisoformat, default=date.min)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="run the extraction pipeline over article files")
    p.add_argument("articles")
    p.add_argument("--out", required=True, help="output directory, or a .jsonl file")
    p.add_argument("--annotations", help="directory of external annotation files named <id>.json")

    p = sub.add_parser("graph", help="build, merge into, or query the knowledge graph")
    graph_sub = p.add_subparsers(dest="graph_command", required=True)
    g = graph_sub.add_parser("build", help="new graph from a NIC CSV")
    g.add_argument("input")
    g.add_argument("--graph", required=True)
    g = graph_sub.add_parser("merge", help="merge instances into a graph")
    g.add_argument("input", help="instance directory or .jsonl file")
    g.add_argument("--graph", required=True)
    g = graph_sub.add_parser("query", help="print bindings for a pattern like '* HELD_BY rssd:2002'")
    g.add_argument("pattern")
    g.add_argument("--graph", required=True)

    p = sub.add_parser("notify", help="evaluate subscriptions against instances")
    p.add_argument("instances")
    p.add_argument("--rules", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--out", required=True)

    p = sub.add_parser("watch", help="poll a source and extract new articles")
    p.add_argument("source")
    p.add_argument("--since", type=date.fromisoformat, default=date.min)
    p.add_argument("--articles", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--interval", type=float, default=300.0)
    p.add_argument("--iterations", type=int, default=0, help="stop after N polls (0 = forever)")
    return parser


COMMANDS = {
    "ingest": cmd_ingest,
    "extract": cmd_extract,
    "graph": cmd_graph,
    "notify": cmd_notify,
    "watch": cmd_watch,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(message)s")
    try:
        result = COMMANDS[args.command](args)
    except Fatal as exc:
        print(f"regwatch: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, RunReport):
        if not args.quiet:
            for line in result.diagnostics:
                print(line, file=sys.stderr)
        print(result.to_json())
    else:
        for binding in result:
            print("\t".join(binding))
    return 0


if __name__ == "__main__":
    sys.exit(main())
