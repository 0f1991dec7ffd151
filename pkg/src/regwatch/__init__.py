"""Threshold-change extraction, knowledge graph merging and alerting for regulatory updates."""

from .extract import EntityMention, EntityType, Gazetteer, PredicateFrame
from .fuse import DataModelInstance, run_pipeline
from .ingest import Article, InstitutionRecord, RegulationSection
from .kgraph import Graph
from .notify import Alert, Subscription, Taxonomy

__all__ = [
    "Alert",
    "Article",
    "DataModelInstance",
    "EntityMention",
    "EntityType",
    "Gazetteer",
    "Graph",
    "InstitutionRecord",
    "PredicateFrame",
    "RegulationSection",
    "Subscription",
    "Taxonomy",
    "run_pipeline",
]
