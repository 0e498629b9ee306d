"""Glue between documents, relation graphs and the search engine."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .corpus.standoff import Document
from .graph import (Event, Relation, RelationGraph, build_relation_graph, decompose_events,
                    merge_relation_sets)
from .search import BeamConfig, Scorer, SearchStats, detect_events_sentence

log = logging.getLogger(__name__)


@dataclass
class SentenceItem:
    doc_id: str
    graph: RelationGraph
    gold: list[Event] = field(default_factory=list)


def document_graphs(doc: Document, predicted: Iterable[Relation] = (),
                    use_gold: bool = False) -> list[SentenceItem]:
    """One relation graph per sentence.

    With ``use_gold`` the graph edges are the predicted relations merged with
    the decomposition of the document's gold events (training graphs);
    otherwise only the predicted relations are used.
    """
    gold_rel = decompose_events(doc.events.values()) if use_gold else set()
    rels = merge_relation_sets(predicted, gold_rel)
    by_sentence: dict[str, list[Relation]] = {s.id: [] for s in doc.sentences}
    for r in sorted(rels, key=lambda r: r.key):
        sid = doc.sentence_of(r.trigger_id)
        if doc.sentence_of(r.arg_id) != sid:
            log.warning("%s: cross-sentence relation %s skipped", doc.id, r.id)
            continue
        by_sentence[sid].append(r)
    mentions_by_sentence: dict[str, list] = {s.id: [] for s in doc.sentences}
    for m in doc.mentions.values():
        mentions_by_sentence[m.sentence_id].append(m)
    gold_by_sentence: dict[str, list[Event]] = {s.id: [] for s in doc.sentences}
    for e in doc.events.values():
        gold_by_sentence[doc.event_sentence(e)].append(e)
    items = []
    for s in doc.sentences:
        g = build_relation_graph(s, mentions_by_sentence[s.id], by_sentence[s.id])
        items.append(SentenceItem(doc.id, g, gold_by_sentence[s.id]))
    return items


def corpus_graphs(docs: Iterable[Document], relations: Optional[Mapping[str, Iterable[Relation]]] = None,
                  use_gold: bool = False) -> list[SentenceItem]:
    relations = relations or {}
    items = []
    for d in docs:
        items.extend(document_graphs(d, relations.get(d.id, ()), use_gold))
    return items


def predict_items(items: list[SentenceItem], scorer: Scorer, config: BeamConfig,
                  threads: int = 1, stats: Optional[SearchStats] = None) -> dict[str, list[Event]]:
    """Detect events for every sentence; output order never depends on ``threads``."""
    def run(item):
        st = SearchStats()
        return detect_events_sentence(item.graph, config, scorer, st), st

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, items))
    else:
        results = [run(it) for it in items]
    out: dict[str, list[Event]] = {}
    for item, (events, st) in zip(items, results):
        out.setdefault(item.doc_id, []).extend(events)
        if stats is not None:
            stats.triggers += st.triggers
            stats.skipped_triggers += st.skipped_triggers
            stats.capped_triggers += st.capped_triggers
    return out


def predict_documents(docs: list[Document], relations: Optional[Mapping[str, Iterable[Relation]]],
                      scorer: Scorer, config: BeamConfig, threads: int = 1,
                      stats: Optional[SearchStats] = None) -> dict[str, list[Event]]:
    out = predict_items(corpus_graphs(docs, relations, use_gold=False), scorer, config, threads, stats)
    for d in docs:
        out.setdefault(d.id, [])
    return out
