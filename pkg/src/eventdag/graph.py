"""Sentences, mentions, relations, events and the per-sentence relation graph."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

from .errors import ContractError, StructureError

log = logging.getLogger(__name__)

ENTITY = "entity"
TRIGGER = "trigger"

PREDICTED = "predicted"
GOLD_DECOMPOSED = "gold_decomposed"


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class Sentence:
    """One sentence; token offsets are document-level character offsets."""

    id: str
    text: str
    start: int
    tokens: tuple[Token, ...]

    @property
    def end(self) -> int:
        return self.start + len(self.text)

    def token_indices(self, start: int, end: int) -> list[int]:
        """Indices of tokens overlapping the half-open span [start, end)."""
        return [i for i, t in enumerate(self.tokens) if t.start < end and start < t.end]

    def contains(self, start: int, end: int) -> bool:
        return self.start <= start and end <= self.end


@dataclass(frozen=True)
class Mention:
    id: str
    kind: str
    type_label: str
    start: int
    end: int
    sentence_id: str = ""
    text: str = ""

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def is_trigger(self) -> bool:
        return self.kind == TRIGGER


@dataclass(frozen=True)
class Relation:
    """A role-labelled trigger -> argument edge.

    Equality and hashing use only ``(trigger_id, role, arg_id)`` so that sets
    collapse duplicates regardless of where an edge came from.
    """

    trigger_id: str
    role: str
    arg_id: str
    provenance: str = field(default=PREDICTED, compare=False)
    also_gold: bool = field(default=False, compare=False)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.trigger_id, self.role, self.arg_id)

    @property
    def id(self) -> str:
        return f"{self.trigger_id}-{self.role}->{self.arg_id}"


@dataclass(frozen=True)
class EntityRef:
    mention_id: str


@dataclass(frozen=True)
class EventRef:
    event_id: str


ArgTarget = Union[EntityRef, EventRef]


@dataclass(frozen=True)
class Event:
    id: str
    trigger_id: str
    args: tuple[tuple[str, ArgTarget], ...] = ()

    @property
    def is_nested(self) -> bool:
        return any(isinstance(t, EventRef) for _, t in self.args)


def decompose_events(events: Iterable[Event]) -> set[Relation]:
    """Pairwise (trigger, role, argument) relations of a set of events.

    Event-valued arguments map to the trigger mention of the referenced event.
    """
    events = list(events)
    by_id = {e.id: e for e in events}
    out: set[Relation] = set()
    for ev in events:
        for role, target in ev.args:
            if isinstance(target, EventRef):
                sub = by_id.get(target.event_id)
                if sub is None:
                    raise StructureError(
                        f"event {ev.id} references missing event {target.event_id}")
                arg_id = sub.trigger_id
            else:
                arg_id = target.mention_id
            out.add(Relation(ev.trigger_id, role, arg_id, provenance=GOLD_DECOMPOSED))
    return out


def merge_relation_sets(predicted: Iterable[Relation],
                        gold_decomposed: Iterable[Relation]) -> set[Relation]:
    """Union keyed by (trigger, role, arg); predicted provenance wins on shared keys."""
    merged: dict[tuple[str, str, str], Relation] = {}
    for r in predicted:
        merged[r.key] = Relation(*r.key, provenance=PREDICTED, also_gold=r.also_gold)
    for r in gold_decomposed:
        if r.key in merged:
            merged[r.key] = Relation(*r.key, provenance=PREDICTED, also_gold=True)
        else:
            merged[r.key] = Relation(*r.key, provenance=GOLD_DECOMPOSED, also_gold=True)
    return set(merged.values())


@dataclass(frozen=True)
class RelationGraph:
    sentence: Sentence
    mentions: Mapping[str, Mention]
    edges: tuple[Relation, ...]
    dropped: tuple[tuple[Relation, str], ...] = ()

    def triggers(self) -> list[Mention]:
        ts = [m for m in self.mentions.values() if m.is_trigger]
        return sorted(ts, key=_span_key)

    def out_edges(self, trigger_id: str) -> list[Relation]:
        return [e for e in self.edges if e.trigger_id == trigger_id]

    def trigger_children(self, trigger_id: str) -> list[str]:
        seen = []
        for e in self.out_edges(trigger_id):
            if self.mentions[e.arg_id].is_trigger and e.arg_id not in seen:
                seen.append(e.arg_id)
        return seen


def _span_key(m: Mention):
    return (m.start, m.end, m.id)


def _edge_key(rel: Relation, mentions: Mapping[str, Mention]):
    t, a = mentions[rel.trigger_id], mentions[rel.arg_id]
    return (t.start, rel.role, a.start, rel.trigger_id, rel.arg_id)


def _back_edges(triggers: Sequence[Mention], edges: Sequence[Relation],
                mentions: Mapping[str, Mention]) -> list[Relation]:
    adj: dict[str, list[Relation]] = {t.id: [] for t in triggers}
    for e in edges:
        if mentions[e.arg_id].is_trigger:
            adj[e.trigger_id].append(e)
    for lst in adj.values():
        lst.sort(key=lambda r: _edge_key(r, mentions))

    WHITE, GREY, BLACK = 0, 1, 2
    color = {t.id: WHITE for t in triggers}
    back: list[Relation] = []
    for root in triggers:
        if color[root.id] != WHITE:
            continue
        color[root.id] = GREY
        stack = [(root.id, iter(adj[root.id]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
                continue
            c = color[nxt.arg_id]
            if c == GREY:
                back.append(nxt)
            elif c == WHITE:
                color[nxt.arg_id] = GREY
                stack.append((nxt.arg_id, iter(adj[nxt.arg_id])))
    return back


def build_relation_graph(sentence: Sentence, mentions: Iterable[Mention],
                         relations: Iterable[Relation]) -> RelationGraph:
    """Validate endpoints, collapse duplicates and break trigger cycles.

    Cycles are broken by repeatedly running a DFS over triggers in span order
    and dropping the back edge with the largest (trigger start, role, arg
    start) key until no back edge remains.
    """
    mdict = {m.id: m for m in mentions}
    for m in mdict.values():
        if not sentence.token_indices(m.start, m.end):
            raise StructureError(f"mention {m.id} covers no token of sentence {sentence.id}")
    dropped: list[tuple[Relation, str]] = []
    kept: dict[tuple[str, str, str], Relation] = {}
    for r in relations:
        for end in (r.trigger_id, r.arg_id):
            if end not in mdict:
                raise StructureError(f"relation {r.id} endpoint {end} missing from sentence {sentence.id}")
        if not mdict[r.trigger_id].is_trigger:
            raise StructureError(f"relation {r.id} starts at non-trigger {r.trigger_id}")
        if r.trigger_id == r.arg_id:
            log.warning("dropping self-referential relation %s", r.id)
            dropped.append((r, "self-loop"))
            continue
        prev = kept.get(r.key)
        if prev is not None and prev.also_gold != r.also_gold:
            r = Relation(*r.key, provenance=prev.provenance, also_gold=True)
        elif prev is not None:
            continue
        kept[r.key] = r

    edges = sorted(kept.values(), key=lambda r: _edge_key(r, mdict))
    triggers = sorted((m for m in mdict.values() if m.is_trigger), key=_span_key)
    while True:
        back = _back_edges(triggers, edges, mdict)
        if not back:
            break
        worst = max(back, key=lambda r: _edge_key(r, mdict))
        log.warning("breaking trigger cycle by dropping %s", worst.id)
        dropped.append((worst, "cycle"))
        edges.remove(worst)
    return RelationGraph(sentence, mdict, tuple(edges), tuple(dropped))


def topological_trigger_order(graph: RelationGraph) -> list[str]:
    """Triggers ordered children-first, ties broken by span offsets."""
    triggers = graph.triggers()
    pending = {t.id: set(graph.trigger_children(t.id)) for t in triggers}
    parents: dict[str, set[str]] = {t.id: set() for t in triggers}
    for tid, kids in pending.items():
        for k in kids:
            parents[k].add(tid)
    heap = [_span_key(t) for t in triggers if not pending[t.id]]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        _, _, tid = heapq.heappop(heap)
        order.append(tid)
        for p in parents[tid]:
            pending[p].discard(tid)
            if not pending[p]:
                m = graph.mentions[p]
                heapq.heappush(heap, _span_key(m))
    if len(order) != len(triggers):
        raise ContractError(f"trigger cycle in sentence {graph.sentence.id}")
    return order
