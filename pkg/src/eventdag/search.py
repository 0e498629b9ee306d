"""Beam search over a trigger's arguments with ADD / IGNORE / CONSTRUCT actions.

A trigger's candidate arguments sit in a buffer behind a NONE sentinel.  Each
step pops the buffer front and branches on the applicable actions; CONSTRUCT
emits an event candidate made of every ADD-ed entry plus the current one and
terminates that branch.  Every beam slot is harvested, so one trigger can
yield several (overlapping) events.  Triggers are processed children-first and
the events fixed for a child become argument entries of its parents.
"""

from __future__ import annotations

import itertools
import logging
import math
import sys
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

import numpy as np

from .errors import ContractError, SizeGuardError
from .graph import Event, EntityRef, EventRef, Relation, RelationGraph, topological_trigger_order

log = logging.getLogger(__name__)


class Action(IntEnum):
    ADD = 0
    IGNORE = 1
    CONSTRUCT = 2


# Row of the action table used for relations still waiting in the buffer.
PENDING = 3


class NoneEntry:
    """Sentinel occupying the first buffer slot; enables no-argument events."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NONE"

    def __reduce__(self):
        return (NoneEntry, ())


NONE = NoneEntry()


@dataclass(frozen=True)
class FixedEvent:
    """An event accepted for a trigger, usable as an argument of its parents."""

    id: str
    trigger_id: str
    args: tuple
    fingerprint: str
    representation: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def to_event(self) -> Event:
        return Event(self.id, self.trigger_id, self.args)


@dataclass(frozen=True)
class ArgumentEntry:
    relation: Relation
    arg_start: int
    sub_event: Optional[FixedEvent] = None

    @property
    def role(self) -> str:
        return self.relation.role

    @property
    def arg_id(self) -> str:
        return self.relation.arg_id

    @property
    def target(self):
        if self.sub_event is not None:
            return EventRef(self.sub_event.id)
        return EntityRef(self.arg_id)

    @property
    def target_fingerprint(self) -> str:
        return self.sub_event.fingerprint if self.sub_event is not None else self.arg_id

    def sort_key(self):
        fp = self.sub_event.fingerprint if self.sub_event is not None else ""
        return (self.arg_start, self.role, fp, self.arg_id)


Entry = Union[ArgumentEntry, NoneEntry]


def canonical_order(entries: Iterable[ArgumentEntry]) -> tuple[ArgumentEntry, ...]:
    return tuple(sorted(entries, key=ArgumentEntry.sort_key))


def event_fingerprint(trigger_id: str, pairs: Iterable[tuple[str, str]]) -> str:
    """Structural identity: trigger plus the multiset of (role, target) pairs."""
    inner = ",".join(f"{role}={fp}" for role, fp in sorted(pairs))
    return f"{trigger_id}({inner})"


@dataclass(frozen=True)
class BeamConfig:
    k: int = 8
    threshold: float = 0.5
    strict_stop: bool = False
    # Raise k per trigger so that nothing is ever pruned (upper-bound mode).
    exhaustive: bool = False
    exhaustive_cap: int = 16

    def __post_init__(self):
        if self.k < 1:
            raise ContractError(f"beam size must be >= 1, got {self.k}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ContractError(f"threshold must lie in [0, 1], got {self.threshold}")

    def beam_for(self, n_entries: int) -> int:
        if not self.exhaustive:
            return self.k
        n = min(n_entries, self.exhaustive_cap)
        return max(self.k, 3 * 2 ** n)


@dataclass(frozen=True)
class SearchState:
    """Immutable search state.

    ``entries`` holds the NONE sentinel followed by the trigger's entries in
    canonical order; the first ``len(history)`` of them form the structure S
    and the remainder is the buffer B.
    """

    trigger_id: str
    entries: tuple
    history: tuple = ()
    cum_log_score: float = 0.0
    index: int = 0

    @property
    def S(self) -> tuple:
        return tuple(zip(self.entries, self.history))

    @property
    def B(self) -> tuple:
        return self.entries[len(self.history):]

    @property
    def terminated(self) -> bool:
        return bool(self.history) and self.history[-1] == Action.CONSTRUCT

    @property
    def complete(self) -> bool:
        return self.terminated or len(self.history) == len(self.entries)

    @property
    def front(self) -> Entry:
        return self.entries[len(self.history)]

    def included(self) -> tuple:
        return tuple(e for e, a in zip(self.entries, self.history)
                     if a != Action.IGNORE and e is not NONE)


@dataclass(frozen=True)
class EventCandidate:
    trigger_id: str
    included: tuple
    history: tuple
    construct_score: float
    representation: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


class TriggerScorer(Protocol):
    def score(self, expansions: Sequence[tuple[SearchState, Action]]) -> np.ndarray: ...

    def event_representation(self, state: SearchState) -> Optional[np.ndarray]: ...


class SentenceScorer(Protocol):
    def trigger(self, trigger_id: str, entries: tuple) -> TriggerScorer: ...


class Scorer:
    """Base for action scorers: owns the thread-safe scorer-call counter."""

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def count(self, n: int) -> None:
        with self._lock:
            self.calls += n

    def reset_calls(self) -> None:
        with self._lock:
            self.calls = 0

    def sentence(self, graph: RelationGraph) -> SentenceScorer:
        raise NotImplementedError


class FunctionScorer(Scorer):
    """Scores each (state, action) with a plain Python callable."""

    def __init__(self, fn: Callable[[SearchState, Action], float],
                 representation: Optional[Callable[[SearchState], np.ndarray]] = None):
        super().__init__()
        self.fn = fn
        self.rep = representation

    def sentence(self, graph):
        return self

    def trigger(self, trigger_id, entries):
        return self

    def score(self, expansions):
        self.count(len(expansions))
        return np.array([self.fn(s, a) for s, a in expansions], dtype=float)

    def event_representation(self, state):
        return self.rep(state) if self.rep is not None else None


class ConstantScorer(FunctionScorer):
    def __init__(self, p: float = 0.5):
        super().__init__(lambda s, a: p)


def init_state(trigger_id: str, entries: Iterable[ArgumentEntry]) -> SearchState:
    return SearchState(trigger_id, (NONE,) + canonical_order(entries))


def applicable_actions(front: Entry) -> tuple[Action, ...]:
    if front is NONE:
        return (Action.IGNORE, Action.CONSTRUCT)
    return (Action.ADD, Action.IGNORE, Action.CONSTRUCT)


_TINY = sys.float_info.min


def apply_action(state: SearchState, action: Action, score: float,
                 index: int = 0) -> tuple[SearchState, Optional[EventCandidate]]:
    """Pop the buffer front into S under ``action``; CONSTRUCT emits a candidate."""
    if state.complete:
        raise ContractError("action applied to a finished search state")
    if action not in applicable_actions(state.front):
        raise ContractError(f"{action.name} is not applicable to {state.front!r}")
    new = SearchState(state.trigger_id, state.entries, state.history + (Action(action),),
                      state.cum_log_score + math.log(max(score, _TINY)), index)
    cand = None
    if action == Action.CONSTRUCT:
        cand = EventCandidate(state.trigger_id, new.included(), new.history, float(score))
    return new, cand


def _rank_key(state: SearchState):
    return (-state.cum_log_score, int(state.history[-1]), state.index)


def beam_step(states: Sequence[SearchState], scorer: TriggerScorer,
              k: int) -> tuple[list[SearchState], list[EventCandidate]]:
    """Expand every live state, keep the top ``k``, harvest kept CONSTRUCTs.

    Returns the states that still have a buffer to process and the candidates
    emitted by kept CONSTRUCT expansions (which then leave the beam).
    """
    expansions = [(s, a) for s in states for a in applicable_actions(s.front)]
    if not expansions:
        return [], []
    scores = scorer.score(expansions)
    children = []
    for i, ((s, a), p) in enumerate(zip(expansions, scores)):
        child, cand = apply_action(s, a, float(p), index=i)
        children.append((child, cand))
    children.sort(key=lambda c: _rank_key(c[0]))
    survivors, candidates = [], []
    for child, cand in children[:k]:
        if cand is not None:
            rep = scorer.event_representation(child)
            candidates.append(EventCandidate(cand.trigger_id, cand.included, cand.history,
                                             cand.construct_score, rep))
        elif not child.complete:
            survivors.append(child)
    return survivors, candidates


def search_trigger(trigger_id: str, entries: Iterable[ArgumentEntry], k: int,
                   scorer: TriggerScorer) -> list[EventCandidate]:
    """Run beam steps until no live state remains; all emitted candidates."""
    states = [init_state(trigger_id, entries)]
    emitted: list[EventCandidate] = []
    while states:
        states, cands = beam_step(states, scorer, k)
        emitted.extend(cands)
    return emitted


def detect_events_for_trigger(trigger_id: str, entries: Sequence[ArgumentEntry],
                              config: BeamConfig, scorer: TriggerScorer) -> list[EventCandidate]:
    """Candidates whose CONSTRUCT score clears the threshold, one per argument set."""
    k = config.beam_for(len(entries))
    fixed, seen = [], set()
    for cand in search_trigger(trigger_id, entries, k, scorer):
        if cand.construct_score <= config.threshold:
            continue
        key = frozenset(cand.included)
        if key in seen:
            continue
        seen.add(key)
        fixed.append(cand)
    return fixed


def entity_entry(rel: Relation, graph: RelationGraph) -> ArgumentEntry:
    return ArgumentEntry(rel, graph.mentions[rel.arg_id].start)


def to_fixed_event(cand: EventCandidate, event_id: str) -> FixedEvent:
    args = tuple((e.role, e.target) for e in cand.included)
    fp = event_fingerprint(cand.trigger_id, [(e.role, e.target_fingerprint) for e in cand.included])
    return FixedEvent(event_id, cand.trigger_id, args, fp, cand.representation)


@dataclass
class SearchStats:
    triggers: int = 0
    skipped_triggers: int = 0
    capped_triggers: int = 0


def detect_fixed_sentence(graph: RelationGraph, config: BeamConfig, scorer: Scorer,
                          stats: Optional[SearchStats] = None) -> list[FixedEvent]:
    """Bottom-up detection over a sentence; returns fixed events children-first."""
    sent_scorer = scorer.sentence(graph)
    fixed_by_trigger: dict[str, list[FixedEvent]] = {}
    out: list[FixedEvent] = []
    seen_fp: set[str] = set()
    for tid in topological_trigger_order(graph):
        entries, skip = [], False
        for rel in graph.out_edges(tid):
            arg = graph.mentions[rel.arg_id]
            if not arg.is_trigger:
                entries.append(entity_entry(rel, graph))
                continue
            subs = fixed_by_trigger.get(arg.id, [])
            if not subs and config.strict_stop:
                skip = True
                break
            entries.extend(ArgumentEntry(rel, arg.start, sub) for sub in subs)
        fixed_by_trigger[tid] = []
        if stats is not None:
            stats.triggers += 1
        if skip:
            if stats is not None:
                stats.skipped_triggers += 1
            continue
        if config.exhaustive and len(entries) > config.exhaustive_cap:
            log.warning("trigger %s has %d entries; exhaustive beam capped at 3*2^%d",
                        tid, len(entries), config.exhaustive_cap)
            if stats is not None:
                stats.capped_triggers += 1
        entries = canonical_order(entries)
        trig_scorer = sent_scorer.trigger(tid, entries)
        for j, cand in enumerate(detect_events_for_trigger(tid, entries, config, trig_scorer)):
            fe = to_fixed_event(cand, f"{tid}#{j}")
            if fe.fingerprint in seen_fp:
                continue
            seen_fp.add(fe.fingerprint)
            fixed_by_trigger[tid].append(fe)
            out.append(fe)
    return out


def detect_events_sentence(graph: RelationGraph, config: BeamConfig, scorer: Scorer,
                           stats: Optional[SearchStats] = None) -> list[Event]:
    return [fe.to_event() for fe in detect_fixed_sentence(graph, config, scorer, stats)]


MAX_BRUTEFORCE = 20


def subset_action_sequence(entries: Sequence[ArgumentEntry], subset) -> tuple[Action, ...]:
    """The unique action sequence realising ``subset`` over NONE + entries."""
    members = [i for i, e in enumerate(entries) if e in subset]
    if not members:
        return (Action.CONSTRUCT,)
    last = members[-1]
    seq = [Action.IGNORE]
    for i in range(last):
        seq.append(Action.ADD if i in members else Action.IGNORE)
    seq.append(Action.CONSTRUCT)
    return tuple(seq)


def enumerate_candidates_bruteforce(trigger_id: str, entries: Iterable[ArgumentEntry]
                                    ) -> dict[frozenset, tuple[Action, ...]]:
    """All 2^n argument subsets with their realising action sequences."""
    entries = canonical_order(entries)
    if len(entries) > MAX_BRUTEFORCE:
        raise SizeGuardError(f"{len(entries)} entries exceeds brute-force limit {MAX_BRUTEFORCE}")
    out = {}
    for bits in itertools.product((False, True), repeat=len(entries)):
        subset = frozenset(e for e, b in zip(entries, bits) if b)
        out[subset] = subset_action_sequence(entries, subset)
    return out
