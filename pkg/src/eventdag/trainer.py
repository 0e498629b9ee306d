"""Gold action sequences, early-update training and the epoch loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NonFiniteError
from .evaluate import DocEvents, evaluate
from .graph import Event, EntityRef, EventRef, RelationGraph, topological_trigger_order
from .pipeline import SentenceItem, predict_items
from .scorer.model import Model, ModelConfig, init_model, label_vocab, word_vocab
from .scorer.network import TRAIN, NeuralScorer, SentenceForward, TriggerForward, sigmoid
from .scorer.optim import AMSGrad
from .search import (Action, ArgumentEntry, BeamConfig, FixedEvent, apply_action, beam_step,
                     canonical_order, entity_entry, event_fingerprint, init_state, to_fixed_event)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GoldActionSequence:
    trigger_id: str
    gold_event_id: str
    actions: tuple


@dataclass
class Derivation:
    sequences: dict = field(default_factory=dict)    # trigger id -> [GoldActionSequence]
    entries: dict = field(default_factory=dict)      # trigger id -> canonical entries
    fixed: dict = field(default_factory=dict)        # trigger id -> [FixedEvent]
    underivable: list = field(default_factory=list)  # (gold event id, reason)

    @property
    def n_derivable(self) -> int:
        return sum(len(v) for v in self.sequences.values())


def actions_for_indices(n_entries: int, indices: Iterable[int]) -> tuple:
    """Action sequence over NONE + ``n_entries`` entries including ``indices`` (0-based)."""
    members = sorted(set(indices))
    if not members:
        return (Action.CONSTRUCT,)
    last = members[-1]
    return ((Action.IGNORE,)
            + tuple(Action.ADD if i in members else Action.IGNORE for i in range(last))
            + (Action.CONSTRUCT,))


def derive_sequence(entries: Sequence[ArgumentEntry], event: Event):
    """Gold actions for ``event`` over ``entries``; ``(None, reason)`` if impossible."""
    used: list[int] = []
    for role, target in event.args:
        hit = None
        for i, e in enumerate(entries):
            if i in used or e.role != role:
                continue
            if isinstance(target, EventRef):
                ok = e.sub_event is not None and e.sub_event.id == target.event_id
            else:
                ok = e.sub_event is None and e.arg_id == target.mention_id
            if ok:
                hit = i
                break
        if hit is None:
            name = target.event_id if isinstance(target, EventRef) else target.mention_id
            return None, f"no relation or sub-event for {role}:{name}"
        used.append(hit)
    return actions_for_indices(len(entries), used), None


def forced_entries(graph: RelationGraph, trigger_id: str, fixed: dict) -> tuple:
    entries = []
    for rel in graph.out_edges(trigger_id):
        arg = graph.mentions[rel.arg_id]
        if arg.is_trigger:
            entries.extend(ArgumentEntry(rel, arg.start, sub) for sub in fixed.get(arg.id, []))
        else:
            entries.append(entity_entry(rel, graph))
    return canonical_order(entries)


Represent = Callable[[str, tuple, list], Optional[list]]


def derive_gold_action_sequences(graph: RelationGraph, gold_events: Iterable[Event],
                                 represent: Optional[Represent] = None) -> Derivation:
    """Per trigger, the action sequence constructing each derivable gold event.

    Parent triggers see their children's gold events as arguments (teacher
    forcing).  ``represent(trigger_id, entries, sequences)`` may return one
    representation per sequence to attach to the resulting fixed events.
    """
    gold_events = list(gold_events)
    by_trigger: dict[str, list[Event]] = {}
    d = Derivation()
    for e in gold_events:
        if e.trigger_id not in graph.mentions:
            d.underivable.append((e.id, "trigger not in sentence"))
            continue
        by_trigger.setdefault(e.trigger_id, []).append(e)
    gold_ids = {e.id for e in gold_events}
    for tid in topological_trigger_order(graph):
        entries = forced_entries(graph, tid, d.fixed)
        seqs, events = [], []
        for ev in by_trigger.get(tid, []):
            missing = [t.event_id for _, t in ev.args
                       if isinstance(t, EventRef) and t.event_id not in gold_ids]
            if missing:
                d.underivable.append((ev.id, f"references unknown event {missing[0]}"))
                continue
            actions, reason = derive_sequence(entries, ev)
            if actions is None:
                d.underivable.append((ev.id, reason))
                continue
            seqs.append(GoldActionSequence(tid, ev.id, actions))
            events.append(ev)
        reps = represent(tid, entries, seqs) if represent is not None else None
        fixed = []
        for j, (seq, ev) in enumerate(zip(seqs, events)):
            included = replay_included(entries, seq.actions)
            fp = event_fingerprint(tid, [(e.role, e.target_fingerprint) for e in included])
            fixed.append(FixedEvent(ev.id, tid, tuple((e.role, e.target) for e in included), fp,
                                    None if reps is None else reps[j]))
        d.entries[tid] = entries
        d.sequences[tid] = seqs
        d.fixed[tid] = fixed
    return d


def replay_included(entries: Sequence[ArgumentEntry], actions: Sequence) -> tuple:
    """Apply ``actions`` with unit scores; return the CONSTRUCT-ed argument entries."""
    state = init_state("", entries)
    for a in actions:
        state, cand = apply_action(state, a, 1.0)
        if cand is not None:
            return cand.included
    raise ValueError("action sequence does not end with CONSTRUCT")


def replay_events(graph: RelationGraph, derivation: Derivation) -> list[Event]:
    """Forced replay of every derived sequence, returned as events."""
    out = []
    for tid, seqs in derivation.sequences.items():
        entries = derivation.entries[tid]
        for seq in seqs:
            included = replay_included(entries, seq.actions)
            out.append(Event(seq.gold_event_id, tid, tuple((e.role, e.target) for e in included)))
    return out


@dataclass
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 0.001
    weight_decay: float = 0.001
    dropout: float = 0.5
    patience: int = 5
    max_epochs: int = 50
    beam_size: int = 8
    threshold: float = 0.5
    seed: int = 0
    strict_stop: bool = False

    def __post_init__(self):
        for name in ("batch_size", "patience", "max_epochs", "beam_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be positive and weight_decay non-negative")

    @property
    def beam(self) -> BeamConfig:
        return BeamConfig(k=self.beam_size, threshold=self.threshold, strict_stop=self.strict_stop)


@dataclass
class TriggerOutcome:
    loss: float = 0.0
    steps: int = 0
    early_update: bool = False
    expansions: int = 0
    # Kept histories per step; identifies the discrete search path.
    trace: tuple = ()


def early_update_search(trigger_id: str, entries: tuple, sequences: Sequence[GoldActionSequence],
                        k: int, tf: TriggerForward) -> TriggerOutcome:
    """Beam search that halts as soon as any gold prefix leaves the beam."""
    gold = [s.actions for s in sequences]
    states = [init_state(trigger_id, entries)]
    out = TriggerOutcome()
    while states:
        survivors, cands = beam_step(states, tf, k)
        kept = {s.history for s in survivors} | {c.history for c in cands}
        out.trace += (tuple(sorted(kept)),)
        step = out.steps
        out.steps += 1
        if any(len(g) > step and g[:step + 1] not in kept for g in gold):
            out.early_update = True
            break
        states = survivors
    return out


def trigger_labels(tf: TriggerForward, sequences: Sequence[GoldActionSequence]) -> np.ndarray:
    prefixes = {s.actions[:i] for s in sequences for i in range(1, len(s.actions) + 1)}
    return np.array([1.0 if h in prefixes else 0.0 for h, *_ in tf.recorded])


def sentence_loss(model: Model, item: SentenceItem, batch_triggers: set, k: int,
                  rng: np.random.Generator, grads: Optional[dict] = None) -> list[TriggerOutcome]:
    """Early-update loss of the listed triggers of one sentence; adds gradients to ``grads``."""
    graph = item.graph
    sf = SentenceForward(model, graph, TRAIN, rng)
    needed = set()
    stack = list(batch_triggers)
    while stack:
        t = stack.pop()
        if t in needed:
            continue
        needed.add(t)
        stack.extend(graph.trigger_children(t))
    outcomes = []

    def represent(tid, entries, seqs):
        if tid not in needed:
            return None
        tf = sf.trigger(tid, entries, record=tid in batch_triggers)
        reps = []
        for s in seqs:
            reps.append(tf.embedding(s.actions))
            sf.register_event(s.gold_event_id, tf, s.actions)
        if tid in batch_triggers:
            oc = early_update_search(tid, entries, seqs, k, tf)
            z = tf.logits
            y = trigger_labels(tf, seqs)
            oc.loss = float(np.sum(np.logaddexp(0.0, z) - y * z))
            oc.expansions = len(z)
            tf.dz = sigmoid(z) - y
            outcomes.append(oc)
        return reps

    derive_gold_action_sequences(graph, item.gold, represent)
    if grads is not None:
        sf.backward(grads)
    return outcomes


def group_batch(batch: Sequence[tuple[int, str]]) -> dict[int, set]:
    groups: dict[int, set] = {}
    for s, t in batch:
        groups.setdefault(s, set()).add(t)
    return groups


def batch_loss(model: Model, items: Sequence[SentenceItem], batch: Sequence[tuple[int, str]],
               k: int, rng: np.random.Generator, with_grads: bool = True):
    grads = model.zero_grads() if with_grads else None
    outcomes = []
    for s, triggers in sorted(group_batch(batch).items()):
        outcomes.extend(sentence_loss(model, items[s], triggers, k, rng, grads))
    return sum(o.loss for o in outcomes), grads, outcomes


def train_step_early_update(batch, model: Model, items: Sequence[SentenceItem], config: TrainConfig,
                            optimizer: AMSGrad, rng: np.random.Generator):
    """One optimizer step on a batch of (sentence index, trigger id) pairs."""
    loss, grads, outcomes = batch_loss(model, items, batch, config.beam_size, rng)
    if not np.isfinite(loss):
        log.warning("non-finite batch loss %r; batch skipped", loss)
        return loss, outcomes
    try:
        optimizer.step(model.params, grads)
    except NonFiniteError as exc:
        log.warning("%s", exc)
    return loss, outcomes


class EarlyStopping:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.bad = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record an epoch score; True when training should stop."""
        if score > self.best:
            self.best, self.best_epoch, self.bad = score, epoch, 0
            return False
        self.bad += 1
        return self.bad >= self.patience


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = 0.0
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def training_triggers(items: Sequence[SentenceItem]) -> list[tuple[int, str]]:
    return [(i, t.id) for i, it in enumerate(items) for t in it.graph.triggers()]


def items_doc_events(items: Sequence[SentenceItem], events: Optional[dict] = None) -> list[DocEvents]:
    """Group sentence items into per-document event sets (gold when ``events`` is None)."""
    docs: dict[str, DocEvents] = {}
    for it in items:
        d = docs.setdefault(it.doc_id, DocEvents(it.doc_id, {}, {}))
        d.mentions.update(it.graph.mentions)
        if events is None:
            d.events.update({e.id: e for e in it.gold})
    if events is not None:
        for doc_id, evs in events.items():
            if doc_id in docs:
                docs[doc_id].events.update({e.id: e for e in evs})
    return [docs[k] for k in sorted(docs)]


def score_items(model: Model, items: Sequence[SentenceItem], beam: BeamConfig, threads: int = 1):
    preds = predict_items(list(items), NeuralScorer(model), beam, threads)
    return evaluate(items_doc_events(items, preds), items_doc_events(items))


def build_model(items: Sequence[SentenceItem], config: ModelConfig, extra_items=(),
                embeddings=None) -> Model:
    """Label inventories from the corpora; word table from ``embeddings`` or random."""
    words, types, roles = set(), set(), set()
    for it in list(items) + list(extra_items):
        words.update(t.text for t in it.graph.sentence.tokens)
        types.update(m.type_label for m in it.graph.mentions.values())
        roles.update(e.role for e in it.graph.edges)
        roles.update(role for ev in it.gold for role, _ in ev.args)
    if embeddings is not None:
        return init_model(config, embeddings.vocab, label_vocab(types), label_vocab(roles),
                          embeddings.vectors)
    return init_model(config, word_vocab(sorted(words)), label_vocab(types), label_vocab(roles))


def train(train_items: Sequence[SentenceItem], dev_items: Sequence[SentenceItem],
          config: TrainConfig, model: Model,
          on_epoch: Optional[Callable[[dict], None]] = None) -> tuple[Model, TrainReport]:
    """Train with early updates; keep the parameters of the best dev-F1 epoch."""
    triggers = training_triggers(train_items)
    if not triggers:
        raise ConfigError("training corpus has no triggers")
    if model.config.dropout != config.dropout:
        model = Model(ModelConfig(**{**asdict(model.config), "dropout": config.dropout}),
                      model.words, model.types, model.roles, model.params, model.version)
    rng = np.random.default_rng(config.seed)
    opt = AMSGrad(lr=config.learning_rate, weight_decay=config.weight_decay)
    stopper = EarlyStopping(config.patience)
    report = TrainReport()
    best = model.copy()
    t_start = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(triggers))
        total, early = 0.0, 0
        for b in range(0, len(order), config.batch_size):
            batch = [triggers[i] for i in order[b:b + config.batch_size]]
            loss, outcomes = train_step_early_update(batch, model, train_items, config, opt, rng)
            total += float(loss)
            early += sum(o.early_update for o in outcomes)
        rep = score_items(model, dev_items, config.beam)
        row = {"epoch": epoch, "loss": total, "early_updates": early,
               "dev_precision": rep.overall.precision, "dev_recall": rep.overall.recall,
               "dev_f1": rep.overall.f1, "seconds": time.perf_counter() - t0}
        report.epochs.append(row)
        log.info("epoch %d loss %.4f dev F1 %.4f early updates %d", epoch, total, rep.overall.f1, early)
        if on_epoch is not None:
            on_epoch(row)
        improved = rep.overall.f1 > stopper.best
        stop = stopper.update(epoch, rep.overall.f1)
        if improved:
            best = model.copy()
        if stop:
            break
    report.best_epoch = stopper.best_epoch
    report.best_f1 = float(stopper.best)
    report.wall_time = time.perf_counter() - t_start
    return best, report
