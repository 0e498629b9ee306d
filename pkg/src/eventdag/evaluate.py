"""Event matching, category-aware precision/recall/F1 and significance testing."""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, StructureError
from .graph import Event, EventRef, Mention
from .search import BeamConfig, ConstantScorer, Scorer, SearchStats

CATEGORIES = ("nested", "overlapping", "flat")


@dataclass
class DocEvents:
    """Events of one document together with the mentions they refer to."""

    doc_id: str
    mentions: Mapping[str, Mention]
    events: Mapping[str, Event]

    @classmethod
    def of(cls, doc, events: Optional[Iterable[Event]] = None) -> "DocEvents":
        evs = doc.events.values() if events is None else events
        return cls(doc.id, doc.mentions, {e.id: e for e in evs})


def event_signatures(doc: DocEvents) -> dict[str, tuple]:
    """Id-free structural signature of every event.

    Triggers and entities are identified by (type, span); event arguments by
    their own signature, recursively.
    """
    sigs: dict[str, tuple] = {}

    def mention_sig(mid):
        m = doc.mentions.get(mid)
        if m is None:
            raise StructureError(f"{doc.doc_id}: reference to missing mention {mid}")
        return (m.type_label, m.start, m.end)

    def sig(eid, stack=()):
        if eid in sigs:
            return sigs[eid]
        ev = doc.events.get(eid)
        if ev is None:
            raise StructureError(f"{doc.doc_id}: reference to missing event {eid}")
        if eid in stack:
            raise StructureError(f"{doc.doc_id}: event reference cycle through {eid}")
        args = []
        for role, t in ev.args:
            if isinstance(t, EventRef):
                args.append((role, ("event", sig(t.event_id, stack + (eid,)))))
            else:
                args.append((role, ("entity", mention_sig(t.mention_id))))
        s = (mention_sig(ev.trigger_id), tuple(sorted(args)))
        sigs[eid] = s
        return s

    for eid in doc.events:
        sig(eid)
    return sigs


def _spans_close(a, b, slack):
    return a[0] == b[0] and abs(a[1] - b[1]) <= slack and abs(a[2] - b[2]) <= slack


def _sig_equal(a, b, slack):
    if not _spans_close(a[0], b[0], slack) or len(a[1]) != len(b[1]):
        return False
    unused = list(b[1])
    for role, (kind, val) in a[1]:
        for j, (r2, (k2, v2)) in enumerate(unused):
            if role != r2 or kind != k2:
                continue
            ok = _spans_close(val, v2, slack) if kind == "entity" else _sig_equal(val, v2, slack)
            if ok:
                del unused[j]
                break
        else:
            return False
    return True


def match_events(pred: DocEvents, gold: DocEvents, slack: Optional[int] = None,
                 pred_ids: Optional[Iterable[str]] = None,
                 gold_ids: Optional[Iterable[str]] = None) -> list[tuple[str, str]]:
    """Greedy one-to-one matching under recursive structural equality.

    With ``slack`` set, mention spans may differ by that many characters at
    either end (approximate mode).  ``pred_ids`` / ``gold_ids`` restrict the
    events that take part while signatures still resolve over whole documents.
    """
    ps, gs = event_signatures(pred), event_signatures(gold)
    p_list = sorted(ps if pred_ids is None else pred_ids)
    g_list = sorted(gs if gold_ids is None else gold_ids)
    pairs = []
    if slack is None:
        pool: dict[tuple, list[str]] = {}
        for gid in g_list:
            pool.setdefault(gs[gid], []).append(gid)
        for pid in p_list:
            bucket = pool.get(ps[pid])
            if bucket:
                pairs.append((pid, bucket.pop(0)))
        return pairs
    free = list(g_list)
    for pid in p_list:
        for j, gid in enumerate(free):
            if _sig_equal(ps[pid], gs[gid], slack):
                pairs.append((pid, gid))
                del free[j]
                break
    return pairs


@dataclass(frozen=True)
class Categories:
    nested: bool
    overlapping: bool
    flat: bool

    def has(self, name: str) -> bool:
        return getattr(self, name)


def categorize_events(universe: DocEvents) -> dict[str, Categories]:
    sigs = event_signatures(universe)
    targets: dict[str, set] = {}
    holders: Counter = Counter()
    for eid, ev in universe.events.items():
        ts = {val for _, val in sigs[eid][1]}
        targets[eid] = ts
        holders.update(ts)
    out = {}
    for eid, ev in universe.events.items():
        nested = ev.is_nested
        overlapping = any(holders[t] > 1 for t in targets[eid])
        out[eid] = Categories(nested, overlapping, not nested)
    return out


def categorize_event(event: Event, universe: DocEvents) -> Categories:
    if event.id not in universe.events:
        raise StructureError(f"event {event.id} is not part of the universe")
    return categorize_events(universe)[event.id]


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    matched_pred: int
    n_pred: int
    matched_gold: int
    n_gold: int


def _prf(mp: int, npred: int, mg: int, ngold: int) -> PRF:
    if npred == 0 and ngold == 0:
        return PRF(1.0, 1.0, 1.0, 0, 0, 0, 0)
    p = mp / npred if npred else 0.0
    r = mg / ngold if ngold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f, mp, npred, mg, ngold)


@dataclass
class EvalReport:
    overall: PRF
    categories: dict[str, PRF]
    gold_shares: dict[str, float]
    pred_shares: dict[str, float]
    empty: bool = False
    profile: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {"overall": asdict(self.overall),
             "categories": {k: asdict(v) for k, v in self.categories.items()},
             "gold_shares": self.gold_shares, "pred_shares": self.pred_shares,
             "empty": self.empty}
        if self.profile is not None:
            d["profile"] = self.profile
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self, categories: bool = True) -> str:
        cols = (["Nested", "Overlapping", "Flat"] if categories else []) + ["Overall"]
        prfs = ([self.categories[c] for c in CATEGORIES] if categories else []) + [self.overall]
        lines = ["".join([f"{'':<10}"] + [f"{c:>13}" for c in cols])]
        for label, attr in (("P (%)", "precision"), ("R (%)", "recall"), ("F1 (%)", "f1")):
            lines.append("".join([f"{label:<10}"] + [f"{100 * getattr(x, attr):>13.2f}" for x in prfs]))
        o = self.overall
        lines.append(f"gold={o.n_gold} predicted={o.n_pred} matched={o.matched_pred}")
        if categories:
            shares = " ".join(f"{c}={100 * self.gold_shares[c]:.2f}%" for c in CATEGORIES)
            lines.append(f"gold shares: {shares}")
        if self.empty:
            lines.append("note: empty gold and prediction sets; metrics set to 1.0 by convention")
        return "\n".join(lines)


def _align(pred: Sequence[DocEvents], gold: Sequence[DocEvents]):
    p = {d.doc_id: d for d in pred}
    g = {d.doc_id: d for d in gold}
    for doc_id in sorted(set(p) | set(g)):
        gd = g.get(doc_id)
        pd = p.get(doc_id)
        mentions = (gd or pd).mentions
        yield (pd or DocEvents(doc_id, mentions, {}), gd or DocEvents(doc_id, mentions, {}))


def doc_counts(pred: DocEvents, gold: DocEvents, slack: Optional[int] = None) -> dict:
    """Matched / total counts overall and per category for one document."""
    pc, gc = categorize_events(pred), categorize_events(gold)
    out = {"overall": (len(match_events(pred, gold, slack)), len(pred.events),
                       len(gold.events))}
    for c in CATEGORIES:
        p_ids = [e for e, f in pc.items() if f.has(c)]
        g_ids = [e for e, f in gc.items() if f.has(c)]
        mp = len(match_events(pred, gold, slack, pred_ids=p_ids))
        mg = len(match_events(pred, gold, slack, gold_ids=g_ids))
        out[c] = (mp, len(p_ids), mg, len(g_ids))
    return out


def evaluate(pred: Sequence[DocEvents], gold: Sequence[DocEvents],
             slack: Optional[int] = None) -> EvalReport:
    """Overall and per-category scores.

    Category precision compares predicted events of the category with all gold
    events; category recall compares gold events of the category with all
    predictions.
    """
    tot = {"overall": [0, 0, 0]}
    for c in CATEGORIES:
        tot[c] = [0, 0, 0, 0]
    for pd, gd in _align(pred, gold):
        counts = doc_counts(pd, gd, slack)
        for k, v in counts.items():
            tot[k] = [a + b for a, b in zip(tot[k], v)]
    m, npred, ngold = tot["overall"]
    overall = _prf(m, npred, m, ngold)
    cats = {c: _prf(*tot[c]) for c in CATEGORIES}
    gold_shares = {c: (tot[c][3] / ngold if ngold else 0.0) for c in CATEGORIES}
    pred_shares = {c: (tot[c][1] / npred if npred else 0.0) for c in CATEGORIES}
    return EvalReport(overall, cats, gold_shares, pred_shares, empty=(npred == 0 and ngold == 0))


def category_shares(docs: Sequence[DocEvents]) -> dict[str, float]:
    counts = Counter()
    total = 0
    for d in docs:
        for f in categorize_events(d).values():
            total += 1
            for c in CATEGORIES:
                counts[c] += f.has(c)
    return {c: (counts[c] / total if total else 0.0) for c in CATEGORIES}


@dataclass
class SignificanceResult:
    observed_diff: float
    shuffles: int
    p_value: float
    seed: int
    f1_a: float
    f1_b: float


def _f1(m, npred, ngold):
    den = npred + ngold
    return np.where(den > 0, 2.0 * m / np.maximum(den, 1), 1.0)


def approximate_randomization(pred_a: Sequence[DocEvents], pred_b: Sequence[DocEvents],
                              gold: Sequence[DocEvents], shuffles: int = 1024,
                              seed: int = 0, slack: Optional[int] = None) -> SignificanceResult:
    """Two-sided paired test on overall F1, swapping whole documents."""
    if shuffles < 1:
        raise ConfigError("shuffles must be >= 1")
    ids_a = sorted(d.doc_id for d in pred_a)
    ids_b = sorted(d.doc_id for d in pred_b)
    if ids_a != ids_b:
        raise ConfigError("systems to compare cover different document sets")
    a = {d.doc_id: d for d in pred_a}
    b = {d.doc_id: d for d in pred_b}
    g = {d.doc_id: d for d in gold}
    ca, cb = [], []
    for doc_id in ids_a:
        gd = g.get(doc_id) or DocEvents(doc_id, a[doc_id].mentions, {})
        ca.append((len(match_events(a[doc_id], gd, slack)), len(a[doc_id].events), len(gd.events)))
        cb.append((len(match_events(b[doc_id], gd, slack)), len(b[doc_id].events), len(gd.events)))
    ca = np.array(ca, dtype=float).reshape(-1, 3)
    cb = np.array(cb, dtype=float).reshape(-1, 3)
    f_a = float(_f1(*ca.sum(axis=0)))
    f_b = float(_f1(*cb.sum(axis=0)))
    observed = f_a - f_b
    rng = np.random.default_rng(seed)
    swap = rng.random((shuffles, len(ids_a))) < 0.5
    ta = np.where(swap[:, :, None], cb[None], ca[None]).sum(axis=1)
    tb = np.where(swap[:, :, None], ca[None], cb[None]).sum(axis=1)
    diffs = _f1(ta[:, 0], ta[:, 1], ta[:, 2]) - _f1(tb[:, 0], tb[:, 1], tb[:, 2])
    hits = int(np.sum(np.abs(diffs) >= abs(observed) - 1e-12))
    return SignificanceResult(observed, shuffles, (hits + 1) / (shuffles + 1), seed, f_a, f_b)


@dataclass
class ProfileReport:
    scorer_calls: int
    wall_time: float
    triggers: int
    mean_calls_per_trigger: float

    def to_text(self) -> str:
        return (f"{'Number of Classifications':<28}{'Running Time (s)':>18}\n"
                f"{self.scorer_calls:<28,d}{self.wall_time:>18.2f}\n"
                f"triggers={self.triggers} mean calls/trigger={self.mean_calls_per_trigger:.2f}")


def profile_run(scorer: Scorer, run: Callable[[SearchStats], object]):
    """Call ``run(stats)`` with a freshly reset scorer counter.

    Returns ``(run result, ProfileReport)``.
    """
    scorer.reset_calls()
    stats = SearchStats()
    t0 = time.perf_counter()
    result = run(stats)
    dt = time.perf_counter() - t0
    mean = scorer.calls / stats.triggers if stats.triggers else 0.0
    return result, ProfileReport(scorer.calls, dt, stats.triggers, mean)


@dataclass
class UpperBound:
    recall: float
    matched: int
    gold: int
    partial: bool


def upper_bound_recall(docs, relations: Optional[Mapping] = None, config: Optional[BeamConfig] = None,
                       scorer: Optional[Scorer] = None, method: str = "derive") -> UpperBound:
    """Recall reachable from the given relations: threshold 0, nothing pruned.

    ``method="derive"`` counts gold events whose relations and sub-events are
    all present, which is what an exhaustive threshold-0 search recovers
    without enumerating every subset.  ``method="search"`` runs that search
    (exponential in the number of arguments; use on small inputs).
    """
    from .pipeline import corpus_graphs, predict_documents
    from .trainer import derive_gold_action_sequences

    if method == "derive":
        gold = matched = 0
        for it in corpus_graphs(docs, relations, use_gold=False):
            gold += len(it.gold)
            matched += derive_gold_action_sequences(it.graph, it.gold).n_derivable
        return UpperBound(matched / gold if gold else 1.0, matched, gold, False)
    if method != "search":
        raise ConfigError(f"unknown upper-bound method {method!r}")
    base = config or BeamConfig()
    cfg = BeamConfig(k=base.k, threshold=0.0, strict_stop=base.strict_stop,
                     exhaustive=True, exhaustive_cap=base.exhaustive_cap)
    stats = SearchStats()
    preds = predict_documents(docs, relations, scorer or ConstantScorer(0.5), cfg, stats=stats)
    report = evaluate([DocEvents.of(d, preds[d.id]) for d in docs], [DocEvents.of(d) for d in docs])
    return UpperBound(report.overall.recall, report.overall.matched_gold, report.overall.n_gold,
                      stats.capped_triggers > 0)
