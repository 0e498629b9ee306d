"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary,
so ``pytest tests/test_acceptance.py`` ends with a ten-line verdict.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from eventdag.config import RunConfig, with_overrides
from eventdag.corpus.standoff import read_standoff, write_standoff
from eventdag.corpus.synth import SynthSpec, generate_synthetic_corpus
from eventdag.evaluate import DocEvents, approximate_randomization, categorize_events, evaluate
from eventdag.graph import Relation
from eventdag.pipeline import corpus_graphs, document_graphs, predict_documents
from eventdag.scorer.model import load_model, save_model
from eventdag.scorer.network import NeuralScorer
from eventdag.search import (ArgumentEntry, BeamConfig, ConstantScorer, FunctionScorer,
                             detect_events_for_trigger, enumerate_candidates_bruteforce,
                             search_trigger)
from eventdag.trainer import (batch_loss, build_model, derive_gold_action_sequences,
                              replay_events, train, training_triggers)

from conftest import ACCEPTANCE, angio_document, angio_relations, small_model

# The seeded training corpus for the convergence criterion.
TRAIN_SPEC = SynthSpec(n_sentences=100, seed=0)
DEV_SPEC = SynthSpec(n_sentences=100, seed=100)


@contextmanager
def criterion(n, title):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException:
        ACCEPTANCE[n] = f"criterion {n:2d} FAIL  {title} {_fmt(detail, start)}"
        raise
    ACCEPTANCE[n] = f"criterion {n:2d} PASS  {title} {_fmt(detail, start)}"


def _fmt(detail, start):
    parts = [f"{k}={v}" for k, v in detail.items()]
    parts.append(f"{time.perf_counter() - start:.1f}s")
    return "(" + ", ".join(parts) + ")"


def _entries(n):
    return tuple(ArgumentEntry(Relation("T0", "Theme", f"A{i}"), 10 * (i + 1)) for i in range(n))


def test_c01_oracle_equivalence():
    with criterion(1, "exhaustive beam equals brute-force enumeration") as d:
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        for _ in range(1000):
            n = int(rng.integers(0, 6))
            table = {}

            def fn(state, action):
                key = state.history + (action,)
                if key not in table:
                    table[key] = float(rng.uniform(0.001, 0.999))
                return table[key]

            es = _entries(n)
            cands = detect_events_for_trigger("T0", es, BeamConfig(k=3 * 2 ** n, threshold=0.0),
                                              FunctionScorer(fn).trigger("T0", es))
            got = [frozenset(c.included) for c in cands]
            assert len(got) == len(set(got)) == 2 ** n
            assert set(got) == set(enumerate_candidates_bruteforce("T0", es))
        elapsed = time.perf_counter() - start
        d["triggers"] = 1000
        assert elapsed < 60


def test_c02_gold_replay_round_trip():
    with criterion(2, "gold replay reconstructs gold events") as d:
        for seed in range(5):
            corpus = generate_synthetic_corpus(SynthSpec(n_sentences=100, overlap_rate=0.4, seed=seed))
            assert corpus.stats.n_sentences >= 100 and corpus.stats.max_depth <= 3
            items = corpus_graphs(corpus.documents, corpus.relations, use_gold=True)
            preds = {}
            for it in items:
                der = derive_gold_action_sequences(it.graph, it.gold)
                assert not der.underivable
                preds.setdefault(it.doc_id, []).extend(replay_events(it.graph, der))
            rep = evaluate([DocEvents.of(doc, preds.get(doc.id, [])) for doc in corpus.documents],
                           [DocEvents.of(doc) for doc in corpus.documents])
            assert rep.overall.f1 == 1.0
            d[f"seed{seed}"] = f"{rep.overall.matched_gold}ev/ovl{corpus.stats.overlapping:.2f}"


def _gradient_check(model, items, batch, k, seed, rng, per_group=12, eps=1e-4):
    """Worst relative error per parameter group, plus the number of skipped kinks.

    The beam loss is piecewise smooth: a coordinate whose perturbation changes
    the kept histories straddles a ranking flip and has no derivative there.
    """
    def loss(with_grads=False):
        value, grads, outcomes = batch_loss(model, items, batch, k, np.random.default_rng(seed), with_grads)
        return value, grads, tuple(o.trace for o in outcomes)

    _, grads, path = loss(True)
    worst, kinks, checked = {}, 0, 0
    for name, w in model.params.items():
        g = grads[name]
        nz = np.argwhere(g != 0)
        picks = [tuple(x) for x in nz[rng.permutation(len(nz))[:per_group]]]
        picks += [tuple(int(rng.integers(0, s)) for s in w.shape) for _ in range(per_group // 3)]
        err = 0.0
        for ix in picks:
            checked += 1
            old = w[ix]
            w[ix] = old + eps
            lp, _, path_p = loss()
            w[ix] = old - eps
            lm, _, path_m = loss()
            w[ix] = old
            if path_p != path or path_m != path:
                kinks += 1
                continue
            num = (lp - lm) / (2 * eps)
            err = max(err, abs(g[ix] - num) / max(abs(g[ix]), abs(num), 1e-7))
        worst[name] = err
    return worst, kinks, checked


def test_c03_gradient_correctness():
    with criterion(3, "analytic gradients match finite differences") as d:
        rng = np.random.default_rng(7)
        worst_all = 0.0
        # Two-level nesting: induction reuses the angiogenesis representation.
        angio_items = document_graphs(angio_document(), angio_relations(), use_gold=True)
        model = small_model(angio_items, dropout=0.3, seed=3)
        worst, kinks, checked = _gradient_check(model, angio_items, [(0, "T4"), (0, "T5")], 8, 1, rng)
        worst_all = max(worst_all, max(worst.values()))
        assert kinks == 0
        # A parent-only batch still reaches the child's argument type row.
        _, parent_only, _ = batch_loss(model, angio_items, [(0, "T4")], 8, np.random.default_rng(1))
        cancer = model.types.index["Cancer"]
        assert np.any(parent_only["type"][cancer] != 0)
        configs = 1
        for c in range(10):
            corpus = generate_synthetic_corpus(SynthSpec(n_sentences=4, sentences_per_doc=2, seed=50 + c))
            items = corpus_graphs(corpus.documents, corpus.relations, use_gold=True)
            dropout = [0.0, 0.3, 0.5][c % 3]
            model = small_model(items, dropout=dropout, seed=c)
            k = [1, 2, 4, 8][c % 4]
            worst, n, m = _gradient_check(model, items, training_triggers(items), k, c, rng)
            worst_all = max(worst_all, max(worst.values()))
            kinks += n
            checked += m
            configs += 1
        d["configs"] = configs
        d["max_rel_err"] = f"{worst_all:.1e}"
        d["skipped_kinks"] = f"{kinks}/{checked}"
        assert worst_all < 1e-3
        assert kinks <= 0.01 * checked


@pytest.fixture(scope="module")
def trained():
    # Patience as long as the budget: the criterion asks what 50 epochs reach.
    cfg = with_overrides(RunConfig(), max_epochs=50, early_stopping_patience=50)
    corpus = generate_synthetic_corpus(TRAIN_SPEC)
    tr = corpus_graphs(corpus.documents, corpus.relations, use_gold=True)
    dev = corpus_graphs(corpus.documents, corpus.relations, use_gold=False)
    model = build_model(tr, cfg.model_config(), dev)
    start = time.perf_counter()
    best, report = train(tr, dev, cfg.train_config(), model)
    return best, report, time.perf_counter() - start, corpus


def test_c04_training_convergence(trained):
    with criterion(4, "training-set F1 >= 0.95 within 50 epochs") as d:
        _, report, wall, _ = trained
        first = next((e["epoch"] for e in report.epochs if e["dev_f1"] >= 0.95), None)
        d["best_f1"] = f"{report.best_f1:.4f}"
        d["first_epoch>=0.95"] = first
        d["train_wall"] = f"{wall:.0f}s"
        assert report.best_f1 >= 0.95
        assert wall < 300


def test_c05_beam_monotonicity(trained):
    with criterion(5, "dev recall non-decreasing in k at threshold 0") as d:
        model = trained[0]
        dev = generate_synthetic_corpus(DEV_SPEC)
        gold = [DocEvents.of(doc) for doc in dev.documents]
        recalls = []
        for k in (1, 2, 4, 8):
            preds = predict_documents(dev.documents, dev.relations, NeuralScorer(model),
                                      BeamConfig(k=k, threshold=0.0))
            rep = evaluate([DocEvents.of(doc, preds[doc.id]) for doc in dev.documents], gold)
            recalls.append(rep.overall.recall)
        d["recall"] = "/".join(f"{r:.4f}" for r in recalls)
        assert all(a <= b for a, b in zip(recalls, recalls[1:]))


def test_c06_classification_counting():
    with criterion(6, "scorer-call counts match closed forms") as d:
        for n in range(11):
            es = _entries(n)
            ex = ConstantScorer(0.5)
            detect_events_for_trigger("T0", es, BeamConfig(k=1, threshold=0.0, exhaustive=True),
                                      ex.trigger("T0", es))
            assert ex.calls == 2 + 3 * (2 ** n - 1)
            greedy = ConstantScorer(0.5)
            search_trigger("T0", es, 1, greedy.trigger("T0", es))
            assert greedy.calls == 2 + 3 * n
        d["n"] = "0..10"


def test_c07_evaluator_fixture():
    with criterion(7, "angiogenesis fixture categories and recall") as d:
        doc = angio_document()
        cats = categorize_events(DocEvents.of(doc))
        assert {e for e, c in cats.items() if c.nested} == {"E2", "E3"}
        assert {e for e, c in cats.items() if c.overlapping} == {"E2", "E3"}
        assert {e for e, c in cats.items() if c.flat} == {"E1"}
        rep = evaluate([DocEvents.of(doc, [doc.events["E1"]])], [DocEvents.of(doc)])
        assert rep.overall.recall == 1 / 3
        assert rep.categories["flat"].recall == 1.0
        assert rep.categories["nested"].recall == 0.0
        d["overall_recall"] = f"{rep.overall.recall:.4f}"


def test_c08_significance():
    with criterion(8, "approximate randomization test") as d:
        corpus = generate_synthetic_corpus(SynthSpec(n_sentences=20, sentences_per_doc=1, seed=11))
        docs = corpus.documents
        assert len(docs) == 20
        gold = [DocEvents.of(doc) for doc in docs]
        empty = [DocEvents.of(doc, []) for doc in docs]
        same = approximate_randomization(gold, gold, gold, shuffles=1024, seed=0)
        assert same.p_value == 1.0
        r1 = approximate_randomization(gold, empty, gold, shuffles=1024, seed=0)
        r2 = approximate_randomization(gold, empty, gold, shuffles=1024, seed=0)
        assert r1 == r2
        assert r1.p_value < 0.01
        d["p_identical"] = same.p_value
        d["p_perfect_vs_empty"] = f"{r1.p_value:.4f}"


def _predict_bytes(model, docs, rels, out, threads):
    preds = predict_documents(docs, rels, NeuralScorer(model), BeamConfig(k=8, threshold=0.5), threads)
    write_standoff(docs, out, preds)
    files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    report = evaluate([DocEvents.of(doc, preds[doc.id]) for doc in docs], [DocEvents.of(doc) for doc in docs])
    return files, report.to_json()


def test_c09_determinism(trained, tmp_path):
    with criterion(9, "byte-identical predictions and reports") as d:
        model = trained[0]
        dev = generate_synthetic_corpus(DEV_SPEC)
        runs = [_predict_bytes(model, dev.documents, dev.relations, tmp_path / f"r{i}", t)
                for i, t in enumerate((1, 1, 2, 4))]
        assert all(r == runs[0] for r in runs[1:])
        d["runs"] = len(runs)
        d["threads"] = "1,1,2,4"


class _Tap:
    def __init__(self, inner, log):
        self.inner, self.log = inner, log

    def sentence(self, graph):
        return _Tap(self.inner.sentence(graph), self.log)

    def trigger(self, tid, entries):
        return _Tap(self.inner.trigger(tid, entries), self.log)

    def score(self, expansions):
        out = self.inner.score(expansions)
        self.log.append(np.asarray(out).tobytes())
        return out

    def event_representation(self, state):
        return self.inner.event_representation(state)


def test_c10_round_trips(trained, tmp_path):
    with criterion(10, "standoff and model round trips") as d:
        model, _, _, corpus = trained
        write_standoff(corpus.documents, tmp_path / "a")
        back = read_standoff(tmp_path / "a")
        by_id = {doc.id: doc for doc in corpus.documents}
        for doc in back:
            orig = by_id[doc.id]
            assert doc.text == orig.text
            assert doc.mentions == orig.mentions
            # Ids are renumbered children-first on write; structure must survive.
            assert len(doc.events) == len(orig.events)
            assert evaluate([DocEvents.of(doc)], [DocEvents.of(orig)]).overall.f1 == 1.0
        write_standoff(back, tmp_path / "b")
        for p in sorted((tmp_path / "a").iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
        save_model(model, tmp_path / "m.bin")
        loaded = load_model(tmp_path / "m.bin")
        logs = ([], [])
        for m, log in zip((model, loaded), logs):
            predict_documents(corpus.documents, corpus.relations, _Tap(NeuralScorer(m), log),
                              BeamConfig(k=8, threshold=0.0))
        assert logs[0] and logs[0] == logs[1]
        d["documents"] = len(back)
        d["score_batches"] = len(logs[0])
