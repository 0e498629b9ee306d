"""Command-line entry point: train, predict, evaluate, oracle, synth."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config, with_overrides
from .corpus.embeddings import load_word_embeddings
from .corpus.relations import read_relations_file
from .corpus.standoff import read_standoff, write_standoff
from .corpus.synth import SynthSpec, generate_synthetic_corpus, load_synth_spec, write_synthetic_corpus
from .errors import ConfigError, EventDagError
from .evaluate import (DocEvents, approximate_randomization, evaluate, profile_run,
                       upper_bound_recall)
from .pipeline import corpus_graphs, predict_documents
from .scorer.model import load_model, save_model
from .scorer.network import NeuralScorer
from .trainer import build_model, derive_gold_action_sequences, replay_events, train

log = logging.getLogger("eventdag")


def _relations(path, docs):
    if path is None:
        return {}
    rels, rejects = read_relations_file(path, docs)
    for lineno, rec, reason in rejects:
        log.warning("%s:%d: relation rejected (%s): %s", path, lineno, reason, rec)
    return rels


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg = with_overrides(cfg, beam_size=getattr(args, "beam", None),
                         action_score_threshold=getattr(args, "threshold", None),
                         strict_stop=True if getattr(args, "strict_stop", False) else None,
                         threads=getattr(args, "threads", None),
                         seed=getattr(args, "seed", None),
                         max_epochs=getattr(args, "max_epochs", None))
    log.info("resolved config:\n%s", cfg.to_text())
    return cfg


def _require_gold(docs, where):
    if not docs:
        raise ConfigError(f"no documents found in {where}")
    missing = [d.id for d in docs if not d.has_gold]
    if missing:
        raise ConfigError(f"gold .a2 missing for {len(missing)} documents in {where} (first: {missing[0]})")


def cmd_train(args) -> int:
    cfg = _run_config(args)
    docs = read_standoff(args.corpus)
    _require_gold(docs, args.corpus)
    rels = _relations(args.relations, docs)
    train_items = corpus_graphs(docs, rels, use_gold=True)
    if args.dev:
        dev_docs = read_standoff(args.dev)
        _require_gold(dev_docs, args.dev)
        dev_items = corpus_graphs(dev_docs, _relations(args.dev_relations, dev_docs), use_gold=False)
    else:
        # Without a dev corpus, early stopping watches the training corpus itself.
        log.warning("no --dev corpus; early stopping uses the training corpus")
        dev_items = corpus_graphs(docs, rels, use_gold=not rels)
    embeddings = None
    if args.embeddings:
        vocab = {t.text for it in train_items + dev_items for t in it.graph.sentence.tokens}
        embeddings = load_word_embeddings(args.embeddings, cfg.word_embedding, cfg.seed,
                                          restrict=vocab)
    model = build_model(train_items, cfg.model_config(), dev_items, embeddings)
    model, report = train(train_items, dev_items, cfg.train_config(), model)
    save_model(model, args.out)
    report_path = Path(str(args.out) + ".report.json")
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"best epoch {report.best_epoch} dev F1 {100 * report.best_f1:.2f}")
    print(f"model written to {args.out}; report to {report_path}")
    return 0


def cmd_predict(args) -> int:
    cfg = _run_config(args)
    model = load_model(args.model)
    docs = read_standoff(args.corpus)
    if args.relations is None:
        log.warning("no --relations file; relation graphs will be empty")
    rels = _relations(args.relations, docs)
    scorer = NeuralScorer(model)
    preds, profile = profile_run(
        scorer, lambda st: predict_documents(docs, rels, scorer, cfg.beam_config(), cfg.threads, st))
    write_standoff(docs, args.out, preds)
    Path(args.out, "profile.json").write_text(
        json.dumps(profile.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(profile.to_text())
    return 0


def _doc_events(directory):
    return [DocEvents.of(d) for d in read_standoff(directory)]


def cmd_evaluate(args) -> int:
    gold = _doc_events(args.gold)
    pred = _doc_events(args.pred)
    report = evaluate(pred, gold, args.slack)
    print(report.to_json() if args.json else report.to_text(categories=args.categories))
    if args.sig_against:
        other = _doc_events(args.sig_against)
        sig = approximate_randomization(pred, other, gold, args.shuffles, args.seed, args.slack)
        print(f"approximate randomization: F1 {100 * sig.f1_a:.2f} vs {100 * sig.f1_b:.2f}, "
              f"diff {100 * sig.observed_diff:+.2f}, p = {sig.p_value:.4f} "
              f"(R={sig.shuffles}, seed={sig.seed})")
    return 0


def cmd_oracle(args) -> int:
    docs = read_standoff(args.corpus)
    _require_gold(docs, args.corpus)
    rels = _relations(args.relations, docs) if args.relations else None
    # Self-decomposed relations when no predicted file is given.
    items = corpus_graphs(docs, rels, use_gold=rels is None)
    n_gold = n_ok = 0
    replayed = {}
    for it in items:
        d = derive_gold_action_sequences(it.graph, it.gold)
        n_gold += len(it.gold)
        n_ok += d.n_derivable
        replayed.setdefault(it.doc_id, []).extend(replay_events(it.graph, d))
        for eid, reason in d.underivable:
            print(f"underivable {it.doc_id} {eid}: {reason}")
    derivable_gold = []
    for doc in docs:
        ids = {e.id for e in replayed.get(doc.id, [])}
        derivable_gold.append(DocEvents.of(doc, [e for e in doc.events.values() if e.id in ids]))
    rep = evaluate([DocEvents.of(doc, replayed.get(doc.id, [])) for doc in docs], derivable_gold)
    ub = upper_bound_recall(docs, rels if rels is not None else _self_relations(docs))
    share = n_ok / n_gold if n_gold else 1.0
    print(f"derivable gold events: {n_ok}/{n_gold} ({100 * share:.2f}%)")
    print(f"replay F1 on derivable events: {100 * rep.overall.f1:.2f}")
    print(f"upper-bound recall: {100 * ub.recall:.2f}% ({ub.matched}/{ub.gold})"
          + (" [partial: exhaustive search capped]" if ub.partial else ""))
    return 0


def _self_relations(docs):
    from .graph import decompose_events
    return {d.id: decompose_events(d.events.values()) for d in docs}


def cmd_synth(args) -> int:
    spec = load_synth_spec(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = SynthSpec(**{**spec.__dict__, "seed": args.seed})
    corpus = generate_synthetic_corpus(spec)
    write_synthetic_corpus(corpus, args.out)
    print(corpus.stats.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eventdag", description="Nested event detection over relation graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a scorer")
    t.add_argument("--corpus", required=True, help="standoff directory with gold .a2")
    t.add_argument("--relations", help="predicted relations (JSON lines)")
    t.add_argument("--dev", help="development standoff directory")
    t.add_argument("--dev-relations", help="predicted relations for the dev corpus")
    t.add_argument("--embeddings", help="pretrained word vectors")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="model file to write")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="detect events")
    pr.add_argument("--model", required=True)
    pr.add_argument("--corpus", required=True)
    pr.add_argument("--relations")
    pr.add_argument("--out", required=True, help="output directory for .a2 files")
    pr.add_argument("--config")
    pr.add_argument("--beam", type=int)
    pr.add_argument("--threshold", type=float)
    pr.add_argument("--strict-stop", action="store_true")
    pr.add_argument("--threads", type=int)
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="score predictions against gold")
    ev.add_argument("--gold", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--categories", action="store_true", help="nested/overlapping/flat table")
    ev.add_argument("--slack", type=int, help="approximate span matching (characters)")
    ev.add_argument("--json", action="store_true")
    ev.add_argument("--sig-against", help="second prediction directory for significance")
    ev.add_argument("--shuffles", type=int, default=1024)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="gold derivability and upper-bound recall")
    o.add_argument("--corpus", required=True)
    o.add_argument("--relations")
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--spec")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except EventDagError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error code={exc.code} message={msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error code=IO_ERROR message={exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
