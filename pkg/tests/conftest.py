import numpy as np
import pytest

from eventdag.corpus.standoff import Document, make_sentences
from eventdag.graph import ENTITY, TRIGGER, EntityRef, Event, EventRef, Mention, Relation
from eventdag.scorer.model import ModelConfig, init_model, label_vocab, word_vocab

# Acceptance verdict lines, keyed by criterion number.
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


# "Bcl-2/VEGF induction of tumor angiogenesis": one angiogenesis event (E1)
# nested under two overlapping induction events (E2, E3).
ANGIO_TEXT = "Levels of Bcl-2/VEGF induction of tumor angiogenesis ."


def angio_document(two_triggers: bool = False) -> Document:
    text = ANGIO_TEXT
    sents = make_sentences("angio", text)
    sid = sents[0].id
    ms = [
        Mention("T1", ENTITY, "Gene_or_gene_product", 10, 15, sid, "Bcl-2"),
        Mention("T2", ENTITY, "Gene_or_gene_product", 16, 20, sid, "VEGF"),
        Mention("T3", ENTITY, "Cancer", 34, 39, sid, "tumor"),
        Mention("T4", TRIGGER, "Positive_regulation", 21, 30, sid, "induction"),
        Mention("T5", TRIGGER, "Blood_vessel_development", 40, 52, sid, "angiogenesis"),
    ]
    second = "T4"
    if two_triggers:
        ms.append(Mention("T6", TRIGGER, "Positive_regulation", 21, 30, sid, "induction"))
        second = "T6"
    events = {
        "E1": Event("E1", "T5", (("Theme", EntityRef("T3")),)),
        "E2": Event("E2", "T4", (("Theme", EventRef("E1")), ("Cause", EntityRef("T1")))),
        "E3": Event("E3", second, (("Theme", EventRef("E1")), ("Cause", EntityRef("T2")))),
    }
    return Document("angio", text, sents, {m.id: m for m in ms}, events, True)


def angio_relations():
    return {Relation("T5", "Theme", "T3"), Relation("T4", "Theme", "T5"),
            Relation("T4", "Cause", "T1"), Relation("T4", "Cause", "T2")}


@pytest.fixture
def angio():
    return angio_document()


def small_model(items=(), dropout=0.0, dtype="float64", seed=0, words=None, types=None, roles=None):
    """A tiny model whose inventories cover ``items`` (sentence items)."""
    words = set(words or ())
    types = set(types or ())
    roles = set(roles or ())
    for it in items:
        words.update(t.text for t in it.graph.sentence.tokens)
        types.update(m.type_label for m in it.graph.mentions.values())
        roles.update(e.role for e in it.graph.edges)
    cfg = ModelConfig(word_dim=6, lstm_dim=8, role_dim=3, type_dim=4, hidden_dim=6,
                      dropout=dropout, dtype=dtype, seed=seed)
    return init_model(cfg, word_vocab(sorted(words)), label_vocab(types), label_vocab(roles))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
