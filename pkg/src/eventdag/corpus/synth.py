"""Deterministic synthetic corpora with nested and overlapping events.

Every pattern the generator emits can be reconstructed from the emitted
relations, and each one is separable by the scorer: flat expression-style
events take one Theme each, Binding takes all its Themes at once, and a
regulation takes one Theme plus an optional Cause.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..errors import ConfigError, ParseError
from ..graph import ENTITY, TRIGGER, EntityRef, Event, EventRef, Mention, Relation, decompose_events
from .standoff import Document, make_sentences

FLAT_TYPES = ("Gene_expression", "Phosphorylation", "Localization", "Binding")
REG_TYPES = ("Positive_regulation", "Negative_regulation", "Regulation")
ENTITY_TYPES = ("Protein", "Cell", "Simple_chemical")

TRIGGER_WORDS = {
    "Gene_expression": ("expression", "expressed", "expresses", "production"),
    "Phosphorylation": ("phosphorylation", "phosphorylated", "phosphorylates"),
    "Localization": ("localization", "translocation", "secretion"),
    "Binding": ("binding", "binds", "interaction", "complex"),
    "Positive_regulation": ("induction", "induces", "activates", "upregulation"),
    "Negative_regulation": ("inhibition", "inhibits", "suppresses", "blocks"),
    "Regulation": ("regulation", "regulates", "affects", "modulates"),
}
ENTITY_PREFIX = {"Protein": "prot", "Cell": "cell", "Simple_chemical": "chem"}


@dataclass
class SynthSpec:
    n_sentences: int = 100
    sentences_per_doc: int = 5
    vocab_size: int = 50
    n_entity_names: int = 30
    max_chains: int = 2
    max_depth: int = 3
    depth_weights: tuple = (0.5, 0.3, 0.2)
    overlap_rate: float = 0.4
    multi_theme_rate: float = 0.2
    cause_rate: float = 0.3
    location_rate: float = 0.3
    distractor_rate: float = 0.3
    drop_rate: float = 0.0
    max_events_per_sentence: int = 8
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_sentences", "sentences_per_doc", "vocab_size", "n_entity_names",
                     "max_chains", "max_depth", "max_events_per_sentence"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synthetic spec: {name} must be positive")
        for name in ("overlap_rate", "multi_theme_rate", "cause_rate", "location_rate",
                     "distractor_rate", "drop_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"synthetic spec: {name} must lie in [0, 1]")
        if len(self.depth_weights) != self.max_depth or any(w < 0 for w in self.depth_weights) \
                or sum(self.depth_weights) <= 0:
            raise ConfigError("synthetic spec: depth_weights needs max_depth non-negative weights")
        if self.overlap_rate > 0 and self.max_events_per_sentence < 2:
            raise ConfigError("synthetic spec: overlap needs at least 2 events per sentence")
        minimal = max(d for d, w in enumerate(self.depth_weights, start=1) if w > 0)
        if self.max_events_per_sentence < minimal:
            raise ConfigError("synthetic spec: max_events_per_sentence below the deepest chain")


def parse_synth_spec(text: str, path=None) -> SynthSpec:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name: f for f in fields(SynthSpec)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown synthetic spec key {key!r}")
        try:
            if key == "depth_weights":
                values[key] = tuple(float(v) for v in val.replace(",", " ").split())
            elif isinstance(getattr(SynthSpec, key), int):
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError:
            raise ParseError(f"bad value for {key}: {val!r}", path, lineno) from None
    spec = SynthSpec(**values)
    spec.validate()
    return spec


def load_synth_spec(path) -> SynthSpec:
    with open(path, encoding="utf-8") as f:
        return parse_synth_spec(f.read(), path)


@dataclass
class SynthStats:
    n_documents: int = 0
    n_sentences: int = 0
    n_events: int = 0
    nested: float = 0.0
    overlapping: float = 0.0
    flat: float = 0.0
    max_depth: int = 0
    dropped_relations: int = 0
    distractor_relations: int = 0

    def to_text(self) -> str:
        return (f"{self.n_documents} documents, {self.n_sentences} sentences, {self.n_events} events\n"
                f"nested {100 * self.nested:.2f}%  overlapping {100 * self.overlapping:.2f}%  "
                f"flat {100 * self.flat:.2f}%  (shares may sum above 100%)\n"
                f"max depth {self.max_depth}, distractor relations {self.distractor_relations}, "
                f"dropped relations {self.dropped_relations}")


@dataclass
class SynthCorpus:
    documents: list
    relations: dict        # doc id -> predicted relations (input to inference)
    decomposition: dict    # doc id -> relations decomposed from gold events
    stats: SynthStats = field(default_factory=SynthStats)

    @property
    def events(self) -> dict:
        return {d.id: list(d.events.values()) for d in self.documents}


class _SentenceBuilder:
    """Accumulates tokens, mentions and events for one sentence."""

    def __init__(self, rng: random.Random, spec: SynthSpec):
        self.rng = rng
        self.spec = spec
        self.tokens: list[str] = []
        self.mentions: list[tuple] = []   # (key, kind, type, token index)
        self.events: list[tuple] = []     # (key, trigger key, [(role, ("m"|"e", key))])
        self.extra: list[tuple] = []      # predicted-only (trigger key, role, mention key)
        self.depths: dict = {}
        self._n = 0

    def _key(self):
        self._n += 1
        return self._n

    def filler(self, lo=0, hi=2):
        for _ in range(self.rng.randint(lo, hi)):
            self.tokens.append(f"w{self.rng.randrange(self.spec.vocab_size)}")

    def mention(self, kind, type_label, word=None):
        key = self._key()
        if word is None:
            word = f"{ENTITY_PREFIX[type_label]}{self.rng.randrange(self.spec.n_entity_names)}"
        self.mentions.append((key, kind, type_label, len(self.tokens)))
        self.tokens.append(word)
        return key

    def trigger(self, type_label):
        return self.mention(TRIGGER, type_label, self.rng.choice(TRIGGER_WORDS[type_label]))

    def event(self, trigger, args, depth):
        key = self._key()
        self.events.append((key, trigger, args))
        self.depths[key] = depth
        return key


def _flat_chain(b: _SentenceBuilder, overlap: bool):
    """A flat trigger with its entity arguments; returns (event keys, theme keys)."""
    spec, rng = b.spec, b.rng
    ftype = rng.choice(FLAT_TYPES)
    trig = b.trigger(ftype)
    b.filler(0, 1)
    # A located event keeps a single Theme: two Themes sharing one location
    # would need a non-additive (XOR) decision.
    n_themes = 2 if ftype != "Localization" and rng.random() < spec.multi_theme_rate else 1
    themes = []
    for i in range(n_themes):
        themes.append(b.mention(ENTITY, "Protein"))
        if i + 1 < n_themes:
            b.tokens.append("and")
    cell = None
    if ftype == "Localization" and rng.random() < spec.location_rate:
        b.tokens.append("in")
        cell = b.mention(ENTITY, "Cell")
    if ftype == "Binding":
        events = [b.event(trig, [("Theme", ("m", t)) for t in themes], 1)]
    elif cell is not None:
        events = [b.event(trig, [("Theme", ("m", t)), ("AtLoc", ("m", cell))], 1) for t in themes]
    else:
        events = [b.event(trig, [("Theme", ("m", t))], 1) for t in themes]
    if overlap:
        # A second flat trigger describing the same protein.
        b.filler(0, 1)
        other = b.trigger(rng.choice(("Gene_expression", "Phosphorylation")))
        b.event(other, [("Theme", ("m", themes[0]))], 1)
    return events, themes


def _chain(b: _SentenceBuilder, depth: int, overlap_wanted):
    """A regulation chain of the given depth over a flat event."""
    rng, spec = b.rng, b.spec
    b.filler(0, 2)
    # Regulation triggers are laid out outermost first, ahead of the flat core.
    reg_layout = []
    for _ in range(depth - 1):
        cause = None
        if rng.random() < spec.cause_rate:
            cause = b.mention(ENTITY, "Protein")
        reg = b.trigger(rng.choice(REG_TYPES))
        b.filler(0, 1)
        reg_layout.append((reg, cause))
    flat_overlap = depth == 1 and overlap_wanted()
    children, themes = _flat_chain(b, flat_overlap)
    level = 1
    for reg, cause in reversed(reg_layout):
        level += 1
        parents = []
        for child in children:
            args = [("Theme", ("e", child))]
            if cause is not None and len(children) == 1:
                args.append(("Cause", ("m", cause)))
            parents.append(b.event(reg, args, level))
        if overlap_wanted():
            # A second regulation over the same sub-event.
            b.filler(0, 1)
            twin = b.trigger(rng.choice(REG_TYPES))
            for child in children:
                b.event(twin, [("Theme", ("e", child))], level)
        children = parents
    if rng.random() < spec.distractor_rate:
        b.filler(0, 1)
        chem = b.mention(ENTITY, "Simple_chemical")
        trig = rng.choice([m[0] for m in b.mentions if m[1] == TRIGGER])
        b.extra.append((trig, rng.choice(("Theme", "Cause")), chem))


def generate_synthetic_corpus(spec: Optional[SynthSpec] = None) -> SynthCorpus:
    """Build documents, gold events, predicted relations and realized statistics."""
    spec = spec or SynthSpec()
    spec.validate()
    rng = random.Random(spec.seed)
    depths = list(range(1, spec.max_depth + 1))
    counts = {"events": 0, "overlapping": 0}
    documents, relations, decomposition = [], {}, {}
    stats = SynthStats()

    n_docs = -(-spec.n_sentences // spec.sentences_per_doc)
    sentence_no = 0
    for d in range(n_docs):
        doc_id = f"synth{spec.seed}_{d:04d}"
        n_here = min(spec.sentences_per_doc, spec.n_sentences - sentence_no)
        sentence_no += n_here
        builders = []
        for _ in range(n_here):
            b = _SentenceBuilder(rng, spec)

            def overlap_wanted():
                done = counts["overlapping"] / counts["events"] if counts["events"] else 0.0
                return spec.overlap_rate > 0 and done < spec.overlap_rate

            base_events, base_overlap = counts["events"], counts["overlapping"]
            n_chains = rng.randint(1, spec.max_chains)
            c = attempts = 0
            while c < n_chains:
                depth = rng.choices(depths, weights=spec.depth_weights)[0]
                snapshot = (list(b.tokens), list(b.mentions), list(b.events), list(b.extra),
                            dict(b.depths), b._n)
                _chain(b, depth, overlap_wanted)
                if len(b.events) > spec.max_events_per_sentence:
                    b.tokens, b.mentions, b.events, b.extra, b.depths, b._n = snapshot
                    if c > 0:
                        break
                    # The first chain must fit; resample it.
                    attempts += 1
                    if attempts > 100:
                        raise ConfigError("synthetic spec: chains never fit max_events_per_sentence")
                    continue
                counts["events"] = base_events + len(b.events)
                counts["overlapping"] = base_overlap + _overlapping_in(b)
                c += 1
            b.tokens.append(".")
            builders.append(b)
        doc, rels, deco, dropped, distract = _assemble(doc_id, builders, spec, rng)
        documents.append(doc)
        relations[doc_id] = rels
        decomposition[doc_id] = deco
        stats.dropped_relations += dropped
        stats.distractor_relations += distract
        stats.max_depth = max([stats.max_depth] + [v for b in builders for v in b.depths.values()])

    from ..evaluate import DocEvents, category_shares
    shares = category_shares([DocEvents.of(doc) for doc in documents])
    stats.n_documents = len(documents)
    stats.n_sentences = spec.n_sentences
    stats.n_events = sum(len(doc.events) for doc in documents)
    stats.nested, stats.overlapping, stats.flat = shares["nested"], shares["overlapping"], shares["flat"]
    return SynthCorpus(documents, relations, decomposition, stats)


def _overlapping_in(b: _SentenceBuilder) -> int:
    """Events sharing an argument with another event of the same sentence."""
    holders: dict = {}
    for key, _, args in b.events:
        for _, target in set(args):
            holders.setdefault(target, set()).add(key)
    shared = set()
    for keys in holders.values():
        if len(keys) > 1:
            shared |= keys
    return len(shared)


def _assemble(doc_id: str, builders, spec: SynthSpec, rng: random.Random):
    lines, offsets = [], []
    pos = 0
    for b in builders:
        starts = []
        for tok in b.tokens:
            starts.append(pos)
            pos += len(tok) + 1
        lines.append(" ".join(b.tokens))
        offsets.append(starts)
    text = "\n".join(lines)
    sentences = make_sentences(doc_id, text)
    if len(sentences) != len(builders):
        raise AssertionError("synthetic sentence segmentation drifted")

    mentions: dict[str, Mention] = {}
    events: dict[str, Event] = {}
    extra: list[Relation] = []
    n_t = n_e = 0
    for b, sent, starts in zip(builders, sentences, offsets):
        mid = {}
        for key, kind, type_label, tok in sorted(b.mentions, key=lambda m: m[3]):
            n_t += 1
            start = starts[tok]
            end = start + len(b.tokens[tok])
            mid[key] = f"T{n_t}"
            mentions[f"T{n_t}"] = Mention(f"T{n_t}", kind, type_label, start, end, sent.id,
                                          text[start:end])
        eid = {}
        for key, _, _ in b.events:
            n_e += 1
            eid[key] = f"E{n_e}"
        for key, trig, args in b.events:
            targets = tuple((role, EventRef(eid[k]) if kind == "e" else EntityRef(mid[k]))
                            for role, (kind, k) in args)
            events[eid[key]] = Event(eid[key], mid[trig], targets)
        for trig, role, arg in b.extra:
            extra.append(Relation(mid[trig], role, mid[arg]))
    doc = Document(doc_id, text, sentences, mentions, events, True)
    deco = decompose_events(events.values())
    kept = set()
    dropped = 0
    for rel in sorted(deco, key=lambda r: r.key):
        if spec.drop_rate and rng.random() < spec.drop_rate:
            dropped += 1
            continue
        kept.add(Relation(rel.trigger_id, rel.role, rel.arg_id))
    distract = 0
    for rel in extra:
        if rel.key not in {r.key for r in deco}:
            distract += 1
        kept.add(rel)
    return doc, kept, deco, dropped, distract


def write_synthetic_corpus(corpus: SynthCorpus, directory) -> None:
    """Standoff files plus ``relations.jsonl`` holding the predicted relations."""
    from .relations import write_relations_file
    from .standoff import write_standoff
    directory = Path(directory)
    write_standoff(corpus.documents, directory)
    write_relations_file(directory / "relations.jsonl", corpus.relations)
