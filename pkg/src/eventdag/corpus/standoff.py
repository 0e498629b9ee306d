"""BioNLP shared-task standoff files (.txt / .a1 / .a2)."""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from ..errors import IntegrityError, ParseError, StructureError
from ..graph import ENTITY, TRIGGER, EntityRef, Event, EventRef, Mention, Sentence, Token

log = logging.getLogger(__name__)

_PUNCT = set(string.punctuation)
_SPLIT = re.compile(r"\. (?=[A-Z])")
# Annotation kinds we recognise but do not use.
_IGNORED_PREFIXES = ("M", "A", "N", "R", "*", "#")


@dataclass
class Document:
    id: str
    text: str
    sentences: list[Sentence]
    mentions: dict[str, Mention]
    events: dict[str, Event] = field(default_factory=dict)
    has_gold: bool = False
    warnings: list[str] = field(default_factory=list)

    def sentence_of(self, mention_id: str) -> str:
        return self.mentions[mention_id].sentence_id

    def event_sentence(self, event: Event) -> str:
        return self.mentions[event.trigger_id].sentence_id


def segment_sentences(text: str) -> list[tuple[int, int]]:
    """Split on newlines and on '. ' followed by an uppercase letter."""
    spans = []
    pos = 0
    for line in text.split("\n"):
        start = pos
        pos += len(line) + 1
        cut = 0
        for m in _SPLIT.finditer(line):
            spans.append((start + cut, start + m.start() + 1))
            cut = m.end()
        spans.append((start + cut, start + len(line)))
    out = []
    for a, b in spans:
        while a < b and text[a].isspace():
            a += 1
        while b > a and text[b - 1].isspace():
            b -= 1
        if b > a:
            out.append((a, b))
    return out


def tokenize(text: str, offset: int = 0) -> list[Token]:
    """Whitespace tokens with slashes and edge punctuation split off."""
    toks = []
    for m in re.finditer(r"[^\s/]+|/", text):
        s, e = m.start(), m.end()
        word = m.group()
        lead = []
        while s < e and word[s - m.start()] in _PUNCT and e - s > 1:
            lead.append(Token(word[s - m.start()], offset + s, offset + s + 1))
            s += 1
        trail = []
        while e > s and word[e - 1 - m.start()] in _PUNCT and e - s > 1:
            trail.append(Token(word[e - 1 - m.start()], offset + e - 1, offset + e))
            e -= 1
        toks.extend(lead)
        toks.append(Token(word[s - m.start():e - m.start()], offset + s, offset + e))
        toks.extend(reversed(trail))
    return toks


def make_sentences(doc_id: str, text: str) -> list[Sentence]:
    return [Sentence(f"{doc_id}.s{i}", text[a:b], a, tuple(tokenize(text[a:b], a)))
            for i, (a, b) in enumerate(segment_sentences(text))]


def _parse_span(field_: str, path, lineno):
    frags = []
    for frag in field_.split(";"):
        parts = frag.split()
        if len(parts) != 2:
            raise ParseError(f"bad span {field_!r}", path, lineno)
        try:
            frags.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"non-integer offsets in {field_!r}", path, lineno) from None
    return frags


def _read_annotations(path: Path, text: str, textbounds: dict, event_lines: list, is_a2: bool):
    with open(path, encoding="utf-8", newline="") as f:
        lines = f.read().split("\n")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("T"):
            cols = line.split("\t")
            if len(cols) < 2:
                raise ParseError("text-bound line needs tab-separated id and annotation", path, lineno)
            tid = cols[0]
            head = cols[1].split(" ", 1)
            if len(head) != 2:
                raise ParseError(f"text-bound line {tid} lacks offsets", path, lineno)
            type_label, span_field = head
            frags = _parse_span(span_field, path, lineno)
            start, end = min(a for a, _ in frags), max(b for _, b in frags)
            if not (0 <= start < end <= len(text)):
                raise ParseError(f"span {start}-{end} of {tid} outside document text", path, lineno)
            if len(cols) >= 3:
                expected = " ".join(text[a:b] for a, b in frags)
                if cols[2] != expected:
                    raise IntegrityError(
                        f"{path}:{lineno}: {tid} text {cols[2]!r} does not match document text {expected!r}")
            if tid in textbounds:
                raise ParseError(f"duplicate id {tid}", path, lineno)
            textbounds[tid] = (type_label, start, end, is_a2)
        elif line.startswith("E"):
            cols = line.split("\t")
            if len(cols) < 2 or not cols[1].strip():
                raise ParseError("event line needs tab-separated id and arguments", path, lineno)
            parts = cols[1].split()
            pairs = []
            for part in parts:
                if ":" not in part:
                    raise ParseError(f"malformed event argument {part!r}", path, lineno)
                role, ref = part.rsplit(":", 1)
                if not role or not ref:
                    raise ParseError(f"malformed event argument {part!r}", path, lineno)
                pairs.append((role, ref))
            event_lines.append((cols[0], pairs, path, lineno))
        elif line.startswith(_IGNORED_PREFIXES):
            log.debug("%s:%d: skipping %s annotation", path, lineno, line[0])
        else:
            raise ParseError(f"unrecognised annotation line {line[:20]!r}", path, lineno)


def read_document(txt_path, require_a1: bool = True) -> Document:
    txt_path = Path(txt_path)
    doc_id = txt_path.stem
    with open(txt_path, encoding="utf-8", newline="") as f:
        text = f.read()
    textbounds: dict[str, tuple] = {}
    event_lines: list = []
    a1 = txt_path.with_suffix(".a1")
    a2 = txt_path.with_suffix(".a2")
    if a1.exists():
        _read_annotations(a1, text, textbounds, event_lines, False)
    elif require_a1:
        raise ParseError("missing .a1 file", a1)
    has_gold = a2.exists()
    if has_gold:
        _read_annotations(a2, text, textbounds, event_lines, True)

    ev_ids = {eid for eid, *_ in event_lines}
    trigger_ids = set()
    referenced_args = set()
    for eid, pairs, path, lineno in event_lines:
        (_, trig), args = pairs[0], pairs[1:]
        if trig not in textbounds:
            raise ParseError(f"event {eid} trigger {trig} undefined", path, lineno)
        trigger_ids.add(trig)
        for _, ref in args:
            if ref not in textbounds and ref not in ev_ids:
                raise ParseError(f"event {eid} references undefined {ref}", path, lineno)
            referenced_args.add(ref)
    for tid, (_, _, _, in_a2) in textbounds.items():
        # An .a2 text-bound that no event uses as an argument is a trigger.
        if in_a2 and tid not in referenced_args:
            trigger_ids.add(tid)

    sentences = make_sentences(doc_id, text)
    doc = Document(doc_id, text, sentences, {}, {}, has_gold)
    for tid, (type_label, start, end, _) in textbounds.items():
        sent = next((s for s in sentences if s.contains(start, end)), None)
        if sent is None or not sent.token_indices(start, end):
            msg = f"{doc_id}: {tid} crosses a sentence boundary; dropped"
            log.warning(msg)
            doc.warnings.append(msg)
            continue
        kind = TRIGGER if tid in trigger_ids else ENTITY
        doc.mentions[tid] = Mention(tid, kind, type_label, start, end, sent.id, text[start:end])

    raw = {eid: (pairs[0][1], tuple(pairs[1:])) for eid, pairs, _, _ in event_lines}
    status: dict[str, Optional[str]] = {}

    def sentence_of_ref(ref, stack):
        if ref in doc.mentions:
            return doc.mentions[ref].sentence_id
        if ref in raw:
            return sentence_of_event(ref, stack)
        return None

    def sentence_of_event(eid, stack=()):
        if eid in status:
            return status[eid]
        if eid in stack:
            status[eid] = None
            return None
        trig, args = raw[eid]
        sid = doc.mentions[trig].sentence_id if trig in doc.mentions else None
        for _, ref in args:
            if sid is None:
                break
            if sentence_of_ref(ref, stack + (eid,)) != sid:
                sid = None
        status[eid] = sid
        return sid

    for eid, (trig, args) in raw.items():
        if sentence_of_event(eid) is None:
            msg = f"{doc_id}: event {eid} is inter-sentence, self-referential or lost an argument; dropped"
            log.warning(msg)
            doc.warnings.append(msg)
            continue
        targets = tuple((role, EventRef(ref) if ref in raw else EntityRef(ref)) for role, ref in args)
        doc.events[eid] = Event(eid, trig, targets)
    return doc


def read_standoff(directory) -> list[Document]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError("not a directory", directory)
    return [read_document(p) for p in sorted(directory.glob("*.txt"))]


def _topological_events(events: Iterable[Event]) -> list[Event]:
    events = list(events)
    by_id = {e.id: e for e in events}
    done: set[str] = set()
    out: list[Event] = []

    def visit(e, stack=()):
        if e.id in done:
            return
        if e.id in stack:
            raise StructureError(f"event reference cycle through {e.id}")
        for _, t in e.args:
            if isinstance(t, EventRef):
                if t.event_id not in by_id:
                    raise StructureError(f"event {e.id} references missing event {t.event_id}")
                visit(by_id[t.event_id], stack + (e.id,))
        done.add(e.id)
        out.append(e)

    for e in events:
        visit(e)
    return out


def _tb_line(m: Mention, text: str) -> str:
    return f"{m.id}\t{m.type_label} {m.start} {m.end}\t{text[m.start:m.end]}"


def _id_number(mid: str):
    digits = re.sub(r"\D", "", mid)
    return (int(digits) if digits else 0, mid)


def write_document(doc: Document, events: Iterable[Event], directory) -> None:
    """Write .txt, .a1 (entities) and .a2 (triggers, then events children-first).

    Events are renumbered E1.. in emission order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ordered = _topological_events(events)
    new_id = {e.id: f"E{i}" for i, e in enumerate(ordered, start=1)}
    ents = sorted((m for m in doc.mentions.values() if not m.is_trigger), key=lambda m: _id_number(m.id))
    trigs = sorted((m for m in doc.mentions.values() if m.is_trigger), key=lambda m: _id_number(m.id))
    a1 = "".join(_tb_line(m, doc.text) + "\n" for m in ents)
    lines = [_tb_line(m, doc.text) for m in trigs]
    for e in ordered:
        trig = doc.mentions[e.trigger_id]
        parts = [f"{trig.type_label}:{trig.id}"]
        for role, t in e.args:
            parts.append(f"{role}:{new_id[t.event_id] if isinstance(t, EventRef) else t.mention_id}")
        lines.append(f"{new_id[e.id]}\t{' '.join(parts)}")
    a2 = "".join(line + "\n" for line in lines)
    for suffix, content in ((".txt", doc.text), (".a1", a1), (".a2", a2)):
        with open(directory / f"{doc.id}{suffix}", "w", encoding="utf-8", newline="") as f:
            f.write(content)


def write_standoff(documents: Iterable[Document], directory,
                   events: Optional[Mapping[str, Iterable[Event]]] = None) -> None:
    """Write every document; ``events`` maps doc id to events (default: doc.events)."""
    for doc in documents:
        evs = doc.events.values() if events is None else events.get(doc.id, ())
        write_document(doc, evs, directory)
