"""Predicted-relation files: one JSON object per line.

Each record carries ``doc_id``, ``trigger_id``, ``role`` and ``arg_id``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import ParseError
from ..graph import PREDICTED, Relation
from .standoff import Document

log = logging.getLogger(__name__)

FIELDS = ("doc_id", "trigger_id", "role", "arg_id")


def read_relations_file(path, documents: Iterable[Document]):
    """Resolve records against ``documents``.

    Returns ``(relations, rejects)``: a dict doc id -> set of Relation and a
    list of ``(line number, record, reason)`` for records that do not resolve.
    """
    docs = {d.id: d for d in documents}
    out: dict[str, set[Relation]] = {d: set() for d in docs}
    rejects = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if not isinstance(rec, dict) or any(not isinstance(rec.get(k), str) for k in FIELDS):
                raise ParseError(f"record needs string fields {', '.join(FIELDS)}", path, lineno)
            doc = docs.get(rec["doc_id"])
            reason = None
            if doc is None:
                reason = "unknown doc_id"
            elif rec["trigger_id"] not in doc.mentions:
                reason = "unknown trigger_id"
            elif not doc.mentions[rec["trigger_id"]].is_trigger:
                reason = "trigger_id is not a trigger"
            elif rec["arg_id"] not in doc.mentions:
                reason = "unknown arg_id"
            elif doc.sentence_of(rec["trigger_id"]) != doc.sentence_of(rec["arg_id"]):
                reason = "cross-sentence relation"
            if reason is not None:
                rejects.append((lineno, rec, reason))
                continue
            out[doc.id].add(Relation(rec["trigger_id"], rec["role"], rec["arg_id"], PREDICTED))
    if rejects:
        log.warning("%s: %d relation records rejected", path, len(rejects))
    return out, rejects


def write_relations_file(path, relations: Mapping[str, Iterable[Relation]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc_id in sorted(relations):
            for r in sorted(relations[doc_id], key=lambda r: r.key):
                f.write(json.dumps({"doc_id": doc_id, "trigger_id": r.trigger_id,
                                    "role": r.role, "arg_id": r.arg_id}) + "\n")
