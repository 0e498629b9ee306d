"""The action scoring network and its reverse-mode gradients.

For a trigger with entries ``NONE, e1 .. en`` every entry gets a base
vector ``[t_p; t_w; o_p; a_p; a_w]``; appending an action row ``c`` gives the
relation embedding.  Because the relation hidden layer is linear before the
ReLU, all ``(entry, action)`` hidden outputs of a trigger are computed once
as an ``(n + 1, 4, hidden)`` table.  A state's structure vector is the sum of
its taken ``(entry, action)`` rows, its buffer vector the sum of PENDING rows
of the remaining entries; ``[S; B]`` is the event embedding and a linear map
of it gives the logit.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ContractError, StructureError
from ..graph import RelationGraph
from ..search import NONE, PENDING, Action, Scorer, SearchState, applicable_actions
from .lstm import lstm_backward, lstm_forward
from .model import NONE_LABEL, Model

TRAIN = "train"
INFER = "infer"


def sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


class NeuralScorer(Scorer):
    """Inference-time scorer over a read-only model."""

    def __init__(self, model: Model):
        super().__init__()
        self.model = model

    def sentence(self, graph: RelationGraph) -> "SentenceForward":
        return SentenceForward(self.model, graph, INFER, counter=self)


class SentenceForward:
    """Encodes one sentence and hands out per-trigger scorers.

    In train mode it also records what is needed to back-propagate the loss of
    every trigger into the parameters.
    """

    def __init__(self, model: Model, graph: RelationGraph, mode: str = INFER,
                 rng: Optional[np.random.Generator] = None, counter: Optional[Scorer] = None):
        if mode not in (TRAIN, INFER):
            raise ContractError(f"unknown mode {mode!r}")
        if mode == TRAIN and rng is None:
            raise ContractError("train mode needs a random generator for dropout")
        self.model = model
        self.graph = graph
        self.mode = mode
        self.rng = rng
        self.counter = counter
        self.dropout = model.config.dropout if mode == TRAIN else 0.0
        self.triggers: list[TriggerForward] = []
        self.events: dict[str, tuple[TriggerForward, tuple]] = {}
        self._mention_cache: dict[str, np.ndarray] = {}
        self._mention_grads: dict[str, np.ndarray] = {}
        self.encoding = self._encode()

    def _encode(self) -> np.ndarray:
        p = self.model.params
        tokens = self.graph.sentence.tokens
        if not tokens:
            raise StructureError(f"sentence {self.graph.sentence.id} has no tokens")
        self.token_ids = np.array([self.model.words.lookup(t.text) for t in tokens])
        X = p["word"][self.token_ids]
        Hf, self._cache_f = lstm_forward(X, p["lstm_f_W"], p["lstm_f_b"])
        Hb, self._cache_b = lstm_forward(X[::-1], p["lstm_b_W"], p["lstm_b_b"])
        return np.concatenate([Hf, Hb[::-1]], axis=1)

    def token_rows(self, mention_id: str) -> list[int]:
        m = self.graph.mentions[mention_id]
        rows = self.graph.sentence.token_indices(m.start, m.end)
        if not rows:
            raise StructureError(f"mention {mention_id} covers no token")
        return rows

    def mention_representation(self, mention_id: str) -> np.ndarray:
        v = self._mention_cache.get(mention_id)
        if v is None:
            v = self.encoding[self.token_rows(mention_id)].mean(axis=0)
            self._mention_cache[mention_id] = v
        return v

    def trigger(self, trigger_id: str, entries: tuple, record: bool = False) -> "TriggerForward":
        tf = TriggerForward(self, trigger_id, entries, record)
        self.triggers.append(tf)
        return tf

    def register_event(self, event_id: str, tf: "TriggerForward", history: tuple) -> None:
        """Declare that ``event_id``'s representation is ``tf``'s embedding after ``history``."""
        self.events[event_id] = (tf, tuple(history))

    # backward -------------------------------------------------------------

    def add_mention_grad(self, mention_id: str, g: np.ndarray) -> None:
        acc = self._mention_grads.get(mention_id)
        self._mention_grads[mention_id] = g.copy() if acc is None else acc + g

    def route_event_grad(self, event_id: str, g: np.ndarray) -> None:
        owner = self.events.get(event_id)
        if owner is None:
            # Representation is not tied to a trainable computation here.
            return
        tf, history = owner
        tf.emb_grads.append((history, g))

    def backward(self, grads: dict) -> None:
        """Accumulate parameter gradients from every trigger's output gradients."""
        p = self.model.params
        for tf in reversed(self.triggers):
            tf.backward(grads)
        d_enc = np.zeros_like(self.encoding)
        for mid, g in self._mention_grads.items():
            rows = self.token_rows(mid)
            d_enc[rows] += g / len(rows)
        h = self.model.config.lstm_half
        dXf, dWf, dbf = lstm_backward(d_enc[:, :h], self._cache_f)
        dXb, dWb, dbb = lstm_backward(d_enc[::-1, h:], self._cache_b)
        grads["lstm_f_W"] += dWf
        grads["lstm_f_b"] += dbf
        grads["lstm_b_W"] += dWb
        grads["lstm_b_b"] += dbb
        np.add.at(grads["word"], self.token_ids, dXf + dXb[::-1])


class TriggerForward:
    """Scores expansions of one trigger's search states."""

    def __init__(self, sf: SentenceForward, trigger_id: str, entries: tuple, record: bool):
        self.sf = sf
        self.trigger_id = trigger_id
        self.rows = (NONE,) + tuple(entries)
        self.record = record
        self.recorded: list[tuple] = []  # (history, dropped-out embedding, mask)
        self.emb_grads: list[tuple] = []
        self.dz: Optional[np.ndarray] = None
        model = sf.model
        cfg = model.config
        p = model.params
        graph = sf.graph
        self._cfg = cfg
        trig = graph.mentions[trigger_id]

        n1 = len(self.rows)
        base = np.zeros((n1, cfg.base_dim), dtype=model.dtype)
        o_off = cfg.type_dim + cfg.lstm_dim
        a_off = o_off + cfg.role_dim
        self._type_rows = np.zeros(n1, dtype=int)
        self._role_rows = np.zeros(n1, dtype=int)
        base[:, :cfg.type_dim] = p["type"][model.types.lookup(trig.type_label)]
        base[:, cfg.type_dim:o_off] = sf.mention_representation(trigger_id)
        none_row = model.roles.lookup(NONE_LABEL)
        base[0, o_off:a_off] = p["role"][none_row]
        self._role_rows[0] = none_row
        self._type_rows[0] = model.types.lookup(NONE_LABEL)
        base[0, a_off:a_off + cfg.type_dim] = p["type"][self._type_rows[0]]
        for i, e in enumerate(self.rows[1:], start=1):
            r = model.roles.lookup(e.role)
            self._role_rows[i] = r
            base[i, o_off:a_off] = p["role"][r]
            if e.sub_event is not None:
                rep = e.sub_event.representation
                if rep is None or rep.shape != (cfg.event_dim,):
                    raise ContractError(f"sub-event {e.sub_event.id} lacks a {cfg.event_dim}-d representation")
                base[i, a_off:] = rep
                self._type_rows[i] = -1
            else:
                arg = graph.mentions[e.arg_id]
                t = model.types.lookup(arg.type_label)
                self._type_rows[i] = t
                base[i, a_off:a_off + cfg.type_dim] = p["type"][t]
                base[i, a_off + cfg.type_dim:] = sf.mention_representation(e.arg_id)
        self.base = base
        Wb = p["rel_W"][:cfg.base_dim]
        Wa = p["rel_W"][cfg.base_dim:]
        self.pre = (base @ Wb)[:, None, :] + (p["action"] @ Wa)[None, :, :] + p["rel_b"]
        act = np.maximum(self.pre, 0.0)
        if sf.dropout > 0.0:
            keep = 1.0 - sf.dropout
            self.mask = (sf.rng.random(self.pre.shape) < keep).astype(model.dtype) / keep
            act = act * self.mask
        else:
            self.mask = None
        self.H = act
        Bsum = np.zeros((n1 + 1, cfg.hidden_dim), dtype=model.dtype)
        Bsum[:n1] = np.cumsum(act[::-1, PENDING], axis=0)[::-1]
        self.Bsum = Bsum
        self._S = {(): np.zeros(cfg.hidden_dim, dtype=model.dtype)}

    def structure_vector(self, history: tuple) -> np.ndarray:
        v = self._S.get(history)
        if v is None:
            v = self.structure_vector(history[:-1]) + self.H[len(history) - 1, history[-1]]
            self._S[history] = v
        return v

    def embedding(self, history: tuple) -> np.ndarray:
        return np.concatenate([self.structure_vector(tuple(history)), self.Bsum[len(history)]])

    def score(self, expansions) -> np.ndarray:
        if not expansions:
            return np.zeros(0)
        embs = []
        hists = []
        for state, action in expansions:
            h = state.history
            if len(h) >= len(self.rows) or action not in applicable_actions(self.rows[len(h)]):
                raise ContractError(f"{Action(action).name} not applicable at position {len(h)}")
            h2 = h + (Action(action),)
            hists.append(h2)
            embs.append(self.embedding(h2))
        E = np.stack(embs)
        mask = None
        if self.sf.dropout > 0.0:
            keep = 1.0 - self.sf.dropout
            mask = (self.sf.rng.random(E.shape) < keep).astype(E.dtype) / keep
            E = E * mask
        p = self.sf.model.params
        z = E @ p["out_w"] + p["out_b"][0]
        if self.record:
            for h2, e, zz, i in zip(hists, E, z, range(len(hists))):
                self.recorded.append((h2, e, None if mask is None else mask[i], zz))
        if self.sf.counter is not None:
            self.sf.counter.count(len(expansions))
        # float64 keeps small probabilities representable for log scores
        return sigmoid(z.astype(np.float64))

    def event_representation(self, state: SearchState) -> np.ndarray:
        return self.embedding(state.history)

    @property
    def logits(self) -> np.ndarray:
        return np.array([r[3] for r in self.recorded])

    def backward(self, grads: dict) -> None:
        cfg = self._cfg
        p = self.sf.model.params
        hid = cfg.hidden_dim
        n1 = len(self.rows)
        dH = np.zeros_like(self.H)
        accB = np.zeros((n1 + 1, hid), dtype=self.H.dtype)
        items = list(self.emb_grads)
        if self.dz is not None and len(self.recorded):
            w = p["out_w"]
            for (h2, e, mask, _), dz in zip(self.recorded, self.dz):
                if dz == 0.0:
                    continue
                grads["out_w"] += dz * e
                grads["out_b"][0] += dz
                de = dz * w if mask is None else dz * w * mask
                items.append((h2, de))
        if not items:
            return
        for h2, de in items:
            dS, dB = de[:hid], de[hid:]
            for i, a in enumerate(h2):
                dH[i, a] += dS
            accB[len(h2)] += dB
        dH[:, PENDING] += np.cumsum(accB[:n1], axis=0)
        if self.mask is not None:
            dH = dH * self.mask
        dpre = dH * (self.pre > 0)
        Wb = p["rel_W"][:cfg.base_dim]
        Wa = p["rel_W"][cfg.base_dim:]
        d_entry = dpre.sum(axis=1)
        d_action = dpre.sum(axis=0)
        grads["rel_b"] += d_entry.sum(axis=0)
        grads["rel_W"][:cfg.base_dim] += self.base.T @ d_entry
        grads["rel_W"][cfg.base_dim:] += p["action"].T @ d_action
        grads["action"] += d_action @ Wa.T
        dbase = d_entry @ Wb.T

        model = self.sf.model
        trig = self.sf.graph.mentions[self.trigger_id]
        o_off = cfg.type_dim + cfg.lstm_dim
        a_off = o_off + cfg.role_dim
        grads["type"][model.types.lookup(trig.type_label)] += dbase[:, :cfg.type_dim].sum(axis=0)
        self.sf.add_mention_grad(self.trigger_id, dbase[:, cfg.type_dim:o_off].sum(axis=0))
        np.add.at(grads["role"], self._role_rows, dbase[:, o_off:a_off])
        grads["type"][self._type_rows[0]] += dbase[0, a_off:a_off + cfg.type_dim]
        for i, e in enumerate(self.rows[1:], start=1):
            if e.sub_event is not None:
                self.sf.route_event_grad(e.sub_event.id, dbase[i, a_off:])
            else:
                grads["type"][self._type_rows[i]] += dbase[i, a_off:a_off + cfg.type_dim]
                self.sf.add_mention_grad(e.arg_id, dbase[i, a_off + cfg.type_dim:])
