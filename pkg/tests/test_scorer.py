import numpy as np
import pytest

from eventdag.errors import ConfigError, ContractError, FormatError, NonFiniteError, VersionError
from eventdag.graph import build_relation_graph
from eventdag.pipeline import document_graphs
from eventdag.scorer.lstm import lstm_backward, lstm_forward
from eventdag.scorer.model import (FORMAT_VERSION, MAGIC, UNK, ModelConfig, Vocab, load_model,
                                   save_model, word_vocab)
from eventdag.scorer.network import INFER, TRAIN, NeuralScorer, SentenceForward
from eventdag.scorer.optim import AMSGrad, amsgrad_step
from eventdag.search import Action, ArgumentEntry, BeamConfig, FixedEvent, entity_entry, init_state
from eventdag.trainer import derive_gold_action_sequences

from conftest import angio_document, angio_relations, small_model


def angio_items():
    return document_graphs(angio_document(), angio_relations())


def test_default_dimensions():
    cfg = ModelConfig()
    assert cfg.event_dim == 120
    assert cfg.rel_dim == 254
    assert cfg.base_dim == 250
    assert cfg.lstm_half == 50


@pytest.mark.parametrize("kw", [dict(lstm_dim=99, hidden_dim=60), dict(hidden_dim=50),
                                dict(dropout=1.0), dict(dtype="float16"), dict(role_dim=0)])
def test_bad_model_config(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_vocab_fallback_chain():
    v = word_vocab(["Bcl-2", "vegf"])
    assert v.lookup("Bcl-2") == v.index["Bcl-2"]
    assert v.lookup("VEGF") == v.index["vegf"]
    assert v.lookup("bcl-2") == v.index[UNK]
    assert isinstance(v, Vocab) and len(v) == 3


def test_lstm_gradients():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 3))
    W = rng.standard_normal((3 + 4, 16)) * 0.5
    b = rng.standard_normal(16) * 0.1
    G = rng.standard_normal((5, 4))

    def loss(X, W, b):
        return float(np.sum(lstm_forward(X, W, b)[0] * G))

    H, cache = lstm_forward(X, W, b)
    dX, dW, db = lstm_backward(G, cache)
    eps = 1e-6
    for arr, grad in ((X, dX), (W, dW), (b, db)):
        for ix in np.ndindex(arr.shape):
            old = arr[ix]
            arr[ix] = old + eps
            lp = loss(X, W, b)
            arr[ix] = old - eps
            lm = loss(X, W, b)
            arr[ix] = old
            assert grad[ix] == pytest.approx((lp - lm) / (2 * eps), rel=1e-5, abs=1e-8)


def test_relation_rows_and_nested_substitution():
    items = angio_items()
    model = small_model(items)
    cfg = model.config
    g = items[0].graph
    sf = SentenceForward(model, g, INFER)
    rep = np.arange(cfg.event_dim, dtype=float) / 10.0
    e1 = FixedEvent("E1", "T5", (), "T5(Theme=T3)", rep)
    rel = next(r for r in g.edges if r.key == ("T4", "Theme", "T5"))
    cause = next(r for r in g.edges if r.key == ("T4", "Cause", "T1"))
    entries = (entity_entry(cause, g), ArgumentEntry(rel, g.mentions["T5"].start, e1))
    tf = sf.trigger("T4", entries)
    a_off = cfg.type_dim + cfg.lstm_dim + cfg.role_dim
    assert tf.base.shape == (3, cfg.base_dim)
    assert tf.base[2, a_off:].tobytes() == rep.astype(model.dtype).tobytes()
    # NONE row: zero argument word block.
    assert not tf.base[0, a_off + cfg.type_dim:].any()
    emb = tf.embedding((Action.IGNORE, Action.ADD))
    assert emb.shape == (cfg.event_dim,)


def test_sub_event_without_representation():
    items = angio_items()
    model = small_model(items)
    g = items[0].graph
    sf = SentenceForward(model, g, INFER)
    rel = next(r for r in g.edges if r.key == ("T4", "Theme", "T5"))
    with pytest.raises(ContractError):
        sf.trigger("T4", (ArgumentEntry(rel, 40, FixedEvent("E1", "T5", (), "fp")),))


def test_score_validates_and_counts():
    items = angio_items()
    model = small_model(items)
    scorer = NeuralScorer(model)
    sent = scorer.sentence(items[0].graph)
    g = items[0].graph
    entries = tuple(entity_entry(r, g) for r in g.out_edges("T4") if r.role == "Cause")
    tf = sent.trigger("T4", entries)
    s0 = init_state("T4", entries)
    p = tf.score([(s0, Action.IGNORE), (s0, Action.CONSTRUCT)])
    assert p.shape == (2,) and np.all((p > 0) & (p < 1))
    assert scorer.calls == 2
    with pytest.raises(ContractError):
        tf.score([(s0, Action.ADD)])


def test_infer_is_deterministic_and_train_needs_rng():
    items = angio_items()
    model = small_model(items, dropout=0.5)
    with pytest.raises(ContractError):
        SentenceForward(model, items[0].graph, TRAIN)
    sf1 = SentenceForward(model, items[0].graph, INFER)
    sf2 = SentenceForward(model, items[0].graph, INFER)
    assert np.array_equal(sf1.encoding, sf2.encoding)


def test_save_load_bit_identical(tmp_path):
    items = angio_items()
    model = small_model(items, dtype="float32")
    path = tmp_path / "m.bin"
    save_model(model, path)
    loaded = load_model(path)
    for k, v in model.params.items():
        assert loaded.params[k].dtype == v.dtype
        assert loaded.params[k].tobytes() == v.tobytes()
    from eventdag.pipeline import predict_items
    from eventdag.search import ConstantScorer
    a = NeuralScorer(model).sentence(items[0].graph).trigger("T5", ())
    b = NeuralScorer(loaded).sentence(items[0].graph).trigger("T5", ())
    s0 = init_state("T5", ())
    assert a.score([(s0, Action.CONSTRUCT)]).tobytes() == b.score([(s0, Action.CONSTRUCT)]).tobytes()


def test_load_rejects_other_files(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"not a model at all")
    with pytest.raises(FormatError):
        load_model(bad)


def test_load_rejects_version(tmp_path):
    import struct
    model = small_model(angio_items())
    path = tmp_path / "m.bin"
    save_model(model, path)
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC):len(MAGIC) + 4] = struct.pack("<I", FORMAT_VERSION + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError) as exc:
        load_model(path)
    assert str(FORMAT_VERSION) in str(exc.value) and str(FORMAT_VERSION + 1) in str(exc.value)


def test_load_rejects_truncation(tmp_path):
    model = small_model(angio_items())
    path = tmp_path / "m.bin"
    save_model(model, path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError):
        load_model(path)


def _reference_amsgrad(w, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8, wd=0.001):
    m = v = vhat = 0.0
    for t, g in enumerate(grads, start=1):
        g = g + wd * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        vhat = np.maximum(vhat, v)
        w = w - lr * np.sqrt(1 - b2 ** t) / (1 - b1 ** t) * m / (np.sqrt(vhat) + eps)
    return w


def test_amsgrad_matches_reference():
    rng = np.random.default_rng(3)
    w0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(6)]
    params = {"w": w0.copy()}
    opt = AMSGrad()
    for g in grads:
        opt.step(params, {"w": g})
    np.testing.assert_allclose(params["w"], _reference_amsgrad(w0, grads), rtol=1e-12)


def test_amsgrad_zero_everything_is_identity():
    params = {"w": np.ones(3)}
    amsgrad_step(params, {"w": np.zeros(3)}, AMSGrad(weight_decay=0.0))
    assert np.array_equal(params["w"], np.ones(3))


def test_amsgrad_second_moment_max_never_decreases():
    params = {"w": np.zeros(2)}
    opt = AMSGrad(weight_decay=0.0)
    opt.step(params, {"w": np.array([10.0, 1.0])})
    before = opt.vhat["w"].copy()
    opt.step(params, {"w": np.array([0.0, 0.0])})
    assert np.all(opt.vhat["w"] >= before)


def test_amsgrad_rejects_non_finite():
    params = {"w": np.ones(2)}
    opt = AMSGrad()
    with pytest.raises(NonFiniteError):
        opt.step(params, {"w": np.array([np.nan, 1.0])})
    assert np.array_equal(params["w"], np.ones(2)) and opt.t == 0
