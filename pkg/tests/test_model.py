import math

import numpy as np
import pytest

from discoq.ansatz import Circuit, ParameterRegistry
from discoq.dataset import caption_text, enumerate_captions, generate
from discoq.encoders import mhe
from discoq.simulator import overlap
from discoq.model import (BOX_OWNER, CLAMP, ClassicalModel, MatcherConfig, QuantumMatcher, classical_batch,
                          classical_loss, classical_loss_and_grad, classical_scores, classical_sentence_vec,
                          quantum_batch, quantum_loss, quantum_loss_terms, quantum_scores, score,
                          trainable_box)

from oracles import dense_run

CAPTIONS = [caption_text(*t) for t in enumerate_captions()]


def dense_state(circ, params):
    gates = [(g.kind, g.qubits, params[g.angle.id] if hasattr(g.angle, "id") else g.angle) for g in circ.gates]
    return dense_run(gates, circ.n_qubits, postselect=dict(circ.postselect), outputs=circ.output_qubits)[0]


# -- trainable box -----------------------------------------------------------------


def test_box_on_one_qubit():
    reg = ParameterRegistry()
    circ = trainable_box(Circuit.fragment(1, []), 1, reg, layers=2)
    assert [g.kind for g in circ.gates] == ["Rx", "Rz", "Rx"]
    assert circ.postselect == {}


def test_box_on_three_qubits():
    reg = ParameterRegistry()
    circ = trainable_box(Circuit.fragment(3, []), 3, reg, layers=1)
    assert [g.kind for g in circ.gates] == ["H"] * 3 + ["CRz"] * 2
    assert circ.postselect == {0: 0, 1: 0}
    assert circ.output_qubits == (2,)


def test_box_is_shared_across_images():
    m = QuantumMatcher(MatcherConfig(), CAPTIONS)
    a = m.image_circuit(mhe("cube", "left", "cone"))
    b = m.image_circuit(mhe("sphere", "right", "cylinder"))
    sa = [s for s in a.slots() if s.owner == BOX_OWNER]
    sb = [s for s in b.slots() if s.owner == BOX_OWNER]
    assert sa == sb and len(sa) == 2 * 2
    assert len(m.registry.owned_by(BOX_OWNER)) == 4


def test_matcher_slot_layout():
    m = QuantumMatcher(MatcherConfig(), CAPTIONS)
    # 4 nouns * 3 + 2 relations * 6 + box 4
    assert len(m.registry) == 12 + 12 + 4
    assert all(m.params_per_caption(c) == 12 for c in CAPTIONS)
    w = QuantumMatcher(MatcherConfig(encoder="angle", alignment="widen"), CAPTIONS)
    assert all(w.params_per_caption(c) == 36 for c in CAPTIONS)
    assert w.box is None


def test_config_validation():
    with pytest.raises(ValueError):
        MatcherConfig(encoder="clip")
    with pytest.raises(ValueError):
        MatcherConfig(alignment="other")
    assert MatcherConfig(encoder="amplitude", alignment="widen").sentence_qubits == 12


# -- scores ---------------------------------------------------------------------


def test_score_of_identical_states_is_one():
    m = QuantumMatcher(MatcherConfig(alignment="widen"), [])
    v = mhe("cube", "left", "cone")
    a, b = m.prep_state(v), m.prep_state(v)
    assert overlap(a, b) == pytest.approx(1.0, abs=1e-12)
    w = mhe("cube", "right", "cone")
    assert overlap(m.prep_state(v), m.prep_state(w)) == pytest.approx(0.0, abs=1e-24)


@pytest.mark.parametrize("alignment", ["box", "widen"])
def test_score_matches_dense_pipeline(alignment):
    rng = np.random.default_rng(4)
    m = QuantumMatcher(MatcherConfig(alignment=alignment), CAPTIONS)
    for _ in range(5):
        params = rng.uniform(0, 2 * np.pi, len(m.registry))
        caption = CAPTIONS[rng.integers(24)]
        feats = mhe("cube", "left", "cone") + 0.1 * rng.normal(size=8)
        c = dense_state(m.caption_circuit(caption), params)
        i = dense_state(m.image_circuit(feats), params)
        want = abs(np.vdot(c, i)) ** 2
        got = score(m, caption, feats, params)
        assert got == pytest.approx(want, abs=1e-12)
        assert 0.0 <= got <= 1.0


# -- quantum loss ------------------------------------------------------------------


def test_quantum_loss_examples():
    loss, _, _ = quantum_loss_terms(1.0, 0.0)
    assert loss == pytest.approx(-2 * math.log(1 - CLAMP), rel=1e-6)
    assert loss < 3e-9
    assert quantum_loss_terms(0.5, 0.5)[0] == pytest.approx(2 * math.log(2))


def test_quantum_loss_clamp_zeroes_derivative():
    _, dp, dn = quantum_loss_terms(1.0, 0.0)
    assert dp == 0.0 and dn == 0.0
    loss, dp, dn = quantum_loss_terms(0.0, 1.0)
    assert np.isfinite(loss) and loss == pytest.approx(-2 * math.log(CLAMP))


def test_quantum_loss_monotone():
    ps = np.linspace(0.01, 0.99, 50)
    pos = [quantum_loss_terms(p, 0.3)[0] for p in ps]
    neg = [quantum_loss_terms(0.3, p)[0] for p in ps]
    assert np.all(np.diff(pos) < 0) and np.all(np.diff(neg) > 0)
    assert min(pos + neg) >= 0


def test_quantum_loss_derivatives_match_fd():
    rng = np.random.default_rng(1)
    for p, q in rng.uniform(0.05, 0.95, (20, 2)):
        _, dp, dn = quantum_loss_terms(p, q)
        h = 1e-6
        assert dp == pytest.approx((quantum_loss_terms(p + h, q)[0] - quantum_loss_terms(p - h, q)[0]) / (2 * h), rel=1e-6)
        assert dn == pytest.approx((quantum_loss_terms(p, q + h)[0] - quantum_loss_terms(p, q - h)[0]) / (2 * h), rel=1e-6)


def _fd_grad(fn, x, h=1e-4):
    out = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


@pytest.mark.parametrize("config", [
    MatcherConfig(),
    MatcherConfig(alignment="widen"),
    MatcherConfig(encoder="angle", alignment="widen", angle_qubits=4),
    MatcherConfig(encoder="angle", alignment="box", angle_qubits=4),
    MatcherConfig(encoder="amplitude", alignment="box", amplitude_qubits=4),
])
def test_quantum_batch_gradient(config, backend):
    rng = np.random.default_rng(2)
    features = "mhe" if config.encoder == "mhe" else "synthetic"
    records = generate(features=features, noise=0.1, rng=rng)[5::97]
    m = QuantumMatcher(config, CAPTIONS)
    if config.encoder == "amplitude":
        # 16-dim inputs for a 4-qubit register
        for r in records:
            r.features = r.features[:16]
    m.fit_encoder(np.array([r.features for r in records]))
    preps = [m.prep_state(r.features) for r in records]
    for _ in range(3):
        params = rng.uniform(0, 2 * np.pi, len(m.registry))
        loss, g = quantum_batch(m, records, preps, params)
        assert loss == pytest.approx(np.mean([quantum_loss(m, r, params) for r in records]), rel=1e-12)
        fd = _fd_grad(lambda p: quantum_batch(m, records, preps, p, with_grad=False)[0], params)
        err = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert err < 1e-5


def test_quantum_scores_match_score():
    rng = np.random.default_rng(3)
    records = generate(noise=0.1, rng=rng)[::80]
    m = QuantumMatcher(MatcherConfig(), CAPTIONS)
    params = rng.uniform(0, 2 * np.pi, len(m.registry))
    pos, neg = quantum_scores(m, records, [m.prep_state(r.features) for r in records], params)
    for k, r in enumerate(records):
        assert pos[k] == pytest.approx(score(m, r.caption, r.features, params), abs=1e-12)
        assert neg[k] == pytest.approx(score(m, r.neg_caption, r.features, params), abs=1e-12)


def test_angle_encoder_needs_fit():
    m = QuantumMatcher(MatcherConfig(encoder="angle", alignment="widen", angle_qubits=3), [])
    with pytest.raises(RuntimeError):
        m.image_prep(np.ones(10))


def test_encoder_state_round_trip():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 12))
    m = QuantumMatcher(MatcherConfig(encoder="angle", alignment="widen", angle_qubits=3), [])
    m.fit_encoder(X)
    other = QuantumMatcher(MatcherConfig(encoder="angle", alignment="widen", angle_qubits=3), [])
    other.load_encoder_state(m.encoder_state())
    np.testing.assert_array_equal(m.prep_state(X[0]), other.prep_state(X[0]))


# -- classical -------------------------------------------------------------------


def small_model(d=2):
    nouns = {s: np.zeros(d) for s in ("cylinder", "sphere", "cube", "cone")}
    rels = {"isLeftOf": np.zeros((d, d)), "isRightOf": np.zeros((d, d))}
    return ClassicalModel(nouns, rels)


def test_copy_subj_hand_example():
    m = small_model()
    m.noun_vectors["cube"] = np.array([1.0, 2.0])
    m.noun_vectors["cone"] = np.array([3.0, 4.0])
    m.relation_matrices["isLeftOf"] = np.array([[1.0, 0.0], [1.0, 1.0]])
    np.testing.assert_allclose(classical_sentence_vec(m, "cube", "left", "cone"), [3.0, 14.0])


def test_copy_subj_identity_and_zero():
    rng = np.random.default_rng(0)
    m = ClassicalModel.init(5, rng)
    m.relation_matrices["isLeftOf"] = np.eye(5)
    want = m.noun_vectors["cube"] * m.noun_vectors["sphere"]
    np.testing.assert_allclose(classical_sentence_vec(m, "cube", "left", "sphere"), want)
    m.relation_matrices["isRightOf"] = np.zeros((5, 5))
    np.testing.assert_array_equal(classical_sentence_vec(m, "cube", "right", "sphere"), np.zeros(5))


def test_copy_subj_linearity():
    rng = np.random.default_rng(1)
    m = ClassicalModel.init(4, rng)
    base = classical_sentence_vec(m, "cube", "left", "cone")
    m.noun_vectors["cone"] = 2 * m.noun_vectors["cone"]
    np.testing.assert_allclose(classical_sentence_vec(m, "cube", "left", "cone"), 2 * base)
    m.noun_vectors["cube"] = 2 * m.noun_vectors["cube"]
    np.testing.assert_allclose(classical_sentence_vec(m, "cube", "left", "cone"), 4 * base)


def test_classical_loss_at_zero():
    m = small_model(3)
    assert classical_loss(m, np.ones(3), ("cube", "left", "cone"), ("cube", "right", "cone")) == \
        pytest.approx(2 * math.log(2))


def test_classical_loss_saturates():
    m = small_model(1)
    m.noun_vectors["cube"] = np.ones(1)
    m.noun_vectors["cone"] = np.ones(1)
    m.relation_matrices["isLeftOf"] = np.array([[30.0]])
    m.relation_matrices["isRightOf"] = np.array([[-30.0]])
    loss = classical_loss(m, np.ones(1), ("cube", "left", "cone"), ("cube", "right", "cone"))
    assert loss < 1e-12


def test_classical_gradient_matches_fd():
    rng = np.random.default_rng(2)
    for _ in range(10):
        m = ClassicalModel.init(4, rng, sd=0.7)
        img = rng.normal(size=4)
        pos, neg = ("sphere", "left", "cone"), ("sphere", "right", "cone")
        _, g = classical_loss_and_grad(m, img, pos, neg)
        theta = m.to_vector()
        fd = _fd_grad(lambda t: classical_loss(m.from_vector(t), img, pos, neg), theta, h=1e-5)
        err = np.max(np.abs(g.to_vector() - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert err < 1e-6


def test_classical_batch_gradient_matches_fd():
    rng = np.random.default_rng(3)
    records = generate(noise=0.1, rng=rng)[::37]
    m = ClassicalModel.init(8, rng, sd=0.5)
    _, g = classical_batch(m, records)
    fd = _fd_grad(lambda t: classical_batch(m.from_vector(t), records, with_grad=False)[0], m.to_vector())
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6


def test_classical_json_round_trip_and_scores():
    rng = np.random.default_rng(4)
    m = ClassicalModel.init(8, rng)
    back = ClassicalModel.from_json(m.to_json())
    np.testing.assert_array_equal(back.to_vector(), m.to_vector())
    records = generate(rng=rng)[:3]
    pos, neg = classical_scores(m, records)
    r = records[0]
    assert pos[0] == pytest.approx(r.features @ classical_sentence_vec(m, r.subject, r.relation, r.object))


def test_prediction_invariant_under_monotone_rescaling():
    rng = np.random.default_rng(6)
    pos, neg = rng.uniform(size=50), rng.uniform(size=50)
    for f in (np.exp, lambda x: 3 * x + 1, np.sqrt):
        assert np.array_equal(pos > neg, f(pos) > f(neg))
