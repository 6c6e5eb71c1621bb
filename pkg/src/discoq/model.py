"""Caption/image matching models.

The quantum matcher compiles captions with the IQP ansatz and compares the
caption state with an encoded image state by squared overlap.  The classical
baseline composes nouns and relation matrices with Copy-Subj and scores with
an inner product.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from . import encoders, simulator
from .ansatz import Circuit, ParameterRegistry, compile, word_circuit
from .diagram import diagram_from_derivation
from .pregroup import RELATION_WORDS, SHAPES, Lexicon, parse

BOX_OWNER = "IMG_BOX"
CLAMP = 1e-9


def worker_count() -> int:
    raw = os.environ.get("DISCOQ_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def trainable_box(image_prep: Circuit, n_image_qubits: int, registry: ParameterRegistry,
                  layers: int = 2, entangler: str = "CRz") -> Circuit:
    """Append the shared ``IMG_BOX`` block and postselect all but the last qubit."""
    if n_image_qubits < 1:
        raise ValueError("the box needs at least one image qubit")
    gates = word_circuit(BOX_OWNER, n_image_qubits, layers, registry, entangler=entangler)
    return image_prep.then(gates, {q: 0 for q in range(n_image_qubits - 1)})


@dataclass
class MatcherConfig:
    encoder: str = "mhe"          # mhe | angle | amplitude
    alignment: str = "box"        # box | widen
    layers: int = 3
    noun_qubits: int = 1
    box_layers: int = 2
    angle_qubits: int = 9
    amplitude_qubits: int = 12
    entangler: str = "CRz"

    def __post_init__(self):
        if self.encoder not in ("mhe", "angle", "amplitude"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.alignment not in ("box", "widen"):
            raise ValueError(f"unknown alignment {self.alignment!r}")

    @property
    def image_qubits(self) -> int:
        return {"mhe": 3, "angle": self.angle_qubits, "amplitude": self.amplitude_qubits}[self.encoder]

    @property
    def sentence_qubits(self) -> int:
        return 1 if self.alignment == "box" else self.image_qubits


class QuantumMatcher:
    """Compiled caption circuits, image encoders and the shared slot registry.

    Slots are created in a fixed order: all task captions first (in the order
    given to the constructor), then the image box.
    """

    def __init__(self, config: MatcherConfig, captions: Sequence[str] = (),
                 registry: ParameterRegistry | None = None, lexicon: Lexicon | None = None):
        self.config = config
        self.registry = ParameterRegistry() if registry is None else registry
        self.lexicon = Lexicon.default() if lexicon is None else lexicon
        self._captions: dict[str, Circuit] = {}
        self.pca: encoders.PcaModel | None = None
        self.scaler: encoders.AngleScaler | None = None
        for c in captions:
            self.caption_circuit(c)
        self.box = None
        if config.alignment == "box":
            empty = Circuit.fragment(config.image_qubits, [])
            self.box = trainable_box(empty, config.image_qubits, self.registry,
                                     config.box_layers, config.entangler)

    @property
    def qubit_config(self) -> dict[str, int]:
        return {"n": self.config.noun_qubits, "s": self.config.sentence_qubits, "p": 1}

    def caption_circuit(self, caption: str) -> Circuit:
        circ = self._captions.get(caption)
        if circ is None:
            diag = diagram_from_derivation(parse(caption, self.lexicon))
            circ = compile(diag, self.qubit_config, self.config.layers, self.registry, self.config.entangler)
            self._captions[caption] = circ
        return circ

    def params_per_caption(self, caption: str) -> int:
        return self.caption_circuit(caption).n_params

    # -- image side ---------------------------------------------------------

    def fit_encoder(self, train_features: np.ndarray) -> None:
        """Fit PCA and angle rescaling on training features (angle encoder only)."""
        if self.config.encoder == "angle":
            X = np.asarray(train_features, dtype=float)
            self.pca = encoders.pca_fit(X, self.config.angle_qubits)
            self.scaler = encoders.AngleScaler.fit(np.array([self.pca.apply(x) for x in X]))

    def image_prep(self, features: np.ndarray) -> Circuit:
        enc = self.config.encoder
        if enc == "mhe":
            return encoders.amplitude_encode(features, 3)
        if enc == "amplitude":
            return encoders.amplitude_encode(features, self.config.amplitude_qubits)
        if self.pca is None or self.scaler is None:
            raise RuntimeError("angle encoder used before fit_encoder")
        angles = self.scaler.transform(self.pca.apply(features))
        return encoders.angle_encode(angles, self.config.angle_qubits)

    def image_circuit(self, features: np.ndarray) -> Circuit:
        prep = self.image_prep(features)
        if self.config.alignment == "widen":
            return prep
        return prep.then(self.box.gates, self.box.postselect)

    def prep_state(self, features: np.ndarray) -> np.ndarray:
        return simulator.run(self.image_prep(features)).amplitudes

    def image_state(self, prep: np.ndarray, params) -> np.ndarray:
        if self.box is None:
            return prep
        return simulator.run(self.box, params, initial=prep).amplitudes

    def caption_state(self, caption: str, params) -> np.ndarray:
        return simulator.run(self.caption_circuit(caption), params).amplitudes

    def encoder_state(self) -> dict:
        out = {}
        if self.pca is not None:
            out["pca"] = self.pca.to_json()
            out["scaler"] = self.scaler.to_json()
        return out

    def load_encoder_state(self, raw: Mapping) -> None:
        if "pca" in raw:
            self.pca = encoders.PcaModel.from_json(raw["pca"])
            self.scaler = encoders.AngleScaler.from_json(raw["scaler"])


def score(matcher: QuantumMatcher, caption: str, image_features: np.ndarray, params) -> float:
    """Squared overlap between the caption state and the image state."""
    c = simulator.run(matcher.caption_circuit(caption), params)
    i = simulator.run(matcher.image_circuit(image_features), params)
    return simulator.overlap(c, i)


def quantum_loss_terms(p_pos: float, p_neg: float) -> tuple[float, float, float]:
    """Loss and its derivatives with respect to the two scores.

    The derivative is zero where a clamp is active.
    """
    hi = 1.0 - CLAMP
    cp = min(max(p_pos, CLAMP), hi)
    cn = min(max(p_neg, CLAMP), hi)
    loss = -np.log(cp) - np.log(1.0 - cn)
    d_pos = -1.0 / cp if CLAMP < p_pos < hi else 0.0
    d_neg = 1.0 / (1.0 - cn) if CLAMP < p_neg < hi else 0.0
    return float(loss), d_pos, d_neg


def quantum_loss(matcher: QuantumMatcher, record, params, prep: np.ndarray | None = None) -> float:
    prep = matcher.prep_state(record.features) if prep is None else prep
    i = matcher.image_state(prep, params)
    c_pos = matcher.caption_state(record.caption, params)
    c_neg = matcher.caption_state(record.neg_caption, params)
    return quantum_loss_terms(simulator.overlap(c_pos, i), simulator.overlap(c_neg, i))[0]


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def quantum_batch(matcher: QuantumMatcher, records, preps: Sequence[np.ndarray], params,
                  with_grad: bool = True):
    """Mean loss over ``records`` and its gradient over all slots.

    Each caption state is computed once per batch; its gradient is one adjoint
    pass with the cotangents of every record that uses it summed in.
    """
    params = np.asarray(params, dtype=float)
    captions = list(dict.fromkeys(c for r in records for c in (r.caption, r.neg_caption)))
    c_states = {c: matcher.caption_state(c, params) for c in captions}
    i_states = [matcher.image_state(p, params) for p in preps]
    g_cap = {c: np.zeros_like(s) for c, s in c_states.items()}
    g_img = []
    total = 0.0
    for rec, img in zip(records, i_states):
        gi = np.zeros_like(img)
        a_pos = np.vdot(img, c_states[rec.caption])
        a_neg = np.vdot(img, c_states[rec.neg_caption])
        loss, d_pos, d_neg = quantum_loss_terms(abs(a_pos) ** 2, abs(a_neg) ** 2)
        total += loss
        for cap, a, d in ((rec.caption, a_pos, d_pos), (rec.neg_caption, a_neg, d_neg)):
            if d != 0.0:
                # p = |<i|c>|^2: dp = Re<2 a i | dc> = Re<2 conj(a) c | di>
                g_cap[cap] += 2.0 * d * a * img
                gi += 2.0 * d * np.conj(a) * c_states[cap]
        g_img.append(gi)
    n = len(records)
    if not with_grad:
        return total / n, None

    workers = worker_count() if matcher.caption_circuit(captions[0]).n_qubits >= 10 else 1
    jobs = [("c", c) for c in captions]
    if matcher.box is not None:
        jobs += [("i", k) for k in range(n)]

    def one(job):
        kind, key = job
        out = np.zeros(params.size)
        if kind == "c":
            simulator.gradient(matcher.caption_circuit(key), params, g_cap[key], out=out)
        else:
            simulator.gradient(matcher.box, params, g_img[key], initial=preps[key], out=out)
        return out

    grad = np.zeros(params.size)
    for part in _map(one, jobs, workers):
        grad += part
    return total / n, grad / n


def quantum_scores(matcher: QuantumMatcher, records, preps, params) -> tuple[np.ndarray, np.ndarray]:
    captions = list(dict.fromkeys(c for r in records for c in (r.caption, r.neg_caption)))
    c_states = {c: matcher.caption_state(c, params) for c in captions}
    pos, neg = np.empty(len(records)), np.empty(len(records))
    for k, (rec, prep) in enumerate(zip(records, preps)):
        img = matcher.image_state(prep, params)
        pos[k] = abs(np.vdot(img, c_states[rec.caption])) ** 2
        neg[k] = abs(np.vdot(img, c_states[rec.neg_caption])) ** 2
    return pos, neg


# -- classical baseline -------------------------------------------------------------

RELATIONS = tuple(RELATION_WORDS.values())


def _rel_word(relation: str) -> str:
    return RELATION_WORDS.get(relation, relation)


@dataclass
class ClassicalModel:
    noun_vectors: dict[str, np.ndarray]
    relation_matrices: dict[str, np.ndarray]

    @property
    def d(self) -> int:
        return len(next(iter(self.noun_vectors.values())))

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, sd: float = 0.1) -> ClassicalModel:
        nouns = {s: rng.normal(0.0, sd, d) for s in SHAPES}
        rels = {r: rng.normal(0.0, sd, (d, d)) for r in RELATIONS}
        return cls(nouns, rels)

    def to_vector(self) -> np.ndarray:
        parts = [self.noun_vectors[s] for s in SHAPES] + [self.relation_matrices[r].ravel() for r in RELATIONS]
        return np.concatenate(parts)

    def from_vector(self, theta: np.ndarray) -> ClassicalModel:
        d = self.d
        nouns, k = {}, 0
        for s in SHAPES:
            nouns[s] = theta[k:k + d].copy()
            k += d
        rels = {}
        for r in RELATIONS:
            rels[r] = theta[k:k + d * d].reshape(d, d).copy()
            k += d * d
        return ClassicalModel(nouns, rels)

    def to_json(self) -> dict:
        return {"nouns": {k: v.tolist() for k, v in self.noun_vectors.items()},
                "relations": {k: v.tolist() for k, v in self.relation_matrices.items()}}

    @classmethod
    def from_json(cls, raw: Mapping) -> ClassicalModel:
        return cls({k: np.asarray(v, dtype=float) for k, v in raw["nouns"].items()},
                   {k: np.asarray(v, dtype=float) for k, v in raw["relations"].items()})


def classical_sentence_vec(model: ClassicalModel, subject: str, relation: str, obj: str) -> np.ndarray:
    """Copy-Subj composition ``subj * (Rel @ obj)``."""
    try:
        subj = model.noun_vectors[subject]
        o = model.noun_vectors[obj]
        rel = model.relation_matrices[_rel_word(relation)]
    except KeyError as e:
        raise KeyError(f"no classical entry for {e.args[0]!r}") from None
    return subj * (rel @ o)


def _softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def _sigmoid(x: float) -> float:
    return float(np.exp(-np.logaddexp(0.0, -x)))


def classical_loss(model: ClassicalModel, m: np.ndarray, pos: tuple, neg: tuple) -> float:
    """``-log sig(<m|pos>) - log sig(-<m|neg>)`` for (subject, relation, object) triples."""
    xp = float(np.dot(m, classical_sentence_vec(model, *pos)))
    xn = float(np.dot(m, classical_sentence_vec(model, *neg)))
    return _softplus(-xp) + _softplus(xn)


def classical_loss_and_grad(model: ClassicalModel, m: np.ndarray, pos: tuple, neg: tuple):
    """Loss and gradient as a :class:`ClassicalModel` of partial derivatives."""
    m = np.asarray(m, dtype=float)
    g_nouns = {s: np.zeros(model.d) for s in model.noun_vectors}
    g_rels = {r: np.zeros((model.d, model.d)) for r in model.relation_matrices}
    loss = 0.0
    for (subject, relation, obj), sign in ((pos, 1.0), (neg, -1.0)):
        subj, o = model.noun_vectors[subject], model.noun_vectors[obj]
        rel_key = _rel_word(relation)
        rel = model.relation_matrices[rel_key]
        u = rel @ o
        x = float(m @ (subj * u))
        loss += _softplus(-sign * x)
        dx = -sign * _sigmoid(-sign * x)
        msubj = m * subj
        g_nouns[subject] += dx * m * u
        g_nouns[obj] += dx * (rel.T @ msubj)
        g_rels[rel_key] += dx * np.outer(msubj, o)
    return loss, ClassicalModel(g_nouns, g_rels)


def _triples(rec):
    pos = (rec.subject, rec.relation, rec.object)
    neg = (rec.subject, "right" if rec.relation == "left" else "left", rec.object)
    return pos, neg


def classical_batch(model: ClassicalModel, records, with_grad: bool = True):
    total = 0.0
    grad = np.zeros(model.to_vector().size) if with_grad else None
    for rec in records:
        pos, neg = _triples(rec)
        if with_grad:
            loss, g = classical_loss_and_grad(model, rec.features, pos, neg)
            grad += g.to_vector()
        else:
            loss = classical_loss(model, rec.features, pos, neg)
        total += loss
    n = len(records)
    return total / n, (grad / n if with_grad else None)


def classical_scores(model: ClassicalModel, records) -> tuple[np.ndarray, np.ndarray]:
    pos, neg = np.empty(len(records)), np.empty(len(records))
    for k, rec in enumerate(records):
        p, q = _triples(rec)
        pos[k] = float(rec.features @ classical_sentence_vec(model, *p))
        neg[k] = float(rec.features @ classical_sentence_vec(model, *q))
    return pos, neg


def config_dict(config: MatcherConfig) -> dict:
    return asdict(config)
