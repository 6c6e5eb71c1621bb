"""Training loop, multi-seed protocol, evaluation and checkpoints."""
from __future__ import annotations

import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import kernels, optim
from .dataset import CaptionRecord, by_split, caption_text, default_split, enumerate_captions, generate, load_split, read_records
from .encoders import load_features
from .model import (ClassicalModel, MatcherConfig, QuantumMatcher, classical_batch, classical_scores,
                    quantum_batch, quantum_scores)

log = logging.getLogger(__name__)

EVAL_SPLITS = ("train", "id_val", "ood_val", "ood_test")


class TrainingError(RuntimeError):
    pass


def stream(seed: int, name: str) -> np.random.Generator:
    """Named, independent random stream derived from one root seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


@dataclass
class TrainConfig:
    model: str = "quantum"          # quantum | classical
    encoder: str = "mhe"            # quantum image encoder: mhe | angle | amplitude
    alignment: str = "box"          # box | widen
    features: str = "mhe"           # data source: mhe | synthetic | external
    noise: float = 0.0
    epochs: int = 100
    lr: float = 0.001
    batch: int = 8
    seeds: list[int] = field(default_factory=lambda: [1])
    optimizer: str = "adam"
    layers: int = 3
    box_layers: int = 2
    noun_qubits: int = 1
    angle_qubits: int = 9
    amplitude_qubits: int = 12
    images_per_caption: int = 20
    data_seed: int = 1
    data: str | None = None
    features_path: str | None = None
    split: str | None = None

    def __post_init__(self):
        self.seeds = [int(s) for s in self.seeds]
        problems = []
        if self.model not in ("quantum", "classical"):
            problems.append(f"model must be quantum or classical, got {self.model!r}")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.batch < 1:
            problems.append("batch must be >= 1")
        if not self.lr > 0:
            problems.append("lr must be > 0")
        if not self.seeds:
            problems.append("seeds must be non-empty")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_dict(cls, raw: dict) -> TrainConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**raw)

    def matcher_config(self) -> MatcherConfig:
        return MatcherConfig(encoder=self.encoder, alignment=self.alignment, layers=self.layers,
                             noun_qubits=self.noun_qubits, box_layers=self.box_layers,
                             angle_qubits=self.angle_qubits, amplitude_qubits=self.amplitude_qubits)


def load_records(config: TrainConfig) -> list[CaptionRecord]:
    if config.data:
        return read_records(config.data, config.features_path)
    split = load_split(config.split) if config.split else default_split()
    feature_map = load_features(config.features_path) if config.features == "external" else None
    return generate(split, features=config.features, noise=config.noise,
                    images_per_caption=config.images_per_caption,
                    rng=stream(config.data_seed, "data"), feature_map=feature_map)


# -- models behind one evaluation interface ---------------------------------------


class QuantumRun:
    kind = "quantum"
    threshold = 0.5

    def __init__(self, config: TrainConfig, records: Sequence[CaptionRecord], encoder_state=None):
        captions = [caption_text(*t) for t in enumerate_captions()]
        self.matcher = QuantumMatcher(config.matcher_config(), captions)
        if encoder_state:
            self.matcher.load_encoder_state(encoder_state)
        else:
            train = [r.features for r in records if r.split == "train"]
            self.matcher.fit_encoder(np.array(train))
        self._preps: dict[str, np.ndarray] = {}
        self.params = np.zeros(len(self.matcher.registry))

    def preps(self, records):
        out = []
        for r in records:
            p = self._preps.get(r.id)
            if p is None:
                p = self.matcher.prep_state(r.features)
                self._preps[r.id] = p
            out.append(p)
        return out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, 2 * np.pi, len(self.matcher.registry))

    def loss_and_grad(self, records, params, with_grad=True):
        return quantum_batch(self.matcher, records, self.preps(records), params, with_grad)

    def scores(self, records, params=None):
        params = self.params if params is None else params
        return quantum_scores(self.matcher, records, self.preps(records), params)

    @property
    def n_params(self) -> int:
        return len(self.matcher.registry)

    def slot_name(self, index: int) -> str:
        s = self.matcher.registry.slots[index]
        return f"{s.owner}[{s.position}]"

    def checkpoint(self, config: TrainConfig) -> dict:
        return {"kind": "quantum", "config": asdict(config),
                "slots": self.matcher.registry.to_json(self.params),
                "encoder_state": self.matcher.encoder_state()}


class ClassicalRun:
    kind = "classical"
    threshold = 0.0

    def __init__(self, config: TrainConfig, records: Sequence[CaptionRecord]):
        self.d = len(records[0].features)
        self.template = ClassicalModel.init(self.d, np.random.default_rng(0))
        self.params = self.template.to_vector()

    def init_params(self, rng):
        return ClassicalModel.init(self.d, rng).to_vector()

    def model(self, params=None) -> ClassicalModel:
        return self.template.from_vector(self.params if params is None else params)

    def loss_and_grad(self, records, params, with_grad=True):
        return classical_batch(self.model(params), records, with_grad)

    def scores(self, records, params=None):
        return classical_scores(self.model(params), records)

    @property
    def n_params(self) -> int:
        return self.params.size

    def slot_name(self, index: int) -> str:
        return f"theta[{index}]"

    def checkpoint(self, config: TrainConfig) -> dict:
        return {"kind": "classical", "config": asdict(config), **self.model().to_json()}


def build(config: TrainConfig, records):
    return QuantumRun(config, records) if config.model == "quantum" else ClassicalRun(config, records)


def accuracy(pos: np.ndarray, neg: np.ndarray, threshold: float) -> tuple[float, float]:
    """Image counting (pos strictly beats neg) and pair counting (each score vs threshold)."""
    if len(pos) == 0:
        return float("nan"), float("nan")
    image = float(np.mean(pos > neg))
    pair = float((np.sum(pos > threshold) + np.sum(neg < threshold)) / (2 * len(pos)))
    return image, pair


def evaluate(run, records, params=None) -> dict[str, dict]:
    """Accuracy per split under image- and pair-counting conventions."""
    parts = by_split(records)
    out = {}
    for split in EVAL_SPLITS:
        recs = parts.get(split, [])
        if not recs:
            continue
        pos, neg = run.scores(recs, params)
        image, pair = accuracy(pos, neg, run.threshold)
        out[split] = {"image": image, "pair": pair, "n": len(recs)}
    return out


@dataclass
class SeedResult:
    seed: int
    losses: list[float]
    history: list[dict]
    final: dict
    params: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {"seed": self.seed, "losses": self.losses, "history": self.history, "final": self.final}


@dataclass
class RunReport:
    config: dict
    seeds: list[SeedResult]
    selected_seed: int
    n_params: int
    params_per_caption: dict | None
    wall_clock: float
    backend: str

    @property
    def selected(self) -> SeedResult:
        return next(s for s in self.seeds if s.seed == self.selected_seed)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "selected_seed": self.selected_seed,
            "selected": self.selected.final,
            "n_params": self.n_params,
            "params_per_caption": self.params_per_caption,
            "seeds": [s.to_json() for s in self.seeds],
            "wall_clock": self.wall_clock,
            "backend": self.backend,
        }


def _select(results: Sequence[SeedResult]) -> int:
    def key(r):
        acc = r.final.get("ood_val", {}).get("image", float("-inf"))
        return (-acc, r.seed)
    return min(results, key=key).seed


def train_seed(config: TrainConfig, run, records, seed: int, progress=None) -> SeedResult:
    train = [r for r in records if r.split == "train"]
    if not train:
        raise TrainingError("no training records")
    params = run.init_params(stream(seed, "init"))
    run.params = params
    opt = optim.make(config.optimizer, config.lr)
    shuffle = stream(seed, "shuffle")
    losses, history = [], []
    final = evaluate(run, records, params)
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(train))
        total = 0.0
        for b, start in enumerate(range(0, len(train), config.batch)):
            batch = [train[k] for k in order[start:start + config.batch]]
            loss, grad = run.loss_and_grad(batch, params)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                worst = int(np.nanargmax(np.where(np.isfinite(grad), np.abs(grad), np.inf)))
                raise TrainingError(
                    f"non-finite loss at seed {seed}, epoch {epoch}, batch {b}; "
                    f"largest |grad| at {run.slot_name(worst)}")
            params = opt.step(params, grad)
            total += loss * len(batch)
        run.params = params
        losses.append(total / len(train))
        final = evaluate(run, records, params)
        history.append({s: m["image"] for s, m in final.items()})
        if progress:
            progress(seed, epoch, losses[-1], final)
    return SeedResult(seed, losses, history, final, params.copy())


def train(config: TrainConfig, records: Sequence[CaptionRecord] | None = None, progress=None):
    """Train every seed; returns the report and the run holding the selected seed's parameters."""
    t0 = time.perf_counter()
    records = load_records(config) if records is None else list(records)
    results = []
    run = None
    for seed in config.seeds:
        run = build(config, records) if run is None else run
        results.append(train_seed(config, run, records, seed, progress))
    selected = _select(results)
    run.params = next(r.params for r in results if r.seed == selected)
    per_caption = None
    if config.model == "quantum":
        per_caption = {c: run.matcher.params_per_caption(c) for c in sorted({r.caption for r in records})}
    report = RunReport(asdict(config), results, selected, run.n_params, per_caption,
                       time.perf_counter() - t0, kernels.BACKEND)
    return report, run


def save_checkpoint(path, run, config: TrainConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(run.checkpoint(config), fh)


def load_checkpoint(path, records):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    config = TrainConfig.from_dict(raw["config"])
    if raw["kind"] == "quantum":
        run = QuantumRun(config, records, encoder_state=raw.get("encoder_state"))
        expected = run.matcher.registry.to_json()
        stored = [{k: e[k] for k in ("id", "owner", "position")} for e in raw["slots"]]
        if stored != expected:
            raise ValueError("checkpoint slots do not match the model layout")
        run.params = np.array([e["value"] for e in raw["slots"]], dtype=float)
    elif raw["kind"] == "classical":
        run = ClassicalRun(config, records)
        run.params = ClassicalModel.from_json(raw).to_vector()
    else:
        raise ValueError(f"unknown checkpoint kind {raw['kind']!r}")
    return run, config
