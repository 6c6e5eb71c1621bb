"""The 24-caption spatial-relation task: captions, splits and feature records."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from . import encoders
from .pregroup import RELATION_WORDS, SHAPES

SPLITS = ("train", "id_val", "ood_val", "ood_test")
CAPTION_SPLITS = ("train", "ood_val", "ood_test")
OPPOSITE = {"left": "right", "right": "left"}


def caption_text(subject: str, relation: str, obj: str) -> str:
    return f"{subject} {RELATION_WORDS[relation]} {obj}"


def split_caption(caption: str) -> tuple[str, str, str]:
    subject, rel_word, obj = caption.split()
    inverse = {v: k for k, v in RELATION_WORDS.items()}
    if rel_word not in inverse:
        raise ValueError(f"unknown relation in caption {caption!r}")
    return subject, inverse[rel_word], obj


def enumerate_captions() -> list[tuple[str, str, str]]:
    """All ordered pairs of distinct shapes with both relations, sorted."""
    triples = [(s, r, o) for s, o in itertools.permutations(SHAPES, 2) for r in ("left", "right")]
    return sorted(triples)


@dataclass
class CaptionRecord:
    id: str
    subject: str
    object: str
    relation: str
    caption: str
    neg_caption: str
    split: str
    features: np.ndarray

    def to_json(self, inline: bool = True) -> str:
        raw = {
            "id": self.id, "subject": self.subject, "object": self.object,
            "relation": self.relation, "caption": self.caption,
            "neg_caption": self.neg_caption, "split": self.split,
        }
        if inline:
            raw["features"] = [float(x) for x in self.features]
        else:
            raw["features_ref"] = self.id
        return json.dumps(raw)


class SplitError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid split: " + "; ".join(self.problems))


class SplitSpec(dict):
    """Caption string -> one of ``train``, ``ood_val``, ``ood_test``."""

    def problems(self) -> list[str]:
        out = []
        wanted = {caption_text(*t) for t in enumerate_captions()}
        missing = sorted(wanted - set(self))
        extra = sorted(set(self) - wanted)
        if missing:
            out.append(f"missing captions: {', '.join(missing)}")
        if extra:
            out.append(f"unknown captions: {', '.join(extra)}")
        bad = sorted(c for c, lab in self.items() if lab not in CAPTION_SPLITS)
        if bad:
            out.append(f"bad labels for: {', '.join(bad)} (allowed: {', '.join(CAPTION_SPLITS)})")
        train = [split_caption(c) for c, lab in self.items() if lab == "train" and c in wanted]
        seen_shapes = {s for s, _, _ in train} | {o for _, _, o in train}
        for shape in SHAPES:
            if shape not in seen_shapes:
                out.append(f"shape {shape!r} never appears in a train caption")
        for rel in RELATION_WORDS:
            if rel not in {r for _, r, _ in train}:
                out.append(f"relation {rel!r} never appears in a train caption")
        return out

    def validate(self) -> SplitSpec:
        problems = self.problems()
        if problems:
            raise SplitError(problems)
        return self


def load_split(path) -> SplitSpec:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise SplitError(["split file must be a JSON object caption -> label"])
    return SplitSpec(raw).validate()


def default_split() -> SplitSpec:
    """11 train / 5 OOD-validation / 8 OOD-test captions.

    Test captions are the two shape pairs ({sphere, cube}, {cylinder, cone})
    that never co-occur in training, validation holds {sphere, cone} plus
    one {cylinder, cube} caption.
    """
    text = resources.files("discoq").joinpath("data/default_split.json").read_text(encoding="utf-8")
    return SplitSpec(json.loads(text)).validate()


def generate(split: SplitSpec | None = None, features: str = "mhe", noise: float = 0.0,
             images_per_caption: int = 20, rng: np.random.Generator | None = None,
             feature_map: Mapping[str, np.ndarray] | None = None,
             id_val_per_caption: int = 2) -> list[CaptionRecord]:
    """Records for every caption image, in caption order.

    ``features`` is ``mhe`` (optionally with Gaussian ``noise``), ``synthetic``
    (clustered 512-dim vectors) or ``external`` (looked up in ``feature_map``
    by ``<caption_index>_<image_index>``).  The last ``id_val_per_caption``
    images of each train caption form the in-distribution validation split.
    """
    split = default_split() if split is None else SplitSpec(split).validate()
    rng = np.random.default_rng(0) if rng is None else rng
    triples = enumerate_captions()
    if features == "synthetic":
        feature_map = encoders.synthetic_features(len(triples), images_per_caption, rng)
    elif features == "external":
        if feature_map is None:
            raise ValueError("external features need a feature_map")
    elif features != "mhe":
        raise ValueError(f"unknown feature source {features!r}")
    if not 0 <= id_val_per_caption < images_per_caption:
        raise ValueError("id_val_per_caption must leave training images")

    records = []
    for ci, (s, r, o) in enumerate(triples):
        caption = caption_text(s, r, o)
        label = split[caption]
        for ii in range(images_per_caption):
            rid = f"{ci}_{ii}"
            if features == "mhe":
                vec = encoders.add_noise(encoders.mhe(s, r, o), noise, rng)
            else:
                try:
                    vec = np.asarray(feature_map[rid], dtype=float)
                except KeyError:
                    raise ValueError(f"no features for image {rid}") from None
            rec_split = label
            if label == "train" and ii >= images_per_caption - id_val_per_caption:
                rec_split = "id_val"
            records.append(CaptionRecord(rid, s, o, r, caption, caption_text(s, OPPOSITE[r], o),
                                         rec_split, vec))
    return records


def write_records(path, records: Sequence[CaptionRecord], features_path=None) -> None:
    """JSON Lines; with ``features_path`` the vectors go to a CSV and lines carry refs."""
    inline = features_path is None
    if not inline:
        encoders.write_features(features_path, {r.id: r.features for r in records})
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json(inline=inline) + "\n")


def read_records(path, features_path=None) -> list[CaptionRecord]:
    feats = encoders.load_features(features_path) if features_path else None
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                if "features" in raw:
                    vec = np.asarray(raw["features"], dtype=float)
                else:
                    if feats is None:
                        raise ValueError("record references features but no feature file was given")
                    vec = feats[raw["features_ref"]]
                rec = CaptionRecord(raw["id"], raw["subject"], raw["object"], raw["relation"],
                                    raw["caption"], raw["neg_caption"], raw["split"], vec)
            except (KeyError, ValueError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if rec.split not in SPLITS:
                raise ValueError(f"{path}:{lineno}: unknown split {rec.split!r}")
            out.append(rec)
    if not out:
        raise ValueError(f"{path}: no records")
    return out


def by_split(records: Sequence[CaptionRecord]) -> dict[str, list[CaptionRecord]]:
    out: dict[str, list[CaptionRecord]] = {s: [] for s in SPLITS}
    for r in records:
        out[r.split].append(r)
    return out
