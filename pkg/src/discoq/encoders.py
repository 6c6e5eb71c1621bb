"""Image-side encodings: multi-hot vectors, PCA, amplitude and angle state prep."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ansatz import Circuit, Gate
from .pregroup import SHAPES

ONE_HOT = {shape: np.eye(4)[i] for i, shape in enumerate(SHAPES)}


def mhe(subject: str, relation: str, obj: str) -> np.ndarray:
    """8-bit multi-hot vector: the left-hand shape's one-hot code comes first."""
    if subject == obj:
        raise ValueError(f"subject and object are both {subject!r}")
    try:
        s, o = ONE_HOT[subject], ONE_HOT[obj]
    except KeyError as e:
        raise ValueError(f"unknown shape {e.args[0]!r}") from None
    if relation == "left":
        return np.concatenate([s, o])
    if relation == "right":
        return np.concatenate([o, s])
    raise ValueError(f"relation must be 'left' or 'right', got {relation!r}")


def add_noise(v: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    v = np.asarray(v, dtype=float)
    if sigma == 0:
        return v.copy()
    return v + rng.normal(0.0, sigma, size=v.shape)


class ConvergenceError(RuntimeError):
    def __init__(self, component: int, iterations: int):
        super().__init__(f"power iteration for component {component} did not converge in {iterations} iterations")
        self.component = component
        self.iterations = iterations


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal
    variances: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.components @ (np.asarray(v, dtype=float) - self.mean)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "variances": self.variances.tolist()}

    @classmethod
    def from_json(cls, raw: dict) -> PcaModel:
        return cls(np.asarray(raw["mean"]), np.asarray(raw["components"]), np.asarray(raw["variances"]))


def _sign_normalise(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


def pca_fit(data: np.ndarray, k: int, tol: float = 1e-10, max_iter: int = 10_000,
            seed: int = 0) -> PcaModel:
    """Top-``k`` principal axes by deflated power iteration on the covariance.

    Each component iterates until successive unit vectors differ by less than
    ``tol`` (up to sign).
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D array with at least two samples")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / (X.shape[0] - 1)
    d = C.shape[0]
    if k < 1 or k > d:
        raise ValueError(f"k={k} outside 1..{d}")
    scale = max(np.trace(C), np.finfo(float).tiny)
    rng = np.random.default_rng(seed)
    comps, variances = [], []
    A = C.copy()
    for i in range(k):
        v = rng.normal(size=d)
        # start orthogonal to what has already been found
        for c in comps:
            v -= (c @ v) * c
        v /= np.linalg.norm(v)
        lam = v @ A @ v
        for it in range(1, max_iter + 1):
            w = A @ v
            nw = np.linalg.norm(w)
            if nw <= 1e-12 * scale:
                raise ValueError(f"k={k} exceeds the rank of the data (component {i} has zero variance)")
            w /= nw
            if w @ v < 0:
                w = -w
            delta = np.linalg.norm(w - v)
            v = w
            if delta < tol:
                break
        else:
            raise ConvergenceError(i, max_iter)
        lam = v @ C @ v
        if lam <= 1e-12 * scale:
            raise ValueError(f"k={k} exceeds the rank of the data")
        v = _sign_normalise(v)
        comps.append(v)
        variances.append(lam)
        A = A - lam * np.outer(v, v)
    return PcaModel(mean, np.array(comps), np.array(variances))


def pca_apply(model: PcaModel, v: np.ndarray) -> np.ndarray:
    return model.apply(v)


# -- amplitude encoding --------------------------------------------------------

def _gray(i):
    return i ^ (i >> 1)


def _walsh_hadamard(a: np.ndarray) -> np.ndarray:
    """Unnormalised transform: ``out[m] = sum_j (-1)^{popcount(j & m)} a[j]``."""
    out = np.array(a, dtype=float)
    h = 1
    while h < out.size:
        v = out.reshape(-1, 2, h)
        x, y = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 0, :] = x + y
        v[:, 1, :] = x - y
        h *= 2
    return out


def _multiplexed_ry(alphas: np.ndarray, controls: Sequence[int], target: int) -> list[Gate]:
    """Uniformly controlled Ry: angle ``alphas[j]`` when the controls read ``j``.

    ``controls[0]`` is the most significant bit of ``j``.  Decomposed into
    ``2^k`` Ry and CNOT gates along a Gray code.
    """
    k = len(controls)
    if k == 0:
        return [Gate("Ry", (target,), float(alphas[0]))]
    size = 1 << k
    if np.all(np.abs(alphas) < 1e-15):
        return []
    # theta_i = 2^-k sum_j (-1)^{popcount(j & gray(i))} alpha_j
    thetas = _walsh_hadamard(alphas)[_gray(np.arange(size))] / size
    gates = []
    for i in range(size):
        gates.append(Gate("Ry", (target,), float(thetas[i])))
        # bit that flips between gray(i) and gray(i+1) selects the control
        changed = _gray(i) ^ _gray((i + 1) % size)
        bit = changed.bit_length() - 1
        gates.append(Gate("CNOT", (controls[k - 1 - bit], target)))
    return gates


def pad_and_normalise(v: np.ndarray, n_qubits: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or not np.any(v):
        raise ValueError("cannot amplitude-encode a zero vector")
    need = max(1, math.ceil(math.log2(v.size))) if v.size > 1 else 1
    n = need if n_qubits is None else n_qubits
    if n < need:
        raise ValueError(f"{v.size} features do not fit in {n} qubits")
    out = np.zeros(1 << n)
    out[: v.size] = v
    return out / np.linalg.norm(out)


def amplitude_encode(v: np.ndarray, n_qubits: int | None = None) -> Circuit:
    """State-preparation circuit whose output amplitudes are ``v / |v|``.

    ``v`` is zero-padded to ``2**n_qubits`` entries (default: the smallest
    power of two that fits).  Real inputs need only Ry rotations: inner
    levels split probability mass, the last level also carries signs.
    """
    amp = pad_and_normalise(v, n_qubits)
    n = int(amp.size).bit_length() - 1
    gates: list[Gate] = []
    for q in range(n):
        # amplitude blocks conditioned on the first q qubits
        blocks = amp.reshape(1 << q, 2, -1)
        if q < n - 1:
            a0 = np.linalg.norm(blocks[:, 0, :], axis=1)
            a1 = np.linalg.norm(blocks[:, 1, :], axis=1)
        else:
            a0, a1 = blocks[:, 0, 0], blocks[:, 1, 0]
        alphas = 2.0 * np.arctan2(a1, a0)
        gates += _multiplexed_ry(alphas, list(range(q)), q)
    return Circuit.fragment(n, gates)


# -- angle encoding ----------------------------------------------------------------

@dataclass(frozen=True)
class AngleScaler:
    """Per-feature min-max map onto ``[0, pi]``, fit on training data."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> AngleScaler:
        X = np.asarray(data, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        span = self.hi - self.lo
        out = np.full(v.shape, np.pi / 2)
        ok = span > 0
        out[ok] = np.pi * (v[ok] - self.lo[ok]) / span[ok]
        return np.clip(out, 0.0, np.pi)

    def to_json(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_json(cls, raw: dict) -> AngleScaler:
        return cls(np.asarray(raw["lo"]), np.asarray(raw["hi"]))


def angle_encode(angles: np.ndarray, n_qubits: int) -> Circuit:
    """Hadamards, then ``CRz(angles[i])`` on ring pairs ``(i, i+1 mod n)``.

    ``angles`` are already rescaled (see :class:`AngleScaler`).
    """
    angles = np.asarray(angles, dtype=float).ravel()
    if angles.size != n_qubits:
        raise ValueError(f"{angles.size} features for {n_qubits} qubits")
    if n_qubits < 2:
        raise ValueError("angle encoding needs at least two qubits")
    gates = [Gate("H", (q,)) for q in range(n_qubits)]
    gates += [Gate("CRz", (i, (i + 1) % n_qubits), float(angles[i])) for i in range(n_qubits)]
    return Circuit.fragment(n_qubits, gates)


# -- feature files ---------------------------------------------------------------

class FeatureFileError(ValueError):
    pass


def write_features(path, features: Mapping[str, np.ndarray]) -> None:
    items = list(features.items())
    if not items:
        raise FeatureFileError("no features to write")
    dim = len(items[0][1])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"f{i}" for i in range(dim)])
        for key, vec in items:
            if len(vec) != dim:
                raise FeatureFileError(f"ragged vector for {key!r}")
            w.writerow([key] + [repr(float(x)) for x in vec])


def load_features(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise FeatureFileError(f"{path}: empty feature file")
        if header[0] != "id" or len(header) < 2:
            raise FeatureFileError(f"{path}:1: header must be id,f0,f1,...")
        dim = len(header) - 1
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != dim + 1:
                raise FeatureFileError(f"{path}:{line}: expected {dim} features, got {len(row) - 1}")
            try:
                vec = np.array([float(x) for x in row[1:]])
            except ValueError as e:
                raise FeatureFileError(f"{path}:{line}: {e}") from None
            if not np.all(np.isfinite(vec)):
                raise FeatureFileError(f"{path}:{line}: non-finite feature")
            out[row[0]] = vec
    if not out:
        raise FeatureFileError(f"{path}: no feature rows")
    return out


def synthetic_features(n_captions: int, images_per_caption: int, rng: np.random.Generator,
                       dim: int = 512, sigma: float = 0.05) -> dict[str, np.ndarray]:
    """Gaussian clusters standing in for vision-model image embeddings."""
    centers = rng.normal(size=(n_captions, dim))
    out = {}
    for c in range(n_captions):
        for i in range(images_per_caption):
            out[f"{c}_{i}"] = centers[c] + sigma * rng.normal(size=dim)
    return out
