"""String diagrams built from derivations, with a dense real-tensor semantics.

Wires are numbered by their position in the flattened factor sequence, so a
diagram is a list of word boxes, the wires each box owns, and the cups that
join pairs of wires.  :func:`contract` evaluates it by pairing cupped axes
with the Euclidean inner product.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pregroup import BasicType, Derivation, PregroupType, SimpleType


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    word: str
    type: PregroupType
    wires: tuple[int, ...]


@dataclass(frozen=True)
class Diagram:
    boxes: tuple[Box, ...]
    wires: Mapping[int, SimpleType]
    cups: tuple[tuple[int, int], ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        owner = {}
        for b in self.boxes:
            if len(b.wires) != len(b.type):
                raise ValueError(f"box {b.word!r} has {len(b.wires)} wires for type {b.type}")
            for w in b.wires:
                if w in owner:
                    raise ValueError(f"wire {w} appears on two boxes")
                owner[w] = b.word
        if set(owner) != set(self.wires):
            raise ValueError("wire table does not match the boxes")
        seen = set()
        for a, b in self.cups:
            if a in seen or b in seen:
                raise ValueError(f"wire in more than one cup: {(a, b)}")
            seen.update((a, b))
            ta, tb = self.wires[a], self.wires[b]
            if not (ta.cancels(tb) or tb.cancels(ta)):
                raise ValueError(f"cup {(a, b)} joins non-adjoint types {ta} and {tb}")
        if seen & set(self.outputs) or len(seen) + len(self.outputs) != len(self.wires):
            raise ValueError("outputs must be exactly the uncupped wires")

    def to_json(self) -> str:
        return json.dumps(
            {
                "boxes": [{"word": b.word, "type": str(b.type), "wires": list(b.wires)} for b in self.boxes],
                "wires": {str(k): str(v) for k, v in sorted(self.wires.items())},
                "cups": [list(c) for c in self.cups],
                "outputs": list(self.outputs),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> Diagram:
        raw = json.loads(text)
        wires = {int(k): PregroupType.parse(v).factors[0] for k, v in raw["wires"].items()}
        boxes = tuple(Box(b["word"], PregroupType.parse(b["type"]), tuple(b["wires"])) for b in raw["boxes"])
        return cls(boxes, wires, tuple(tuple(c) for c in raw["cups"]), tuple(raw["outputs"]))


def diagram_from_derivation(d: Derivation) -> Diagram:
    """One box per word, one wire per factor, one cup per contraction.

    Derivations that do not reach ``s`` are accepted too; their residue
    wires become the outputs.
    """
    boxes, wires = [], {}
    pos = 0
    for word, t in d.input:
        ids = tuple(range(pos, pos + len(t)))
        boxes.append(Box(word, t, ids))
        wires.update(zip(ids, t.factors))
        pos += len(t)
    cupped = {w for c in d.cups for w in c}
    outputs = tuple(w for w in range(pos) if w not in cupped)
    return Diagram(tuple(boxes), wires, tuple(d.cups), outputs)


@dataclass
class TensorAssignment:
    dims: Mapping[BasicType | str, int]
    tensors: Mapping[str, np.ndarray] = field(default_factory=dict)

    def dim(self, t: SimpleType) -> int:
        try:
            return int(self.dims[t.base])
        except KeyError:
            return int(self.dims[str(t.base)])


def contract(diag: Diagram, assign: TensorAssignment, order: Sequence[int] | None = None) -> np.ndarray:
    """Evaluate ``diag`` to a tensor over its output wires.

    ``order`` permutes the cup processing sequence (default left to right);
    the result does not depend on it up to rounding.
    """
    # live tensors carry a wire label per axis
    live: list[tuple[np.ndarray, list[int]]] = []
    for box in diag.boxes:
        arr = np.asarray(assign.tensors[box.word], dtype=float)
        if arr.ndim != len(box.wires):
            raise DimensionMismatch(
                f"tensor for {box.word!r} has rank {arr.ndim}, type {box.type} needs {len(box.wires)}"
            )
        for axis, w in enumerate(box.wires):
            want = assign.dim(diag.wires[w])
            if want < 1:
                raise DimensionMismatch(f"non-positive dimension for wire {w}")
            if arr.shape[axis] != want:
                raise DimensionMismatch(
                    f"wire {w} ({diag.wires[w]}) of {box.word!r} has size {arr.shape[axis]}, expected {want}"
                )
        live.append((arr, list(box.wires)))

    cups = list(diag.cups)
    if order is not None:
        cups = [cups[i] for i in order]

    def find(w):
        for k, (_, labels) in enumerate(live):
            if w in labels:
                return k
        raise KeyError(w)

    for a, b in cups:
        ka, kb = find(a), find(b)
        if ka == kb:
            arr, labels = live[ka]
            ia, ib = labels.index(a), labels.index(b)
            arr = np.trace(arr, axis1=ia, axis2=ib)
            live[ka] = (arr, [w for w in labels if w not in (a, b)])
        else:
            (xa, la), (xb, lb) = live[ka], live[kb]
            arr = np.tensordot(xa, xb, axes=([la.index(a)], [lb.index(b)]))
            labels = [w for w in la if w != a] + [w for w in lb if w != b]
            for k in sorted((ka, kb), reverse=True):
                live.pop(k)
            live.append((arr, labels))

    arr = np.ones(())
    labels: list[int] = []
    for x, lx in live:
        arr = np.multiply.outer(arr, x)
        labels += lx
    return np.transpose(arr, [labels.index(w) for w in diag.outputs])


def _snake_diagrams() -> list[tuple[str, Diagram]]:
    # Each snake is closed into a tensor over (out, in): the input end is fed by
    # an identity "in" box whose other leg stays open.
    A = SimpleType(BasicType.n)
    Al, Ar = A.l, A.r
    T = PregroupType
    out = []
    # (1_A (x) eps^l) o (eta^l (x) 1_A):  eta^l = A.A^l, then A^l.A cupped
    out.append(("1_A", Diagram(
        (Box("eta", T((A, Al)), (0, 1)), Box("in", T((A, A)), (2, 3))),
        {0: A, 1: Al, 2: A, 3: A}, ((1, 2),), (0, 3))))
    # (eps^r (x) 1_A) o (1_A (x) eta^r):  A.A^r cupped, eta^r = A^r.A
    out.append(("1_A", Diagram(
        (Box("in", T((A, A)), (0, 1)), Box("eta", T((Ar, A)), (2, 3))),
        {0: A, 1: A, 2: Ar, 3: A}, ((1, 2),), (3, 0))))
    # (eps^l (x) 1_{A^l}) o (1_{A^l} (x) eta^l):  A^l.A cupped, eta^l = A.A^l
    out.append(("1_Al", Diagram(
        (Box("in", T((Al, Al)), (0, 1)), Box("eta", T((A, Al)), (2, 3))),
        {0: Al, 1: Al, 2: A, 3: Al}, ((1, 2),), (3, 0))))
    # (1_{A^r} (x) eps^r) o (eta^r (x) 1_{A^r}):  eta^r = A^r.A, then A.A^r cupped
    out.append(("1_Ar", Diagram(
        (Box("eta", T((Ar, A)), (0, 1)), Box("in", T((Ar, Ar)), (2, 3))),
        {0: Ar, 1: A, 2: Ar, 3: Ar}, ((1, 2),), (0, 3))))
    return out


def snake_check(dim: int, tol: float = 1e-12) -> bool:
    """Evaluate the four snake equations at dimension ``dim``."""
    if dim < 1:
        raise ValueError("dim must be positive")
    eye = np.eye(dim)
    assign = TensorAssignment({"n": dim}, {"eta": eye, "in": eye})
    for _, diag in _snake_diagrams():
        got = contract(diag, assign)
        if got.shape != (dim, dim) or np.max(np.abs(got - eye)) > tol:
            return False
    return True
