"""IQP-style compilation of string diagrams into parameterised circuits.

Every word owns a block of parameter slots in a :class:`ParameterRegistry`;
compiling two captions that share a word reuses the same slots.  Cups become
Bell effects: ``CNOT`` then ``H`` on the left qubit, both postselected on 0.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .diagram import Diagram
from .pregroup import BasicType

GATE_KINDS = {"H": kernels.H, "Rx": kernels.RX, "Ry": kernels.RY, "Rz": kernels.RZ,
              "CRz": kernels.CRZ, "CNOT": kernels.CNOT, "CRx": kernels.CRX}
TWO_QUBIT = {"CRz", "CNOT", "CRx"}
ROTATIONS = {"Rx", "Ry", "Rz", "CRz", "CRx"}


@dataclass(frozen=True)
class ParameterSlot:
    id: int
    owner: str
    position: int

    def __str__(self) -> str:
        return f"slot:{self.id}"


class ParameterRegistry:
    """Word-keyed parameter slots.  Slot ids are dense, in creation order."""

    def __init__(self):
        self._slots: list[ParameterSlot] = []
        self._by_key: dict[tuple[str, int], ParameterSlot] = {}
        self._lock = threading.Lock()

    def slot(self, owner: str, position: int) -> ParameterSlot:
        key = (owner, position)
        with self._lock:
            found = self._by_key.get(key)
            if found is None:
                found = ParameterSlot(len(self._slots), owner, position)
                self._slots.append(found)
                self._by_key[key] = found
            return found

    def block(self, owner: str, size: int) -> list[ParameterSlot]:
        return [self.slot(owner, i) for i in range(size)]

    def owned_by(self, owner: str) -> list[ParameterSlot]:
        return [s for s in self._slots if s.owner == owner]

    @property
    def slots(self) -> tuple[ParameterSlot, ...]:
        return tuple(self._slots)

    def __len__(self) -> int:
        return len(self._slots)

    def to_json(self, values: Sequence[float] | None = None) -> list[dict]:
        out = []
        for s in self._slots:
            entry = {"id": s.id, "owner": s.owner, "position": s.position}
            if values is not None:
                entry["value"] = float(values[s.id])
            out.append(entry)
        return out

    @classmethod
    def from_json(cls, entries: list[dict]) -> ParameterRegistry:
        reg = cls()
        for e in sorted(entries, key=lambda e: e["id"]):
            s = reg.slot(e["owner"], e["position"])
            if s.id != e["id"]:
                raise ValueError(f"slot ids are not dense: {e}")
        return reg


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float | ParameterSlot | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate {self.kind!r}")
        want = 2 if self.kind in TWO_QUBIT else 1
        if len(self.qubits) != want:
            raise ValueError(f"{self.kind} takes {want} qubit(s), got {self.qubits}")
        if want == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"{self.kind} control equals target")
        if (self.kind in ROTATIONS) != (self.angle is not None):
            raise ValueError(f"bad angle {self.angle!r} for {self.kind}")

    def shifted(self, offset: int) -> Gate:
        return Gate(self.kind, tuple(q + offset for q in self.qubits), self.angle)

    def line(self) -> str:
        qs = ",".join(map(str, self.qubits))
        if self.angle is None:
            return f"{self.kind} {qs}"
        if isinstance(self.angle, ParameterSlot):
            return f"{self.kind} {qs} slot:{self.angle.id}"
        return f"{self.kind} {qs} {float(self.angle)!r}"


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]
    postselect: Mapping[int, int] = field(default_factory=dict)
    output_qubits: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for g in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g.line()} outside {self.n_qubits} qubits")
        ps, out = set(self.postselect), set(self.output_qubits)
        if ps & out or ps | out != set(range(self.n_qubits)) or len(out) != len(self.output_qubits):
            raise ValueError("postselected and output qubits must partition the register")

    @classmethod
    def fragment(cls, n_qubits: int, gates: Sequence[Gate]) -> Circuit:
        """A circuit with no postselection, all qubits open."""
        return cls(n_qubits, tuple(gates), {}, tuple(range(n_qubits)))

    def then(self, gates: Sequence[Gate], postselect: Mapping[int, int] | None = None) -> Circuit:
        """Append gates and postselections on the same register."""
        ps = dict(self.postselect)
        ps.update(postselect or {})
        out = tuple(q for q in self.output_qubits if q not in ps)
        return Circuit(self.n_qubits, self.gates + tuple(gates), ps, out)

    def slots(self) -> list[ParameterSlot]:
        seen, out = set(), []
        for g in self.gates:
            if isinstance(g.angle, ParameterSlot) and g.angle.id not in seen:
                seen.add(g.angle.id)
                out.append(g.angle)
        return out

    @property
    def n_params(self) -> int:
        return len(self.slots())

    def dump(self) -> str:
        ps = ",".join(f"{q}:{b}" for q, b in sorted(self.postselect.items()))
        outs = ",".join(map(str, self.output_qubits))
        lines = [f"qubits={self.n_qubits} postselect={ps} outputs={outs}"]
        lines += [g.line() for g in self.gates]
        return "\n".join(lines) + "\n"

    def arrays(self):
        """Gate list as flat arrays for the kernels (cached)."""
        cached = self.__dict__.get("_arrays")
        if cached is None:
            ng = len(self.gates)
            kinds = np.empty(ng, dtype=np.intc)
            q0 = np.empty(ng, dtype=np.intc)
            q1 = np.full(ng, -1, dtype=np.intc)
            consts = np.zeros(ng)
            slot_idx = np.full(ng, -1, dtype=np.int64)
            for k, g in enumerate(self.gates):
                kinds[k] = GATE_KINDS[g.kind]
                q0[k] = g.qubits[0]
                if len(g.qubits) == 2:
                    q1[k] = g.qubits[1]
                if isinstance(g.angle, ParameterSlot):
                    slot_idx[k] = g.angle.id
                elif g.angle is not None:
                    consts[k] = g.angle
            cached = (kinds, q0, q1, consts, slot_idx)
            object.__setattr__(self, "_arrays", cached)
        return cached


def word_circuit(word: str, n_word_qubits: int, layers: int, registry: ParameterRegistry,
                 offset: int = 0, entangler: str = "CRz") -> list[Gate]:
    """Gates for one word state on qubits ``offset .. offset + n_word_qubits - 1``.

    One qubit gets an ``Rx Rz Rx`` Euler block (three slots, independent of
    ``layers``); ``m >= 2`` qubits get ``layers`` rounds of Hadamards followed
    by a chain of controlled rotations, ``m - 1`` slots per round.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if entangler not in ("CRz", "CRx"):
        raise ValueError("entangler must be CRz or CRx")
    m = n_word_qubits
    if m == 0:
        return []
    if m == 1:
        a, b, c = registry.block(word, 3)
        return [Gate("Rx", (offset,), a), Gate("Rz", (offset,), b), Gate("Rx", (offset,), c)]
    slots = registry.block(word, layers * (m - 1))
    gates = []
    for layer in range(layers):
        gates += [Gate("H", (offset + q,)) for q in range(m)]
        for q in range(m - 1):
            gates.append(Gate(entangler, (offset + q, offset + q + 1), slots[layer * (m - 1) + q]))
    return gates


def cup_effect(qa: int, qb: int) -> tuple[list[Gate], dict[int, int]]:
    """Bell effect on ``(qa, qb)``: equals the cup up to a factor ``1/sqrt(2)``."""
    if qa == qb:
        raise ValueError("cup needs two distinct qubits")
    return [Gate("CNOT", (qa, qb)), Gate("H", (qa,))], {qa: 0, qb: 0}


def n_word_slots(n_word_qubits: int, layers: int) -> int:
    if n_word_qubits == 0:
        return 0
    return 3 if n_word_qubits == 1 else layers * (n_word_qubits - 1)


class MissingTypeError(KeyError):
    pass


def compile(diag: Diagram, qubits: Mapping[BasicType | str, int], layers: int,
            registry: ParameterRegistry, entangler: str = "CRz") -> Circuit:
    """Compile a diagram with ``qubits[t]`` qubits per wire of base type ``t``.

    Wires get contiguous qubit blocks left to right.  A cup between two
    ``k``-qubit wires pairs their qubits nested (outermost with outermost),
    which keeps the effect planar.
    """
    def width(base):
        for key in (base, str(base)):
            if key in qubits:
                return int(qubits[key])
        raise MissingTypeError(f"no qubit count configured for type {base}")

    block: dict[int, list[int]] = {}
    nxt = 0
    for w in sorted(diag.wires):
        k = width(diag.wires[w].base)
        block[w] = list(range(nxt, nxt + k))
        nxt += k
    if nxt == 0:
        raise ValueError("diagram compiles to zero qubits")

    gates: list[Gate] = []
    for box in diag.boxes:
        qs = [q for w in box.wires for q in block[w]]
        if qs and qs != list(range(qs[0], qs[0] + len(qs))):
            raise AssertionError("word qubits are not contiguous")
        gates += word_circuit(box.word, len(qs), layers, registry, offset=qs[0] if qs else 0,
                              entangler=entangler)
    post: dict[int, int] = {}
    for a, b in diag.cups:
        left, right = block[a], block[b]
        for qa, qb in zip(reversed(left), right):
            g, ps = cup_effect(qa, qb)
            gates += g
            post.update(ps)
    outputs = tuple(q for w in diag.outputs for q in block[w])
    return Circuit(nxt, tuple(gates), post, outputs)
