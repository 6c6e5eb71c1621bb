"""Dense statevector simulation with postselection and adjoint gradients.

Conventions: qubit 0 is the most significant bit of an amplitude index;
``Rz(t) = diag(exp(-it/2), exp(it/2))``, ``Rx(t) = cos(t/2) I - i sin(t/2) X``,
``CRz`` applies ``Rz`` to the target when the control is 1.  Postselection is
applied after the last gate; the surviving amplitudes are renormalised and
the squared norm before renormalisation is kept as ``success_prob``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import kernels
from .ansatz import Circuit

MAX_QUBITS = 24
# success probabilities below this are rounding residue, not a state
MIN_SUCCESS = 1e-24


class MissingParameterError(KeyError):
    pass


class DegeneratePostselection(ArithmeticError):
    pass


@dataclass
class StateVector:
    amplitudes: np.ndarray
    success_prob: float = 1.0

    @property
    def n_qubits(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "re", "im"])
            for i, a in enumerate(self.amplitudes):
                w.writerow([i, repr(float(a.real)), repr(float(a.imag))])


def _angles(circuit: Circuit, params) -> np.ndarray:
    kinds, q0, q1, consts, slot_idx = circuit.arrays()
    angles = consts.copy()
    used = slot_idx >= 0
    if not used.any():
        return angles
    if isinstance(params, Mapping):
        for k in np.flatnonzero(used):
            sid = int(slot_idx[k])
            if sid not in params:
                raise MissingParameterError(f"no value for slot {sid}")
            angles[k] = params[sid]
        return angles
    values = np.asarray(params, dtype=float)
    if values.ndim != 1 or slot_idx.max() >= values.size:
        raise MissingParameterError(f"parameter vector of size {values.size} misses slot {int(slot_idx.max())}")
    angles[used] = values[slot_idx[used]]
    return angles


def _initial(circuit: Circuit, initial) -> np.ndarray:
    dim = 1 << circuit.n_qubits
    if initial is None:
        st = np.zeros(dim, dtype=complex)
        st[0] = 1.0
        return st
    st = np.array(initial, dtype=complex).ravel()
    if st.size != dim:
        raise ValueError(f"initial state has {st.size} amplitudes, circuit needs {dim}")
    return st


def _selection(circuit: Circuit):
    """Index array of surviving amplitudes, ordered by output qubits."""
    cached = circuit.__dict__.get("_selection")
    if cached is None:
        n = circuit.n_qubits
        idx = np.arange(1 << n).reshape((2,) * n)
        sel = tuple(circuit.postselect.get(q, slice(None)) for q in range(n))
        sub = idx[sel]
        # remaining axes are in ascending qubit order; permute to output order
        remaining = [q for q in range(n) if q not in circuit.postselect]
        perm = [remaining.index(q) for q in circuit.output_qubits]
        cached = np.ascontiguousarray(np.transpose(sub, perm)).ravel()
        object.__setattr__(circuit, "_selection", cached)
    return cached


def evolve(circuit: Circuit, params, initial=None) -> np.ndarray:
    """Full-register state after all gates, before postselection."""
    if circuit.n_qubits > MAX_QUBITS:
        raise ValueError(f"{circuit.n_qubits} qubits exceeds the {MAX_QUBITS}-qubit guard")
    kinds, q0, q1, _, _ = circuit.arrays()
    angles = _angles(circuit, params)
    st = _initial(circuit, initial)
    kernels.apply_gates(st, circuit.n_qubits, kinds, q0, q1, angles, False)
    return st


def run(circuit: Circuit, params=(), initial=None) -> StateVector:
    st = evolve(circuit, params, initial)
    u = st[_selection(circuit)]
    prob = float(np.vdot(u, u).real)
    if prob < MIN_SUCCESS:
        raise DegeneratePostselection("postselection has probability 0")
    return StateVector(u / np.sqrt(prob), prob)


def overlap(a: StateVector | np.ndarray, b: StateVector | np.ndarray) -> float:
    """``|<a|b>|^2`` of the normalised states."""
    va = a.amplitudes if isinstance(a, StateVector) else np.asarray(a)
    vb = b.amplitudes if isinstance(b, StateVector) else np.asarray(b)
    if va.shape != vb.shape:
        raise ValueError(f"state sizes differ: {va.size} vs {vb.size}")
    na, nb = np.vdot(va, va).real, np.vdot(vb, vb).real
    return float(abs(np.vdot(va, vb)) ** 2 / (na * nb))


def gradient(circuit: Circuit, params, cotangent, initial=None, out=None) -> np.ndarray:
    """Reverse-mode gradient of a real loss through :func:`run`.

    ``cotangent`` is ``g`` with ``dL = Re <g | d psi>``, where ``psi`` is the
    normalised output state returned by :func:`run`.  Returns the gradient
    over all slot ids of ``params`` (accumulated into ``out`` if given).
    """
    kinds, q0, q1, _, slot_idx = circuit.arrays()
    angles = _angles(circuit, params)
    st = _initial(circuit, initial)
    kernels.apply_gates(st, circuit.n_qubits, kinds, q0, q1, angles, False)
    sel = _selection(circuit)
    u = st[sel]
    norm2 = float(np.vdot(u, u).real)
    if norm2 < MIN_SUCCESS:
        raise DegeneratePostselection("postselection has probability 0")
    norm = np.sqrt(norm2)
    g = np.asarray(cotangent, dtype=complex).ravel()
    # psi = u / |u|, so d psi = du/|u| - u Re<u|du>/|u|^3
    h = g / norm - u * (np.vdot(g, u).real / norm2 / norm)
    lam = np.zeros_like(st)
    lam[sel] = h
    per_gate = np.zeros(len(kinds))
    kernels.adjoint_grads(st, lam, circuit.n_qubits, kinds, q0, q1, angles, per_gate)

    if out is None:
        size = len(params) if not isinstance(params, Mapping) else (max(params, default=-1) + 1)
        size = max(size, int(slot_idx.max(initial=-1)) + 1)
        out = np.zeros(size)
    used = slot_idx >= 0
    np.add.at(out, slot_idx[used], per_gate[used])
    return out
