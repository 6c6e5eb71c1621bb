"""Pure numpy statevector kernels, used when the compiled module is absent.

Qubit 0 is the most significant bit of the amplitude index.
"""
import numpy as np

H, RX, RY, RZ, CRZ, CNOT, CRX = range(7)
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _split1(st, n, q):
    v = st.reshape(1 << q, 2, 1 << (n - 1 - q))
    return v[:, 0, :], v[:, 1, :]


def _split2(st, n, c, t):
    v = st.reshape((2,) * n)
    idx0 = [slice(None)] * n
    idx1 = [slice(None)] * n
    # length-1 slices keep these views even when no axis is left free
    idx0[c] = idx1[c] = slice(1, 2)
    idx0[t] = slice(0, 1)
    idx1[t] = slice(1, 2)
    return v[tuple(idx0)], v[tuple(idx1)]


def _gate(st, n, kind, q0, q1, theta):
    if kind == H:
        a, b = _split1(st, n, q0)
        a0 = a.copy()
        a += b
        a *= _INV_SQRT2
        b *= -_INV_SQRT2
        b += a0 * _INV_SQRT2
    elif kind == RX or kind == CRX:
        c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
        a, b = _split1(st, n, q0) if kind == RX else _split2(st, n, q0, q1)
        a0 = a.copy()
        a *= c
        a += -1j * s * b
        b *= c
        b += -1j * s * a0
    elif kind == RY:
        c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
        a, b = _split1(st, n, q0)
        a0 = a.copy()
        a *= c
        a -= s * b
        b *= c
        b += s * a0
    elif kind == RZ or kind == CRZ:
        a, b = _split1(st, n, q0) if kind == RZ else _split2(st, n, q0, q1)
        a *= np.exp(-0.5j * theta)
        b *= np.exp(0.5j * theta)
    elif kind == CNOT:
        a, b = _split2(st, n, q0, q1)
        a0 = a.copy()
        a[...] = b
        b[...] = a0
    else:
        raise ValueError(f"unknown gate kind {kind}")


def _gen_im(lam, psi, n, kind, q0, q1):
    if kind == RX or kind == CRX:
        la, lb = _split1(lam, n, q0) if kind == RX else _split2(lam, n, q0, q1)
        pa, pb = _split1(psi, n, q0) if kind == RX else _split2(psi, n, q0, q1)
        acc = np.vdot(la, pb) + np.vdot(lb, pa)
    elif kind == RY:
        la, lb = _split1(lam, n, q0)
        pa, pb = _split1(psi, n, q0)
        acc = -1j * np.vdot(la, pb) + 1j * np.vdot(lb, pa)
    else:
        la, lb = _split1(lam, n, q0) if kind == RZ else _split2(lam, n, q0, q1)
        pa, pb = _split1(psi, n, q0) if kind == RZ else _split2(psi, n, q0, q1)
        acc = np.vdot(la, pa) - np.vdot(lb, pb)
    return acc.imag


def apply_gates(state, n, kinds, q0, q1, angles, inverse=False):
    order = range(len(kinds) - 1, -1, -1) if inverse else range(len(kinds))
    sign = -1.0 if inverse else 1.0
    for g in order:
        _gate(state, n, int(kinds[g]), int(q0[g]), int(q1[g]), sign * angles[g])


def adjoint_grads(psi, lam, n, kinds, q0, q1, angles, out):
    for g in range(len(kinds) - 1, -1, -1):
        kind = int(kinds[g])
        if kind in (H, CNOT):
            out[g] = 0.0
        else:
            out[g] = 0.5 * _gen_im(lam, psi, n, kind, int(q0[g]), int(q1[g]))
        _gate(psi, n, kind, int(q0[g]), int(q1[g]), -angles[g])
        _gate(lam, n, kind, int(q0[g]), int(q1[g]), -angles[g])
