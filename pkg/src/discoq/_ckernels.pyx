# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled statevector kernels.  Mirrors ``_pykernels`` exactly."""

from libc.math cimport cos, sin, sqrt

cdef enum:
    K_H = 0
    K_RX = 1
    K_RY = 2
    K_RZ = 3
    K_CRZ = 4
    K_CNOT = 5
    K_CRX = 6

cdef double INV_SQRT2 = 1.0 / sqrt(2.0)


cdef inline void _gate(double complex[::1] st, Py_ssize_t dim, int n, int kind,
                       int q0, int q1, double theta) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t m0 = (<Py_ssize_t>1) << (n - 1 - q0)
    cdef Py_ssize_t m1 = 0
    cdef double c = cos(0.5 * theta)
    cdef double s = sin(0.5 * theta)
    cdef double complex a, b
    cdef double complex em = c - 1j * s
    cdef double complex ep = c + 1j * s
    cdef double complex mis = -1j * s
    if q1 >= 0:
        m1 = (<Py_ssize_t>1) << (n - 1 - q1)

    if kind == K_H:
        for i in range(dim):
            if i & m0:
                continue
            j = i | m0
            a = st[i]
            b = st[j]
            st[i] = (a + b) * INV_SQRT2
            st[j] = (a - b) * INV_SQRT2
    elif kind == K_RX:
        for i in range(dim):
            if i & m0:
                continue
            j = i | m0
            a = st[i]
            b = st[j]
            st[i] = c * a + mis * b
            st[j] = mis * a + c * b
    elif kind == K_RY:
        for i in range(dim):
            if i & m0:
                continue
            j = i | m0
            a = st[i]
            b = st[j]
            st[i] = c * a - s * b
            st[j] = s * a + c * b
    elif kind == K_RZ:
        for i in range(dim):
            if i & m0:
                st[i] = st[i] * ep
            else:
                st[i] = st[i] * em
    elif kind == K_CRZ:
        for i in range(dim):
            if not (i & m0):
                continue
            if i & m1:
                st[i] = st[i] * ep
            else:
                st[i] = st[i] * em
    elif kind == K_CNOT:
        for i in range(dim):
            if (i & m0) and not (i & m1):
                j = i | m1
                a = st[i]
                st[i] = st[j]
                st[j] = a
    elif kind == K_CRX:
        for i in range(dim):
            if (i & m0) and not (i & m1):
                j = i | m1
                a = st[i]
                b = st[j]
                st[i] = c * a + mis * b
                st[j] = mis * a + c * b


cdef inline double _gen_im(double complex[::1] lam, double complex[::1] psi, Py_ssize_t dim,
                           int n, int kind, int q0, int q1) noexcept nogil:
    # Im <lam| G |psi> for the generator G of a rotation gate
    cdef Py_ssize_t i, j
    cdef Py_ssize_t m0 = (<Py_ssize_t>1) << (n - 1 - q0)
    cdef Py_ssize_t m1 = 0
    cdef double complex acc = 0
    if q1 >= 0:
        m1 = (<Py_ssize_t>1) << (n - 1 - q1)
    if kind == K_RX:
        for i in range(dim):
            if i & m0:
                continue
            j = i | m0
            acc = acc + lam[i].conjugate() * psi[j] + lam[j].conjugate() * psi[i]
    elif kind == K_RY:
        for i in range(dim):
            if i & m0:
                continue
            j = i | m0
            acc = acc - 1j * lam[i].conjugate() * psi[j] + 1j * lam[j].conjugate() * psi[i]
    elif kind == K_RZ:
        for i in range(dim):
            if i & m0:
                acc = acc - lam[i].conjugate() * psi[i]
            else:
                acc = acc + lam[i].conjugate() * psi[i]
    elif kind == K_CRZ:
        for i in range(dim):
            if not (i & m0):
                continue
            if i & m1:
                acc = acc - lam[i].conjugate() * psi[i]
            else:
                acc = acc + lam[i].conjugate() * psi[i]
    elif kind == K_CRX:
        for i in range(dim):
            if (i & m0) and not (i & m1):
                j = i | m1
                acc = acc + lam[i].conjugate() * psi[j] + lam[j].conjugate() * psi[i]
    return acc.imag


cdef inline bint _is_rotation(int kind) noexcept nogil:
    return kind != K_H and kind != K_CNOT


def apply_gates(double complex[::1] state, int n, int[::1] kinds, int[::1] q0, int[::1] q1,
                double[::1] angles, bint inverse=False):
    cdef Py_ssize_t dim = state.shape[0]
    cdef Py_ssize_t g, ng = kinds.shape[0]
    with nogil:
        if inverse:
            for g in range(ng - 1, -1, -1):
                _gate(state, dim, n, kinds[g], q0[g], q1[g], -angles[g])
        else:
            for g in range(ng):
                _gate(state, dim, n, kinds[g], q0[g], q1[g], angles[g])


def adjoint_grads(double complex[::1] psi, double complex[::1] lam, int n, int[::1] kinds,
                  int[::1] q0, int[::1] q1, double[::1] angles, double[::1] out):
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t g, ng = kinds.shape[0]
    with nogil:
        for g in range(ng - 1, -1, -1):
            if _is_rotation(kinds[g]):
                out[g] = 0.5 * _gen_im(lam, psi, dim, n, kinds[g], q0[g], q1[g])
            else:
                out[g] = 0.0
            _gate(psi, dim, n, kinds[g], q0[g], q1[g], -angles[g])
            _gate(lam, dim, n, kinds[g], q0[g], q1[g], -angles[g])
