"""Backend selection for the statevector kernels.

The compiled module is used when importable unless ``DISCOQ_PURE_PYTHON`` is
set to a non-empty value other than ``0``.
"""
import os

from . import _pykernels

H, RX, RY, RZ, CRZ, CNOT, CRX = range(7)

_force_py = os.environ.get("DISCOQ_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure python requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

apply_gates = _impl.apply_gates
adjoint_grads = _impl.adjoint_grads


def use_backend(name: str) -> None:
    """Switch backends at runtime (benchmarks and cross-checks)."""
    global apply_gates, adjoint_grads, BACKEND
    if name == "python":
        impl = _pykernels
    elif name == "cython":
        from . import _ckernels as impl
    else:
        raise ValueError(f"unknown backend {name!r}")
    apply_gates, adjoint_grads, BACKEND = impl.apply_gates, impl.adjoint_grads, name


def available_backends() -> list:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
