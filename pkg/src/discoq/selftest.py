"""Quick oracle checks behind ``discoq selftest``.

Each check returns ``(name, ok, detail)``.  They cover cups and caps, adjoint
gradients against finite differences, and state preparation round-trips.
"""
from __future__ import annotations

import numpy as np

from . import encoders, kernels, simulator
from .dataset import caption_text, enumerate_captions, generate
from .diagram import snake_check
from .model import ClassicalModel, MatcherConfig, QuantumMatcher, classical_batch, quantum_batch


def _rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def check_snakes():
    dims = (1, 2, 3, 4, 8)
    ok = all(snake_check(d) for d in dims)
    return "snake equations", ok, f"dims {dims}"


def _fd(f, x, h=1e-4):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def check_quantum_gradient(seed: int = 0):
    rng = np.random.default_rng(seed)
    captions = [caption_text(*t) for t in enumerate_captions()]
    matcher = QuantumMatcher(MatcherConfig(), captions)
    records = generate(features="mhe", noise=0.1, rng=rng)[::60]
    preps = [matcher.prep_state(r.features) for r in records]
    params = rng.uniform(0, 2 * np.pi, len(matcher.registry))
    _, g = quantum_batch(matcher, records, preps, params)
    fd = _fd(lambda p: quantum_batch(matcher, records, preps, p, with_grad=False)[0], params)
    err = _rel_err(g, fd)
    return "quantum gradient (mhe/box)", err < 1e-5, f"rel err {err:.2e}"


def check_classical_gradient(seed: int = 0):
    rng = np.random.default_rng(seed)
    records = generate(features="mhe", noise=0.1, rng=rng)[::40]
    model = ClassicalModel.init(8, rng, sd=0.5)
    theta = model.to_vector()
    _, g = classical_batch(model, records)
    fd = _fd(lambda t: classical_batch(model.from_vector(t), records, with_grad=False)[0], theta)
    err = _rel_err(g, fd)
    return "classical gradient", err < 1e-5, f"rel err {err:.2e}"


def check_amplitude(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim in (8, 37, 512):
        v = rng.normal(size=dim)
        n = 12 if dim == 512 else None
        want = encoders.pad_and_normalise(v, n)
        got = simulator.run(encoders.amplitude_encode(v, n)).amplitudes
        worst = max(worst, float(np.max(np.abs(got - want))))
    return "amplitude encoding round-trip", worst < 1e-10, f"max err {worst:.2e}"


def check_backends(seed: int = 0):
    names = kernels.available_backends()
    if len(names) < 2:
        return "kernel backends agree", True, f"only {names[0]} available"
    rng = np.random.default_rng(seed)
    v = rng.normal(size=64)
    circ = encoders.angle_encode(rng.uniform(0, np.pi, 6), 6)
    before = kernels.BACKEND
    states = []
    try:
        for name in names:
            kernels.use_backend(name)
            states.append(simulator.run(circ).amplitudes)
            states.append(simulator.run(encoders.amplitude_encode(v)).amplitudes)
    finally:
        kernels.use_backend(before)
    half = len(states) // 2
    err = max(float(np.max(np.abs(a - b))) for a, b in zip(states[:half], states[half:]))
    return "kernel backends agree", err < 1e-12, f"{'/'.join(names)} max diff {err:.2e}"


CHECKS = (check_snakes, check_quantum_gradient, check_classical_gradient, check_amplitude, check_backends)


def run_all():
    return [check() for check in CHECKS]
