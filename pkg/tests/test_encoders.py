import itertools

import numpy as np
import pytest

from discoq import simulator
from discoq.encoders import (AngleScaler, FeatureFileError, PcaModel, add_noise, amplitude_encode,
                             angle_encode, load_features, mhe, pad_and_normalise, pca_apply, pca_fit,
                             synthetic_features, write_features)
from discoq.pregroup import SHAPES

from oracles import dense_run, jacobi_eigh


@pytest.mark.parametrize("triple,want", [
    (("cube", "left", "sphere"), [0, 0, 1, 0, 0, 1, 0, 0]),
    (("cube", "right", "sphere"), [0, 1, 0, 0, 0, 0, 1, 0]),
    (("cylinder", "left", "cone"), [1, 0, 0, 0, 0, 0, 0, 1]),
])
def test_mhe_table(triple, want):
    np.testing.assert_array_equal(mhe(*triple), want)


def test_mhe_separation_and_block_swap():
    vecs = {}
    for s, o in itertools.permutations(SHAPES, 2):
        left, right = mhe(s, "left", o), mhe(s, "right", o)
        np.testing.assert_array_equal(right, np.concatenate([left[4:], left[:4]]))
        vecs[(s, "left", o)], vecs[(s, "right", o)] = left, right
    assert len(vecs) == 24
    # "A left of B" and "B right of A" are one scene, so 12 distinct codes
    assert len({v.tobytes() for v in vecs.values()}) == 12
    for s, o in itertools.permutations(SHAPES, 2):
        np.testing.assert_array_equal(vecs[(s, "left", o)], vecs[(o, "right", s)])
        assert not np.array_equal(vecs[(s, "left", o)], vecs[(s, "right", o)])


def test_mhe_errors():
    with pytest.raises(ValueError):
        mhe("cube", "left", "cube")
    with pytest.raises(ValueError):
        mhe("cube", "above", "cone")
    with pytest.raises(ValueError):
        mhe("pyramid", "left", "cone")


def test_noise_zero_and_determinism():
    v = mhe("cube", "left", "cone")
    np.testing.assert_array_equal(add_noise(v, 0.0, np.random.default_rng(0)), v)
    a = add_noise(v, 0.1, np.random.default_rng(3))
    b = add_noise(v, 0.1, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        add_noise(v, -1.0, np.random.default_rng(0))


def test_noise_std_monte_carlo():
    v = mhe("sphere", "right", "cone")
    rng = np.random.default_rng(17)
    draws = np.array([add_noise(v, 0.1, rng) for _ in range(100_000)])
    std = draws.std(axis=0)
    assert np.all(np.abs(std - 0.1) < 0.002)
    np.testing.assert_allclose(draws.mean(axis=0), v, atol=0.002)


# -- PCA -------------------------------------------------------------------------


def test_pca_x_axis():
    data = np.array([[x, 0.0] for x in (-2.0, -1.0, 0.5, 3.0)])
    m = pca_fit(data, 1)
    np.testing.assert_allclose(m.components, [[1.0, 0.0]], atol=1e-12)


def test_pca_matches_jacobi():
    rng = np.random.default_rng(21)
    for trial in range(5):
        X = rng.normal(size=(20, 6)) @ rng.normal(size=(6, 6))
        m = pca_fit(X, 3)
        Xc = X - X.mean(axis=0)
        w, V = jacobi_eigh(Xc.T @ Xc / (len(X) - 1))
        for i in range(3):
            ref = V[:, i] * np.sign(V[:, i][np.flatnonzero(np.abs(V[:, i]) > 1e-12)[0]])
            np.testing.assert_allclose(m.components[i], ref, atol=1e-6)
            assert m.variances[i] == pytest.approx(w[i], rel=1e-8)


def test_pca_sign_convention():
    rng = np.random.default_rng(1)
    m = pca_fit(rng.normal(size=(30, 5)), 4)
    for c in m.components:
        assert c[np.flatnonzero(np.abs(c) > 0)[0]] > 0
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(4), atol=1e-9)


def test_pca_full_basis_reconstructs():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(15, 4))
    m = pca_fit(X, 4)
    for v in X:
        rec = m.mean + pca_apply(m, v) @ m.components
        np.testing.assert_allclose(rec, v, atol=1e-8)


def test_pca_isometry_on_subspace():
    rng = np.random.default_rng(3)
    basis = np.linalg.qr(rng.normal(size=(10, 3)))[0].T
    X = rng.normal(size=(25, 3)) @ basis + rng.normal(size=10)
    m = pca_fit(X, 3)
    for a, b in itertools.combinations(X[:8], 2):
        assert np.linalg.norm(m.apply(a) - m.apply(b)) == pytest.approx(np.linalg.norm(a - b), abs=1e-8)


def test_pca_errors():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        pca_fit(rng.normal(size=(1, 3)), 1)
    with pytest.raises(ValueError):
        pca_fit(rng.normal(size=(10, 3)), 4)
    rank_one = np.outer(rng.normal(size=10), rng.normal(size=3))
    with pytest.raises(ValueError):
        pca_fit(rank_one, 2)


def test_pca_json_round_trip():
    m = pca_fit(np.random.default_rng(5).normal(size=(12, 4)), 2)
    back = PcaModel.from_json(m.to_json())
    np.testing.assert_array_equal(back.components, m.components)
    np.testing.assert_array_equal(back.mean, m.mean)


# -- amplitude encoding -------------------------------------------------------


def encoded(v, n=None):
    return simulator.run(amplitude_encode(v, n)).amplitudes


def test_amplitude_basis_and_uniform():
    np.testing.assert_allclose(encoded([1, 0, 0, 0, 0, 0, 0, 0]), np.eye(8)[0], atol=1e-15)
    np.testing.assert_allclose(encoded([1, 1, 1, 1]), [0.5] * 4, atol=1e-15)


def test_amplitude_round_trip_random(backend):
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(100):
        dim = 512 if k % 25 == 0 else int(rng.integers(1, 70))
        v = rng.normal(size=dim)
        if k % 3 == 0:
            v[rng.integers(dim)] = 0.0
        n = 12 if dim == 512 else None
        amp = encoded(v, n)
        want = pad_and_normalise(v, n)
        worst = max(worst, np.max(np.abs(amp - want)))
        assert abs(np.linalg.norm(amp) - 1) < 1e-12
    assert worst < 1e-10


def test_amplitude_uses_only_ry():
    circ = amplitude_encode(np.random.default_rng(7).normal(size=16))
    assert {g.kind for g in circ.gates} <= {"Ry", "CNOT"}


def test_amplitude_zero_vector():
    with pytest.raises(ValueError):
        amplitude_encode(np.zeros(4))
    with pytest.raises(ValueError):
        amplitude_encode(np.ones(9), 3)


# -- angle encoding ------------------------------------------------------------


def test_angle_zero_features_give_plus_state():
    amp = simulator.run(angle_encode(np.zeros(4), 4)).amplitudes
    np.testing.assert_allclose(amp, np.full(16, 0.25), atol=1e-15)


def test_angle_single_phase_matches_dense_oracle():
    n = 4
    angles = np.array([np.pi, 0, 0, 0])
    got = simulator.run(angle_encode(angles, n)).amplitudes
    gates = [("H", (q,), None) for q in range(n)] + [("CRz", (0, 1), np.pi)]
    want, _ = dense_run(gates, n)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_angle_random_matches_dense_oracle():
    rng = np.random.default_rng(8)
    n = 5
    angles = rng.uniform(0, np.pi, n)
    gates = [("H", (q,), None) for q in range(n)]
    gates += [("CRz", (i, (i + 1) % n), angles[i]) for i in range(n)]
    want, _ = dense_run(gates, n)
    np.testing.assert_allclose(simulator.run(angle_encode(angles, n)).amplitudes, want, atol=1e-14)


def test_angle_sweep_is_monotone():
    base = np.zeros(6)
    ref = simulator.run(angle_encode(base, 6))
    prev = 1.0 + 1e-15
    for t in np.linspace(0, np.pi, 10):
        v = base.copy()
        v[2] = t
        f = simulator.overlap(ref, simulator.run(angle_encode(v, 6)))
        assert f < prev or t == 0
        prev = f
    assert simulator.overlap(ref, ref) == pytest.approx(1.0, abs=1e-12)


def test_angle_scaler():
    X = np.array([[0.0, 5.0, 1.0], [2.0, 5.0, 3.0]])
    sc = AngleScaler.fit(X)
    np.testing.assert_allclose(sc.transform(X[0]), [0, np.pi / 2, 0])
    np.testing.assert_allclose(sc.transform(X[1]), [np.pi, np.pi / 2, np.pi])
    np.testing.assert_allclose(sc.transform([4.0, 1.0, -1.0]), [np.pi, np.pi / 2, 0])
    back = AngleScaler.from_json(sc.to_json())
    np.testing.assert_array_equal(back.lo, sc.lo)
    a = simulator.run(angle_encode(sc.transform([1.0, 5.0, 2.0]), 3))
    b = simulator.run(angle_encode(sc.transform([1.0, 7.0, 2.0]), 3))
    assert simulator.overlap(a, b) == pytest.approx(1.0, abs=1e-12)


def test_angle_errors():
    with pytest.raises(ValueError):
        angle_encode(np.zeros(3), 4)
    with pytest.raises(ValueError):
        angle_encode(np.zeros(1), 1)


# -- feature files ---------------------------------------------------------------


def test_feature_file_round_trip(tmp_path):
    feats = synthetic_features(24, 20, np.random.default_rng(9))
    path = tmp_path / "f.csv"
    write_features(path, feats)
    back = load_features(path)
    assert len(back) == 480
    assert all(v.shape == (512,) for v in back.values())
    for key, v in feats.items():
        assert np.array_equal(back[key], v)


def test_synthetic_clusters_are_tight():
    feats = synthetic_features(3, 4, np.random.default_rng(1))
    within = np.linalg.norm(feats["0_0"] - feats["0_1"])
    between = np.linalg.norm(feats["0_0"] - feats["1_0"])
    assert within < 0.1 * between


@pytest.mark.parametrize("text,where", [
    ("", "empty"),
    ("id,f0,f1\n", "no feature rows"),
    ("name,f0\na,1\n", ":1:"),
    ("id,f0,f1\na,1,2\nb,1\n", ":3:"),
    ("id,f0\na,x\n", ":2:"),
    ("id,f0\na,nan\n", ":2:"),
])
def test_feature_file_errors(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(FeatureFileError, match=where):
        load_features(path)
