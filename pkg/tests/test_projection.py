"""Objective, exact half-steps, alternating learner and model files."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierzsl.errors import ConfigError, ShapeError
from hierzsl.graph import build_similarity, normalized_laplacian
from hierzsl.hierarchy import SemanticTable, build_hierarchy
from hierzsl.linalg import l2_normalize_rows, sylvester_oracle
from hierzsl.projection import (
    MODEL_MAGIC,
    LayerParams,
    ProjectionModel,
    learn_class_projection,
    learn_projection,
    load_model,
    objective,
    save_model,
    sidecar_path,
    solve_e_step,
    solve_w_step,
    train_model,
)
from oracles import fd_gradient, objective_loop


def _instance(rng, n=30, d_f=8, d_z=5, k=4):
    F = l2_normalize_rows(rng.standard_normal((n, d_f)) + 0.5)
    E0 = rng.standard_normal((n, d_z))
    L = normalized_laplacian(build_similarity(F, k)).matrix
    return F, E0, L


def _planted(rng, n=60, d_f=10, d_z=4):
    G, _ = np.linalg.qr(rng.standard_normal((d_f, d_z)))
    E0 = rng.standard_normal((n, d_z))
    return E0 @ G.T, E0, G


def _stationary(f, X, tol=1e-4):
    g = fd_gradient(f, X)
    scale = abs(f(X)) + 1.0
    assert np.max(np.abs(g)) <= tol * scale, np.max(np.abs(g))


class TestLayerParams:
    def test_derived_weights(self):
        p = LayerParams(alpha=0.2, beta=0.25, epsilon=0.1, gamma=0.01)
        assert p.mu == pytest.approx(0.25)
        assert p.nu == pytest.approx(3.0)
        assert p.eta == pytest.approx(0.0125)
        assert p.raw_epsilon == pytest.approx(0.1 * 1.25 * 4.0)

    @pytest.mark.parametrize(
        "kw", [{"alpha": 0.0}, {"alpha": 1.0}, {"beta": 0.0}, {"beta": 1.5}, {"epsilon": -1e-3}, {"gamma": 0.0}, {"max_iters": 0}]
    )
    def test_rejects_out_of_range(self, kw):
        with pytest.raises(ConfigError):
            LayerParams(**kw)

    def test_dict_round_trip(self):
        p = LayerParams(0.3, 0.7, 1e-2, 0.05, 10, 1e-6)
        assert LayerParams.from_dict(p.to_dict()) == p

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            LayerParams.from_dict({"lambda": 1.0})


class TestObjective:
    def test_all_zero(self):
        Z = np.zeros((4, 3))
        assert objective(np.zeros((4, 5)), np.zeros((5, 3)), Z, Z, np.zeros((4, 4)), LayerParams()) == 0.0

    def test_only_weight_penalty(self):
        d = 4
        p = LayerParams(epsilon=0.0)
        I = np.eye(d)
        assert objective(I, I, I, I, np.zeros((d, d)), p) == pytest.approx(p.eta * d)

    def test_matches_scalar_loop(self, rng):
        F, E0, L = _instance(rng, n=9, d_f=4, d_z=3)
        W = rng.standard_normal((4, 3))
        E = E0 + 0.3 * rng.standard_normal(E0.shape)
        p = LayerParams(alpha=0.3, beta=0.6, epsilon=0.2, gamma=0.05)
        ref = objective_loop(F, W, E, E0, L, p.mu, p.nu, p.raw_epsilon, p.eta)
        assert objective(F, W, E, E0, L, p) == pytest.approx(ref, rel=1e-12)

    def test_shape_mismatch(self, rng):
        F, E0, L = _instance(rng)
        with pytest.raises(ShapeError):
            objective(F, np.zeros((3, 3)), E0, E0, L, LayerParams())


class TestWStep:
    def test_identity_recovery(self, rng):
        F = rng.standard_normal((40, 5))
        W = solve_w_step(F, F, alpha=1e-3, gamma=1e-6)
        np.testing.assert_allclose(W, np.eye(5), atol=1e-4)

    def test_matches_oracle(self, rng):
        F = rng.standard_normal((30, 6))
        E = rng.standard_normal((30, 4))
        a, g = 0.4, 0.01
        A = (1 - a) * F.T @ F + g * np.eye(6)
        ref = sylvester_oracle(A, a * E.T @ E, F.T @ E)
        np.testing.assert_allclose(solve_w_step(F, E, a, g), ref, atol=1e-8)

    def test_zero_features(self, rng):
        W = solve_w_step(np.zeros((10, 4)), rng.standard_normal((10, 3)), 0.5, 0.01)
        np.testing.assert_array_equal(W, np.zeros((4, 3)))

    def test_directional_optimality(self, rng):
        F, E0, L = _instance(rng)
        p = LayerParams(alpha=0.4, beta=0.6, epsilon=0.1)
        E = E0 + 0.2 * rng.standard_normal(E0.shape)
        W = solve_w_step(F, E, p.alpha, p.gamma)
        base = objective(F, W, E, E0, L, p)
        for _ in range(5):
            D = rng.standard_normal(W.shape)
            D *= 1e-3 / np.linalg.norm(D)
            assert objective(F, W + D, E, E0, L, p) > base

    def test_fd_stationarity(self, rng):
        F, E0, L = _instance(rng, n=12, d_f=5, d_z=4)
        p = LayerParams(alpha=0.3, beta=0.7, epsilon=0.05)
        E = E0 + 0.1 * rng.standard_normal(E0.shape)
        W = solve_w_step(F, E, p.alpha, p.gamma)
        _stationary(lambda X: objective(F, X, E, E0, L, p), W)

    def test_row_mismatch(self, rng):
        with pytest.raises(ShapeError):
            solve_w_step(rng.standard_normal((5, 3)), rng.standard_normal((4, 2)), 0.5, 0.01)


class TestEStep:
    def test_no_data_terms(self, rng):
        F, E0, L = _instance(rng)
        E = solve_e_step(F, np.zeros((8, 5)), E0, L, 0.5, 0.3, 0.0)
        np.testing.assert_allclose(E, 0.7 * E0, atol=1e-12)

    def test_fixed_point(self, rng):
        F, E0, M = _planted(rng)
        L = normalized_laplacian(build_similarity(F, 5)).matrix
        E = solve_e_step(F, M, E0, L, 0.4, 0.6, 0.0)
        np.testing.assert_allclose(E, E0, atol=1e-10)

    def test_matches_oracle(self, rng):
        F, E0, L = _instance(rng, n=40, d_f=6, d_z=5)
        W = rng.standard_normal((6, 5))
        a, b, e = 0.5, 0.5, 0.3
        B = a * b * W.T @ W + (1 - a) * np.eye(5)
        C = b * F @ W + (1 - a) * (1 - b) * E0
        ref = sylvester_oracle(e * L, B, C)
        np.testing.assert_allclose(solve_e_step(F, W, E0, L, a, b, e), ref, atol=1e-8)

    def test_fd_stationarity(self, rng):
        F, E0, L = _instance(rng, n=5, d_f=6, d_z=4, k=2)
        p = LayerParams(alpha=0.6, beta=0.4, epsilon=0.5)
        W = rng.standard_normal((6, 4))
        E = solve_e_step(F, W, E0, L, p.alpha, p.beta, p.epsilon)
        _stationary(lambda X: objective(F, W, X, E0, L, p), E)

    def test_shape_mismatch(self, rng):
        F, E0, L = _instance(rng)
        with pytest.raises(ShapeError):
            solve_e_step(F, np.zeros((8, 5)), E0[:-1], L, 0.5, 0.5, 0.1)


class TestLearnProjection:
    def test_single_round(self, rng):
        F, E0, L = _instance(rng)
        p = LayerParams(alpha=0.3, beta=0.4, epsilon=0.05, max_iters=1)
        res = learn_projection(F, E0, L, p)
        W = solve_w_step(F, E0, p.alpha, p.gamma)
        E = solve_e_step(F, W, E0, L, p.alpha, p.beta, p.epsilon)
        np.testing.assert_allclose(res.W, W, atol=1e-12)
        np.testing.assert_allclose(res.E_tilde, E, atol=1e-12)
        assert len(res.trace) == 1

    def test_planted_recovery(self, rng):
        F, E0, _ = _planted(rng, n=80, d_f=12, d_z=5)
        L = normalized_laplacian(build_similarity(F, 5)).matrix
        res = learn_projection(F, E0, L, LayerParams(epsilon=0.0, gamma=1e-8, max_iters=50))
        err = np.linalg.norm(F @ res.W - res.E_tilde) / np.linalg.norm(res.E_tilde)
        assert err <= 1e-3

    @settings(max_examples=15, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        alpha=st.floats(0.05, 0.95),
        beta=st.floats(0.05, 0.95),
        epsilon=st.sampled_from([0.0, 1e-3, 0.1, 1.0]),
    )
    def test_trace_nonincreasing(self, seed, alpha, beta, epsilon):
        F, E0, L = _instance(np.random.default_rng(seed), n=25, d_f=6, d_z=4)
        res = learn_projection(F, E0, L, LayerParams(alpha, beta, epsilon, max_iters=20))
        tr = res.trace
        assert all(b <= a * (1 + 1e-9) for a, b in zip(tr, tr[1:]))

    def test_stops_on_tolerance(self, rng):
        F, E0, L = _instance(rng)
        res = learn_projection(F, E0, L, LayerParams(rel_tol=1e-2, max_iters=50))
        assert res.converged and len(res.trace) < 50

    def test_class_projection_delegates(self, rng):
        F, E0, L = _instance(rng)
        p = LayerParams(alpha=0.7, beta=0.2, epsilon=0.01, max_iters=5)
        a = learn_projection(F, E0, L, p)
        b = learn_class_projection(F, E0, L, p)
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.E_tilde, b.E_tilde)
        assert a.trace == b.trace

    def test_single_class_degenerate(self, rng):
        F, _, L = _instance(rng)
        Z = np.tile(rng.standard_normal(5), (F.shape[0], 1))
        res = learn_class_projection(F, Z, L, LayerParams(max_iters=5))
        assert np.all(np.isfinite(res.W))


class TestModelFiles:
    def _model(self, rng, n_r=2):
        Ws = [rng.standard_normal((6, 3)) for _ in range(n_r)]
        return ProjectionModel(Ws, rng.standard_normal((6, 3)), [LayerParams()] * n_r, LayerParams(alpha=0.3), {"class": [2.0, 1.0]})

    def test_round_trip(self, rng, tmp_path):
        m = self._model(rng)
        save_model(m, tmp_path / "m.bin", extra={"note": 1})
        back, meta = load_model(tmp_path / "m.bin")
        for a, b in zip(m.layer_W + [m.class_W], back.layer_W + [back.class_W]):
            np.testing.assert_array_equal(a, b)
        assert back.class_params == m.class_params and meta["note"] == 1
        assert sidecar_path(tmp_path / "m.bin").exists()

    def test_binary_layout(self, rng, tmp_path):
        m = self._model(rng, n_r=1)
        save_model(m, tmp_path / "m.bin")
        blob = (tmp_path / "m.bin").read_bytes()
        assert blob[:8] == MODEL_MAGIC
        assert struct.unpack("<III", blob[8:20]) == (1, 6, 3)
        first = np.frombuffer(blob[20:20 + 144], dtype="<f8").reshape(6, 3)
        np.testing.assert_array_equal(first, m.layer_W[0])
        assert len(blob) == 20 + 2 * 144

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOTAMODEL" * 4)
        with pytest.raises(ShapeError, match="magic"):
            load_model(tmp_path / "x.bin")

    def test_truncated(self, rng, tmp_path):
        save_model(self._model(rng), tmp_path / "m.bin")
        blob = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "m.bin").write_bytes(blob[:-8])
        with pytest.raises(ShapeError, match="bytes"):
            load_model(tmp_path / "m.bin")

    def test_shape_disagreement(self, rng):
        with pytest.raises(ShapeError):
            ProjectionModel([np.zeros((3, 3))], np.zeros((6, 3)), [LayerParams()], LayerParams())


class TestTrainModel:
    def test_structure_and_sharing(self, small_bench):
        data, h, model = small_bench
        assert model.n_r == h.n_r
        assert len(model.layer_W) + 1 == h.n_r + 1
        assert all(p == model.layer_params[0] for p in model.layer_params)
        assert set(model.traces) == {f"layer_{l + 1}" for l in range(h.n_r)} | {"class"}
        for tr in model.traces.values():
            assert all(b <= a * (1 + 1e-9) for a, b in zip(tr, tr[1:]))

    def test_mismatched_hierarchy(self, rng, small_bench):
        data, h, _ = small_bench
        other = SemanticTable([f"x{i}" for i in range(9)], rng.standard_normal((9, 6)), seen_count=9)
        with pytest.raises(ShapeError):
            train_model(data.train_F, data.train_y, build_hierarchy(other, 3), data.sem, LayerParams())

    def test_keep_E(self, small_bench):
        data, h, _ = small_bench
        m = train_model(data.train_F, data.train_y, h, data.sem, LayerParams(max_iters=2), neighbours=5, keep_E=True)
        assert m.final_E["class"].shape == (data.train_y.size, data.sem.dim)
