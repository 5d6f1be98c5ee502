import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttcomp.oracle import dense_opnorm, dense_projector
from ttcomp.sampling import apply_adjoint, apply_sampling, sample_uniform
from ttcomp.tangent import (
    ProjectorHandle,
    TangentVector,
    curvature_gap,
    embed,
    projector_distance,
    tangent_axpy,
    tangent_inner,
    tangent_norm,
)
from ttcomp.tt import TensorTrain, gaussian_tt, left_unfold, to_dense, tt_rank, tt_round

from conftest import rel

seeds = st.integers(0, 2**32 - 1)
SHAPE, R = (4, 4, 4), 2


def _vec(Z):
    return np.asarray(Z).reshape(-1, order="F")


def _handle(seed=0, shape=SHAPE, r=R):
    return ProjectorHandle(gaussian_tt(shape, r, seed))


def _random_tangent(h, rng):
    return h.project_dense(rng.standard_normal(h.shape))


def test_project_matches_dense_projector(rng):
    h = _handle(1)
    P = dense_projector(h.base)
    for _ in range(20):
        Z = rng.standard_normal(SHAPE)
        got = _vec(to_dense(embed(h.project(Z))))
        assert np.linalg.norm(got - P @ _vec(Z)) <= 1e-10 * np.linalg.norm(Z)


def test_dense_projector_is_idempotent_and_symmetric():
    P = dense_projector(gaussian_tt(SHAPE, R, 3))
    assert np.abs(P @ P - P).max() <= 1e-10
    assert np.abs(P - P.T).max() <= 1e-10


def test_base_point_is_in_its_tangent_space():
    h = _handle(2)
    X = to_dense(h.base)
    assert rel(to_dense(embed(h.project(X))), X) <= 1e-12
    assert rel(to_dense(embed(h.base_as_tangent())), X) <= 1e-13


def test_normal_component_projects_to_zero(rng):
    h = _handle(4)
    P = dense_projector(h.base)
    Z = rng.standard_normal(SHAPE)
    N = (_vec(Z) - P @ _vec(Z)).reshape(SHAPE, order="F")
    assert tangent_norm(h.project(N)) <= 1e-12 * np.linalg.norm(N)


@given(seeds)
def test_gauge_and_idempotence(seed):
    rng = np.random.default_rng(seed)
    h = _handle(seed % 1000, shape=(3, 4, 3, 2), r=(2, 3, 2))
    Y = _random_tangent(h, rng)
    assert Y.gauge_residual() <= 1e-12 * max(1.0, tangent_norm(Y))
    Y2 = h.project(embed(Y))
    for a, b in zip(Y.gauges, Y2.gauges):
        assert np.abs(a - b).max() <= 1e-12 * max(1.0, tangent_norm(Y))


def test_project_tt_and_sparse_agree_with_dense(rng):
    h = _handle(5)
    Z = gaussian_tt(SHAPE, 3, 6)
    a = to_dense(embed(h.project(Z)))
    b = to_dense(embed(h.project_dense(to_dense(Z))))
    assert rel(a, b) <= 1e-12
    obs = apply_sampling(sample_uniform(SHAPE, 100, 1), rng.standard_normal(SHAPE))
    c = to_dense(embed(h.project(obs)))
    d = to_dense(embed(h.project_dense(apply_adjoint(obs))))
    assert rel(c, d) <= 1e-12


def test_project_shape_mismatch():
    h = _handle()
    with pytest.raises(ValueError):
        h.project(np.zeros((4, 4, 5)))


def test_interface_bases_orthonormal():
    h = _handle(7, shape=(3, 4, 3, 2), r=(2, 3, 2))
    for k in range(h.d):
        U = h.interface_basis_left(k)
        np.testing.assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-12)
    for k in range(1, h.d + 1):
        V = h.interface_basis_right(k)
        np.testing.assert_allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-12)


def _term(h, k, gauge):
    # dense [U_1..U_{k-1}, gauge, V_{k+1}..V_d]
    cores = list(h.left_cores[: k - 1]) + [gauge] + list(h.right_cores[k:])
    return to_dense(TensorTrain(cores))


def test_embed_examples(rng):
    h = _handle(8)
    assert np.abs(to_dense(embed(h.zero()))).max() == 0.0
    Y = _random_tangent(h, rng)
    E = embed(Y)
    assert E.ranks == tuple(2 * x for x in h.ranks[1:-1])
    terms = sum(_term(h, k + 1, g) for k, g in enumerate(Y.gauges))
    assert rel(to_dense(E), terms) <= 1e-12
    gauges = [np.zeros_like(g) for g in Y.gauges]
    gauges[-1] = Y.gauges[-1]
    only_last = TangentVector(h, tuple(gauges))
    ref = to_dense(TensorTrain(list(h.left_cores[:-1]) + [Y.gauges[-1]]))
    assert rel(to_dense(embed(only_last)), ref) <= 1e-12


def test_pythagoras_and_rank_cap(rng):
    h = _handle(9, shape=(3, 4, 3, 3), r=(2, 3, 2))
    Y = _random_tangent(h, rng)
    D = to_dense(embed(Y))
    assert abs(np.linalg.norm(D) ** 2 - tangent_norm(Y) ** 2) <= 1e-12 * tangent_norm(Y) ** 2
    assert all(a <= 2 * b for a, b in zip(tt_rank(D), (2, 3, 2)))


def test_inner_axpy(rng):
    h = _handle(10)
    Y1, Y2 = _random_tangent(h, rng), _random_tangent(h, rng)
    dense = float(np.vdot(to_dense(embed(Y1)), to_dense(embed(Y2))))
    assert abs(tangent_inner(Y1, Y2) - dense) <= 1e-12 * tangent_norm(Y1) * tangent_norm(Y2)
    Z = tangent_axpy(0.0, Y1, Y2)
    assert all(np.array_equal(a, b) for a, b in zip(Z.gauges, Y2.gauges))
    W = tangent_axpy(2.0, Y1, Y2)
    assert rel(to_dense(embed(W)), 2 * to_dense(embed(Y1)) + to_dense(embed(Y2))) <= 1e-12
    # single-gauge vectors at different k are orthogonal
    a = [np.zeros_like(g) for g in Y1.gauges]
    b = [np.zeros_like(g) for g in Y1.gauges]
    a[0], b[1] = Y1.gauges[0], Y1.gauges[1]
    Ya, Yb = TangentVector(h, tuple(a)), TangentVector(h, tuple(b))
    assert abs(np.vdot(to_dense(embed(Ya)), to_dense(embed(Yb)))) <= 1e-12
    other = _handle(11)
    with pytest.raises(ValueError):
        tangent_inner(Y1, other.zero())


def test_coordinates(rng):
    h = _handle(12, shape=(3, 4, 3), r=(2, 3))
    B = h.dense_basis()
    assert B.shape[1] == h.dimension
    np.testing.assert_allclose(B.T @ B, np.eye(h.dimension), atol=1e-12)
    Y = _random_tangent(h, rng)
    c = h.to_coordinates(Y)
    assert np.isclose(np.linalg.norm(c), tangent_norm(Y), rtol=1e-12)
    np.testing.assert_allclose(B @ c, _vec(to_dense(embed(Y))), atol=1e-12)
    back = h.from_coordinates(c)
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(back.gauges, Y.gauges))


# ------------------------------------------------------- partial projectors
def test_partial_projectors(rng):
    h = _handle(13, shape=(3, 4, 3, 2), r=(2, 3, 2))
    d = h.d
    Z, W = rng.standard_normal(h.shape), rng.standard_normal(h.shape)
    X = to_dense(h.base)
    np.testing.assert_array_equal(h.proj_leq(0, Z), Z)
    np.testing.assert_array_equal(h.proj_geq(d, Z), Z)
    for k in range(d):
        assert rel(h.proj_leq(k, X), X) <= 1e-12
        P1 = h.proj_leq(k, Z)
        assert rel(h.proj_leq(k, P1), P1) <= 1e-12
        assert np.isclose(np.vdot(h.proj_leq(k, Z), W), np.vdot(Z, h.proj_leq(k, W)))
    for k in range(1, d + 1):
        P1 = h.proj_geq(k, Z)
        assert rel(h.proj_geq(k, P1), P1) <= 1e-12
        assert np.isclose(np.vdot(h.proj_geq(k, Z), W), np.vdot(Z, h.proj_geq(k, W)))
    for j in range(d):
        for k in range(j + 1, d + 1):
            a = h.proj_leq(j, h.proj_geq(k, Z))
            b = h.proj_geq(k, h.proj_leq(j, Z))
            assert np.abs(a - b).max() <= 1e-12 * np.abs(Z).max()
    with pytest.raises(ValueError):
        h.proj_leq(d, Z)
    with pytest.raises(ValueError):
        h.proj_geq(0, Z)


def test_projector_identities(rng):
    h = _handle(14, shape=(3, 4, 3, 2), r=(2, 3, 2))
    d = h.d
    Z = rng.standard_normal(h.shape)
    PZ = to_dense(embed(h.project(Z)))
    sum_form = h.proj_leq(d - 1, Z)
    comp = np.zeros_like(Z)
    for k in range(1, d):
        G = h.proj_geq(k, Z)
        sum_form = sum_form + h.proj_leq(k - 1, G) - h.proj_leq(k, G)
    for k in range(1, d + 1):
        N = Z - h.proj_geq(k, Z)
        comp = comp + h.proj_leq(k - 1, N) - (h.proj_leq(k, N) if k < d else 0.0)
    assert np.abs(sum_form - PZ).max() <= 1e-12 * np.abs(Z).max() * 10
    assert np.abs(comp - (Z - PZ)).max() <= 1e-12 * np.abs(Z).max() * 10


# ------------------------------------------------------------ curvature
def _perturbed_pair(seed, eps, shape=(6, 6, 6, 6), r=2):
    rng = np.random.default_rng(seed)
    X = gaussian_tt(shape, r, rng)
    h = ProjectorHandle(X)
    W = _random_tangent(h, rng)
    W = TangentVector(h, tuple(g / tangent_norm(W) for g in W.gauges))
    gauges = [eps * tt_norm_dense(X) * g for g in W.gauges]
    gauges[-1] = gauges[-1] + h.left_cores[-1]
    Xt = tt_round(embed(TangentVector(h, tuple(gauges))), r)
    return X, Xt


def tt_norm_dense(X):
    return float(np.linalg.norm(to_dense(X)))


def test_curvature_identity_pair():
    X = gaussian_tt((4, 4, 4), 2, 0)
    gap, bound = curvature_gap(X, X)
    assert gap <= 1e-12 * tt_norm_dense(X) and bound == 0.0
    dist, dbound = projector_distance(X, X)
    assert dist <= 1e-6 and dbound == 0.0


def test_curvature_bounds_and_order():
    for s in range(5):
        X, Xt = _perturbed_pair(s, 1e-2, shape=(4, 4, 4))
        gap, bound = curvature_gap(X, Xt)
        assert gap <= bound
        dist, dbound = projector_distance(X, Xt)
        assert dist <= dbound and dist <= 2.0
    eps = np.array([1e-2, 1e-3, 1e-4])
    gaps = []
    for e in eps:
        X, Xt = _perturbed_pair(99, e, shape=(4, 4, 4))
        gaps.append(curvature_gap(X, Xt)[0])
    slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_curvature_tt_path_matches_dense():
    X, Xt = _perturbed_pair(3, 1e-2, shape=(4, 4, 4))
    a = curvature_gap(X, Xt, dense=True)
    b = curvature_gap(X, Xt, dense=False)
    np.testing.assert_allclose(a, b, rtol=1e-6)


def test_projector_distance_matches_dense_oracle():
    X, Xt = _perturbed_pair(4, 5e-2, shape=(4, 4, 4))
    dist, _ = projector_distance(X, Xt, mode="exact")
    ref = dense_opnorm(dense_projector(X) - dense_projector(Xt))
    assert abs(dist - ref) <= 1e-8
    power, _ = projector_distance(X, Xt, mode="power")
    assert abs(power - ref) <= 1e-6


def test_curvature_rank_mismatch():
    with pytest.raises(ValueError):
        curvature_gap(gaussian_tt((3, 3, 3), 1, 0), gaussian_tt((3, 3, 3), 2, 0))
    with pytest.raises(ValueError):
        projector_distance(gaussian_tt((3, 3, 3), 1, 0), gaussian_tt((3, 3, 3), 2, 0))


def test_gauge_fix_handles_left_unfold_drift(rng):
    h = _handle(15)
    raw = [rng.standard_normal(U.shape) for U in h.left_cores]
    Y = h._gauge_fix(raw)
    for U, G in zip(h.left_cores[:-1], Y.gauges[:-1]):
        assert np.linalg.norm(left_unfold(U).T @ left_unfold(G)) <= 1e-13
