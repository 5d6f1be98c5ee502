import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttcomp.coherence import (
    CoherenceReport,
    bound_C0,
    bound_C1,
    bound_C2,
    coherence_report,
    core_coherence,
    interface_coherence,
    projection_coherence,
    rip_estimate,
    subspace_coherence,
)
from ttcomp.oracle import dense_projector
from ttcomp.sampling import SampleSet, apply_adjoint, apply_sampling, full_grid, sample_uniform
from ttcomp.tt import TensorTrain, gaussian_tt, interface_left, interface_right, left_orthogonalize, right_orthogonalize, to_dense

seeds = st.integers(0, 2**32 - 1)


def _orth(M):
    return np.linalg.qr(M)[0]


def _gauge_transform(X, rng):
    cores = [np.array(G) for G in X.cores]
    for k in range(X.d - 1):
        s = cores[k].shape[2]
        A = rng.standard_normal((s, s)) + 3 * np.eye(s)
        cores[k] = np.einsum("ais,sb->aib", cores[k], A)
        cores[k + 1] = np.einsum("bs,sic->bic", np.linalg.inv(A), cores[k + 1])
    return TensorTrain(cores)


def test_subspace_coherence_examples(rng):
    assert subspace_coherence(np.eye(10)[:, :3]) == pytest.approx(10 / 3)
    assert subspace_coherence(np.ones((8, 1)) / np.sqrt(8)) == pytest.approx(1.0)
    U = _orth(rng.standard_normal((100, 5)))
    mu = subspace_coherence(U)
    assert 1 <= mu <= 20
    Q = _orth(rng.standard_normal((5, 5)))
    assert abs(subspace_coherence(U @ Q) - mu) <= 1e-12
    with pytest.raises(ValueError):
        subspace_coherence(2 * U)


def test_interface_coherence_d2_is_matrix_coherence(rng):
    X = gaussian_tt((7, 9), 3, 1)
    U, s, Vt = np.linalg.svd(to_dense(X))
    ic = interface_coherence(X)
    assert ic["mu_left"][0] == pytest.approx(subspace_coherence(U[:, :3]), rel=1e-10)
    assert ic["mu_right"][0] == pytest.approx(subspace_coherence(Vt[:3].T), rel=1e-10)
    cc = core_coherence(X)
    assert cc["mu_C"] == pytest.approx(max(ic["mu_left"][0], ic["mu_right"][0]), rel=1e-10)


def test_rank_one_uniform_has_unit_coherence():
    X = TensorTrain([np.ones((1, n, 1)) for n in (3, 4, 5)])
    ic, cc = interface_coherence(X), core_coherence(X)
    assert ic["mu_I"] == pytest.approx(1.0) and cc["mu_C"] == pytest.approx(1.0)


@given(seeds)
def test_interface_coherence_matches_dense_oracle(seed):
    X = gaussian_tt((4, 4, 4), 2, seed)
    ic = interface_coherence(X)
    L, R = left_orthogonalize(X), right_orthogonalize(X)
    for k in (1, 2):
        assert ic["mu_left"][k - 1] == pytest.approx(subspace_coherence(_orth(interface_left(L, k))), rel=1e-10)
        assert ic["mu_right"][k - 1] == pytest.approx(subspace_coherence(_orth(interface_right(R, k))), rel=1e-10)


def test_interface_guard_reports_bound():
    X = gaussian_tt((4, 4, 4, 4), 2, 0)
    ic = interface_coherence(X, max_rows=10)
    assert ic["mode"] == "bound"
    assert interface_coherence(X)["mode"] == "exact"


def test_core_coherence_first_core_is_matrix_coherence():
    X = gaussian_tt((5, 4, 3), 2, 2)
    U1 = left_orthogonalize(X).cores[0][0]
    assert core_coherence(X)["mu_left"][0] == pytest.approx(subspace_coherence(U1), rel=1e-10)


@given(seeds)
def test_core_coherence_gauge_invariant(seed):
    rng = np.random.default_rng(seed)
    X = gaussian_tt((4, 5, 4, 3), (2, 3, 2), rng)
    a, b = core_coherence(X), core_coherence(_gauge_transform(X, rng))
    np.testing.assert_allclose(a["mu_left"], b["mu_left"], rtol=1e-10)
    np.testing.assert_allclose(a["mu_right"], b["mu_right"], rtol=1e-10)


@given(seeds)
def test_interface_bounded_by_core_powers(seed):
    X = gaussian_tt((4, 3, 4, 3), (2, 3, 2), seed)
    ic, mu = interface_coherence(X), core_coherence(X)["mu_C"]
    d = X.d
    for k in range(1, d):
        assert ic["mu_left"][k - 1] <= mu**k * (1 + 1e-10)
        assert ic["mu_right"][k - 1] <= mu ** (d - k) * (1 + 1e-10)


def test_bound_formulas():
    assert bound_C0(1.0, (4, 4, 4), (1, 1)) == pytest.approx(12 / 64)
    shape, r = (4, 5, 6), (2, 3)
    assert bound_C1(1.0, shape, r) == pytest.approx((4 * 2 + 2 * 5 * 3 + 3 * 6) / 120)
    assert bound_C2(1.7, 1.0, shape, shape, r) == pytest.approx(bound_C1(1.7, shape, r))


def test_projection_coherence_rank_one_matrix():
    n1, n2 = 5, 7
    X = TensorTrain([np.ones((1, n1, 1)), np.ones((1, n2, 1))])
    assert projection_coherence(X) == pytest.approx((n1 + n2 - 1) / (n1 * n2), rel=1e-12)


def test_projection_coherence_matches_dense_projector():
    X = gaussian_tt((4, 4, 4), 2, 5)
    P = dense_projector(X)
    assert projection_coherence(X) == pytest.approx(np.max(np.diag(P)), rel=1e-10)
    with pytest.raises(ValueError):
        projection_coherence(X, max_size=10)


def test_projection_coherence_below_bounds():
    for s in range(20):
        X = gaussian_tt((4, 4, 4), 2, s)
        pc = projection_coherence(X)
        rep = coherence_report(X)
        assert pc <= rep.C0 * (1 + 1e-10)
        assert pc <= rep.C1 * (1 + 1e-10)


def _dense_rip(X, sample):
    P = dense_projector(X)
    N = P.shape[0]
    R = np.zeros((N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1
        R[:, j] = apply_adjoint(apply_sampling(sample, e.reshape(X.shape, order="F"))).reshape(-1, order="F")
    M = P - P @ R @ P / sample.rho
    return np.max(np.abs(np.linalg.eigvalsh(M)))


def test_rip_estimate_modes_and_oracle():
    X = gaussian_tt((4, 4, 4), 2, 3)
    assert rip_estimate(X, full_grid(X.shape)) <= 1e-12
    S = sample_uniform(X.shape, 40, 4)
    exact = rip_estimate(X, S, mode="exact")
    assert exact == pytest.approx(_dense_rip(X, S), rel=1e-9)
    assert rip_estimate(X, S, mode="power") == pytest.approx(exact, rel=1e-6)
    with pytest.raises(ValueError):
        rip_estimate(X, S, mode="bogus")


def test_rip_estimate_one_slice_sample_is_bad():
    X = gaussian_tt((6, 6, 6), 2, 1)
    idx = np.array([[0, j, k] for j in range(6) for k in range(6)] * 3)
    eps = rip_estimate(X, SampleSet(X.shape, idx))
    assert eps >= 0.9


def test_rip_trend_in_density():
    shape = (6, 6, 6)
    med = []
    for rho in (0.1, 0.2, 0.4, 0.8):
        vals = [
            rip_estimate(gaussian_tt(shape, 2, 100 + s), sample_uniform(shape, int(rho * 216), s))
            for s in range(20)
        ]
        med.append(np.median(vals))
    assert all(a > b for a, b in zip(med, med[1:]))


def test_report_roundtrip_and_side():
    X = gaussian_tt((4, 5, 4), 2, 0)
    rep = coherence_report(X)
    data = json.loads(json.dumps(rep.to_dict()))
    assert CoherenceReport.from_dict(data) == rep
    assert rep.mu_I == max(rep.mu_left_interface + rep.mu_right_interface)
    assert rep.mu_C == max(rep.mu_L + rep.mu_R)
    for mu, n in zip(rep.mu_left_interface, (4, 20)):
        assert 1 - 1e-12 <= mu <= n / 2 + 1e-12
    rng = np.random.default_rng(0)
    Q = [_orth(rng.standard_normal((n, m))) for n, m in zip((8, 9, 8), X.shape)]
    side = coherence_report(X, side_factors=Q)
    assert side.C2 is not None and len(side.mu_side) == 3
    A = TensorTrain([np.einsum("im,amb->aib", q, G) for q, G in zip(Q, X.cores)])
    assert projection_coherence(X, factors=Q) <= side.C2 * (1 + 1e-10)
    assert side.extras["mu_C_side_tensor"] == pytest.approx(core_coherence(A)["mu_C"])
