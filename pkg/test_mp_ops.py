"""
Tests for operator bundles, Kronecker forms, SCA ratios and MIMO graph convolutions
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DegenerateInputError, DimensionMismatchError, InvalidParameterError, SizeCapError
from src.graph_core import add_self_loops, complete, karate_club, normalize, path
from src.metrics import rank_one_distance
from src.models import Activation, Graph, NormKind, OperatorBundle
from src.mp_ops import (anti_sca_bundle, bundle_from_json, bundle_to_json, cd_trace, gcn_bundle, gcn_mimo_weights,
                        masked_row_softmax, mimo_gc_apply, mimo_gc_fit, polynomial_mimo_weights, power_iteration,
                        random_skp_bundle, res_gcn_step, row_stochastic_bundle, sage_bundle, sca_ratio_sym,
                        sca_ratio_svd, single_term, skp_bundle, softmax_skp, step, unvec, vec, vectorize)
from src.spectral import graph_spectrum

K3_SYM = normalize(complete(3), NormKind.SYM).matrix


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_vec_is_column_major():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert vec(x).tolist() == [1.0, 3.0, 2.0, 4.0]
    assert_allclose(unvec(vec(x), 2), x)


def test_vectorized_step_matches_direct_step(rng):
    aggs = [rng.standard_normal((5, 5)) for _ in range(3)]
    weights = [rng.standard_normal((4, 2)) for _ in range(3)]
    b = skp_bundle(aggs, weights)
    x = rng.standard_normal((5, 4))
    t = vectorize(b)
    assert t.t.shape == (10, 20)
    assert_allclose(t.apply(x), step(b, x), atol=1e-12)
    assert_allclose(t.t @ vec(x), vec(step(b, x)), atol=1e-12)


def test_vectorize_respects_size_cap(rng):
    b = single_term(np.eye(10), np.eye(10))
    with pytest.raises(SizeCapError):
        vectorize(b, max_dense=50)


def test_step_shape_checked():
    with pytest.raises(DimensionMismatchError):
        step(single_term(np.eye(3), np.eye(2)), np.ones((3, 3)))


def test_bundle_validation():
    with pytest.raises(InvalidParameterError):
        OperatorBundle(terms=())
    with pytest.raises(DimensionMismatchError):
        skp_bundle([np.eye(3), np.eye(4)], [np.eye(2), np.eye(2)])
    with pytest.raises(DimensionMismatchError):
        skp_bundle([np.eye(3)], [np.eye(2), np.eye(2)])


def test_gcn_and_sage_bundles(rng):
    g = karate_club()
    a_sym = normalize(g, NormKind.SYM).matrix
    a_rw = normalize(g, NormKind.RW).matrix
    x = rng.standard_normal((34, 3))
    w, w_self, w_neigh = (rng.standard_normal((3, 3)) for _ in range(3))
    assert_allclose(step(gcn_bundle(a_sym, w), x), np.maximum(a_sym @ x @ w, 0.0))
    sage = sage_bundle(a_rw, w_self, w_neigh)
    assert_allclose(step(sage, x), np.maximum(x @ w_self + a_rw @ x @ w_neigh, 0.0))


def test_residual_step(rng):
    x = rng.standard_normal((3, 2))
    b = gcn_bundle(K3_SYM, np.eye(2), Activation.IDENTITY)
    assert_allclose(res_gcn_step(b, x), K3_SYM @ x + x)
    with pytest.raises(DimensionMismatchError):
        res_gcn_step(gcn_bundle(K3_SYM, np.ones((2, 3))), x)


def test_sca_ratio_on_triangle(rng):
    result = sca_ratio_sym(K3_SYM, rng.standard_normal((3, 3)), 1, 2)
    assert result.defined
    assert result.ratio == pytest.approx(2.0, rel=1e-9)
    assert result.expected == pytest.approx(2.0)


def test_sca_ratio_is_weight_independent():
    a_sym = normalize(karate_club(), NormKind.SYM).matrix
    lam = graph_spectrum(karate_club()).eigenvalues
    for seed in range(3):
        w = np.random.default_rng(seed).standard_normal((4, 6))
        result = sca_ratio_sym(a_sym, w, 1, 5)
        assert result.ratio == pytest.approx(abs(lam[0]) / abs(lam[4]), rel=1e-9)


def test_sca_ratio_undefined_for_zero_eigenvalue(rng):
    a_sym = normalize(path(3), NormKind.SYM).matrix
    result = sca_ratio_sym(a_sym, rng.standard_normal((2, 2)), 1, 2)
    assert not result.defined
    assert math.isnan(result.ratio)


def test_sca_ratio_index_checks(rng):
    with pytest.raises(InvalidParameterError):
        sca_ratio_sym(K3_SYM, np.eye(2), 0, 1)
    with pytest.raises(InvalidParameterError):
        sca_ratio_sym(K3_SYM, np.eye(2), 1, 4)


def test_sca_ratio_svd():
    result = sca_ratio_svd(np.diag([3.0, 1.0]), np.eye(2), 1, 2)
    assert result.ratio == pytest.approx(3.0)
    with pytest.raises(DegenerateInputError):
        sca_ratio_svd(np.diag([3.0, 0.0]), np.eye(2), 1, 2)


def test_sca_ratio_svd_on_random_walk_matrix(rng):
    a_rw = normalize(karate_club(), NormKind.RW).matrix
    sigma = np.linalg.svd(a_rw, compute_uv=False)
    result = sca_ratio_svd(a_rw, rng.standard_normal((3, 3)), 1, 3)
    assert result.ratio == pytest.approx(sigma[0] / sigma[2], rel=1e-9)


def test_component_dominance_on_triangle():
    spec = graph_spectrum(complete(3))
    bases = [spec.basis[:, [k]] for k in range(3)]
    bundles = [single_term(K3_SYM, np.eye(2)) for _ in range(4)]
    trace = cd_trace(bundles, bases)
    assert trace.metrics() == ["block_1", "block_2", "block_3"]
    assert_allclose(trace.values("block_1"), np.ones(4))
    assert_allclose(trace.values("block_2"), 0.5 ** np.arange(1, 5), atol=1e-12)
    assert_allclose(trace.values("block_3"), 0.5 ** np.arange(1, 5), atol=1e-12)


def test_component_dominance_argument_checks():
    spec = graph_spectrum(complete(3))
    with pytest.raises(InvalidParameterError):
        cd_trace([], [spec.basis])
    with pytest.raises(DimensionMismatchError):
        cd_trace([single_term(K3_SYM, np.eye(2))], [spec.basis[:, [0]]])
    with pytest.raises(InvalidParameterError):
        cd_trace([single_term(K3_SYM, np.eye(2)), single_term(np.eye(3), np.eye(2))], [spec.basis])


def test_power_iteration_finds_dominant_eigenvalue():
    result = power_iteration(np.diag([3.0, 1.0]), np.array([1.0, 1.0]), verify=True)
    assert result.converged
    assert result.eigenvalue == pytest.approx(3.0)
    assert result.reached_dominant
    assert not result.oscillating


def test_power_iteration_on_kronecker_operator():
    t = vectorize(single_term(K3_SYM, 2.0 * np.eye(2)))
    result = power_iteration(t, np.ones(6))
    assert result.eigenvalue == pytest.approx(2.0, rel=1e-8)


def test_power_iteration_negative_dominant():
    result = power_iteration(np.diag([-3.0, 1.0]), np.array([1.0, 1.0]))
    assert result.oscillating
    assert result.eigenvalue == pytest.approx(-3.0)


def test_power_iteration_missing_dominant_component():
    result = power_iteration(np.diag([3.0, 1.0]), np.array([0.0, 1.0]), verify=True)
    assert result.converged
    assert result.eigenvalue == pytest.approx(1.0)
    assert result.reached_dominant is False


def test_power_iteration_skips_eigensolve_unless_verifying(monkeypatch):
    def failing(*args, **kwargs):
        raise AssertionError("full eigensolve")

    monkeypatch.setattr(np.linalg, "eigvals", failing)
    result = power_iteration(vectorize(single_term(K3_SYM, 2.0 * np.eye(2))), np.ones(6))
    assert result.converged
    assert result.reached_dominant is None


def test_power_iteration_budget_and_zero_start():
    result = power_iteration(np.diag([1.0, 0.99]), np.array([1.0, 1.0]), max_iter=3)
    assert not result.converged
    assert result.iterations <= 3
    with pytest.raises(DegenerateInputError):
        power_iteration(np.eye(2), np.zeros(2))


def test_mimo_reproduces_gcn_and_polynomials(rng):
    g = karate_club()
    spec = graph_spectrum(g)
    a_sym = normalize(g, NormKind.SYM).matrix
    x = rng.standard_normal((34, 3))
    w = rng.standard_normal((3, 2))
    assert_allclose(mimo_gc_apply(spec, gcn_mimo_weights(spec, w), x), a_sym @ x @ w, atol=1e-10)
    vs = [rng.standard_normal((3, 2)) for _ in range(3)]
    expected = x @ vs[0] + a_sym @ x @ vs[1] + a_sym @ a_sym @ x @ vs[2]
    assert_allclose(mimo_gc_apply(spec, polynomial_mimo_weights(spec, vs), x), expected, atol=1e-10)


def test_mimo_fit_is_exact(rng):
    spec = graph_spectrum(karate_club())
    x = rng.standard_normal((34, 4))
    target = rng.standard_normal((34, 2))
    weights = mimo_gc_fit(spec, x, target)
    assert len(weights) == 34
    assert_allclose(mimo_gc_apply(spec, weights, x), target, atol=1e-8)


def test_mimo_fit_single_node_single_feature():
    spec = graph_spectrum(Graph(n=1, edges=()), self_loops=True)
    weights = mimo_gc_fit(spec, np.array([[2.0]]), np.array([[3.0]]))
    assert_allclose(mimo_gc_apply(spec, weights, np.array([[2.0]])), [[3.0]])


def test_mimo_fit_rejects_missing_component():
    spec = graph_spectrum(complete(3))
    x = spec.basis[:, [0]]
    with pytest.raises(DegenerateInputError) as info:
        mimo_gc_fit(spec, x, np.ones((3, 1)))
    assert info.value.index == 2


def test_mimo_weight_count_checked(rng):
    spec = graph_spectrum(complete(3))
    with pytest.raises(DimensionMismatchError):
        mimo_gc_apply(spec, [np.eye(2)] * 2, np.ones((3, 2)))


def test_anti_sca_keeps_target(rng):
    v = rng.standard_normal((6, 2))
    b = anti_sca_bundle(v)
    assert_allclose(step(b, v), v, atol=1e-12)
    p = rng.standard_normal((6, 2))
    assert np.linalg.norm(step(b, p)) <= np.linalg.norm(p) + 1e-12
    with pytest.raises(DegenerateInputError):
        anti_sca_bundle(np.ones((6, 2)))


def test_row_stochastic_bundle(rng):
    support = add_self_loops(karate_club()).adjacency() > 0
    b = row_stochastic_bundle(support, np.eye(3), rng, min_entry=0.01)
    agg = b.aggs[0]
    assert_allclose(agg.sum(axis=1), np.ones(34), atol=1e-12)
    assert np.all(agg[~support] == 0.0)
    assert np.all(agg[support] >= 0.01 - 1e-15)
    empty = support.copy()
    empty[3] = False
    with pytest.raises(DegenerateInputError):
        row_stochastic_bundle(empty, np.eye(3), rng, min_entry=0.01)


def test_row_stochastic_iteration_collapses_rank(rng):
    support = add_self_loops(karate_club()).adjacency() > 0
    b = row_stochastic_bundle(support, np.eye(4), rng, min_entry=0.01)
    x = rng.standard_normal((34, 4))
    start = rank_one_distance(x)
    for _ in range(300):
        x = step(b, x)
    assert rank_one_distance(x) < 1e-6 < start


def test_random_skp_bundle_is_normalized(rng):
    support = add_self_loops(karate_club()).adjacency() > 0
    b = random_skp_bundle(support, 3, 4, rng)
    assert len(b.terms) == 3
    for agg in b.aggs:
        assert np.linalg.norm(agg, 2) == pytest.approx(1.0)
        assert np.all(agg[~support] == 0.0)


def test_masked_softmax(rng):
    support = complete(3).adjacency() > 0
    support[2] = False
    out = masked_row_softmax(rng.standard_normal((3, 3)), support)
    assert_allclose(out[:2].sum(axis=1), [1.0, 1.0])
    assert np.all(out[2] == 0.0)
    assert np.all(out[~support] == 0.0)


def test_softmax_skp(rng):
    support = add_self_loops(complete(4)).adjacency() > 0
    b = softmax_skp(skp_bundle([rng.standard_normal((4, 4))] * 2, [np.eye(2)] * 2), support)
    for agg in b.aggs:
        assert_allclose(agg.sum(axis=1), np.ones(4))
    with pytest.raises(DimensionMismatchError):
        softmax_skp(b, np.ones((3, 3), dtype=bool))


def test_bundle_json(rng):
    b = skp_bundle([rng.standard_normal((3, 3))] * 2, [rng.standard_normal((2, 4))] * 2, Activation.TANH)
    back = bundle_from_json(bundle_to_json(b))
    assert back.activation is Activation.TANH
    for (a1, w1), (a2, w2) in zip(b.terms, back.terms):
        assert np.array_equal(a1, a2) and np.array_equal(w1, w2)
    with pytest.raises(InvalidParameterError):
        bundle_from_json('{"terms": [{"agg": 1}]}')


def test_sca_ratio_exact_on_random_graphs(random_graphs):
    rng = np.random.default_rng(50)
    for g in random_graphs[:50]:
        a_sym = normalize(g, NormKind.SYM).matrix
        lam = np.sort(np.linalg.eigvalsh(a_sym))[::-1]
        j = 2 + int(np.argmax(np.abs(lam[1:])))
        for _ in range(50):
            w = rng.standard_normal((3, 4))
            forward = sca_ratio_sym(a_sym, w, 1, j)
            assert forward.ratio == pytest.approx(abs(lam[0]) / abs(lam[j - 1]), rel=1e-9, abs=1e-9)
            backward = sca_ratio_sym(a_sym, w, j, 1)
            assert backward.ratio == pytest.approx(backward.expected, rel=1e-9, abs=1e-9)


def test_sca_ratio_svd_on_random_aggregations():
    rng = np.random.default_rng(51)
    for _ in range(50):
        n = int(rng.integers(3, 13))
        a = rng.standard_normal((n, n))
        sigma = np.linalg.svd(a, compute_uv=False)
        result = sca_ratio_svd(a, rng.standard_normal((3, 3)), 1, 2)
        assert result.ratio == pytest.approx(sigma[0] / sigma[1], rel=1e-9)


def test_power_iteration_aligns_with_kronecker_eigenvector(random_graphs):
    rng = np.random.default_rng(52)
    for g in random_graphs[:100]:
        a_sym = normalize(g, NormKind.SYM).matrix
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        w = q @ np.diag([2.0, *rng.uniform(-1.5, 1.5, 2)]) @ q.T
        mu, u = np.linalg.eigh(a_sym)
        expected = np.kron(q[:, 0], u[:, np.argmax(mu)])
        result = power_iteration(vectorize(single_term(a_sym, w)), rng.standard_normal(g.n * 3), max_iter=500)
        cosine = abs(result.vector @ expected) / (np.linalg.norm(result.vector) * np.linalg.norm(expected))
        assert cosine >= 1 - 1e-6
        assert result.eigenvalue == pytest.approx(2.0, rel=1e-8)


def test_anti_sca_strictly_prefers_target():
    rng = np.random.default_rng(53)
    v = rng.standard_normal((6, 2))
    b = anti_sca_bundle(v)
    target = np.linalg.norm(step(b, v))
    for _ in range(100):
        p = rng.standard_normal((6, 2))
        p *= np.linalg.norm(v) / np.linalg.norm(p)
        assert target - np.linalg.norm(step(b, p)) > 1e-6
