import itertools
from math import comb

import numpy as np
import pytest

from rademacher_clt.bounds import SymmetryClassSpec, b_terms
from rademacher_clt.core import RademacherSpace, first_derivative, second_derivative
from rademacher_clt.errors import CapacityError, ValidationError
from rademacher_clt.graphs import (
    DegreeVector,
    EdgeIndexer,
    ERSample,
    GraphSpec,
    SubgraphVector,
    admitted_triple_count,
    asymptotic_sigma,
    automorphism_count,
    clt_target_subgraphs,
    count_batch,
    covariance_leading,
    degree_count,
    degree_covariance,
    degree_limit_target,
    edge_symmetry_classes,
    exact_subgraph_covariance,
    expected_degree_count,
    expected_subgraph_count,
    normalized_degree_functional,
    normalized_subgraph_functional,
    subgraph_count,
)

TRI, EDGE, PATH3, SQUARE = (GraphSpec.named(x) for x in ("triangle", "edge", "path3", "square"))


def all_graphs(n, p):
    idx = EdgeIndexer(n)
    space = RademacherSpace.homogeneous(idx.size, p)
    return idx, space.weights(), idx.adjacency(space.configurations() > 0)


def test_indexer_bijection():
    idx = EdgeIndexer(7)
    seen = {idx.edge(k) for k in range(idx.size)}
    assert len(seen) == idx.size == 21
    for k in range(idx.size):
        assert idx.index(*idx.edge(k)) == k
    assert idx.shared(idx.index(0, 1), idx.index(1, 2)) == 1
    assert idx.shared(idx.index(0, 1), idx.index(2, 3)) == 0


def test_automorphisms():
    assert [automorphism_count(g) for g in (TRI, EDGE, PATH3)] == [6, 2, 2]
    with pytest.raises(CapacityError):
        automorphism_count(GraphSpec(9, ((0, 1),)))


def test_pattern_validation_and_file(tmp_path):
    with pytest.raises(ValidationError):
        GraphSpec(3, ())
    f = tmp_path / "tri.txt"
    f.write_text("3 3\n0 1\n1 2\n0 2\n")
    g = GraphSpec.from_file(f)
    assert g.e == 3 and g.aut == 6
    with pytest.raises(ValidationError):
        GraphSpec.from_text("3 3\n0 1\n")


def test_subgraph_count_examples():
    full = ERSample(4, np.ones(6, bool))
    assert subgraph_count(full, TRI) == 4
    assert subgraph_count(ERSample(4, np.zeros(6, bool)), TRI) == 0
    s = ERSample.from_edges(4, [(0, 1), (0, 2), (1, 2)])
    assert subgraph_count(s, EDGE) == 3
    assert subgraph_count(s, TRI) == 1


def test_generic_counter_matches_fast_paths(rng):
    idx = EdgeIndexer(7)
    adj = idx.adjacency(rng.random((20, idx.size)) < 0.5)
    tri_generic = GraphSpec(3, ((0, 1), (1, 2), (0, 2)), "generic-triangle")
    np.testing.assert_array_equal(count_batch(adj, TRI), count_batch(adj, tri_generic))
    np.testing.assert_array_equal(count_batch(adj, EDGE), count_batch(adj, GraphSpec(2, ((0, 1),), "e2")))


def test_binomial_reduction(rng):
    idx = EdgeIndexer(6)
    bits = rng.random((30, idx.size)) < 0.4
    np.testing.assert_array_equal(count_batch(idx.adjacency(bits), EDGE), bits.sum(axis=1))


def test_expected_counts():
    assert expected_subgraph_count(4, 0.5, TRI) == pytest.approx(0.5)
    assert expected_subgraph_count(4, 0.5, EDGE) == pytest.approx(3.0)
    assert expected_subgraph_count(6, 1.0, SQUARE) == pytest.approx(comb(6, 4) * 24 / 8)
    idx, w, A = all_graphs(4, 0.5)
    assert w @ count_batch(A, TRI) == pytest.approx(0.5)


def test_mean_consistency_mc():
    n, p = 10, 0.3
    idx = EdgeIndexer(n)
    rng = np.random.default_rng(7)
    counts = count_batch(idx.adjacency(rng.random((100_000, idx.size)) < p), PATH3)
    se = counts.std(ddof=1) / np.sqrt(counts.size)
    assert abs(counts.mean() - expected_subgraph_count(n, p, PATH3)) <= 4 * se


@pytest.mark.parametrize("n", [3, 4])
def test_exact_covariance_exhaustive(n):
    idx, w, A = all_graphs(n, 0.35)
    for g, h in itertools.product((EDGE, TRI, PATH3, SQUARE), repeat=2):
        x, y = count_batch(A, g), count_batch(A, h)
        cov = w @ (x * y) - (w @ x) * (w @ y)
        assert cov == pytest.approx(exact_subgraph_covariance(g, h, n, 0.35), abs=1e-12)


def test_covariance_leading():
    n, p = 100, 0.3
    assert covariance_leading(EDGE, EDGE, n, p) == pytest.approx(n ** 2 * p * (1 - p) / 2)
    assert covariance_leading(EDGE, EDGE, n, 1.0) == 0.0
    ratio = comb(n, 2) * p * (1 - p) / covariance_leading(EDGE, EDGE, n, p)
    assert abs(ratio - 1) < 0.012


def test_covariance_leading_triangle_vs_mc():
    n, p = 10, 0.5
    idx = EdgeIndexer(n)
    rng = np.random.default_rng(11)
    counts = count_batch(idx.adjacency(rng.random((100_000, idx.size)) < p), TRI)
    mc = counts.var(ddof=1)
    exact = exact_subgraph_covariance(TRI, TRI, n, p)
    assert abs(mc / exact - 1) < 0.1
    # Lower-order terms are still large at n = 10; the ratio converges as n grows.
    ratios = [exact_subgraph_covariance(TRI, TRI, m, p) / covariance_leading(TRI, TRI, m, p) for m in (50, 100, 200)]
    assert abs(ratios[2] - 1) < abs(ratios[1] - 1) < abs(ratios[0] - 1)


@pytest.mark.parametrize("g", [EDGE, TRI, PATH3])
def test_sigma_consistency(g):
    p = 0.4
    for n in (50, 100, 400):
        val = n ** (2 * (1 - g.v)) * covariance_leading(g, g, n, p)
        assert abs(val / asymptotic_sigma(g, p) ** 2 - 1) <= 2 / n


def test_sigma_examples():
    assert asymptotic_sigma(EDGE, 0.5) == pytest.approx(np.sqrt(1 / 8))
    assert asymptotic_sigma(TRI, 0.5) == pytest.approx(0.0883883, abs=1e-7)
    assert asymptotic_sigma(TRI, 1e-9) < 1e-9
    S = clt_target_subgraphs([EDGE, TRI], 0.5).sigma
    assert np.linalg.matrix_rank(S, tol=1e-12) == 1


def test_normalized_subgraph_functional():
    n, p = 5, 0.5
    idx = EdgeIndexer(n)
    space = RademacherSpace.homogeneous(idx.size, p)
    F = normalized_subgraph_functional(EDGE, n, p)
    assert space.weights() @ F.table(space) == pytest.approx(0.0, abs=1e-14)
    omega = space.sample(np.random.default_rng(0), 1)[0]
    assert first_derivative(F, space, omega, 3) == pytest.approx(0.5 / n)
    assert second_derivative(F, space, omega, 3, 4) == pytest.approx(0.0)
    T = normalized_subgraph_functional(TRI, n, p)
    assert idx.index(2, 3) not in T.second_derivative_support(idx.index(0, 1))
    Q = normalized_subgraph_functional(SQUARE, n, p)
    assert idx.index(2, 3) in Q.second_derivative_support(idx.index(0, 1))


def test_local_subgraph_derivatives_match_definition():
    for pats in (["edge", "triangle"], ["path3", "square"]):
        m = SubgraphVector([GraphSpec.named(x) for x in pats], 6, 0.4)
        ks = list(range(0, 15, 2))
        pairs = [(0, 1), (0, 5), (1, 9), (0, 14), (3, 12)]
        R = m._sample_rows(np.random.default_rng(1), 40, 6)
        bits = R[:, m.indexer.pairs[0], m.indexer.pairs[1]]
        cfg = np.where(bits, 1, -1).astype(np.int8)
        local = m.derivative_samples(np.random.default_rng(1), 40, ks, pairs)
        generic = super(SubgraphVector, m).derivative_values(cfg, ks, pairs)
        np.testing.assert_allclose(local[0], generic[0], atol=1e-14)
        np.testing.assert_allclose(local[1], generic[1], atol=1e-14)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 9])
def test_edge_class_multiplicities(n):
    for disjoint in (False, True):
        classes = edge_symmetry_classes(n, disjoint)
        assert classes.single_total == comb(n, 2)
        assert classes.triple_total == pytest.approx(admitted_triple_count(n, disjoint))


def test_class_reduction_is_exact():
    m = SubgraphVector([GraphSpec.named("path3"), GraphSpec.named("square")], 5, 0.4)
    a = b_terms(m, m.target())
    b = b_terms(m, m.target(), classes=SymmetryClassSpec.trivial(m))
    for k in a.terms:
        np.testing.assert_allclose(a.terms[k], b.terms[k], rtol=1e-10, atol=1e-15)


def test_exact_covariance_in_model():
    m = SubgraphVector([EDGE, TRI], 5, 0.4)
    w, vals = m.exact_moments()
    cov = (vals - w @ vals).T * w @ (vals - w @ vals)
    np.testing.assert_allclose(cov, m.exact_covariance(), atol=1e-14)


def test_degree_examples():
    full = ERSample(5, np.ones(10, bool))
    assert degree_count(full, 4) == 5 and degree_count(full, 0) == 0
    assert degree_count(ERSample(5, np.zeros(10, bool)), 0) == 5
    assert expected_degree_count(3, 0.25, 0) == pytest.approx(1.6875)
    assert degree_covariance(3, 0.5, 0, 0) == pytest.approx(1.37109375, abs=1e-12)


def test_degree_limit_target():
    S = degree_limit_target(0.5, [0, 1, 2, 3]).sigma
    assert S[0, 0] == pytest.approx(np.exp(-1) * (0.25 / 0.5 - 1) + np.exp(-0.5), abs=1e-12)
    assert S[0, 0] == pytest.approx(0.4225909, abs=1e-7)
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-10
    n = 10_000
    lim = np.array([[degree_covariance(n, 0.5, i, j) / n for j in range(4)] for i in range(4)])
    assert np.max(np.abs(lim - S)) < 1e-3


def test_degree_functional_contracts(rng):
    n, theta = 6, 0.5
    idx = EdgeIndexer(n)
    p = theta / (n - 1)
    space = RademacherSpace.homogeneous(idx.size, p)
    F = normalized_degree_functional(n, theta, 1)
    assert np.abs(space.weights() @ F.table(space)) < 1e-12
    bound1 = 2 * np.sqrt(p * (1 - p)) / np.sqrt(n)
    bound2 = 2 * p * (1 - p) / np.sqrt(n)
    for omega in space.sample(rng, 1000):
        k, l = rng.choice(idx.size, 2, replace=False)
        assert abs(first_derivative(F, space, omega, k)) <= bound1 + 1e-15
        assert abs(second_derivative(F, space, omega, k, l)) <= bound2 + 1e-15
    assert second_derivative(F, space, omega, idx.index(0, 1), idx.index(2, 3)) == 0.0


def test_degree_local_sampler_matches_definition():
    m = DegreeVector(8, 0.7, [0, 1, 2])
    ks = [m.indexer.index(0, 1), m.indexer.index(2, 5)]
    pairs = [(m.indexer.index(0, 1), m.indexer.index(1, 4)), (m.indexer.index(0, 1), m.indexer.index(2, 3))]
    rng = np.random.default_rng(3)
    D1, D2 = m.derivative_samples(rng, 200_000, ks, pairs)
    g1, g2 = super(DegreeVector, m).derivative_samples(np.random.default_rng(4), 200_000, ks, pairs)
    for a, b in ((D1, g1), (D2, g2)):
        for power in (2, 4):
            ma, mb = (a ** power).mean(axis=1), (b ** power).mean(axis=1)
            se = np.sqrt((a ** power).var(axis=1) / a.shape[1] + (b ** power).var(axis=1) / b.shape[1])
            assert np.all(np.abs(ma - mb) <= 4 * se + 1e-15)
    assert np.all(D2[:, :, 1] == 0)


def test_degree_sparse_value_sampler():
    m = DegreeVector(40, 0.5, [0, 1, 2])
    vals = m.sample_values(np.random.default_rng(5), 40_000)
    se = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
    assert np.all(np.abs(vals.mean(axis=0)) <= 4 * se)
    cov = np.cov(vals.T)
    np.testing.assert_allclose(cov, m.exact_covariance(), rtol=0.05, atol=2e-3)
