"""Acceptance suite.  Run with ``pytest tests/test_acceptance.py -v``; the
terminal summary lists one PASS/FAIL line per criterion."""
import itertools
import time
from math import comb

import numpy as np
import pytest

from rademacher_clt.bounds import FunctionalVector, GaussianTarget, b_terms, d4_surrogate, fit_rate, gaussian_ibp_check
from rademacher_clt.chaos import (
    exact_A_terms,
    reconstruct_all,
    verify_approx_ibp,
    verify_chain_rule,
    verify_mehler,
    walsh_expand,
)
from rademacher_clt.core import Functional, RademacherSpace, random_table_functional, standardized
from rademacher_clt.cubical import (
    CubicalLattice,
    clt_targets,
    expected_intrinsic_volume,
    intrinsic_volumes,
    plaquette_covariance,
    plaquette_oracle_covariance,
    voxel_c,
    voxel_covariance,
)
from rademacher_clt.experiments import ExperimentConfig, build_model, calculus_suite
from rademacher_clt.graphs import (
    EdgeIndexer,
    GraphSpec,
    count_batch,
    degree_covariance,
    degree_limit_target,
    expected_subgraph_count,
)
from rademacher_clt.testfunctions import CosineTest, default_cosine_family

SEED = 20240601
RESIDUAL = 1e-10


def centred(space, rng, scale=1.0):
    w = space.weights()
    t = scale * rng.standard_normal(2 ** space.n)
    return Functional.from_table(t - w @ t, space.n)


@pytest.mark.criterion(1)
def test_calculus_identities(detail):
    t0 = time.perf_counter()
    worst = calculus_suite(10, SEED, count=200)
    elapsed = time.perf_counter() - t0
    detail(", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f", {elapsed:.1f}s")
    for key in ("product_rule", "adjoint", "ibp", "integrated_mehler"):
        assert worst[key] < RESIDUAL, key
    assert worst["poincare_slack"] >= 0
    assert elapsed < 60


@pytest.mark.criterion(2)
def test_chaos_roundtrip(detail):
    rng = np.random.default_rng(SEED + 2)
    err = parseval = 0.0
    for c in range(50):
        n = 12 if c == 0 else int(rng.integers(1, 13))
        space = RademacherSpace(rng.uniform(0.05, 0.95, n))
        table = random_table_functional(n, rng).table(space)
        dec = walsh_expand(table, space)
        err = max(err, float(np.max(np.abs(reconstruct_all(dec) - table))))
        second = float(space.weights() @ table ** 2)
        parseval = max(parseval, abs(second - float(dec.coefficients @ dec.coefficients)) / second)
    detail(f"max reconstruction error {err:.2e}, max Parseval relative error {parseval:.2e}")
    assert err < RESIDUAL and parseval < RESIDUAL


@pytest.mark.criterion(3)
def test_mehler_monte_carlo(detail):
    rng = np.random.default_rng(SEED + 3)
    zs = []
    for c in range(20):
        n = int(rng.integers(2, 9))
        space = RademacherSpace(rng.uniform(0.1, 0.9, n))
        F = random_table_functional(n, rng)
        t = float(rng.choice([0.05, 0.3, 1.0, 3.0]))
        omega = space.sample(rng, 1)[0]
        zs.append(verify_mehler(F, space, omega, t, samples=100_000, seed=SEED + c))
    detail(f"max |z| = {max(map(abs, zs)):.2f} over {len(zs)} cases")
    assert max(map(abs, zs)) <= 4


@pytest.mark.criterion(4)
def test_remainder_bounds(detail):
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        space = RademacherSpace(rng.uniform(0.05, 0.95, n))
        Fs = [centred(space, rng, rng.uniform(0.2, 2.0)) for _ in range(d)]
        f = CosineTest(tuple(rng.uniform(-1, 1, d)), float(rng.uniform(0, 2 * np.pi)))
        checks = [verify_chain_rule(Fs, space, f, k) for k in range(n)]
        checks += [verify_approx_ibp(Fs, space, f, i) for i in range(d)]
        for chk in checks:
            assert chk.ok
            r, b = np.abs(np.asarray(chk.remainder)), np.asarray(chk.bound)
            with np.errstate(divide="ignore", invalid="ignore"):
                worst = max(worst, float(np.nanmax(np.where(b > 0, r / b, 0.0))))
    detail(f"max remainder / bound = {worst:.3f}")


@pytest.mark.criterion(5)
def test_first_order_dominated(detail):
    rng = np.random.default_rng(SEED + 5)
    slack = []
    for _ in range(50):
        n, d = int(rng.integers(1, 11)), int(rng.integers(1, 4))
        space = RademacherSpace(rng.uniform(0.05, 0.95, n))
        Fs = [centred(space, rng) for _ in range(d)]
        L = rng.standard_normal((d, d))
        sigma = L @ L.T
        A = exact_A_terms(Fs, sigma, space).total
        B = b_terms(FunctionalVector(Fs, space), sigma, backend="exact").total
        slack.append(B - A)
    detail(f"min B - A = {min(slack):.3g}, instances with B > A: {sum(s > 0 for s in slack)}/50")
    assert min(slack) >= -1e-12 and max(slack) > 0


@pytest.mark.criterion(6)
def test_single_coordinate_closed_form():
    space = RademacherSpace((0.5,))
    F = standardized(space, 0)
    assert b_terms(FunctionalVector([F], space), [[1.0]]).total == pytest.approx(5 / 6, abs=1e-12)
    assert exact_A_terms([F], [[1.0]], space).terms["A3"] == pytest.approx(5 / 6, abs=1e-12)


@pytest.mark.criterion(7)
def test_degree_covariance_exact(detail):
    assert degree_covariance(3, 0.5, 0, 0) == pytest.approx(1.37109375, abs=1e-12)
    worst = 0.0
    for n in (3, 4, 5):
        idx = EdgeIndexer(n)
        cfg = np.array(list(itertools.product((False, True), repeat=idx.size)))
        deg = idx.adjacency(cfg).sum(axis=-1)
        for theta in (0.3, 0.5, 0.9):
            p = theta / (n - 1)
            k = cfg.sum(axis=1)
            w = p ** k * (1 - p) ** (idx.size - k)
            V = np.stack([(deg == i).sum(axis=1) for i in range(5)], axis=1).astype(float)
            c = V - w @ V
            cov = (c.T * w) @ c
            formula = np.array([[degree_covariance(n, theta, i, j) for j in range(5)] for i in range(5)])
            worst = max(worst, float(np.max(np.abs(cov - formula))))
    detail(f"max |formula - exhaustive| = {worst:.2e}")
    assert worst < RESIDUAL


@pytest.mark.criterion(8)
def test_subgraph_mean(detail):
    tri = GraphSpec.named("triangle")
    assert expected_subgraph_count(4, 0.5, tri) == pytest.approx(0.5)
    idx = EdgeIndexer(4)
    cfg = np.array(list(itertools.product((False, True), repeat=idx.size)))
    assert count_batch(idx.adjacency(cfg), tri).mean() == pytest.approx(0.5)
    idx = EdgeIndexer(16)
    rng = np.random.default_rng(SEED + 8)
    counts = np.concatenate([count_batch(idx.adjacency(rng.random((10_000, idx.size)) < 0.5), tri)
                             for _ in range(10)])
    se = counts.std(ddof=1) / np.sqrt(counts.size)
    z = (counts.mean() - expected_subgraph_count(16, 0.5, tri)) / se
    detail(f"n=16 triangle mean z = {z:.2f}")
    assert abs(z) <= 4


@pytest.mark.criterion(9)
def test_voxel_covariance(detail):
    worst = 0.0
    for d, n in ((1, 3), (1, 4), (2, 3)):
        lat = CubicalLattice(d, n)
        cfg = np.array(list(itertools.product((False, True), repeat=lat.top_count)))
        for p in (0.5, 0.3, 0.8):
            k = cfg.sum(axis=1)
            w = p ** k * (1 - p) ** (lat.top_count - k)
            V = intrinsic_volumes(lat, cfg, "voxel").astype(float)
            c = V - w @ V
            formula = np.array([[voxel_covariance(lat, p, i, j) for j in range(d + 1)] for i in range(d + 1)])
            worst = max(worst, float(np.max(np.abs((c.T * w) @ c - formula))))
    assert worst < RESIDUAL
    assert voxel_c(1, 0.5, 1, 1) == pytest.approx(0.25, abs=1e-12)

    t0 = time.perf_counter()
    lat = CubicalLattice(2, 8)
    rng = np.random.default_rng(SEED + 9)
    V = np.concatenate([intrinsic_volumes(lat, rng.random((20_000, lat.top_count)) < 0.5, "voxel")
                        for _ in range(10)]).astype(float)
    mean = np.array([expected_intrinsic_volume(lat, "voxel", 0.5, j) for j in range(3)])
    c = V - mean
    prods = c[:, :, None] * c[:, None, :]
    se = prods.std(axis=0, ddof=1) / np.sqrt(len(V))
    formula = np.array([[voxel_covariance(lat, 0.5, i, j) for j in range(3)] for i in range(3)])
    z = np.max(np.abs(prods.mean(axis=0) - formula) / se)
    elapsed = time.perf_counter() - t0
    detail(f"exhaustive max error {worst:.2e}; d=2 n=8 MC max |z| = {z:.2f} in {elapsed:.1f}s")
    assert z <= 4 and elapsed < 300


@pytest.mark.criterion(10)
def test_plaquette_covariance_sign():
    for d in (1, 2, 3):
        lat = CubicalLattice(d, 3)
        for i, j in itertools.product(range(d + 1), repeat=2):
            s, o = plaquette_covariance(lat, 0.3, i, j), plaquette_oracle_covariance(lat, 0.3, i, j)
            assert abs(s) == pytest.approx(abs(o), rel=1e-12)
            if (i + j) % 2 == 0:
                assert s == pytest.approx(o, rel=1e-12)
    lat = CubicalLattice(2, 3)
    assert plaquette_covariance(lat, 0.5, 2, 2) == pytest.approx(2.25)
    assert plaquette_oracle_covariance(lat, 0.5, 2, 2) == pytest.approx(2.25)


# Rate instances: (label, config fields, n values, samples, slope target, tolerance, gating).
RATE_INSTANCES = [
    ("subgraph edge+triangle p=0.5", dict(model="subgraph", patterns=["edge", "triangle"], p=0.5),
     [16, 32, 64, 128], 20_000, -1.0, 0.15, True),
    ("degree theta=0.5 {0,1,2}", dict(model="degree", theta=0.5, degrees=[0, 1, 2]),
     [64, 128, 256, 512, 1024], 100_000, -0.5, 0.1, True),
    ("voxel d=2 p=0.3", dict(model="voxel", dim=2, p=0.3), [4, 8, 16, 32], 20_000, -1.0, 0.15, True),
    # Reported for comparison only: the n^-2 part of B4 is still large at n <= 32.
    ("voxel d=2 p=0.5", dict(model="voxel", dim=2, p=0.5), [4, 8, 16, 32], 20_000, -1.0, 0.15, False),
    ("plaquette d=2 p=0.5", dict(model="plaquette", dim=2, p=0.5, target="oracle"),
     [4, 8, 16, 32], 20_000, -1.0, 0.15, True),
]


@pytest.fixture(scope="module")
def rate_runs():
    out = {}
    for label, fields, ns, samples, target, tol, gating in RATE_INSTANCES:
        cfg = ExperimentConfig(kind="bound-subgraph", seed=SEED, samples=samples, **fields)
        t0 = time.perf_counter()
        totals, surrogate = [], {}
        for n in ns:
            model, gauss = build_model(cfg, n)
            totals.append((n, b_terms(model, gauss, samples=samples, seed=SEED).total))
            if n in ns[-2:]:
                surrogate[n] = d4_surrogate(model.sample_values, gauss, samples=samples, seed=SEED + n)
        out[label] = dict(totals=totals, surrogate=surrogate, fit=fit_rate(totals), target=target, tol=tol,
                          gating=gating, seconds=time.perf_counter() - t0)
    return out


@pytest.mark.criterion(11)
def test_rate_reproduction(rate_runs, detail):
    misses = []
    for label, run in rate_runs.items():
        slope = run["fit"].slope
        ok = abs(slope - run["target"]) <= run["tol"] and run["seconds"] < 1800
        detail(f"{label}: slope {slope:+.3f} (target {run['target']:+.2f} +/- {run['tol']}), "
               f"{run['seconds']:.1f}s, {'ok' if ok else 'MISS'}{'' if run['gating'] else ' (informational)'}")
        if run["gating"] and not ok:
            misses.append(label)
    assert not misses, f"slopes outside tolerance: {misses}"


@pytest.mark.criterion(12)
def test_surrogate_below_bound(rate_runs, detail):
    for label, run in rate_runs.items():
        totals = dict(run["totals"])
        for n, res in run["surrogate"].items():
            detail(f"{label} n={n}: surrogate {res.max_discrepancy:.4f} +/- {res.std_error:.4f}, "
                   f"bound {totals[n]:.4f}")
            assert res.lower_bound <= totals[n]


@pytest.mark.criterion(13)
def test_gaussian_sampler(detail):
    sigma_rank1 = np.outer([1.0, -0.5, 0.25], [1.0, -0.5, 0.25])
    targets = {
        "identity": GaussianTarget(np.eye(3)),
        "rank-1": GaussianTarget(sigma_rank1),
        "degree-limit": degree_limit_target(0.5, [0, 1, 2]),
        "plaquette rank-1": clt_targets(CubicalLattice(2, 4), "plaquette", 0.3, "oracle"),
    }
    for name, tgt in targets.items():
        z = gaussian_ibp_check(tgt, default_cosine_family(tgt.d)[:16], samples=100_000, seed=SEED)
        detail(f"{name}: max |z| = {z:.2f}")
        assert z <= 4
