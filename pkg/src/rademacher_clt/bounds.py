"""Second-order Poincare bounds, moment backends and a Monte Carlo lower-bound surrogate.

A *model* bundles a vector ``F = (F_1..F_d)`` of functionals on a Rademacher
space with whatever structure speeds up moment estimation.  The generic
:class:`FunctionalVector` evaluates derivatives by definition; application
modules subclass it with local samplers and symmetry classes.

B-terms are computed in class-reduced form.  A *single* class is a coordinate
``k`` with a multiplicity; a *triple* class is a representative ``(m, k, l)``
with ``m != k``, ``m != l`` (``k == l`` allowed) and a multiplicity.  Every
moment entering the bound is constant within a class.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .core import EXACT_LIMIT, Functional, RademacherSpace, with_coordinate
from .errors import CapacityError, NotPSDError, ValidationError
from .testfunctions import CosineTest, default_cosine_family

#: Coordinate count up to which moments are computed by full enumeration.
EXACT_MOMENT_LIMIT = 14
DEFAULT_SAMPLES = 100_000
DEFAULT_CHUNK = 10_000
#: Largest ``n**3`` triple count accepted when no sparsity information exists.
DEFAULT_TRIPLE_BUDGET = 2_000_000
JACKKNIFE_BATCHES = 20


# ---------------------------------------------------------------------------
# Small value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    std_error: float = 0.0
    samples: int = 0
    exact: bool = True

    def __post_init__(self):
        if self.std_error < 0:
            raise ValidationError("standard error must be nonnegative")
        if self.exact and self.std_error != 0.0:
            raise ValidationError("exact estimates carry no standard error")


@dataclass
class SymmetryClassSpec:
    """Coordinate singles and triples with multiplicities.

    ``singles``: list of ``(k, multiplicity)``.
    ``triples``: list of ``((m, k, l), multiplicity)``.
    """

    singles: list
    triples: list

    @property
    def single_total(self) -> float:
        return float(sum(mult for _, mult in self.singles))

    @property
    def triple_total(self) -> float:
        return float(sum(mult for _, mult in self.triples))

    @classmethod
    def trivial(cls, model: "FunctionalVector", budget: int = DEFAULT_TRIPLE_BUDGET) -> "SymmetryClassSpec":
        """One class per coordinate and per admitted triple."""
        n = model.space.n
        if not model.has_sparsity and n ** 3 > budget:
            raise CapacityError(
                f"{n}^3 coordinate triples exceed the budget {budget}; "
                "declare a second-derivative support or symmetry classes"
            )
        singles = [(k, 1) for k in range(n)]
        triples = []
        for m in range(n):
            nbrs = sorted(model.second_support(m))
            if len(nbrs) ** 2 + len(triples) > budget:
                raise CapacityError(f"admitted triples exceed the budget {budget}")
            triples.extend(((m, k, l), 1) for k in nbrs for l in nbrs)
        return cls(singles, triples)

    def coordinates(self) -> list[int]:
        ks = {k for k, _ in self.singles}
        for (m, k, l), _ in self.triples:
            ks.update((k, l))
        return sorted(ks)

    def pairs(self) -> list[tuple[int, int]]:
        ps = set()
        for (m, k, l), _ in self.triples:
            ps.add((m, k))
            ps.add((m, l))
        return sorted(ps)


@dataclass
class GaussianTarget:
    """Centred Gaussian vector with covariance ``sigma``."""

    sigma: np.ndarray
    factor: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if self.sigma.shape[0] != self.sigma.shape[1]:
            raise ValidationError("covariance must be square")
        if np.max(np.abs(self.sigma - self.sigma.T), initial=0.0) > 1e-12:
            raise ValidationError("covariance must be symmetric")
        self.factor = psd_factor(self.sigma)

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.factor.shape[1]))
        return z @ self.factor.T


@dataclass
class BoundReport:
    """Per-pair terms of a normal-approximation bound.

    ``kind`` is ``"A"`` (scalar terms A1..A3) or ``"B"`` (``d x d`` arrays B1..B4).
    """

    kind: str
    gap: np.ndarray
    terms: dict
    std_errors: dict
    total: float
    total_std_error: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, val in self.terms.items():
            if np.any(np.asarray(val) < -1e-15):
                raise ValidationError(f"bound term {name} is negative")


def total_bound(report: BoundReport) -> float:
    if report.kind == "A":
        return float(sum(np.sum(v) for v in report.terms.values()))
    cells = np.asarray(report.gap, dtype=float).copy()
    for v in report.terms.values():
        cells = cells + np.asarray(v, dtype=float)
    return 0.5 * float(np.sum(cells))


# ---------------------------------------------------------------------------
# Psd factor, rate fit
# ---------------------------------------------------------------------------


def psd_factor(sigma, tol: float = 1e-10) -> np.ndarray:
    """``S`` with ``S S' = sigma`` from a clamped symmetric eigendecomposition."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sym = 0.5 * (sigma + sigma.T)
    lam, vec = np.linalg.eigh(sym)
    if lam.size and lam.min() < -tol:
        raise NotPSDError(f"smallest eigenvalue {lam.min():.3e} is below -{tol}")
    lam = np.where(lam < tol, 0.0, lam)
    return vec * np.sqrt(lam)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares line through ``(log n, log bound)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValidationError("a rate fit needs at least three points")
    if np.any(pts <= 0):
        raise ValidationError("rate fits need positive n and bound values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(y) == 0.0:
        return RateFit(0.0, float(y[0]), 1.0)
    res = stats.linregress(x, y)
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


# ---------------------------------------------------------------------------
# Chunked Monte Carlo
# ---------------------------------------------------------------------------


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chunk)]))


def chunked_mean(
    integrand: Callable[[np.random.Generator, int], np.ndarray],
    samples: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``integrand`` over ``samples`` draws.

    ``integrand(rng, size)`` returns an array with leading axis ``size``.  Each
    chunk gets its own stream derived from ``(seed, chunk index)`` and chunk
    statistics are merged in index order, so results depend only on the seed
    and chunk size.
    """
    if samples < 2:
        raise ValidationError("Monte Carlo needs at least two samples")
    count, mean, m2 = 0, None, None
    for c, start in enumerate(range(0, samples, chunk)):
        size = min(chunk, samples - start)
        vals = np.asarray(integrand(chunk_rng(seed, c), size), dtype=float)
        cm = vals.mean(axis=0)
        cm2 = ((vals - cm) ** 2).sum(axis=0)
        if mean is None:
            count, mean, m2 = size, cm, cm2
            continue
        tot = count + size
        delta = cm - mean
        mean = mean + delta * size / tot
        m2 = m2 + cm2 + delta ** 2 * count * size / tot
        count = tot
    se = np.sqrt(m2 / (count - 1) / count)
    return mean, se


def batch_means(
    integrand: Callable[[np.random.Generator, int], np.ndarray],
    samples: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-chunk sizes and means, drawn from the same streams as ``chunked_mean``."""
    if samples < 2:
        raise ValidationError("Monte Carlo needs at least two samples")
    sizes, means = [], []
    for c, start in enumerate(range(0, samples, chunk)):
        size = min(chunk, samples - start)
        sizes.append(size)
        means.append(np.asarray(integrand(chunk_rng(seed, c), size), dtype=float).mean(axis=0))
    return np.array(sizes, dtype=float), np.stack(means)


# ---------------------------------------------------------------------------
# Definitional derivatives at arbitrary configurations
# ---------------------------------------------------------------------------


def iterated_derivative(F: Functional, space: RademacherSpace, configs, ks: Sequence[int]) -> np.ndarray:
    """``D_{k_1..k_m} F`` at each row of ``configs``; zero if a coordinate repeats."""
    configs = np.asarray(configs, dtype=np.int8)
    ks = [space.check_index(k) for k in ks]
    if len(set(ks)) < len(ks):
        return np.zeros(configs.shape[:-1])
    out = np.zeros(configs.shape[:-1])
    for signs in product((1, -1), repeat=len(ks)):
        w = configs
        for k, s in zip(ks, signs):
            w = with_coordinate(w, k, s)
        out = out + np.prod(signs) * F(w)
    return out * np.prod(np.sqrt(space.pq[ks])) if ks else F(configs)


@dataclass(frozen=True)
class DerivativeProduct:
    """Integrand ``prod_r (D_{coords_r} F)^{power_r}``."""

    functional: Functional
    factors: tuple  # ((coords...), power), ...

    def evaluate(self, space: RademacherSpace, configs) -> np.ndarray:
        out = np.ones(np.shape(configs)[:-1])
        for coords, power in self.factors:
            out = out * iterated_derivative(self.functional, space, configs, coords) ** power
        return out


def estimate_moment(
    expr: DerivativeProduct,
    space: RademacherSpace,
    seed: int = 0,
    samples: int = DEFAULT_SAMPLES,
    backend: str = "auto",
    chunk: int = DEFAULT_CHUNK,
) -> MomentEstimate:
    if samples < 2:
        raise ValidationError("samples must be at least 2")
    if _use_exact(backend, space.n):
        value = float(space.weights() @ expr.evaluate(space, space.configurations()))
        return MomentEstimate(value, 0.0, 2 ** space.n, True)
    mean, se = chunked_mean(lambda rng, size: expr.evaluate(space, space.sample(rng, size)), samples, seed, chunk)
    return MomentEstimate(float(mean), float(se), samples, False)


def _use_exact(backend: str, n: int) -> bool:
    if backend == "exact":
        if n > EXACT_LIMIT:
            raise CapacityError(f"exact backend needs at most {EXACT_LIMIT} coordinates, got {n}; use backend='mc'")
        return True
    if backend == "mc":
        return False
    if backend != "auto":
        raise ValidationError(f"unknown backend {backend!r}")
    return n <= EXACT_MOMENT_LIMIT


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class FunctionalVector:
    """Vector of functionals on one space with generic derivative evaluation."""

    def __init__(
        self,
        functionals: Sequence[Functional],
        space: RademacherSpace,
        classes: Optional[SymmetryClassSpec] = None,
        name: str = "vector",
    ):
        if not functionals:
            raise ValidationError("need at least one functional")
        for F in functionals:
            if F.n != space.n:
                raise ValidationError("functional and space disagree on the coordinate count")
        self.functionals = list(functionals)
        self.space = space
        self._classes = classes
        self.name = name

    @property
    def d(self) -> int:
        return len(self.functionals)

    @property
    def has_sparsity(self) -> bool:
        return any(F._second_support is not None or F.support is not None for F in self.functionals)

    def second_support(self, k: int) -> frozenset[int]:
        out: set[int] = set()
        for F in self.functionals:
            out |= F.second_derivative_support(k)
        out.discard(k)
        return frozenset(out)

    def symmetry_classes(self, budget: int = DEFAULT_TRIPLE_BUDGET) -> SymmetryClassSpec:
        return self._classes if self._classes is not None else SymmetryClassSpec.trivial(self, budget)

    def exact_covariance(self) -> Optional[np.ndarray]:
        """Closed-form covariance if the model knows one."""
        return None

    # -- evaluation ---------------------------------------------------------

    def values(self, configs) -> np.ndarray:
        return np.stack([F(configs) for F in self.functionals], axis=-1)

    def sample_values(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.values(self.space.sample(rng, size))

    def derivative_values(self, configs, ks, pairs) -> tuple[np.ndarray, np.ndarray]:
        """First derivatives at ``ks`` and second derivatives at ``pairs``.

        Shapes ``(d, size, len(ks))`` and ``(d, size, len(pairs))``.
        """
        configs = np.asarray(configs, dtype=np.int8)
        size = configs.shape[0]
        D1 = np.zeros((self.d, size, len(ks)))
        D2 = np.zeros((self.d, size, len(pairs)))
        for i, F in enumerate(self.functionals):
            for a, k in enumerate(ks):
                D1[i, :, a] = iterated_derivative(F, self.space, configs, [k])
            for b, (m, k) in enumerate(pairs):
                D2[i, :, b] = iterated_derivative(F, self.space, configs, [m, k])
        return D1, D2

    def derivative_samples(self, rng: np.random.Generator, size: int, ks, pairs):
        return self.derivative_values(self.space.sample(rng, size), ks, pairs)

    def exact_derivatives(self, ks, pairs):
        """Weights and derivative arrays over the full configuration space."""
        from .chaos import iterated_derivative_table

        sp = self.space
        tables = [F.table(sp) for F in self.functionals]
        D1 = np.stack([np.stack([iterated_derivative_table(t, sp, [k]) for k in ks], axis=-1) if ks else
                       np.zeros((2 ** sp.n, 0)) for t in tables])
        D2 = np.stack([np.stack([iterated_derivative_table(t, sp, [m, k]) if m != k else np.zeros(2 ** sp.n)
                                 for m, k in pairs], axis=-1) if pairs else np.zeros((2 ** sp.n, 0))
                       for t in tables])
        return sp.weights(), D1, D2

    def exact_moments(self):
        """Weights and the value table, shape ``(2**n, d)``."""
        sp = self.space
        return sp.weights(), np.stack([F.table(sp) for F in self.functionals], axis=-1)


# ---------------------------------------------------------------------------
# B-terms
# ---------------------------------------------------------------------------


def _moment_arrays(D1, D2, k_index, p_index, classes):
    """Per-sample integrands for all moments, concatenated on the last axis."""
    ks = np.array([k_index[k] for k, _ in classes.singles], dtype=int)
    parts = [D1[:, :, ks] ** 2, D1[:, :, ks] ** 4]
    if classes.triples:
        kk = np.array([k_index[k] for (m, k, l), _ in classes.triples], dtype=int)
        ll = np.array([k_index[l] for (m, k, l), _ in classes.triples], dtype=int)
        mk = np.array([p_index[(m, k)] for (m, k, l), _ in classes.triples], dtype=int)
        ml = np.array([p_index[(m, l)] for (m, k, l), _ in classes.triples], dtype=int)
        parts.append(D1[:, :, kk] ** 2 * D1[:, :, ll] ** 2)
        parts.append(D2[:, :, mk] ** 2 * D2[:, :, ml] ** 2)
    return np.concatenate(parts, axis=-1)  # (d, size, 2S + 2T)


def _terms_from_moments(mom, space, classes, d) -> dict:
    """B1..B4 for every (i, j) from the moment vector of each component."""
    S, T = len(classes.singles), len(classes.triples)
    pos = lambda x: np.clip(x, 0.0, None)  # noqa: E731  MC noise can push squares below zero
    m2, m4 = pos(mom[:, :S]), pos(mom[:, S:2 * S])
    rP, rQ = np.sqrt(pos(mom[:, 2 * S:2 * S + T])), np.sqrt(pos(mom[:, 2 * S + T:]))
    pq, p = space.pq, space.p_array
    s_mult = np.array([mult for _, mult in classes.singles], dtype=float)
    s_pq = np.array([pq[k] for k, _ in classes.singles])
    s_bias = np.array([abs(2 * p[k] - 1) for k, _ in classes.singles]) / np.sqrt(s_pq)
    t_mult = np.array([mult for _, mult in classes.triples], dtype=float)
    t_pq = np.array([pq[m] for (m, _, _), _ in classes.triples])

    def pair_sum(wt, a, b):
        return np.einsum("t,it,jt->ij", wt, a, b)

    return {
        "B1": np.sqrt(pos(pair_sum(15.0 / 4.0 * t_mult, rP, rQ))),
        "B2": np.sqrt(pos(pair_sum(3.0 / 4.0 * t_mult / t_pq, rQ, rQ))),
        "B3": pair_sum(0.5 * d ** 1.5 * s_mult * s_bias, np.sqrt(m2), np.sqrt(m4)),
        "B4": pair_sum(5.0 / 12.0 * d ** 2 * s_mult / s_pq, m4 ** 0.25, m4 ** 0.75),
    }


def b_terms(
    model: FunctionalVector,
    target,
    classes: Optional[SymmetryClassSpec] = None,
    backend: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    chunk: int = DEFAULT_CHUNK,
    budget: int = DEFAULT_TRIPLE_BUDGET,
) -> BoundReport:
    """Terms B1..B4 and covariance gaps for every pair ``(i, j)``."""
    sigma = target.sigma if isinstance(target, GaussianTarget) else np.atleast_2d(np.asarray(target, dtype=float))
    d = model.d
    if sigma.shape != (d, d):
        raise ValidationError(f"target covariance must be {d}x{d}")
    classes = classes if classes is not None else model.symmetry_classes(budget)
    for (m, k, l), _ in classes.triples:
        if m == k or m == l:
            raise ValidationError("triple classes need m different from k and l")
    ks = classes.coordinates()
    pairs = classes.pairs()
    k_index = {k: a for a, k in enumerate(ks)}
    p_index = {pr: b for b, pr in enumerate(pairs)}
    S, T = len(classes.singles), len(classes.triples)

    exact = _use_exact(backend, model.space.n)
    if exact:
        w, D1, D2 = model.exact_derivatives(ks, pairs)
        mom = np.einsum("s,ist->it", w, _moment_arrays(D1, D2, k_index, p_index, classes))
        terms = _terms_from_moments(mom, model.space, classes, d)
        term_se = {k: np.zeros_like(v) for k, v in terms.items()}
        wv, vals = model.exact_moments()
        means = wv @ vals
        if np.any(np.abs(means) > 1e-10):
            raise ValidationError(f"components must be centred, means are {means}")
        cov = (vals - means).T * wv @ (vals - means)
        cov_se = np.zeros_like(cov)
        n_used = 2 ** model.space.n
    else:
        def integrand(rng, size):
            D1s, D2s = model.derivative_samples(rng, size, ks, pairs)
            return np.moveaxis(_moment_arrays(D1s, D2s, k_index, p_index, classes), 1, 0)

        # Moments share samples and are strongly correlated across classes, so
        # errors come from a delete-one-batch jackknife rather than term by term.
        batch = min(chunk, -(-samples // JACKKNIFE_BATCHES))
        sizes, bmeans = batch_means(integrand, samples, seed, batch)
        wts = sizes / sizes.sum()
        mom = np.tensordot(wts, bmeans, axes=1)
        terms = _terms_from_moments(mom, model.space, classes, d)
        G = len(sizes)
        loo = [(mom - wts[g] * bmeans[g]) / (1.0 - wts[g]) for g in range(G)]
        reps = [_terms_from_moments(m, model.space, classes, d) for m in loo]
        term_se = {}
        for key in terms:
            r = np.stack([rep[key] for rep in reps])
            term_se[key] = np.sqrt((G - 1) / G * np.sum((r - r.mean(axis=0)) ** 2, axis=0))
        cov = model.exact_covariance()
        cov_se = np.zeros((d, d))
        if cov is None:
            def cov_integrand(rng, size):
                v = model.sample_values(rng, size)
                return v[:, :, None] * v[:, None, :]

            cov, cov_se = chunked_mean(cov_integrand, samples, seed + 7_919, chunk)
        n_used = samples

    gap = np.abs(sigma - cov)
    ses = dict(term_se, gap=cov_se)
    report = BoundReport(
        kind="B",
        gap=gap,
        terms=terms,
        std_errors=ses,
        total=0.0,
        meta={
            "model": model.name,
            "n": model.space.n,
            "d": d,
            "backend": "exact" if exact else "mc",
            "samples": n_used,
            "seed": seed,
            "covariance": cov,
            "single_classes": S,
            "triple_classes": T,
        },
    )
    report.total = total_bound(report)
    report.total_std_error = 0.5 * float(np.sqrt(sum(np.sum(np.asarray(s) ** 2) for s in ses.values())))
    return report


# ---------------------------------------------------------------------------
# Gaussian checks and the d4 surrogate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurrogateRow:
    a: tuple
    b: float
    empirical: float
    gaussian: float
    std_error: float

    @property
    def discrepancy(self) -> float:
        return abs(self.empirical - self.gaussian)


@dataclass(frozen=True)
class SurrogateResult:
    max_discrepancy: float
    std_error: float
    rows: tuple

    @property
    def lower_bound(self) -> float:
        """Discrepancy minus four standard errors."""
        return self.max_discrepancy - 4.0 * self.std_error


def d4_surrogate(
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    target: GaussianTarget,
    family: Optional[Sequence[CosineTest]] = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    chunk: int = DEFAULT_CHUNK,
) -> SurrogateResult:
    """Largest ``|E g(F) - E g(N)|`` over cosine test functions.

    ``sampler(rng, size)`` returns draws of ``F`` with shape ``(size, d)``.  The
    Gaussian side is closed form.  Since every member has derivative norms at
    most one, the maximum estimates a lower bound for the d4 distance.
    """
    family = list(family) if family is not None else default_cosine_family(target.d)
    for g in family:
        g.check_unit()
        if g.dim != target.d:
            raise ValidationError("test function and target dimensions differ")
    A = np.array([g.a for g in family])
    B = np.array([g.b for g in family])
    mean, se = chunked_mean(lambda rng, size: np.cos(sampler(rng, size) @ A.T + B), samples, seed, chunk)
    rows = tuple(
        SurrogateRow(g.a, g.b, float(mean[t]), g.gaussian_mean(target.sigma), float(se[t]))
        for t, g in enumerate(family)
    )
    best = max(range(len(rows)), key=lambda t: rows[t].discrepancy)
    return SurrogateResult(rows[best].discrepancy, rows[best].std_error, rows)


def gaussian_ibp_check(
    target: GaussianTarget,
    family: Optional[Sequence[CosineTest]] = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    chunk: int = DEFAULT_CHUNK,
) -> float:
    """Largest ``|z|`` between Monte Carlo ``E[N_i g(N)]`` and ``sum_j sigma_ij E[d_j g(N)]``."""
    family = list(family) if family is not None else default_cosine_family(target.d)
    for g in family:
        g.check_unit()
    A = np.array([g.a for g in family])
    B = np.array([g.b for g in family])

    def integrand(rng, size):
        N = target.sample(rng, size)
        return N[:, None, :] * np.cos(N @ A.T + B)[:, :, None]  # (size, family, d)

    mean, se = chunked_mean(integrand, samples, seed, chunk)
    rhs = np.stack([g.gaussian_ibp_rhs(target.sigma) for g in family])
    diff = mean - rhs
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(np.abs(diff) < 1e-12, 0.0, np.inf))
    return float(np.max(np.abs(z)))
