"""Erdos-Renyi graphs on Rademacher coordinates: subgraph counts and degree counts.

Coordinate ``k`` is an edge of the complete graph ``K_n``; the edge is kept when
``X_k = +1``.  Edges are numbered in row-major upper-triangular order
``(0,1), (0,2), ..., (0,n-1), (1,2), ...``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import permutations, product
from math import comb, exp, factorial, sqrt
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .bounds import FunctionalVector, GaussianTarget, SymmetryClassSpec
from .core import Functional, RademacherSpace
from .errors import CapacityError, ValidationError

MAX_PATTERN_VERTICES = 8
DEFAULT_MAX_DEGREE = 10


def falling(n: int, k: int) -> int:
    out = 1
    for t in range(k):
        out *= n - t
    return out


# ---------------------------------------------------------------------------
# Edge indexing
# ---------------------------------------------------------------------------


class EdgeIndexer:
    """Bijection between coordinates ``0..C(n,2)-1`` and vertex pairs ``u < w``."""

    def __init__(self, n: int):
        if n < 2:
            raise ValidationError("need at least two vertices")
        self.n = int(n)
        self.size = comb(self.n, 2)

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.n, 1)

    def index(self, u: int, w: int) -> int:
        u, w = (u, w) if u < w else (w, u)
        if u == w or u < 0 or w >= self.n:
            raise ValidationError(f"({u}, {w}) is not an edge of K_{self.n}")
        return u * (2 * self.n - u - 1) // 2 + (w - u - 1)

    def edge(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.size:
            raise IndexError(f"edge index {k} outside 0..{self.size - 1}")
        return int(self.pairs[0][k]), int(self.pairs[1][k])

    def shared(self, k: int, l: int) -> int:
        """``|e_k intersect e_l|``."""
        return len(set(self.edge(k)) & set(self.edge(l)))

    def adjacency(self, bits) -> np.ndarray:
        """Boolean adjacency matrices, shape ``(..., n, n)``, from edge bits."""
        bits = np.asarray(bits)
        A = np.zeros(bits.shape[:-1] + (self.n, self.n), dtype=bool)
        u, w = self.pairs
        A[..., u, w] = bits
        A[..., w, u] = bits
        return A


# ---------------------------------------------------------------------------
# Pattern graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphSpec:
    v: int
    edges: tuple[tuple[int, int], ...]
    name: str = ""

    def __post_init__(self):
        edges = tuple(sorted((min(a, b), max(a, b)) for a, b in self.edges))
        if not edges:
            raise ValidationError("a pattern needs at least one edge")
        if len(set(edges)) != len(edges):
            raise ValidationError("repeated edge in pattern")
        for a, b in edges:
            if a == b:
                raise ValidationError("patterns may not have loops")
            if not (0 <= a < self.v and 0 <= b < self.v):
                raise ValidationError(f"edge ({a}, {b}) outside 0..{self.v - 1}")
        object.__setattr__(self, "edges", edges)

    @property
    def e(self) -> int:
        return len(self.edges)

    @cached_property
    def neighbours(self) -> tuple[frozenset, ...]:
        nb = [set() for _ in range(self.v)]
        for a, b in self.edges:
            nb[a].add(b)
            nb[b].add(a)
        return tuple(frozenset(s) for s in nb)

    @cached_property
    def aut(self) -> int:
        return automorphism_count(self)

    @classmethod
    def named(cls, name: str) -> "GraphSpec":
        table = {
            "edge": (2, [(0, 1)]),
            "triangle": (3, [(0, 1), (1, 2), (0, 2)]),
            "path3": (3, [(0, 1), (1, 2)]),
            "square": (4, [(0, 1), (1, 2), (2, 3), (0, 3)]),
            "star3": (4, [(0, 1), (0, 2), (0, 3)]),
            "path4": (4, [(0, 1), (1, 2), (2, 3)]),
            "k4": (4, [(a, b) for a in range(4) for b in range(a + 1, 4)]),
        }
        if name not in table:
            raise ValidationError(f"unknown pattern {name!r}; known: {sorted(table)}")
        v, edges = table[name]
        return cls(v, tuple(edges), name)

    @classmethod
    def from_text(cls, text: str, name: str = "") -> "GraphSpec":
        """Parse ``"v e"`` followed by ``e`` lines ``"u w"`` (0-based)."""
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        try:
            v, e = int(lines[0][0]), int(lines[0][1])
            edges = [(int(a), int(b)) for a, b in lines[1:1 + e]]
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"malformed edge list: {exc}") from exc
        if len(edges) != e:
            raise ValidationError(f"header announces {e} edges, found {len(edges)}")
        return cls(v, tuple(edges), name)

    @classmethod
    def from_file(cls, path) -> "GraphSpec":
        path = Path(path)
        return cls.from_text(path.read_text(), path.stem)

    @classmethod
    def parse(cls, token: str) -> "GraphSpec":
        """A named pattern or a path to an edge-list file."""
        p = Path(token)
        return cls.from_file(p) if p.is_file() else cls.named(token)


def automorphism_count(g: GraphSpec) -> int:
    if g.v > MAX_PATTERN_VERTICES:
        raise CapacityError(f"brute-force automorphisms need at most {MAX_PATTERN_VERTICES} vertices")
    es = set(g.edges)
    return sum(
        1
        for perm in permutations(range(g.v))
        if all((min(perm[a], perm[b]), max(perm[a], perm[b])) in es for a, b in g.edges)
    )


# ---------------------------------------------------------------------------
# Samples and counting
# ---------------------------------------------------------------------------


@dataclass
class ERSample:
    n: int
    bits: np.ndarray  # bool, one per edge

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape[-1] != comb(self.n, 2):
            raise ValidationError(f"expected {comb(self.n, 2)} edge bits")

    @classmethod
    def from_configuration(cls, n: int, omega) -> "ERSample":
        return cls(n, np.asarray(omega) > 0)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "ERSample":
        idx = EdgeIndexer(n)
        bits = np.zeros(idx.size, dtype=bool)
        for u, w in edges:
            bits[idx.index(u, w)] = True
        return cls(n, bits)

    def adjacency(self) -> np.ndarray:
        return EdgeIndexer(self.n).adjacency(self.bits)


class _Host:
    """Adjacency rows ``R[:, u, w]`` for ``u < r`` plus edges forced present."""

    def __init__(self, rows: np.ndarray, forced: Iterable[tuple[int, int]] = ()):
        self.rows = rows
        self.r = rows.shape[1]
        self.n = rows.shape[2]
        self.forced = {frozenset(e) for e in forced}

    def edge(self, u: int, w: int) -> np.ndarray:
        if frozenset((u, w)) in self.forced:
            return np.ones(self.rows.shape[0])
        if u < self.r:
            return self.rows[:, u, w].astype(float)
        if w < self.r:
            return self.rows[:, w, u].astype(float)
        raise CapacityError("local sample does not cover this edge; use full adjacency")

    def row(self, u: int) -> np.ndarray:
        if u >= self.r:
            raise CapacityError("local sample does not cover this vertex; use full adjacency")
        out = self.rows[:, u, :].astype(float)
        for e in self.forced:
            if u in e:
                (other,) = tuple(e - {u})
                out[:, other] = 1.0
        return out


def _count_extensions(host: _Host, g: GraphSpec, assign: dict) -> np.ndarray:
    """Number of injections extending ``assign`` with every pattern edge present."""
    B = host.rows.shape[0]
    hosts = list(assign.values())
    if len(set(hosts)) != len(hosts):
        return np.zeros(B)
    weight = np.ones(B)
    for a, b in g.edges:
        if a in assign and b in assign:
            weight = weight * host.edge(assign[a], assign[b])
    # Visit free vertices adjacent to already-assigned ones first.
    order, seen = [], set(assign)
    while len(seen) < g.v:
        cand = [a for a in range(g.v) if a not in seen and g.neighbours[a] & seen]
        nxt = cand[0] if cand else min(a for a in range(g.v) if a not in seen)
        order.append(nxt)
        seen.add(nxt)
    return weight * _extend(host, g, dict(assign), order)


def _extend(host: _Host, g: GraphSpec, assign: dict, order: list) -> np.ndarray:
    B = host.rows.shape[0]
    if not order:
        return np.ones(B)
    a, rest = order[0], order[1:]
    nbrs = [assign[b] for b in g.neighbours[a] if b in assign]
    used = list(assign.values())
    if not rest:
        W = np.ones((B, host.n))
        for h in nbrs:
            W = W * host.row(h)
        W[:, used] = 0.0
        return W.sum(axis=1)
    total = np.zeros(B)
    for w in range(host.n):
        if w in used:
            continue
        wt = np.ones(B)
        for h in nbrs:
            wt = wt * host.edge(h, w)
        if not wt.any():
            continue
        assign[a] = w
        total = total + wt * _extend(host, g, assign, rest)
        del assign[a]
    return total


def count_batch(adj: np.ndarray, g: GraphSpec) -> np.ndarray:
    """Copies of ``g`` in each adjacency matrix of a batch ``(B, n, n)``."""
    adj = np.asarray(adj, dtype=bool)
    if adj.ndim == 2:
        return count_batch(adj[None], g)[0]
    if g.v > adj.shape[-1]:
        return np.zeros(adj.shape[0])
    if g.name == "edge" or (g.v == 2 and g.e == 1):
        return adj.sum(axis=(1, 2)) / 2.0
    if g.v == 3 and g.e == 3:
        # float32 products are exact here: every entry of A @ A is at most n.
        A = adj.astype(np.float32)
        return np.einsum("bij,bij->b", A @ A, A, dtype=np.float64) / 6.0
    return _count_extensions(_Host(adj), g, {}) / g.aut


def subgraph_count(sample: ERSample, g: GraphSpec) -> int:
    return int(round(float(count_batch(sample.adjacency(), g))))


def copies_through_edge(host: _Host, g: GraphSpec, u: int, w: int) -> np.ndarray:
    """Copies of ``g`` in ``K_n`` containing edge ``uw`` whose other edges are present."""
    host = _Host(host.rows, host.forced | {frozenset((u, w))})
    total = 0.0
    for a, b in g.edges:
        for x, y in ((u, w), (w, u)):
            total = total + _count_extensions(host, g, {a: x, b: y})
    return total / g.aut


def copies_through_two_edges(host: _Host, g: GraphSpec, e1: tuple, e2: tuple) -> np.ndarray:
    """Copies containing both edges, all other edges present."""
    if frozenset(e1) == frozenset(e2):
        raise ValidationError("edges must differ")
    host = _Host(host.rows, host.forced | {frozenset(e1), frozenset(e2)})
    total = 0.0
    for i1, (a, b) in enumerate(g.edges):
        for i2, (c, d) in enumerate(g.edges):
            if i1 == i2:
                continue
            for x, y in (e1, e1[::-1]):
                for s, t in (e2, e2[::-1]):
                    assign: dict = {}
                    ok = True
                    for pv, hv in ((a, x), (b, y), (c, s), (d, t)):
                        if assign.get(pv, hv) != hv:
                            ok = False
                            break
                        assign[pv] = hv
                    if ok and len(set(assign.values())) == len(assign):
                        total = total + _count_extensions(host, g, assign)
    return total / g.aut


# ---------------------------------------------------------------------------
# Means and covariances
# ---------------------------------------------------------------------------


def copy_count(n: int, g: GraphSpec) -> float:
    return falling(n, g.v) / g.aut


def expected_subgraph_count(n: int, p: float, g: GraphSpec) -> float:
    return comb(n, g.v) * factorial(g.v) / g.aut * p ** g.e


def covariance_leading(g: GraphSpec, h: GraphSpec, n: int, p: float) -> float:
    """Leading term of ``cov(X_g, X_h)``; relative error ``O(1/n)``."""
    return 2.0 * n ** (g.v + h.v - 2) / (g.aut * h.aut) * g.e * h.e * p ** (g.e + h.e - 1) * (1 - p)


def exact_subgraph_covariance(g: GraphSpec, h: GraphSpec, n: int, p: float) -> float:
    """Exact ``cov(X_g, X_h)`` for finite ``n``.

    Fix one copy of ``g`` on vertices ``0..v_g-1``.  Copies of ``h`` are
    injections modulo automorphisms; each is classified by which of its
    vertices land on the fixed copy.  Copies sharing ``s >= 1`` edges
    contribute ``p^(e_g+e_h-s) - p^(e_g+e_h)``.
    """
    if g.v > n or h.v > n:
        return 0.0
    gedges = {frozenset(e) for e in g.edges}
    total = 0.0
    for j in range(0, min(g.v, h.v) + 1):
        for dom in _subsets(h.v, j):
            for img in permutations(range(g.v), j):
                phi = dict(zip(dom, img))
                s = sum(
                    1 for a, b in h.edges if a in phi and b in phi and frozenset((phi[a], phi[b])) in gedges
                )
                if s:
                    total += falling(n - g.v, h.v - j) * (p ** (g.e + h.e - s) - p ** (g.e + h.e))
    return copy_count(n, g) * total / h.aut


def _subsets(v: int, j: int):
    from itertools import combinations

    return combinations(range(v), j)


def asymptotic_sigma(g: GraphSpec, p: float) -> float:
    return sqrt(2 * p * (1 - p)) * g.e / g.aut * p ** (g.e - 1)


def clt_target_subgraphs(patterns: Sequence[GraphSpec], p: float) -> GaussianTarget:
    s = np.array([asymptotic_sigma(g, p) for g in patterns])
    return GaussianTarget(np.outer(s, s))


def expected_degree_count(n: int, p: float, i: int) -> float:
    if not 0 <= i <= n - 1:
        return 0.0
    return n * comb(n - 1, i) * p ** i * (1 - p) ** (n - 1 - i)


def degree_count(sample: ERSample, i: int) -> int:
    return int(np.sum(sample.adjacency().sum(axis=-1) == i))


def degree_covariance(n: int, theta: float, i: int, j: int) -> float:
    """Closed-form ``cov(V_i, V_j)`` with ``p = theta / (n - 1)``."""
    if not 0 < theta < n - 1:
        raise ValidationError("theta must lie in (0, n - 1)")
    p = theta / (n - 1)
    ei, ej = expected_degree_count(n, p, i), expected_degree_count(n, p, j)
    out = ei * ej / n * ((i - theta) * (j - theta) / (theta * (1 - theta / (n - 1))) - 1)
    return out + (ei if i == j else 0.0)


def degree_limit_target(theta: float, degrees: Sequence[int]) -> GaussianTarget:
    d = len(degrees)
    S = np.zeros((d, d))
    for a, i in enumerate(degrees):
        for b, j in enumerate(degrees):
            S[a, b] = theta ** (i + j) / (factorial(i) * factorial(j)) * exp(-2 * theta) * (
                (i - theta) * (j - theta) / theta - 1
            )
            if i == j:
                S[a, b] += theta ** i / factorial(i) * exp(-theta)
    return GaussianTarget(S)


# ---------------------------------------------------------------------------
# Symmetry classes of edge triples in K_n
# ---------------------------------------------------------------------------


def _canonical(edges: Sequence[tuple[int, int]]) -> tuple:
    best = None
    for flips in product((False, True), repeat=len(edges)):
        seq = [(b, a) if f else (a, b) for (a, b), f in zip(edges, flips)]
        label: dict = {}
        out = []
        for a, b in seq:
            for x in (a, b):
                label.setdefault(x, len(label))
            out.append((label[a], label[b]))
        out = tuple(out)
        if best is None or out < best:
            best = out
    return best


@lru_cache(maxsize=None)
def _k6_triple_classes(admit_disjoint: bool, admit_shared: bool = True) -> tuple:
    """Canonical ordered triples ``(m, k, l)`` of K_6 edges and their K_6 counts."""
    edges = [(a, b) for a in range(6) for b in range(a + 1, 6)]

    def admitted(e, f):
        s = len(set(e) & set(f))
        return s == 1 and admit_shared or s == 0 and admit_disjoint

    counts: dict = {}
    for m in edges:
        for k in edges:
            if k == m or not admitted(m, k):
                continue
            for l in edges:
                if l == m or not admitted(m, l):
                    continue
                c = _canonical((m, k, l))
                counts[c] = counts.get(c, 0) + 1
    return tuple(sorted(counts.items()))


def edge_symmetry_classes(n: int, admit_disjoint: bool) -> SymmetryClassSpec:
    """Classes for edge-transitive functionals on ``K_n`` (rep vertices in 0..5)."""
    idx = EdgeIndexer(n)
    singles = [(idx.index(0, 1), comb(n, 2))]
    triples = []
    for canon, c6 in _k6_triple_classes(admit_disjoint):
        vprime = 1 + max(max(e) for e in canon)
        if vprime > n:
            continue
        mult = c6 * falling(n, vprime) / falling(6, vprime)
        m, k, l = (idx.index(*e) for e in canon)
        triples.append(((m, k, l), mult))
    return SymmetryClassSpec(singles, triples)


def admitted_triple_count(n: int, admit_disjoint: bool) -> int:
    """Brute-force count of admitted ordered triples in ``K_n`` (for checks)."""
    edges = [(a, b) for a in range(n) for b in range(a + 1, n)]
    total = 0
    for m in edges:
        nb = sum(
            1
            for k in edges
            if k != m and (len(set(k) & set(m)) == 1 or admit_disjoint and not set(k) & set(m))
        )
        total += nb * nb
    return total


# ---------------------------------------------------------------------------
# Normalised subgraph vector
# ---------------------------------------------------------------------------


def _edge_oracle(idx: EdgeIndexer, admit_disjoint: bool):
    def support(k: int):
        u, w = idx.edge(k)
        out = []
        for l in range(idx.size):
            if l == k:
                continue
            s = len({u, w} & set(idx.edge(l)))
            if s == 1 or (s == 0 and admit_disjoint):
                out.append(l)
        return out

    return support


def normalized_subgraph_functional(g: GraphSpec, n: int, p: float) -> Functional:
    """``n^(1-v) (X_g - E X_g)`` on the ``C(n,2)`` edge coordinates."""
    idx = EdgeIndexer(n)
    mean = expected_subgraph_count(n, p, g)
    scale = float(n) ** (1 - g.v)

    def fn(w):
        w = np.asarray(w)
        flat = w.reshape(-1, idx.size)
        out = np.empty(flat.shape[0])
        for s in range(0, flat.shape[0], 4096):
            out[s:s + 4096] = count_batch(idx.adjacency(flat[s:s + 4096] > 0), g)
        return scale * (out.reshape(w.shape[:-1]) - mean)

    return Functional(fn, idx.size, second_support=_edge_oracle(idx, g.v >= 4), name=f"subgraph[{g.name}]")


class SubgraphVector(FunctionalVector):
    """Normalised counts of several patterns with local derivative sampling."""

    def __init__(self, patterns: Sequence[GraphSpec], n: int, p: float):
        if not 0 < p < 1:
            raise ValidationError("p must lie in (0, 1)")
        self.patterns = list(patterns)
        self.n_vertices = int(n)
        self.p = float(p)
        self.indexer = EdgeIndexer(n)
        self.admit_disjoint = max(g.v for g in self.patterns) >= 4
        space = RademacherSpace.homogeneous(self.indexer.size, p)
        funcs = [normalized_subgraph_functional(g, n, p) for g in self.patterns]
        classes = edge_symmetry_classes(n, self.admit_disjoint) if n >= 2 else None
        super().__init__(funcs, space, classes, name="subgraph")

    def second_support(self, k: int) -> frozenset[int]:
        return frozenset(_edge_oracle(self.indexer, self.admit_disjoint)(k))

    def exact_covariance(self) -> np.ndarray:
        n = self.n_vertices
        d = len(self.patterns)
        C = np.zeros((d, d))
        for a, g in enumerate(self.patterns):
            for b, h in enumerate(self.patterns):
                C[a, b] = exact_subgraph_covariance(g, h, n, self.p) * float(n) ** (2 - g.v - h.v)
        return C

    def target(self) -> GaussianTarget:
        return clt_target_subgraphs(self.patterns, self.p)

    def _sample_rows(self, rng: np.random.Generator, size: int, r: int) -> np.ndarray:
        n = self.n_vertices
        R = np.zeros((size, r, n), dtype=bool)
        for u in range(r):
            R[:, u, u + 1:] = rng.random((size, n - u - 1)) < self.p
        for u in range(r):
            R[:, u + 1:r, u] = R[:, u, u + 1:r]
        return R

    def derivative_samples(self, rng, size, ks, pairs):
        idx = self.indexer
        verts = {v for k in ks for v in idx.edge(k)} | {v for pr in pairs for k in pr for v in idx.edge(k)}
        local = max(g.v for g in self.patterns) <= 3 and max(verts, default=0) < 6
        r = min(6, self.n_vertices) if local else self.n_vertices
        host = _Host(self._sample_rows(rng, size, r))
        n, p, q = self.n_vertices, self.p, 1 - self.p
        D1 = np.zeros((self.d, size, len(ks)))
        D2 = np.zeros((self.d, size, len(pairs)))
        for i, g in enumerate(self.patterns):
            scale = float(n) ** (1 - g.v)
            for a, k in enumerate(ks):
                D1[i, :, a] = sqrt(p * q) * scale * copies_through_edge(host, g, *idx.edge(k))
            for b, (m, k) in enumerate(pairs):
                if g.e >= 2 and m != k:
                    D2[i, :, b] = p * q * scale * copies_through_two_edges(host, g, idx.edge(m), idx.edge(k))
        return D1, D2

    def sample_values(self, rng, size):
        idx = self.indexer
        bits = rng.random((size, idx.size)) < self.p
        out = np.empty((size, self.d))
        for i, g in enumerate(self.patterns):
            counts = np.concatenate([
                count_batch(idx.adjacency(bits[s:s + 500]), g) for s in range(0, size, 500)
            ])
            out[:, i] = (counts - expected_subgraph_count(self.n_vertices, self.p, g)) * float(self.n_vertices) ** (1 - g.v)
        return out


# ---------------------------------------------------------------------------
# Normalised degree-count vector
# ---------------------------------------------------------------------------


def normalized_degree_functional(n: int, theta: float, i: int) -> Functional:
    """``(V_i - E V_i) / sqrt(n)`` with ``p = theta / (n - 1)``."""
    idx = EdgeIndexer(n)
    p = theta / (n - 1)
    mean = expected_degree_count(n, p, i)
    u, w = idx.pairs

    def fn(cfg):
        bits = np.asarray(cfg) > 0
        flat = bits.reshape(-1, idx.size).astype(np.float64)
        deg = np.asarray(_incidence(n).T @ flat.T).T
        counts = np.sum(np.rint(deg) == i, axis=-1)
        return (counts.reshape(bits.shape[:-1]) - mean) / sqrt(n)

    def support(k):
        a, b = idx.edge(k)
        return [l for l in range(idx.size) if len({a, b} & set(idx.edge(l))) == 1]

    return Functional(fn, idx.size, second_support=support, name=f"degree[{i}]")


@lru_cache(maxsize=8)
def _incidence(n: int):
    """Sparse edge-vertex incidence matrix, shape ``(C(n,2), n)``."""
    from scipy import sparse

    idx = EdgeIndexer(n)
    u, w = idx.pairs
    rows = np.repeat(np.arange(idx.size), 2)
    cols = np.stack([u, w], axis=1).reshape(-1)
    return sparse.csr_matrix((np.ones(2 * idx.size), (rows, cols)), shape=(idx.size, n))


class DegreeVector(FunctionalVector):
    """Normalised degree counts ``(F_i)`` for a list of degrees.

    Derivatives at edges among the first six vertices are sampled from the
    exact joint law of those vertices' degrees: explicit edges inside the set
    plus an independent ``Binomial(n - 6, p)`` number of outside neighbours each.
    """

    LOCAL = 6

    def __init__(self, n: int, theta: float, degrees: Sequence[int], max_degree: int = DEFAULT_MAX_DEGREE):
        if any(i > max_degree or i < 0 for i in degrees):
            raise ValidationError(f"degrees must lie in 0..{max_degree}")
        self.n_vertices = int(n)
        self.theta = float(theta)
        self.p = self.theta / (n - 1)
        if not 0 < self.p < 1:
            raise ValidationError("theta / (n - 1) must lie in (0, 1)")
        self.degrees = list(degrees)
        self.indexer = EdgeIndexer(n)
        space = RademacherSpace.homogeneous(self.indexer.size, self.p)
        funcs = [normalized_degree_functional(n, theta, i) for i in degrees]
        classes = _degree_classes(n)
        super().__init__(funcs, space, classes, name="degree")

    def second_support(self, k: int) -> frozenset[int]:
        a, b = self.indexer.edge(k)
        n = self.n_vertices
        out = set()
        for x in (a, b):
            out.update(self.indexer.index(x, y) for y in range(n) if y not in (a, b))
        return frozenset(out)

    def exact_covariance(self) -> np.ndarray:
        n = self.n_vertices
        return np.array([[degree_covariance(n, self.theta, i, j) / n for j in self.degrees] for i in self.degrees])

    def target(self) -> GaussianTarget:
        return degree_limit_target(self.theta, self.degrees)

    def exact_moments(self):
        if self.indexer.size > 64:
            raise CapacityError("exact degree moments need a small graph")
        return super().exact_moments()

    def derivative_samples(self, rng, size, ks, pairs):
        n, p = self.n_vertices, self.p
        idx = self.indexer
        verts = {v for k in ks for v in idx.edge(k)} | {v for pr in pairs for k in pr for v in idx.edge(k)}
        if n < self.LOCAL or max(verts, default=0) >= self.LOCAL:
            return super().derivative_samples(rng, size, ks, pairs)
        L = self.LOCAL
        inner = [(a, b) for a in range(L) for b in range(a + 1, L)]
        bits = rng.random((size, len(inner))) < p
        deg = rng.binomial(n - L, p, size=(size, L)).astype(np.int64)
        pos = {}
        for t, (a, b) in enumerate(inner):
            deg[:, a] += bits[:, t]
            deg[:, b] += bits[:, t]
            pos[a, b] = pos[b, a] = t
        sq = sqrt(p * (1 - p))
        D1 = np.zeros((self.d, size, len(ks)))
        D2 = np.zeros((self.d, size, len(pairs)))
        for c, k in enumerate(ks):
            a, b = idx.edge(k)
            present = bits[:, pos[a, b]].astype(np.int64)
            for i_, i in enumerate(self.degrees):
                diff = 0.0
                for x in (a, b):
                    rest = deg[:, x] - present
                    diff = diff + (rest + 1 == i).astype(float) - (rest == i)
                D1[i_, :, c] = sq * diff / sqrt(n)
        for c, (m, k) in enumerate(pairs):
            common = set(idx.edge(m)) & set(idx.edge(k))
            if len(common) != 1 or m == k:
                continue
            (x,) = common
            rest = deg[:, x] - bits[:, pos[idx.edge(m)]] - bits[:, pos[idx.edge(k)]]
            for i_, i in enumerate(self.degrees):
                val = (rest + 2 == i).astype(float) - 2.0 * (rest + 1 == i) + (rest == i)
                D2[i_, :, c] = p * (1 - p) * val / sqrt(n)
        return D1, D2

    def sample_values(self, rng, size):
        """Full-graph degree counts from a sparse edge sampler."""
        n, p = self.n_vertices, self.p
        N = self.indexer.size
        u, w = self.indexer.pairs
        out = np.empty((size, self.d))
        mu = N * p
        K = int(mu + 8 * sqrt(mu) + 16)
        for s in range(0, size, 2000):
            B = min(2000, size - s)
            while True:
                gaps = rng.geometric(p, size=(B, K))
                pos = np.cumsum(gaps, axis=1) - 1
                if np.all(pos[:, -1] >= N):
                    break
                K *= 2
            sid, col = np.nonzero(pos < N)
            e = pos[sid, col]
            deg = np.bincount(np.concatenate([sid * n + u[e], sid * n + w[e]]), minlength=B * n).reshape(B, n)
            for i_, i in enumerate(self.degrees):
                out[s:s + B, i_] = ((deg == i).sum(axis=1) - expected_degree_count(n, p, i)) / sqrt(n)
        return out


def _degree_classes(n: int) -> SymmetryClassSpec:
    idx = EdgeIndexer(n)
    singles = [(idx.index(0, 1), comb(n, 2))]
    triples = []
    for canon, c6 in _k6_triple_classes(False):
        vprime = 1 + max(max(e) for e in canon)
        if vprime > n:
            continue
        mult = c6 * falling(n, vprime) / falling(6, vprime)
        triples.append((tuple(idx.index(*e) for e in canon), mult))
    return SymmetryClassSpec(singles, triples)
