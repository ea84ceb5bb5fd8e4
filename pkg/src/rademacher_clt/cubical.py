"""Random cubical complexes on the periodic lattice ``(Z/nZ)^d``.

An open cell is a pair ``(z, S)``: base point ``z`` and a set ``S`` of
directions, stored as a bitmask.  It is the open cube spanned from ``z`` along
the directions in ``S``.  Top cells (``S`` = all directions) are the Rademacher
coordinates, indexed by ``np.ravel_multi_index`` of their base point.

Voxel model: a cell is present iff one of its incident top cells is kept.
Plaquette model: every cell below the top dimension is present, top cells are
present iff kept.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb, sqrt
from typing import Sequence

import numpy as np

from .bounds import FunctionalVector, GaussianTarget, SymmetryClassSpec
from .core import Functional, RademacherSpace
from .errors import CapacityError, ValidationError

MAX_DIM = 6
MODELS = ("voxel", "plaquette")


def _check_model(model: str) -> str:
    if model not in MODELS:
        raise ValidationError(f"model must be one of {MODELS}, got {model!r}")
    return model


def xi(delta: int, j: int) -> int:
    """Contribution ``V_j`` of one open ``delta``-cell: ``(-1)^(delta-j) C(delta, j)``."""
    return (-1) ** (delta - j) * comb(delta, j) if 0 <= j <= delta else 0


@dataclass(frozen=True)
class CellId:
    z: tuple
    mask: int

    @property
    def dim(self) -> int:
        return bin(self.mask).count("1")

    def directions(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.z)) if (self.mask >> i) & 1)


@dataclass(frozen=True)
class CubicalLattice:
    d: int
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("dimension must be at least 1")
        if self.d > MAX_DIM:
            raise CapacityError(f"dimension is capped at {MAX_DIM}")
        if self.n < 3:
            raise ValidationError("side length must be at least 3")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def top_count(self) -> int:
        return self.n ** self.d

    @property
    def full_mask(self) -> int:
        return (1 << self.d) - 1

    def cell_count(self, delta: int) -> int:
        return comb(self.d, delta) * self.n ** self.d

    def cells(self):
        """Every open cell once: ``2^d n^d`` ids."""
        for mask in range(1 << self.d):
            for z in product(range(self.n), repeat=self.d):
                yield CellId(z, mask)

    def top_index(self, z) -> int:
        return int(np.ravel_multi_index(tuple(np.mod(z, self.n)), self.shape))

    def top_point(self, k: int) -> tuple[int, ...]:
        return tuple(int(x) for x in np.unravel_index(k, self.shape))

    def faces(self, k: int) -> list[CellId]:
        """The ``3^d`` open cells in the closure of top cell ``k``."""
        z = self.top_point(k)
        out = []
        for mask in range(1 << self.d):
            free = [i for i in range(self.d) if not (mask >> i) & 1]
            for eps in product((0, 1), repeat=len(free)):
                w = list(z)
                for i, e in zip(free, eps):
                    w[i] = (w[i] + e) % self.n
                out.append(CellId(tuple(w), mask))
        return out

    def offsets(self, k: int, l: int) -> tuple[int, ...]:
        """Coordinate-wise torus offset of ``l`` relative to ``k`` in ``(-n/2, n/2]``."""
        a, b = np.array(self.top_point(k)), np.array(self.top_point(l))
        off = (b - a) % self.n
        return tuple(int(x - self.n) if x > self.n // 2 else int(x) for x in off)

    def neighbours(self, k: int) -> list[int]:
        """Top cells other than ``k`` sharing at least one face with it."""
        z = self.top_point(k)
        out = set()
        for eta in product((-1, 0, 1), repeat=self.d):
            if any(eta):
                out.add(self.top_index(np.add(z, eta)))
        out.discard(k)
        return sorted(out)


def incident_top_cells(lattice: CubicalLattice, cell: CellId) -> list[int]:
    """The ``2^(d - dim)`` top cells whose closure contains ``cell``."""
    free = [i for i in range(lattice.d) if not (cell.mask >> i) & 1]
    out = []
    for eta in product((0, 1), repeat=len(free)):
        w = list(cell.z)
        for i, e in zip(free, eta):
            w[i] -= e
        out.append(lattice.top_index(w))
    return out


def cell_present(lattice: CubicalLattice, kept, cell: CellId, model: str) -> bool:
    kept = np.asarray(kept, dtype=bool)
    if _check_model(model) == "plaquette":
        return True if cell.dim < lattice.d else bool(kept[lattice.top_index(cell.z)])
    return bool(any(kept[t] for t in incident_top_cells(lattice, cell)))


def cell_census(lattice: CubicalLattice, kept, model: str) -> np.ndarray:
    """Present cells per dimension, shape ``(..., d + 1)``; batch axes allowed."""
    _check_model(model)
    kept = np.asarray(kept, dtype=bool)
    batch = kept.shape[:-1]
    grid = kept.reshape(batch + lattice.shape)
    axes = tuple(range(len(batch), len(batch) + lattice.d))
    counts = np.zeros(batch + (lattice.d + 1,), dtype=np.int64)
    for mask in range(1 << lattice.d):
        delta = bin(mask).count("1")
        if model == "plaquette":
            counts[..., delta] += lattice.top_count if delta < lattice.d else grid.sum(axis=axes)
            continue
        free = [i for i in range(lattice.d) if not (mask >> i) & 1]
        present = np.zeros_like(grid)
        for eta in product((0, 1), repeat=len(free)):
            shift = [0] * lattice.d
            for i, e in zip(free, eta):
                shift[i] = e
            present |= np.roll(grid, shift=shift, axis=axes)
        counts[..., delta] += present.sum(axis=axes)
    return counts


def intrinsic_volumes(lattice: CubicalLattice, kept, model: str) -> np.ndarray:
    """``V_0..V_d`` of the complex, shape ``(..., d + 1)``."""
    counts = cell_census(lattice, kept, model)
    M = np.array([[xi(delta, j) for j in range(lattice.d + 1)] for delta in range(lattice.d + 1)])
    return counts @ M


def inclusion_probability(lattice: CubicalLattice, model: str, p: float, delta: int) -> float:
    if _check_model(model) == "plaquette":
        return p if delta == lattice.d else 1.0
    return 1.0 - (1.0 - p) ** (2 ** (lattice.d - delta))


def expected_intrinsic_volume(lattice: CubicalLattice, model: str, p: float, j: int) -> float:
    return float(
        sum(
            lattice.cell_count(delta) * inclusion_probability(lattice, model, p, delta) * xi(delta, j)
            for delta in range(j, lattice.d + 1)
        )
    )


def n_abdelta(a: int, b: int, delta: int) -> int:
    # Terms with l < max(a, b) vanish through the binomials.
    return sum(
        (-1) ** (delta - l) * comb(delta, l) * comb(l, a) * comb(l, b) * 2 ** (delta + l - a - b)
        for l in range(max(a, b), delta + 1)
    )


def voxel_c(d: int, p: float, i: int, j: int) -> float:
    q = 1.0 - p
    total = 0.0
    for a, b, delta in product(range(d + 1), repeat=3):
        coef = xi(a, i) * xi(b, j)
        N = n_abdelta(a, b, delta)
        if coef == 0 or N == 0:
            continue
        # q^s (q^-t - 1) written without negative powers; s >= t whenever N != 0.
        s, t = 2 ** (d - a) + 2 ** (d - b), 2 ** (d - delta)
        total += coef * comb(d, delta) * N * (q ** (s - t) - q ** s)
    return total


def voxel_covariance(lattice: CubicalLattice, p: float, i: int, j: int) -> float:
    return voxel_c(lattice.d, p, i, j) * lattice.top_count


def plaquette_covariance(lattice: CubicalLattice, p: float, i: int, j: int) -> float:
    """Covariance with the unsigned closed form ``C(d,i) C(d,j) p(1-p) n^d``."""
    return comb(lattice.d, i) * comb(lattice.d, j) * p * (1 - p) * lattice.top_count


def plaquette_oracle_covariance(lattice: CubicalLattice, p: float, i: int, j: int) -> float:
    """Covariance from the definition: only kept top cells are random."""
    d = lattice.d
    return xi(d, i) * xi(d, j) * p * (1 - p) * lattice.top_count


def clt_targets(lattice: CubicalLattice, model: str, p: float, variant: str = "stated") -> GaussianTarget:
    """Limit covariance of ``n^(-d/2) (V_0..V_d)``.

    For the plaquette model ``variant="stated"`` uses the unsigned closed form and
    ``variant="oracle"`` the signed covariance obtained from the definition.
    """
    d = lattice.d
    if _check_model(model) == "voxel":
        S = np.array([[voxel_c(d, p, i, j) for j in range(d + 1)] for i in range(d + 1)])
    elif variant == "stated":
        S = np.array([[comb(d, i) * comb(d, j) * p * (1 - p) for j in range(d + 1)] for i in range(d + 1)])
    elif variant == "oracle":
        S = np.array([[xi(d, i) * xi(d, j) * p * (1 - p) for j in range(d + 1)] for i in range(d + 1)])
    else:
        raise ValidationError(f"unknown plaquette target variant {variant!r}")
    return GaussianTarget(S)


# ---------------------------------------------------------------------------
# Normalised functionals and the moment model
# ---------------------------------------------------------------------------


def normalized_volume_functional(lattice: CubicalLattice, model: str, p: float, j: int) -> Functional:
    """``n^(-d/2) (V_j - E V_j)`` on the ``n^d`` top-cell coordinates."""
    _check_model(model)
    mean = expected_intrinsic_volume(lattice, model, p, j)
    scale = lattice.n ** (-lattice.d / 2)

    def fn(w):
        return scale * (intrinsic_volumes(lattice, np.asarray(w) > 0, model)[..., j] - mean)

    return Functional(fn, lattice.top_count, second_support=lattice.neighbours, name=f"{model}V{j}")


class VolumeVector(FunctionalVector):
    """``(n^(-d/2)(V_j - E V_j))_j`` with translation-invariant classes."""

    def __init__(self, lattice: CubicalLattice, model: str, p: float, indices: Sequence[int] | None = None):
        self.lattice = lattice
        self.model = _check_model(model)
        self.p = float(p)
        self.indices = list(range(lattice.d + 1)) if indices is None else list(indices)
        self._face_cache: dict = {}
        space = RademacherSpace.homogeneous(lattice.top_count, p)
        funcs = [normalized_volume_functional(lattice, model, p, j) for j in self.indices]
        hub = 0
        nb = lattice.neighbours(hub)
        N = lattice.top_count
        classes = SymmetryClassSpec([(hub, N)], [((hub, k, l), N) for k in nb for l in nb])
        super().__init__(funcs, space, classes, name=model)

    def second_support(self, k: int) -> frozenset[int]:
        return frozenset(self.lattice.neighbours(k))

    def exact_covariance(self) -> np.ndarray:
        d = self.lattice.d
        if self.model == "voxel":
            return np.array([[voxel_c(d, self.p, i, j) for j in self.indices] for i in self.indices])
        return np.array([[xi(d, i) * xi(d, j) * self.p * (1 - self.p) for j in self.indices] for i in self.indices])

    def target(self, variant: str = "stated") -> GaussianTarget:
        S = clt_targets(self.lattice, self.model, self.p, variant).sigma
        return GaussianTarget(S[np.ix_(self.indices, self.indices)])

    def _faces_of(self, k: int):
        """Faces of top cell ``k`` with their dimension and other incident top cells."""
        cache = self._face_cache
        if k not in cache:
            out = []
            for cell in self.lattice.faces(k):
                others = [t for t in incident_top_cells(self.lattice, cell) if t != k]
                out.append((cell, cell.dim, others))
            cache[k] = out
        return cache[k]

    def derivative_values(self, configs, ks, pairs):
        kept = (np.asarray(configs) > 0).astype(float)
        B = kept.shape[0]
        lat, p = self.lattice, self.p
        pq = p * (1 - p)
        scale = lat.n ** (-lat.d / 2)
        coef = np.array([[xi(delta, j) for j in self.indices] for delta in range(lat.d + 1)], dtype=float)
        D1 = np.zeros((self.d, B, len(ks)))
        D2 = np.zeros((self.d, B, len(pairs)))
        if self.model == "plaquette":
            D1[:] = (sqrt(pq) * scale * coef[lat.d])[:, None, None]
            return D1, D2
        for a, k in enumerate(ks):
            acc = np.zeros((B, lat.d + 1))
            for _, dim, others in self._faces_of(k):
                absent = np.prod(1.0 - kept[:, others], axis=1) if others else np.ones(B)
                acc[:, dim] += absent
            D1[:, :, a] = (sqrt(pq) * scale * acc @ coef).T
        for b, (m, k) in enumerate(pairs):
            if m == k:
                continue
            faces_k = {c: others for c, _, others in self._faces_of(k)}
            acc = np.zeros((B, lat.d + 1))
            for cell, dim, others in self._faces_of(m):
                if cell not in faces_k:
                    continue
                rest = [t for t in others if t != k]
                absent = np.prod(1.0 - kept[:, rest], axis=1) if rest else np.ones(B)
                acc[:, dim] -= absent
            D2[:, :, b] = (pq * scale * acc @ coef).T
        return D1, D2

    def sample_values(self, rng, size):
        kept = rng.random((size, self.lattice.top_count)) < self.p
        vols = intrinsic_volumes(self.lattice, kept, self.model)[:, self.indices]
        means = np.array([expected_intrinsic_volume(self.lattice, self.model, self.p, j) for j in self.indices])
        return (vols - means) * self.lattice.n ** (-self.lattice.d / 2)
