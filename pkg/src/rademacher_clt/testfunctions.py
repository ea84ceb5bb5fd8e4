"""Smooth test functions on R^d with closed-form derivatives and derivative bounds.

``M(k)`` is the largest supremum norm of a k-th order partial derivative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class CosineTest:
    """``g(x) = cos(<a, x> + b)``; with every ``|a_i| <= 1`` all of M_1..M_4 are at most 1."""

    a: tuple[float, ...]
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in np.atleast_1d(self.a)))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return len(self.a)

    def check_unit(self) -> None:
        if max(abs(x) for x in self.a) > 1.0 + 1e-15:
            raise ValidationError(f"cosine coefficients must satisfy |a_i| <= 1, got {self.a}")

    def _phase(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.a) + self.b

    def value(self, x):
        return np.cos(self._phase(x))

    def grad(self, x):
        s = -np.sin(self._phase(x))
        return s[..., None] * np.asarray(self.a)

    def hessian(self, x):
        c = -np.cos(self._phase(x))
        a = np.asarray(self.a)
        return c[..., None, None] * np.outer(a, a)

    def third(self, x):
        s = np.sin(self._phase(x))
        a = np.asarray(self.a)
        return s[..., None, None, None] * np.einsum("i,j,k->ijk", a, a, a)

    def third_sup(self) -> np.ndarray:
        """Supremum norms of all third partials, ``|a_i a_j a_l|``."""
        a = np.abs(np.asarray(self.a))
        return np.einsum("i,j,k->ijk", a, a, a)

    def M(self, order: int) -> float:
        return float(np.max(np.abs(self.a)) ** order) if order > 0 else 1.0

    def gaussian_mean(self, sigma: np.ndarray) -> float:
        """``E[g(N)]`` for ``N ~ N(0, sigma)``."""
        a = np.asarray(self.a)
        return float(np.cos(self.b) * np.exp(-0.5 * a @ sigma @ a))

    def gaussian_ibp_rhs(self, sigma: np.ndarray) -> np.ndarray:
        """``sum_j sigma_ij E[d_j g(N)] = -sin(b) exp(-a'Σa/2) (Σa)_i`` for every i."""
        a = np.asarray(self.a)
        return -np.sin(self.b) * np.exp(-0.5 * a @ sigma @ a) * (sigma @ a)


@dataclass(frozen=True)
class QuadraticTest:
    """``g(x) = c + <g, x> + x'Hx / 2`` with symmetric ``H``; third derivatives vanish."""

    c: float
    g: tuple[float, ...]
    H: tuple[tuple[float, ...], ...]

    @classmethod
    def from_arrays(cls, c, g, H=None):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        H = np.zeros((g.size, g.size)) if H is None else np.asarray(H, dtype=float)
        H = 0.5 * (H + H.T)
        return cls(float(c), tuple(g), tuple(map(tuple, H)))

    @property
    def dim(self) -> int:
        return len(self.g)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        H = np.asarray(self.H)
        return self.c + x @ np.asarray(self.g) + 0.5 * np.einsum("...i,ij,...j->...", x, H, x)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.g) + x @ np.asarray(self.H)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.H), x.shape[:-1] + (self.dim, self.dim))

    def third(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def third_sup(self) -> np.ndarray:
        return np.zeros((self.dim,) * 3)

    def M(self, order: int) -> float:
        if order == 1:
            # Unbounded unless H = 0; only meaningful for linear functions.
            return float(np.max(np.abs(self.g))) if not np.any(self.H) else np.inf
        if order == 2:
            return float(np.max(np.abs(self.H)))
        return 0.0


def default_cosine_family(d: int) -> list[CosineTest]:
    """32 deterministic members: 8 directions x magnitudes {1, 1/2} x phases {0, pi/4}.

    Directions are the sign patterns of {-1, +1}^d followed by the signed unit
    axes, without repeats, truncated (or cycled, for d = 1) to eight.
    """
    directions: list[tuple[float, ...]] = []
    candidates = [tuple(-1.0 if (s >> i) & 1 else 1.0 for i in range(d)) for s in range(2 ** d)]
    for i in range(d):
        for sign in (1.0, -1.0):
            candidates.append(tuple(sign if j == i else 0.0 for j in range(d)))
    for c in candidates:
        if c not in directions:
            directions.append(c)
    directions = [directions[i % len(directions)] for i in range(8)]
    return [
        CosineTest(tuple(mag * x for x in a), b)
        for a in directions
        for mag in (1.0, 0.5)
        for b in (0.0, np.pi / 4)
    ]
