"""Finite Rademacher spaces, functionals and discrete Malliavin derivatives.

Configurations are arrays of ``+1``/``-1`` values of shape ``(..., n)``.  The
whole configuration space is enumerated in a fixed order: configuration number
``i`` has ``omega_k = +1`` exactly when bit ``k`` of ``i`` is set.  Coordinates
are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import CapacityError, ValidationError

#: Largest coordinate count for which the full configuration space is enumerated.
EXACT_LIMIT = 20


@dataclass(frozen=True)
class RademacherSpace:
    """Product measure of independent signs with ``P(X_k = +1) = p[k]``."""

    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in np.atleast_1d(np.asarray(self.p, dtype=float)))
        if len(p) == 0:
            raise ValidationError("a Rademacher space needs at least one coordinate")
        if not all(0.0 < x < 1.0 for x in p):
            raise ValidationError(f"success probabilities must lie in (0, 1), got {p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def homogeneous(cls, n: int, p: float = 0.5) -> "RademacherSpace":
        return cls((p,) * n)

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def p_array(self) -> np.ndarray:
        return np.asarray(self.p)

    @property
    def q_array(self) -> np.ndarray:
        return 1.0 - np.asarray(self.p)

    @property
    def pq(self) -> np.ndarray:
        p = np.asarray(self.p)
        return p * (1.0 - p)

    def check_index(self, k: int) -> int:
        if not 0 <= k < self.n:
            raise IndexError(f"coordinate {k} outside 0..{self.n - 1}")
        return int(k)

    def check_exact(self) -> None:
        if self.n > EXACT_LIMIT:
            raise CapacityError(
                f"exact enumeration over 2^{self.n} configurations exceeds the limit 2^{EXACT_LIMIT}"
            )

    def configurations(self) -> np.ndarray:
        """All ``2**n`` configurations, shape ``(2**n, n)``, dtype int8."""
        self.check_exact()
        idx = np.arange(2 ** self.n, dtype=np.int64)
        bits = (idx[:, None] >> np.arange(self.n)) & 1
        return (2 * bits - 1).astype(np.int8)

    def weights(self) -> np.ndarray:
        """Probability of every configuration, in enumeration order."""
        self.check_exact()
        w = np.ones(1)
        # Build the product weight bit by bit; bit k is the slowest-varying at step k.
        for k in range(self.n):
            w = np.concatenate([w * (1.0 - self.p[k]), w * self.p[k]])
        return w

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random((size, self.n))
        return np.where(u < self.p_array, 1, -1).astype(np.int8)


def encode(omega: np.ndarray) -> np.ndarray:
    """Configuration(s) -> enumeration index."""
    omega = np.asarray(omega)
    bits = (omega > 0).astype(np.int64)
    return bits @ (1 << np.arange(omega.shape[-1], dtype=np.int64))


def decode(index, n: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    bits = (index[..., None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


def with_coordinate(omega: np.ndarray, k: int, value: int) -> np.ndarray:
    out = np.array(omega, dtype=np.int8, copy=True)
    out[..., k] = value
    return out


class Functional:
    """A real function of a configuration.

    ``fn`` receives an int8 array of shape ``(..., n)`` and must return an array of
    shape ``(...)`` when ``vectorized`` is true; otherwise it is called once per
    configuration with a 1-d array.

    ``support`` optionally lists the coordinates the value depends on.
    ``second_support`` optionally maps ``k`` to the coordinates ``l`` for which
    ``D_k D_l F`` may be nonzero; it defaults to every coordinate (or the support).
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        n: int,
        *,
        support: Optional[Iterable[int]] = None,
        second_support: Optional[Callable[[int], Iterable[int]]] = None,
        vectorized: bool = True,
        name: str = "",
    ):
        self._fn = fn
        self.n = int(n)
        self.support = None if support is None else frozenset(int(k) for k in support)
        self._second_support = second_support
        self.vectorized = vectorized
        self.name = name

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega)
        if omega.shape[-1] != self.n:
            raise ValidationError(f"configuration length {omega.shape[-1]} != {self.n}")
        if self.vectorized:
            return np.asarray(self._fn(omega), dtype=float)
        flat = omega.reshape(-1, self.n)
        out = np.array([float(self._fn(row)) for row in flat])
        return out.reshape(omega.shape[:-1])

    def second_derivative_support(self, k: int) -> frozenset[int]:
        if self._second_support is not None:
            return frozenset(self._second_support(k))
        if self.support is not None:
            return self.support if k in self.support else frozenset()
        return frozenset(range(self.n))

    def table(self, space: RademacherSpace) -> np.ndarray:
        """Values at every configuration, in enumeration order."""
        return self(space.configurations())

    # Arithmetic keeps declared supports when both operands carry one.
    def _combine(self, other, op, name):
        if isinstance(other, Functional):
            if other.n != self.n:
                raise ValidationError("functionals live on different spaces")
            support = None
            if self.support is not None and other.support is not None:
                support = self.support | other.support
            return Functional(lambda w: op(self(w), other(w)), self.n, support=support, name=name)
        c = float(other)
        return Functional(lambda w: op(self(w), c), self.n, support=self.support, name=name)

    def __add__(self, other):
        return self._combine(other, np.add, "sum")

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract, "difference")

    def __mul__(self, other):
        return self._combine(other, np.multiply, "product")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @classmethod
    def constant(cls, value: float, n: int) -> "Functional":
        return cls(lambda w: np.full(np.shape(w)[:-1], float(value)), n, support=(), name="constant")

    @classmethod
    def from_table(cls, values, n: int) -> "Functional":
        """Functional given by its values in enumeration order."""
        values = np.asarray(values, dtype=float)
        if values.shape != (2 ** n,):
            raise ValidationError(f"table must have 2^{n} entries")
        return cls(lambda w: values[encode(w)], n, name="table")


def standardized_value(space: RademacherSpace, omega, k: int):
    """``Y_k = (X_k - p_k + q_k) / (2 sqrt(p_k q_k))``."""
    k = space.check_index(k)
    p = space.p[k]
    x = np.asarray(omega)[..., k].astype(float)
    return (x - p + (1.0 - p)) / (2.0 * np.sqrt(p * (1.0 - p)))


def standardized(space: RademacherSpace, k: int) -> Functional:
    """The functional ``omega -> Y_k(omega)``."""
    k = space.check_index(k)
    return Functional(lambda w: standardized_value(space, w, k), space.n, support=(k,), name=f"Y{k}")


def walsh_monomial(space: RademacherSpace, subset: Iterable[int]) -> Functional:
    """Product of standardized coordinates over ``subset``."""
    subset = tuple(sorted(space.check_index(k) for k in subset))

    def fn(w):
        out = np.ones(np.shape(w)[:-1])
        for k in subset:
            out = out * standardized_value(space, w, k)
        return out

    return Functional(fn, space.n, support=subset, name="Y" + "".join(map(str, subset)))


def first_derivative(F: Functional, space: RademacherSpace, omega, k: int):
    """``D_k F = sqrt(p_k q_k) (F(omega with +1 at k) - F(omega with -1 at k))``."""
    k = space.check_index(k)
    if F.support is not None and k not in F.support:
        return np.zeros(np.shape(omega)[:-1])[()]
    plus = F(with_coordinate(omega, k, 1))
    minus = F(with_coordinate(omega, k, -1))
    return (np.sqrt(space.pq[k]) * (plus - minus))[()]


def derivative_functional(F: Functional, space: RademacherSpace, k: int) -> Functional:
    """The functional ``omega -> D_k F(omega)``; it does not depend on coordinate ``k``."""
    k = space.check_index(k)
    support = None if F.support is None else F.support - {k}
    return Functional(
        lambda w: first_derivative(F, space, w, k),
        space.n,
        support=support,
        name=f"D{k}({F.name})",
    )


def second_derivative(F: Functional, space: RademacherSpace, omega, k: int, l: int):
    """``D_l (D_k F)`` evaluated at ``omega``, by iterating the two-point difference."""
    return first_derivative(derivative_functional(F, space, k), space, omega, l)


def second_derivative_four_point(F: Functional, space: RademacherSpace, omega, k: int, l: int):
    """Expanded form ``sqrt(pq_k pq_l) (F++ - F+- - F-+ + F--)`` for ``k != l``."""
    if k == l:
        raise ValidationError("the four-point formula needs distinct coordinates")
    vals = {}
    for a in (1, -1):
        for b in (1, -1):
            vals[a, b] = F(with_coordinate(with_coordinate(omega, k, a), l, b))
    scale = np.sqrt(space.pq[k] * space.pq[l])
    return (scale * (vals[1, 1] - vals[1, -1] - vals[-1, 1] + vals[-1, -1]))[()]


@dataclass
class DerivativeTable:
    """First and second derivatives of one functional at one configuration."""

    first: dict[int, float] = field(default_factory=dict)
    second: dict[tuple[int, int], float] = field(default_factory=dict)


def derivative_table(
    F: Functional,
    space: RademacherSpace,
    omega,
    coords: Optional[Iterable[int]] = None,
    pairs: Optional[Iterable[tuple[int, int]]] = None,
) -> DerivativeTable:
    """Sparse derivative table; zero entries are omitted.

    Without explicit ``pairs``, the second-order entries are those admitted by
    ``F.second_derivative_support``.
    """
    omega = np.asarray(omega)
    coords = list(range(space.n)) if coords is None else list(coords)
    table = DerivativeTable()
    for k in coords:
        v = float(first_derivative(F, space, omega, k))
        if v != 0.0:
            table.first[k] = v
    if pairs is None:
        pairs = [(k, l) for k in coords for l in sorted(F.second_derivative_support(k)) if l != k]
    for k, l in pairs:
        v = float(second_derivative(F, space, omega, k, l))
        if v != 0.0:
            table.second[k, l] = v
    return table


def verify_product_rule(F: Functional, G: Functional, space: RademacherSpace, omega, k: int):
    """Residual of ``D_k(FG) = (D_kF)G + F(D_kG) - X_k/sqrt(p_k q_k) (D_kF)(D_kG)``."""
    k = space.check_index(k)
    omega = np.asarray(omega)
    dfg = first_derivative(F * G, space, omega, k)
    df = first_derivative(F, space, omega, k)
    dg = first_derivative(G, space, omega, k)
    x = omega[..., k].astype(float)
    rhs = df * G(omega) + F(omega) * dg - x / np.sqrt(space.pq[k]) * df * dg
    return np.abs(dfg - rhs)[()]


def expectation(F: Functional, space: RademacherSpace) -> float:
    return float(F.table(space) @ space.weights())


def random_table_functional(n: int, rng: np.random.Generator, scale: float = 1.0) -> Functional:
    """Arbitrary functional with i.i.d. normal values on all ``2**n`` configurations."""
    return Functional.from_table(scale * rng.standard_normal(2 ** n), n)


def random_polynomial(
    space: RademacherSpace, rng: np.random.Generator, terms: int = 6, max_degree: int = 3
) -> Functional:
    """Random linear combination of products of the raw signs ``X_k``."""
    monomials = []
    for _ in range(terms):
        deg = int(rng.integers(0, max_degree + 1))
        subset = rng.choice(space.n, size=min(deg, space.n), replace=False)
        monomials.append((float(rng.normal()), np.sort(subset)))

    def fn(w):
        w = np.asarray(w, dtype=float)
        out = np.zeros(w.shape[:-1])
        for c, s in monomials:
            out = out + c * np.prod(w[..., s], axis=-1)
        return out

    support = set()
    for _, s in monomials:
        support.update(int(k) for k in s)
    return Functional(fn, space.n, support=support, name="polynomial")
