"""Exact chaos (Walsh) expansion on small Rademacher spaces and the operators built on it.

A decomposition stores one coefficient per subset ``A`` of coordinates, indexed by
the bitmask of ``A``: ``F = sum_A c_A prod_{k in A} Y_k``.  Multiple integrals of
order ``m`` collect the subsets of size ``m``; the symmetric kernel is
``f_m(i_1..i_m) = c_{i_1..i_m} / m!`` on distinct indices.

Every verifier below evaluates both sides of an identity independently: one side
through the coefficients, the other through two-point differences of tables.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import factorial
from typing import Sequence, Union

import numpy as np

from .core import Functional, RademacherSpace, encode
from .errors import ValidationError

TableLike = Union[Functional, np.ndarray]


def _popcount(n: int) -> np.ndarray:
    idx = np.arange(2 ** n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).sum(axis=1)


def _axis_transform(values: np.ndarray, n: int, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Apply ``mats[k]`` (2x2) along the axis of coordinate ``k`` of a length-2^n vector."""
    out = np.asarray(values, dtype=float)
    for k in range(n):
        out = out.reshape(2 ** (n - 1 - k), 2, 2 ** k)
        out = np.einsum("ab,ibj->iaj", mats[k], out)
    return out.reshape(-1)


def as_table(F: TableLike, space: RademacherSpace) -> np.ndarray:
    if isinstance(F, Functional):
        return F.table(space)
    table = np.asarray(F, dtype=float)
    if table.shape != (2 ** space.n,):
        raise ValidationError(f"table must have 2^{space.n} entries")
    return table


@dataclass(frozen=True)
class ChaosDecomposition:
    space: RademacherSpace
    coefficients: np.ndarray

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def mean(self) -> float:
        return float(self.coefficients[0])

    def coefficient(self, subset) -> float:
        mask = 0
        for k in subset:
            mask |= 1 << int(k)
        return float(self.coefficients[mask])

    def orders(self) -> np.ndarray:
        return _popcount(self.n)

    def table(self) -> np.ndarray:
        return reconstruct_all(self)

    def kernel(self, order: int) -> np.ndarray:
        """Dense symmetric kernel ``f_order`` of shape ``(n,)*order``, zero on diagonals."""
        n = self.n
        f = np.zeros((n,) * order)
        if order == 0:
            return np.array(self.mean)
        orders = self.orders()
        for mask in np.flatnonzero(orders == order):
            idx = [k for k in range(n) if (mask >> k) & 1]
            val = self.coefficients[mask] / factorial(order)
            for perm in permutations(idx):
                f[perm] = val
        return f

    def _with(self, coefficients) -> "ChaosDecomposition":
        return ChaosDecomposition(self.space, np.asarray(coefficients, dtype=float))

    def __add__(self, other: "ChaosDecomposition") -> "ChaosDecomposition":
        return self._with(self.coefficients + other.coefficients)

    def __sub__(self, other: "ChaosDecomposition") -> "ChaosDecomposition":
        return self._with(self.coefficients - other.coefficients)

    def scale(self, c: float) -> "ChaosDecomposition":
        return self._with(c * self.coefficients)


def _expand_matrices(space: RademacherSpace) -> list[np.ndarray]:
    mats = []
    for p in space.p:
        q = 1.0 - p
        s = np.sqrt(p * q)
        # rows: coordinate absent / present in A; columns: omega_k = -1 / +1
        mats.append(np.array([[q, p], [-s, s]]))
    return mats


def _reconstruct_matrices(space: RademacherSpace) -> list[np.ndarray]:
    mats = []
    for p in space.p:
        q = 1.0 - p
        mats.append(np.array([[1.0, -np.sqrt(p / q)], [1.0, np.sqrt(q / p)]]))
    return mats


def walsh_expand(F: TableLike, space: RademacherSpace) -> ChaosDecomposition:
    """Coefficients ``c_A = E[F prod_{k in A} Y_k]`` for all ``2**n`` subsets."""
    space.check_exact()
    table = as_table(F, space)
    return ChaosDecomposition(space, _axis_transform(table, space.n, _expand_matrices(space)))


def reconstruct_all(dec: ChaosDecomposition) -> np.ndarray:
    """Values of ``sum_A c_A Y_A`` at every configuration, in enumeration order."""
    return _axis_transform(dec.coefficients, dec.n, _reconstruct_matrices(dec.space))


def reconstruct(dec: ChaosDecomposition, omega) -> np.ndarray:
    return reconstruct_all(dec)[encode(omega)][()]


def apply_L(dec: ChaosDecomposition) -> ChaosDecomposition:
    return dec._with(-dec.orders() * dec.coefficients)


def apply_L_inverse(dec: ChaosDecomposition, strict: bool = False) -> ChaosDecomposition:
    """Pseudo-inverse of ``L``: order m is scaled by ``-1/m`` and the mean is dropped."""
    if strict and abs(dec.mean) >= 1e-12:
        raise ValidationError(f"L^-1 needs a centred input, mean is {dec.mean}")
    orders = dec.orders()
    factor = np.zeros(orders.shape)
    factor[orders > 0] = -1.0 / orders[orders > 0]
    return dec._with(factor * dec.coefficients)


def apply_semigroup(dec: ChaosDecomposition, t: float) -> ChaosDecomposition:
    if t < 0:
        raise ValidationError("semigroup time must be nonnegative")
    return dec._with(np.exp(-dec.orders() * t) * dec.coefficients)


def gradient(dec: ChaosDecomposition) -> list[ChaosDecomposition]:
    """Chaos coefficients of ``D_k F`` for every k: ``c_B -> c_{B + k}`` for ``k`` not in ``B``."""
    masks = np.arange(2 ** dec.n, dtype=np.int64)
    out = []
    for k in range(dec.n):
        bit = 1 << k
        coeffs = np.zeros_like(dec.coefficients)
        free = (masks & bit) == 0
        coeffs[free] = dec.coefficients[masks[free] | bit]
        out.append(dec._with(coeffs))
    return out


def divergence(u: Sequence[ChaosDecomposition]) -> ChaosDecomposition:
    """Skorohod-type divergence of the family ``(u_k)``.

    Symmetrising the kernels ``f(., k)`` and keeping only distinct indices gives
    coefficient ``sum_{k in A} u_k[A - k]`` at subset ``A``.
    """
    if not u:
        raise ValidationError("divergence needs a nonempty family")
    space = u[0].space
    n = space.n
    if len(u) != n:
        raise ValidationError(f"family has {len(u)} members, space has {n} coordinates")
    masks = np.arange(2 ** n, dtype=np.int64)
    coeffs = np.zeros(2 ** n)
    for k, uk in enumerate(u):
        if uk.space != space:
            raise ValidationError("all members must live on the same space")
        bit = 1 << k
        has = (masks & bit) != 0
        coeffs[has] += uk.coefficients[masks[has] ^ bit]
    return ChaosDecomposition(space, coeffs)


# ---------------------------------------------------------------------------
# Table-level derivatives (definitional, used as the independent side)
# ---------------------------------------------------------------------------


def derivative_tables(table: np.ndarray, space: RademacherSpace) -> np.ndarray:
    """``D_k F`` at every configuration for every k, shape ``(n, 2**n)``."""
    n = space.n
    idx = np.arange(2 ** n, dtype=np.int64)
    out = np.empty((n, 2 ** n))
    for k in range(n):
        bit = 1 << k
        out[k] = np.sqrt(space.pq[k]) * (table[idx | bit] - table[idx & ~bit])
    return out


def iterated_derivative_table(table: np.ndarray, space: RademacherSpace, ks: Sequence[int]) -> np.ndarray:
    """``D_{k_1..k_m} F`` as a table, applying the coordinates in order."""
    idx = np.arange(2 ** space.n, dtype=np.int64)
    out = np.asarray(table, dtype=float)
    for k in ks:
        bit = 1 << int(k)
        out = np.sqrt(space.pq[k]) * (out[idx | bit] - out[idx & ~bit])
    return out


def _centred_table(F: TableLike, space: RademacherSpace) -> np.ndarray:
    table = as_table(F, space)
    return table - table @ space.weights()


def minus_D_Linv_tables(F: TableLike, space: RademacherSpace) -> np.ndarray:
    """``-D_k L^{-1} (F - E F)`` at every configuration, shape ``(n, 2**n)``."""
    dec = apply_L_inverse(walsh_expand(_centred_table(F, space), space))
    return -derivative_tables(reconstruct_all(dec), space)


# ---------------------------------------------------------------------------
# Identity verifiers
# ---------------------------------------------------------------------------


def verify_adjoint(F: TableLike, u: Sequence[TableLike], space: RademacherSpace) -> float:
    """``|E[F delta(u)] - E[<DF, u>]|`` with both expectations by enumeration."""
    w = space.weights()
    f = as_table(F, space)
    u_tables = [as_table(uk, space) for uk in u]
    delta = reconstruct_all(divergence([walsh_expand(t, space) for t in u_tables]))
    lhs = float(w @ (f * delta))
    df = derivative_tables(f, space)
    rhs = float(w @ np.sum(df * np.asarray(u_tables), axis=0))
    return abs(lhs - rhs)


def verify_L_equals_minus_delta_D(F: TableLike, space: RademacherSpace) -> float:
    """Max coefficient gap between ``L F`` and ``-delta(D F)``."""
    dec = walsh_expand(F, space)
    return float(np.max(np.abs(apply_L(dec).coefficients + divergence(gradient(dec)).coefficients)))


def ibp_sides(F: TableLike, G: TableLike, space: RademacherSpace) -> tuple[float, float]:
    w = space.weights()
    f = as_table(F, space)
    g = as_table(G, space)
    lhs = float(w @ ((f - w @ f) * g))
    rhs = float(w @ np.sum(minus_D_Linv_tables(f, space) * derivative_tables(g, space), axis=0))
    return lhs, rhs


def verify_ibp(F: TableLike, G: TableLike, space: RademacherSpace) -> float:
    """Residual of ``E[(F - EF) G] = E[<-D L^{-1}(F - EF), DG>]``."""
    lhs, rhs = ibp_sides(F, G, space)
    return abs(lhs - rhs)


def verify_integrated_mehler(F: TableLike, space: RademacherSpace, ks: Sequence[int]) -> float:
    """Max pointwise gap between ``-D^m L^{-1} F`` and ``int_0^inf e^{-mt} P_t D^m F dt``.

    ``F`` is centred first.  The time integral is done per chaos order ``j`` in
    closed form, ``int e^{-(m+j)t} dt = 1/(m+j)``.
    """
    m = len(ks)
    if m < 1:
        raise ValidationError("need at least one derivative coordinate")
    f = _centred_table(F, space)
    linv = reconstruct_all(apply_L_inverse(walsh_expand(f, space)))
    lhs = -iterated_derivative_table(linv, space, ks)
    dec = walsh_expand(iterated_derivative_table(f, space, ks), space)
    rhs = reconstruct_all(dec._with(dec.coefficients / (m + dec.orders())))
    return float(np.max(np.abs(lhs - rhs)))


def mehler_inequality_gap(F: TableLike, space: RademacherSpace, ks: Sequence[int], alpha: float) -> float:
    """``E|D^m F|^alpha - E|D^m L^{-1} F|^alpha`` for centred F; nonnegative in theory."""
    w = space.weights()
    f = _centred_table(F, space)
    linv = reconstruct_all(apply_L_inverse(walsh_expand(f, space)))
    a = w @ np.abs(iterated_derivative_table(f, space, ks)) ** alpha
    b = w @ np.abs(iterated_derivative_table(linv, space, ks)) ** alpha
    return float(a - b)


def verify_poincare(F: TableLike, space: RademacherSpace) -> float:
    """Slack ``E[||DF||^2] - Var(F)``."""
    w = space.weights()
    f = as_table(F, space)
    var = float(w @ (f - w @ f) ** 2)
    energy = float(w @ np.sum(derivative_tables(f, space) ** 2, axis=0))
    return energy - var


@dataclass
class OUProcessSampler:
    """Ornstein-Uhlenbeck resampling of a fixed base configuration.

    Each coordinate is replaced by an independent copy when its unit-mean
    exponential clock has rung by time ``t``.
    """

    space: RademacherSpace
    omega: np.ndarray
    t: float

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.int8)
        if self.t < 0:
            raise ValidationError("time must be nonnegative")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        fresh = self.space.sample(rng, size)
        clocks = rng.exponential(1.0, size=(size, self.space.n))
        return np.where(clocks <= self.t, fresh, self.omega[None, :]).astype(np.int8)


def verify_mehler(
    F: Functional, space: RademacherSpace, omega, t: float, samples: int = 100_000, seed: int = 0
) -> float:
    """Standardised gap between the Monte Carlo mean of ``F(X^t)`` and ``P_t F(omega)``."""
    omega = np.asarray(omega, dtype=np.int8)
    exact = float(reconstruct(apply_semigroup(walsh_expand(F, space), t), omega))
    draws = F(OUProcessSampler(space, omega, t).sample(np.random.default_rng(seed), samples))
    se = draws.std(ddof=1) / np.sqrt(samples)
    gap = draws.mean() - exact
    if se < 1e-12:
        # Degenerate draws (t = 0 or constant F): compare directly.
        return 0.0 if abs(gap) < 1e-10 else float(np.sign(gap) * np.inf)
    return float(gap / se)


# ---------------------------------------------------------------------------
# Chain rule and approximate integration by parts for vectors
# ---------------------------------------------------------------------------


@dataclass
class RemainderCheck:
    remainder: np.ndarray
    bound: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(np.abs(self.remainder) <= self.bound + 1e-12))


def _vector_tables(Fs: Sequence[TableLike], space: RademacherSpace) -> np.ndarray:
    return np.stack([as_table(F, space) for F in Fs])  # (d, 2^n)


def verify_chain_rule(Fs: Sequence[TableLike], space: RademacherSpace, f, k: int, omega=None) -> RemainderCheck:
    """Remainder of the second-order discrete chain rule for ``f(F)`` at coordinate ``k``.

    ``R_k = D_k f(F) - sum_i d_i f(F) D_k F_i
    + X_k / (4 sqrt(p_k q_k)) sum_ij (d_ij f(F_k^+) + d_ij f(F_k^-)) D_k F_i D_k F_j``
    compared against ``5/(12 p_k q_k) sum_ijl ||d_ijl f|| |D_kF_i D_kF_j D_kF_l|``.
    Evaluated at ``omega`` or, if omitted, at every configuration.
    """
    k = space.check_index(k)
    n = space.n
    vals = _vector_tables(Fs, space).T  # (2^n, d)
    idx = np.arange(2 ** n, dtype=np.int64)
    if omega is not None:
        idx = np.atleast_1d(encode(np.asarray(omega)))
    bit = 1 << k
    plus, minus, here = vals[idx | bit], vals[idx & ~bit], vals[idx]
    s = np.sqrt(space.pq[k])
    dF = s * (plus - minus)
    x = np.where(idx & bit, 1.0, -1.0)
    dfF = s * (f.value(plus) - f.value(minus))
    first = np.einsum("bi,bi->b", f.grad(here), dF)
    hess = f.hessian(plus) + f.hessian(minus)
    second = -x / (4 * s) * np.einsum("bij,bi,bj->b", hess, dF, dF)
    remainder = dfF - first - second
    adF = np.abs(dF)
    bound = 5.0 / (12.0 * space.pq[k]) * np.einsum("ijl,bi,bj,bl->b", f.third_sup(), adF, adF, adF)
    return RemainderCheck(remainder, bound)


def verify_approx_ibp(Fs: Sequence[TableLike], space: RademacherSpace, f, i: int) -> RemainderCheck:
    """Remainder of ``E[F_i f(F)] = sum_j E[d_j f(F) <DF_j, -DL^{-1}F_i>] + rem`` and its bound.

    The components must be centred.  The bound is
    ``M2/2 E<|p-q|/sqrt(pq) (sum_j |DF_j|)^2, |-DL^{-1}F_i|>
    + 5 M3/12 E<(sum_j |DF_j|)^3 / pq, |-DL^{-1}F_i|>``.
    """
    w = space.weights()
    tables = _vector_tables(Fs, space)
    means = tables @ w
    if np.any(np.abs(means) > 1e-10):
        raise ValidationError(f"components must be centred, means are {means}")
    x = tables.T
    dF = np.stack([derivative_tables(t, space) for t in tables])  # (d, n, 2^n)
    G = minus_D_Linv_tables(tables[i], space)  # (n, 2^n)
    lhs = float(w @ (tables[i] * f.value(x)))
    inner = np.einsum("jkb,kb->jb", dF, G)  # <DF_j, -DL^{-1}F_i>
    rhs = float(w @ np.einsum("bj,jb->b", f.grad(x), inner))
    pq = space.pq[:, None]
    s1 = np.abs(dF).sum(axis=0)
    a2 = w @ np.sum(np.abs(space.p_array - space.q_array)[:, None] / np.sqrt(pq) * s1 ** 2 * np.abs(G), axis=0)
    a3 = w @ np.sum(s1 ** 3 / pq * np.abs(G), axis=0)
    bound = 0.5 * f.M(2) * a2 + 5.0 / 12.0 * f.M(3) * a3
    return RemainderCheck(np.array(lhs - rhs), np.array(bound))


def exact_A_terms(Fs: Sequence[TableLike], sigma, space: RademacherSpace):
    """Exact first-order bound terms A1, A2, A3 by full enumeration."""
    from .bounds import BoundReport

    w = space.weights()
    tables = _vector_tables(Fs, space)
    d = tables.shape[0]
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (d, d):
        raise ValidationError(f"covariance must be {d}x{d}")
    means = tables @ w
    if np.any(np.abs(means) > 1e-10):
        raise ValidationError(f"components must be centred, means are {means}")
    dF = np.stack([derivative_tables(t, space) for t in tables])  # (d, n, 2^n)
    G = np.stack([minus_D_Linv_tables(t, space) for t in tables])  # (d, n, 2^n)
    inner = np.einsum("jkb,ikb->ijb", dF, G)
    A1 = 0.5 * float(np.sum(np.abs(sigma[:, :, None] - inner) @ w))
    pq = space.pq[:, None]
    s1 = np.abs(dF).sum(axis=0)
    g = np.abs(G).sum(axis=0)
    bias = np.abs(space.p_array - space.q_array)[:, None] / np.sqrt(pq)
    A2 = 0.25 * float(w @ np.sum(bias * s1 ** 2 * g, axis=0))
    A3 = 5.0 / 24.0 * float(w @ np.sum(s1 ** 3 / pq * g, axis=0))
    cov = (tables - means[:, None]) * w @ (tables - means[:, None]).T
    return BoundReport(
        kind="A",
        gap=np.abs(sigma - cov),
        terms={"A1": np.array(A1), "A2": np.array(A2), "A3": np.array(A3)},
        std_errors={},
        total=A1 + A2 + A3,
        meta={"n": space.n, "d": d, "p": list(space.p)},
    )
