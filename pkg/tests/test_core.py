import numpy as np
import pytest

from rademacher_clt.core import (
    Functional,
    RademacherSpace,
    decode,
    derivative_table,
    encode,
    first_derivative,
    random_polynomial,
    second_derivative,
    second_derivative_four_point,
    standardized,
    standardized_value,
    verify_product_rule,
    walsh_monomial,
)
from rademacher_clt.errors import CapacityError, ValidationError


def test_space_rejects_bad_probabilities():
    for bad in ([0.0], [1.0], [0.5, 1.2], []):
        with pytest.raises(ValidationError):
            RademacherSpace(bad)


def test_weights_sum_to_one_and_match_product(rng):
    space = RademacherSpace(rng.uniform(0.1, 0.9, 6))
    w = space.weights()
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    cfg = space.configurations()
    expected = np.prod(np.where(cfg > 0, space.p_array, space.q_array), axis=1)
    np.testing.assert_allclose(w, expected, rtol=1e-14)


def test_encode_decode_roundtrip():
    idx = np.arange(64)
    assert np.array_equal(encode(decode(idx, 6)), idx)


def test_exact_limit_enforced():
    with pytest.raises(CapacityError):
        RademacherSpace.homogeneous(21).weights()


def test_standardized_values():
    half = RademacherSpace((0.5,))
    assert standardized_value(half, [1], 0) == 1.0
    assert standardized_value(half, [-1], 0) == -1.0
    quarter = RademacherSpace((0.25,))
    assert standardized_value(quarter, [1], 0) == pytest.approx(1.7320508, abs=1e-7)
    y = standardized(quarter, 0).table(quarter)
    w = quarter.weights()
    assert w @ y == pytest.approx(0.0, abs=1e-15)
    assert w @ y ** 2 == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(IndexError):
        standardized_value(half, [1], 1)


def test_first_derivative_examples():
    for p in (0.2, 0.5, 0.7):
        space = RademacherSpace((p, 0.5))
        Y = standardized(space, 0)
        for omega in space.configurations():
            assert first_derivative(Y, space, omega, 0) == pytest.approx(1.0, abs=1e-14)
    space = RademacherSpace.homogeneous(3)
    assert first_derivative(Functional.constant(2.0, 3), space, [1, 1, 1], 1) == 0.0
    Y12 = walsh_monomial(space, [0, 1])
    assert first_derivative(Y12, space, [-1, 1, 1], 0) == pytest.approx(1.0)


def test_second_derivative_examples():
    space = RademacherSpace.homogeneous(3)
    Y1 = standardized(space, 0)
    Y12 = walsh_monomial(space, [0, 1])
    for omega in space.configurations():
        assert second_derivative(Y1, space, omega, 0, 1) == 0.0
        assert second_derivative(Y12, space, omega, 0, 1) == pytest.approx(1.0)
        assert second_derivative(Y12, space, omega, 0, 2) == 0.0


def test_flip_independence_and_symmetry(rng):
    space = RademacherSpace(rng.uniform(0.1, 0.9, 6))
    F = random_polynomial(space, rng, terms=8, max_degree=4)
    for omega in space.sample(rng, 30):
        k, l = rng.choice(6, size=2, replace=False)
        flipped = omega.copy()
        flipped[k] *= -1
        assert first_derivative(F, space, omega, k) == pytest.approx(first_derivative(F, space, flipped, k), abs=1e-12)
        a = second_derivative(F, space, omega, k, l)
        assert a == pytest.approx(second_derivative(F, space, omega, l, k), abs=1e-12)
        assert a == pytest.approx(second_derivative_four_point(F, space, omega, k, l), abs=1e-12)


def test_support_locality(rng):
    space = RademacherSpace.homogeneous(5, 0.3)
    F = walsh_monomial(space, [1, 3])
    for omega in space.sample(rng, 10):
        assert first_derivative(F, space, omega, 0) == 0.0
    table = derivative_table(F, space, space.sample(rng, 1)[0])
    assert set(table.first) <= {1, 3}
    assert set(table.second) <= {(1, 3), (3, 1)}


def test_product_rule_examples(rng):
    half = RademacherSpace.homogeneous(2)
    Y = standardized(half, 0)
    for omega in half.configurations():
        assert verify_product_rule(Y, Y, half, omega, 0) < 1e-14
        assert verify_product_rule(Functional.constant(3.0, 2), Y, half, omega, 1) < 1e-14


def test_product_rule_random_polynomials(rng):
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        space = RademacherSpace(rng.uniform(0.05, 0.95, n))
        F, G = random_polynomial(space, rng), random_polynomial(space, rng)
        omega = space.sample(rng, 1)[0]
        worst = max(worst, float(verify_product_rule(F, G, space, omega, int(rng.integers(n)))))
    assert worst < 1e-10
