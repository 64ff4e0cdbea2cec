from __future__ import annotations

import numpy as np
import pytest

from oracles import ex1_constants_quad
from fracmanifold.examples import NAMES, builtin_field, ex1_map, example, example_system
from fracmanifold.exceptions import InvalidInputError


def test_systems():
    A1 = np.array([[-1.0, 0, 0], [0, 2, 1], [0, 0, 2]])
    assert np.array_equal(example_system("ex1", 0.5).matrix(), A1)
    assert np.array_equal(example_system("ex2", 0.5).matrix(), np.diag([-2.0, 2.0]))
    assert np.array_equal(example_system("liu", 0.5).matrix(), np.diag([-1.0, 2.5, -5.0]))
    assert set(NAMES) == {"ex1", "ex2", "liu"}


def test_fields():
    x = np.array([[0.3, -0.2, 0.5]])
    assert np.allclose(builtin_field("ex1")(x), [[0, 0.09, 0.27]], rtol=1e-15, atol=0)
    assert np.allclose(builtin_field("liu")(x), [[0, -4 * 0.3 * 0.5, 0]], rtol=1e-15, atol=0)
    assert np.allclose(builtin_field("ex2")(np.array([0.3, -0.2])), [0.09, 0.13], rtol=1e-15, atol=0)
    with pytest.raises(InvalidInputError):
        builtin_field("lorenz")
    with pytest.raises(InvalidInputError):
        example("ex3")


def test_stable_vector_embedding():
    assert np.array_equal(example("liu").stable_vector(0.1, 0.2), [0.1, 0.0, 0.2])
    with pytest.raises(InvalidInputError):
        example("ex1").stable_vector(0.1, 0.2)


def test_closed_form_map_is_quadratic():
    l_val, m_val = ex1_constants_quad()
    s2, s3 = ex1_map(0.5, 0.01)
    assert s3 == pytest.approx(-3 * l_val * 2 * 1e-4, rel=1e-12)
    assert s2 == pytest.approx(-l_val * 2e-4 + 6 * m_val * 1e-4, rel=1e-12)
    a, b = ex1_map(0.7, 0.02), ex1_map(0.7, 0.01)
    assert a[0] / b[0] == pytest.approx(4.0, rel=1e-14)
