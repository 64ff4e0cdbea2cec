from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import rgamma

import properties
from oracles import exp_root_mp, fit_slope, ml_half_erfc, ml_mp
from fracmanifold.exceptions import SectorError
from fracmanifold.jordan import JordanBlock, JordanSystem
from fracmanifold.matrix_ml import (
    build_B,
    build_B_tilde,
    build_C_tilde,
    delta_tilde,
    lemma6_residual,
    matrix_ml_eval,
    psi,
    psi_tilde,
    residual_C,
    scaled_psi_tilde_neg,
    toeplitz_upper,
)

E4 = math.exp(4.0)


def test_psi_tilde_closed_form():
    # d/dlam exp(t lam^2) = 2 t lam exp(t lam^2)
    assert psi_tilde(0.5, 1.0, 2.0, 0) == pytest.approx(4 * E4, rel=1e-14)
    assert 4 * E4 == pytest.approx(218.3926, abs=1e-4)


@pytest.mark.parametrize("m", [0, 1, 2])
def test_psi_tilde_is_scaled_exp_root_derivative(m):
    p, t, lam = 0.6, 1.3, 1.1 + 0.4j
    ref = exp_root_mp(p, t, lam, m + 1) / math.factorial(m)
    assert abs(psi_tilde(p, t, lam, m) - ref) <= 1e-12 * abs(ref)


def test_psi_closed_forms():
    assert psi(0.5, 1.0, 2.0, 0) == pytest.approx(2 * E4, rel=1e-14)
    assert psi(0.5, 1.0, 2.0, 1) == pytest.approx(8 * E4, rel=1e-14)
    # psi_tilde_m = (m+1) p psi_{m+1}
    for m in range(3):
        assert psi_tilde(0.7, 0.9, 1.4, m) == pytest.approx((m + 1) * 0.7 * psi(0.7, 0.9, 1.4, m + 1), rel=1e-13)


def test_psi_tilde_limit_at_zero():
    p, lam = 0.5, 2.0
    for tau in (1e-3, 1e-6):
        assert (p / tau) * psi_tilde(p, -tau, lam, 0) == pytest.approx(-(lam ** (1 / p - 1)), rel=5 * tau * 4)
    assert scaled_psi_tilde_neg(p, 0.0, lam, 0) == pytest.approx(-(lam ** (1 / p - 1)), rel=1e-15)


def test_psi_rejects_stable_lambda():
    with pytest.raises(SectorError):
        psi_tilde(0.5, 1.0, -1.0, 0)
    with pytest.raises(SectorError):
        psi(0.5, 1.0, 1j, 0)


LITERAL = "one_param_derivative"


def test_delta_tilde_literal_form():
    # k = 2, p = 0.5: 1/Gamma(1 - 1) = 0 exactly
    assert delta_tilde(0.5, 4.0, 2.0, 0, 2, form=LITERAL) == 0
    p, t, lam = 0.4, 5.0, 2.0
    ref = sum(
        math.factorial(k) / math.factorial(k - 1) * lam ** (-k - 1) * t ** (-p * k) * rgamma(1 - p * k)
        for k in (2, 3)
    )
    assert delta_tilde(p, t, lam, 0, 3, form=LITERAL) == pytest.approx(ref, rel=1e-12)
    # k = 2 term: (k+m)!/(k-1)!/m! goes 2 -> 6, the sign flips and lambda^-3 -> lambda^-4
    ratio = delta_tilde(p, t, lam, 1, 2, form=LITERAL) / delta_tilde(p, t, lam, 0, 2, form=LITERAL)
    assert ratio == pytest.approx(-3 / lam, rel=1e-13)


def test_delta_tilde_expansion_form():
    """Default form: the algebraic terms of E_{p,p}(t^p lambda), differentiated in lambda."""
    p, t, lam, q = 0.4, 5.0, 2.0 + 0.5j, 4
    ref = [
        -sum(math.comb(k + m - 1, m) * (-1) ** m * lam ** (-k - m) * t ** (-p * k) * rgamma(p - p * k) for k in range(1, q + 1))
        for m in range(3)
    ]
    for m in range(3):
        assert abs(delta_tilde(p, t, lam, m, q) - ref[m]) <= 1e-13 * abs(ref[m])
    # the k = 1 coefficient 1/Gamma(0) vanishes, so the leading order is t^(-2p)
    assert delta_tilde(0.5, 4.0, 2.0, 0, 1 + 1) == pytest.approx(-(2.0**-2) * 4.0**-1 * rgamma(-0.5), rel=1e-14)


def test_toeplitz_upper():
    T = toeplitz_upper([1.0, 2.0, 3.0])
    assert np.array_equal(T, np.array([[1, 2, 3], [0, 1, 2], [0, 0, 1]], dtype=float))


def _ex1(p=0.5):
    return JordanSystem.from_blocks(p, [JordanBlock(-1.0, 1), JordanBlock(2.0, 2)])


def test_B_tilde_blocks():
    stable = JordanSystem.from_blocks(0.5, [JordanBlock(-1.0, 2), JordanBlock(-3.0, 1)])
    assert np.all(build_B_tilde(stable, 1.3) == 0)
    assert np.all(build_B(stable, 1.3) == 0)
    one = JordanSystem.from_blocks(0.5, [JordanBlock(2.0, 1)])
    assert build_B_tilde(one, 1.0)[0, 0] == pytest.approx(4 * E4, rel=1e-14)
    assert build_B(one, 1.0)[0, 0] == pytest.approx(2 * E4, rel=1e-14)


def test_B_tilde_quadratic_example_entry():
    """The (2,3) entry of B~(-tau) is the closed form used for the constant m."""
    p = 0.5
    tau = 0.7
    got = build_B_tilde(_ex1(p), -tau)[1, 2]
    a = 2 ** (1 / p)
    # the closed form is (p/tau) psi_tilde_1(-tau)
    ref = (1 / p) * 2 ** (1 / p - 2) * math.exp(-a * tau) * (a * tau - 1 + p) * (tau / p)
    assert got == pytest.approx(ref, rel=1e-13)


def test_C_tilde_examples():
    sys_ = JordanSystem.from_blocks(0.5, [JordanBlock(2.0, 3)])
    assert np.all(build_C_tilde(sys_, 3.0, 2, form=LITERAL) == 0)
    stable = JordanSystem.from_blocks(0.5, [JordanBlock(-1.3, 1)])
    assert build_C_tilde(stable, 3.0, 4)[0, 0] == delta_tilde(0.5, 3.0, -1.3, 0, 4)
    ts = [10, 20, 40, 80, 160, 320]
    mags = [abs(build_C_tilde(sys_, t, 3)[0, 0]) for t in ts]
    assert abs(fit_slope(ts, mags) + 2 * 0.5) <= 0.3


def test_matrix_ml_eval_examples():
    system = JordanSystem.from_blocks(0.5, [JordanBlock(-2.0, 1), JordanBlock(2.0, 1)])
    assert np.array_equal(matrix_ml_eval(system, 1.0, 0.0), np.eye(2))
    M = matrix_ml_eval(system, 1.0, 1.0)
    assert M[0, 0] == pytest.approx(ml_half_erfc(-2.0).real, rel=1e-13)
    assert M[1, 1] == pytest.approx(ml_half_erfc(2.0).real, rel=1e-13)
    assert M[0, 1] == 0 and M[1, 0] == 0


def test_matrix_ml_order_one_is_expm():
    rng = np.random.default_rng(3)
    P = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    system = JordanSystem.from_blocks(1.0, [JordanBlock(-1.5, 1), JordanBlock(0.7, 2)], P)
    A = system.matrix()
    for t in (0.3, 1.0, 2.5):
        assert np.max(np.abs(matrix_ml_eval(system, 1.0, t) - expm(t * A))) < 1e-12 * np.max(np.abs(expm(t * A)))


def test_superdiagonal_is_lambda_derivative():
    p, t, lam, h = 0.5, 1.2, 2.0, 1e-5
    two = JordanSystem.from_blocks(p, [JordanBlock(lam, 2)])
    plus = JordanSystem.from_blocks(p, [JordanBlock(lam + h, 1)])
    minus = JordanSystem.from_blocks(p, [JordanBlock(lam - h, 1)])
    fd = (matrix_ml_eval(plus, 1.0, t)[0, 0] - matrix_ml_eval(minus, 1.0, t)[0, 0]) / (2 * h)
    assert matrix_ml_eval(two, 1.0, t)[0, 1] == pytest.approx(fd, rel=1e-6)


def test_jordan_entries_against_mpmath():
    p, t = 0.7, 1.8
    lam = 1 + 1j
    system = JordanSystem.from_blocks(p, [JordanBlock(lam, 3)])
    M = matrix_ml_eval(system, p, t)
    z = t**p * lam
    for m in range(3):
        ref = ml_mp(p, p, z, m=m) * t ** (p * m)
        assert abs(M[0, m] - ref) <= 1e-11 * abs(ref)


def test_residual_C():
    p = 0.5
    stable = JordanSystem.from_blocks(p, [JordanBlock(-1.0, 1)])
    for t in (0.5, 3.0):
        assert residual_C(stable, t)[0, 0] == pytest.approx(ml_mp(p, p, -(t**p)).real, rel=1e-12)
    unstable = JordanSystem.from_blocks(p, [JordanBlock(2.0, 1)])
    ts = [10, 20, 40, 80, 160]
    res = [abs(residual_C(unstable, t)[0, 0] - build_C_tilde(unstable, t, 3)[0, 0]) for t in ts]
    assert abs(fit_slope(ts, res) + 2) <= 0.3
    # small t: far outside the region where the expansion is accurate
    small = abs(residual_C(unstable, 0.1)[0, 0] - build_C_tilde(unstable, 0.1, 3)[0, 0])
    assert small > 10 * abs(residual_C(unstable, 0.1)[0, 0]) * 1e-3


def test_residual_C_matches_direct_difference_where_representable():
    p = 0.5
    system = JordanSystem.from_blocks(p, [JordanBlock(2.0, 2)])
    for t in (1.0, 5.0):
        direct = matrix_ml_eval(system, p, t) - t ** (-p) * build_B_tilde(system, t)
        scale = np.max(np.abs(matrix_ml_eval(system, p, t)))
        assert np.max(np.abs(residual_C(system, t) - direct)) <= 1e-12 * scale


def test_lemma6_examples():
    stable = JordanSystem.from_blocks(0.5, [JordanBlock(-1.0, 2)])
    assert lemma6_residual(stable, 2.0, 1.0) == 0.0
    one = JordanSystem.from_blocks(0.5, [JordanBlock(2.0, 1)])
    assert lemma6_residual(one, 2.0, 1.0) < 1e-10
    rng = np.random.default_rng(11)
    three = JordanSystem.from_blocks(0.7, [JordanBlock(1 + 1j, 3)])
    for _ in range(10):
        t, tau = rng.uniform(0.5, 5, size=2)
        assert lemma6_residual(three, float(t), float(tau)) < 1e-8


def test_B_tilde_envelope_is_bounded():
    """``|B~(-t)| e^(t alpha) / t^n`` stays bounded over t in [1, 50]."""
    p = 0.5
    system = JordanSystem.from_blocks(p, [JordanBlock(1.5, 3)])
    alpha = 1.5 ** (1 / p)
    ts = np.linspace(1, 50, 50)
    vals = [np.max(np.abs(build_B_tilde(system, -t))) * math.exp(t * alpha) / t**3 for t in ts]
    assert max(vals) / min(vals) < 50


def test_toeplitz_property():
    ok, detail = properties.toeplitz_structure()
    assert ok, detail
