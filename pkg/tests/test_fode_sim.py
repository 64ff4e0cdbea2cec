from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import gamma

from oracles import fit_slope, ml_half_erfc
from fracmanifold.examples import example
from fracmanifold.exceptions import InvalidInputError, StepOverflow
from fracmanifold.fode_sim import SimConfig, attraction_experiment, linear_exact, pece_integrate, pece_partial
from fracmanifold.jordan import JordanBlock, JordanSystem
from fracmanifold.manifold import QuadratureSpec, VectorField, solve_extrapolated
from fracmanifold.spectral import build_split


def naive_pece(p, h, N, x0, rhs):
    """Textbook fractional Adams PECE with every weight written out."""
    x = np.zeros((N + 1, len(x0)))
    F = np.zeros_like(x)
    x[0] = x0
    F[0] = rhs(x0)
    c = h**p / gamma(p + 2)
    for n in range(N):
        pred = np.zeros(len(x0))
        for j in range(n + 1):
            b = h**p / gamma(p + 1) * ((n + 1 - j) ** p - (n - j) ** p)
            pred += b * F[j]
        xp = x0 + pred
        corr = c * F[0] * (n**(p + 1) - (n - p) * (n + 1) ** p)
        for j in range(1, n + 1):
            a = c * ((n - j + 2) ** (p + 1) + (n - j) ** (p + 1) - 2 * (n - j + 1) ** (p + 1))
            corr += a * F[j]
        x[n + 1] = x0 + corr + c * rhs(xp)
        F[n + 1] = rhs(x[n + 1])
    return x


def test_matches_naive_recomputation():
    p, h, T = 0.6, 0.01, 1.5
    A = np.array([[-1.0, 0.5], [0.2, -0.7]])
    f = VectorField(lambda x: 0.3 * np.asarray(x) ** 2, 2)
    x0 = np.array([0.4, -0.3])
    got = pece_integrate(SimConfig(p, h, T, x0), A, f).values
    ref = naive_pece(p, h, int(round(T / h)), x0, lambda x: A @ x + 0.3 * x**2)
    assert np.max(np.abs(got - ref)) < 1e-13


def test_order_one_is_second_order():
    system = JordanSystem.from_blocks(1.0, [JordanBlock(-1.0, 1)])
    errs = []
    steps = [0.04, 0.02, 0.01]
    for h in steps:
        grid = pece_integrate(SimConfig(1.0, h, 1.0, [1.0]), system)
        errs.append(abs(grid.values[-1, 0] - math.exp(-1.0)))
    assert fit_slope(steps, errs) == pytest.approx(2.0, abs=0.1)


def test_half_order_relaxation():
    system = JordanSystem.from_blocks(0.5, [JordanBlock(-1.0, 1)])
    grid = pece_integrate(SimConfig(0.5, 2e-3, 3.0, [1.0]), system)
    exact = np.array([ml_half_erfc(-math.sqrt(t)).real for t in grid.times])
    assert np.max(np.abs(grid.values[:, 0] - exact)) < 1e-3


def test_linear_exact_is_expm_at_order_one():
    rng = np.random.default_rng(2)
    P = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    system = JordanSystem.from_blocks(1.0, [JordanBlock(-1.0, 1), JordanBlock(0.5, 2)], P)
    x0 = np.array([1.0, -2.0, 0.5])
    times = np.array([0.0, 0.4, 1.3])
    got = linear_exact(system, times, x0)
    for t, row in zip(times, got):
        assert np.allclose(row, expm(t * system.matrix()) @ x0, rtol=1e-12, atol=1e-13)


def test_overflow_is_reported_with_time():
    system = JordanSystem.from_blocks(0.9, [JordanBlock(3.0, 1)])
    cfg = SimConfig(0.9, 0.01, 20.0, [1.0])
    with pytest.raises(StepOverflow) as info:
        pece_integrate(cfg, system)
    assert 0 < info.value.time < 20
    grid, escape = pece_partial(cfg, system)
    assert escape == info.value.time
    assert grid is not None and np.all(np.abs(grid.values) <= 1e6)


@pytest.mark.parametrize(
    "bad",
    [
        lambda: SimConfig(0.5, 0.1, 0.5, [1.0]),
        lambda: SimConfig(0.5, -0.1, 5.0, [1.0]),
        lambda: SimConfig(1.5, 0.1, 5.0, [1.0]),
        lambda: SimConfig(0.5, 0.1, 5.0, [math.nan]),
        lambda: pece_integrate(SimConfig(0.5, 0.1, 5.0, [1.0, 2.0]), np.eye(3)),
        lambda: pece_integrate(SimConfig(0.5, 0.1, 5.0, [1.0]), np.array([[1j]])),
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(InvalidInputError):
        bad()


def test_attraction_experiment_on_quadratic_example():
    case = example("ex2", 0.5)
    res = solve_extrapolated(case.stable_vector(0.01), case.system, case.split, case.field, QuadratureSpec())
    point = case.stable_vector(0.01) + res.sigma_u.real
    rep = attraction_experiment(
        case.system, case.split, case.field, point, 1e-3,
        reference=res.trajectory, reference_horizon=res.observation_horizon, step=2e-3, horizon=10.0,
    )
    assert rep.on_passed and rep.off_passed and rep.passed
    assert rep.on_decay_time < rep.on_shadow_time


def test_attraction_needs_unstable_direction():
    system = JordanSystem.from_blocks(0.5, [JordanBlock(-1.0, 1)])
    with pytest.raises(InvalidInputError):
        attraction_experiment(system, build_split(system), VectorField.zero(1), [0.1], 1e-3)
