from __future__ import annotations

import math

import numpy as np
import pytest

import properties
from oracles import ex1_constants_quad, liu_constant_quad
from fracmanifold.examples import ex1_constants, ex1_map, example, liu_constant
from fracmanifold.exceptions import (
    DivergedTrajectory,
    InvalidInputError,
    NoContraction,
    TailNotDecaying,
)
from fracmanifold.fode_sim import linear_exact
from fracmanifold.jordan import JordanBlock, JordanSystem
from fracmanifold.manifold import (
    QuadratureSpec,
    TrajectoryGrid,
    VectorField,
    apply_T_sigma,
    build_operator,
    certify_tail_cut,
    error_exponents,
    manifold_map,
    richardson,
    solve_extrapolated,
    solve_fixed_point,
    tail_integral,
    unstable_decay_report,
    verify_unstable_decay,
)
from fracmanifold.spectral import build_split


def _linear_field(B: np.ndarray) -> VectorField:
    return VectorField(lambda x: np.asarray(x) @ B.T, B.shape[0])


def _eigenspace_graph(M: np.ndarray, pi_s: np.ndarray, sigma: np.ndarray, p: float) -> np.ndarray:
    """Unstable part of the point over ``sigma`` in the stable eigenspace of ``M``."""
    vals, vecs = np.linalg.eig(M)
    stable = np.abs(np.angle(vals)) > p * math.pi / 2
    V = vecs[:, stable]
    c = np.linalg.lstsq(pi_s @ V, sigma, rcond=None)[0]
    return (V @ c - sigma).real


def test_zero_field_gives_linear_flow():
    case = example("ex1", 0.5)
    f = VectorField.zero(3)
    sigma = case.stable_vector(0.3)
    res = solve_fixed_point(sigma, case.system, case.split, f, QuadratureSpec(richardson_levels=1))
    assert np.all(res.sigma_u == 0)
    assert res.iterations == 1 and res.final_delta == 0.0
    exact = linear_exact(case.system, res.trajectory.times, sigma)
    assert np.max(np.abs(res.trajectory.values - exact)) < 1e-13


def test_zero_sigma_gives_zero():
    case = example("ex2", 0.5)
    res = solve_extrapolated(np.zeros(2), case.system, case.split, case.field, QuadratureSpec())
    assert np.all(res.sigma_u == 0)
    assert np.all(res.trajectory.values == 0)


@pytest.mark.parametrize("p", [0.5, 0.7])
def test_linear_perturbation_recovers_eigenspace(p):
    """For linear ``f = B x`` the manifold is the stable eigenspace of ``A + B``."""
    system = JordanSystem.from_blocks(p, [JordanBlock(-1.0, 2), JordanBlock(1.5, 2)])
    split = build_split(system)
    rng = np.random.default_rng(5)
    B = 0.1 * rng.normal(size=(4, 4))
    sigma = np.array([0.2, -0.1, 0.0, 0.0])
    res = solve_extrapolated(sigma, system, split, _linear_field(B), QuadratureSpec(), tol=1e-13)
    ref = _eigenspace_graph(system.matrix() + B, split.pi_s, sigma, p)
    assert np.max(np.abs(res.sigma_u.real - ref)) < 1e-6 * np.max(np.abs(ref))


def test_linear_forcing_closed_form():
    """``A = diag(-1, lam)``, ``f = (-c x1, k x1)``: ``sigma_u = -k sigma / (lam + 1 + c)``."""
    p, lam, c, k = 0.6, 2.0, 0.5, 1.0
    system = JordanSystem.from_blocks(p, [JordanBlock(-1.0, 1), JordanBlock(lam, 1)])
    split = build_split(system)
    B = np.array([[-c, 0.0], [k, 0.0]])
    res = solve_extrapolated(np.array([0.1, 0.0]), system, split, _linear_field(B), QuadratureSpec(), tol=1e-13)
    assert res.sigma_u[1].real == pytest.approx(-k * 0.1 / (lam + 1 + c), rel=1e-6)
    # stable coordinate: E_p(-(1 + c) t^p) sigma
    shifted = JordanSystem.from_blocks(p, [JordanBlock(-1.0 - c, 1)])
    exact = linear_exact(shifted, res.trajectory.times, [0.1])[:, 0]
    # finest grid, no extrapolation: O(h^(1+p)) with h = 0.005
    assert np.max(np.abs(res.trajectory.values[:, 0] - exact)) < 3e-5


def test_library_constants_match_independent_quadrature():
    l_val, m_val = ex1_constants(0.5)
    l_ref, m_ref = ex1_constants_quad()
    assert l_val == pytest.approx(l_ref, rel=1e-12)
    assert m_val == pytest.approx(m_ref, rel=1e-12)
    assert liu_constant(0.5) == pytest.approx(liu_constant_quad(), rel=1e-12)


@pytest.mark.parametrize("p,sigma1", [(0.5, 0.005), (0.7, 0.01)])
def test_quadratic_example_against_closed_form(p, sigma1):
    case = example("ex1", p)
    res = solve_extrapolated(case.stable_vector(sigma1), case.system, case.split, case.field, QuadratureSpec())
    s2, s3 = ex1_map(p, sigma1)
    assert res.sigma_u[1].real == pytest.approx(s2, rel=1e-4)
    assert res.sigma_u[2].real == pytest.approx(s3, rel=1e-4)
    assert res.sigma_u[0] == 0


def test_liu_map_is_bilinear():
    case = example("liu", 0.5)
    spec = QuadratureSpec()
    l_ref = liu_constant_quad()
    for s1, s3 in [(0.05, 0.05), (-0.03, 0.08), (0.1, -0.02)]:
        res = solve_extrapolated(case.stable_vector(s1, s3), case.system, case.split, case.field, spec)
        assert res.sigma_u[1].real == pytest.approx(l_ref * s1 * s3, rel=1e-4)


def test_fixed_point_is_reproduced_by_one_more_application():
    case = example("ex2", 0.5)
    spec = QuadratureSpec(richardson_levels=1)
    op = build_operator(case.system, case.split, case.field, spec)
    sigma = case.stable_vector(0.05)
    res = solve_fixed_point(sigma, case.system, case.split, case.field, spec, tol=1e-14, operator=op)
    again = apply_T_sigma(sigma, res.trajectory, case.system, case.split, case.field, spec, operator=op)
    assert np.max(np.abs(again.values - res.trajectory.values)) < 1e-14
    assert res.converged and max(res.update_ratios) < 0.5


def test_decay_report_on_and_off_manifold():
    case = example("ex2", 0.5)
    res = solve_extrapolated(case.stable_vector(0.01), case.system, case.split, case.field, QuadratureSpec())
    assert verify_unstable_decay(res, case.split).passed
    # an unstable component that keeps growing fails the same test
    t = res.trajectory.times
    growing = np.stack([np.zeros_like(t), 0.01 * np.exp(t / 4)], axis=1)
    report = unstable_decay_report(t, growing, case.split.pi_u)
    assert not report.passed and report.ratio == 1.0
    flat = unstable_decay_report(t, np.zeros((t.size, 2)), case.split.pi_u)
    assert flat.passed and flat.peak == 0.0


def test_large_sigma_fails_loudly():
    case = example("ex2", 0.5)
    spec = QuadratureSpec(richardson_levels=1)
    with pytest.raises((NoContraction, DivergedTrajectory)):
        solve_fixed_point(case.stable_vector(3.0), case.system, case.split, case.field, spec)


def test_batch_records_failures_and_is_thread_independent():
    case = example("ex2", 0.5)
    spec = QuadratureSpec(step=0.04, richardson_levels=2)
    samples = [case.stable_vector(s) for s in (0.01, 3.0, -0.02)]
    one = manifold_map(case.system, case.split, case.field, spec, samples)
    two = manifold_map(case.system, case.split, case.field, spec, samples, jobs=2)
    assert one[1].sigma_u is None and one[1].error
    for a, b in zip(one, two):
        assert (a.sigma_u is None) == (b.sigma_u is None)
        if a.sigma_u is not None:
            assert np.array_equal(a.sigma_u, b.sigma_u)


def test_tail_integral_of_zero_and_tail_cut_failure():
    case = example("ex1", 0.5)
    spec = QuadratureSpec()
    assert np.all(tail_integral(case.system, case.split, lambda s: np.zeros((s.size, 3)), spec) == 0)
    slow = JordanSystem.from_blocks(0.5, [JordanBlock(1e-3, 1)])
    with pytest.raises(TailNotDecaying):
        certify_tail_cut(slow, build_split(slow).alpha, 1e-10)


def test_error_exponents_and_richardson():
    assert error_exponents(0.5, 3) == [1.5, 2.0, 2.5]
    assert error_exponents(0.7, 3) == [1.7, 2.0, 2.4]
    hs = [0.1, 0.05, 0.025]
    vals = [np.array([3.0 + 2 * h**1.5 - 5 * h**2]) for h in hs]
    assert richardson(vals, 0.5)[0] == pytest.approx(3.0, abs=1e-14)


@pytest.mark.parametrize(
    "bad",
    [
        lambda c: solve_fixed_point(np.array([0.01, 0.01]), c.system, c.split, c.field, QuadratureSpec()),
        lambda c: solve_fixed_point(np.array([0.01]), c.system, c.split, c.field, QuadratureSpec()),
        lambda c: solve_fixed_point(np.array([0.01, 0.0]), c.system, c.split, VectorField.zero(3), QuadratureSpec()),
        lambda c: QuadratureSpec(tol=1.5),
        lambda c: QuadratureSpec(step=0.0),
        lambda c: QuadratureSpec(singular_scheme="simpson"),
        lambda c: QuadratureSpec(richardson_levels=0),
        lambda c: TrajectoryGrid(0.1, np.zeros((5, 2))),
        lambda c: TrajectoryGrid(0.1, np.full((20, 2), np.nan)),
        lambda c: VectorField(lambda x: np.asarray(x) + 1.0, 2),
        lambda c: VectorField.polynomial([[(1.0, (0, 0))], []]),
        lambda c: VectorField.polynomial([[(1.0, (2,))], []]),
    ],
)
def test_invalid_inputs(bad):
    with pytest.raises(InvalidInputError):
        bad(example("ex2", 0.5))


def test_grid_refinement_property():
    ok, detail = properties.grid_refinement()
    assert ok, detail


def test_tail_doubling_property():
    ok, detail = properties.tail_doubling()
    assert ok, detail
