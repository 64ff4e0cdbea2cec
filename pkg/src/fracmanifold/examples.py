"""The three worked systems and their closed-form manifold maps.

* ``ex1``: ``A = [[-1,0,0],[0,2,1],[0,0,2]]``, ``f = (0, x1^2, 3 x1^2)``.
* ``ex2``: ``A = diag(-2, 2)``, ``f = (x1^2, x1^2 + x2^2)``.
* ``liu``: the Liu system at ``a=1, e=0, b=2.5, k=4, c=5, m=0``, i.e.
  ``A = diag(-1, 2.5, -5)``, ``f = (0, -4 x1 x3, 0)``.

The constants ``l`` and ``m`` are integrals over ``[0, inf)``.  They are
evaluated with Gauss-Legendre panels graded geometrically toward ``t = 0``
(where the integrands behave like ``t^p``) and checked against a refined
panel set, independently of the grid machinery in :mod:`fracmanifold.manifold`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_order
from .exceptions import InvalidInputError, NonConvergence
from .jordan import JordanBlock, JordanSystem
from .manifold import VectorField
from .quadrature import panel_nodes
from .mittag_leffler import MLParams, ml_eval
from .spectral import SpectralSplit, build_split

NAMES = ("ex1", "ex2", "liu")


def _ep(p: float, lam: float):
    params = MLParams(p)

    def e(t):
        return ml_eval(params, lam * np.asarray(t) ** p).real

    return e


def _graded_rule(rate: float, per_decade: int, order: int):
    # geometric panels down to 1e-14 decay lengths, uniform-in-log up to 60
    n = int(16 * per_decade)
    edges = np.concatenate([[0.0], np.geomspace(1e-14, 60.0, n)]) / rate
    nodes, weights = panel_nodes(edges, order)
    return nodes.ravel(), weights.ravel()


def _integral(func, rate: float, tol: float = 1e-12) -> float:
    """``int_0^inf func`` for an integrand decaying like ``exp(-rate t)``;
    ``func`` must be vectorised."""
    values = []
    for per_decade in (2, 4):
        nodes, weights = _graded_rule(rate, per_decade, 12)
        values.append(float(weights @ func(nodes)))
    if abs(values[1] - values[0]) > tol * max(1.0, abs(values[1])):
        raise NonConvergence(f"quadrature check failed: {values[0]!r} vs {values[1]!r}")
    return values[1]


def ex1_constants(p: float) -> tuple[float, float]:
    """``l = int e^(-t 2^(1/p)) E_p(-t^p)^2`` and
    ``m = int e^(-t 2^(1/p)) (t 2^(1/p) - 1 + p) E_p(-t^p)^2``."""
    p = check_order(p)
    mu = 2.0 ** (1 / p)
    e = _ep(p, -1.0)
    l_val = _integral(lambda t: np.exp(-mu * t) * e(t) ** 2, mu)
    m_val = _integral(lambda t: np.exp(-mu * t) * (mu * t - 1 + p) * e(t) ** 2, mu)
    return l_val, m_val


def ex1_map(p: float, sigma1: float) -> tuple[float, float]:
    """Closed-form ``(sigma2, sigma3)`` over ``sigma1``."""
    l_val, m_val = ex1_constants(p)
    s2 = -l_val * sigma1**2 * 2 ** (1 / p - 1) + (3 / p) * m_val * sigma1**2 * 2 ** (1 / p - 2)
    s3 = -3 * l_val * sigma1**2 * 2 ** (1 / p - 1)
    return s2, s3


def liu_constant(p: float) -> float:
    """``l = 4 (5/2)^(1/p-1) int e^(-t (5/2)^(1/p)) E_p(-t^p) E_p(-5 t^p) dt``."""
    p = check_order(p)
    mu = 2.5 ** (1 / p)
    e1, e5 = _ep(p, -1.0), _ep(p, -5.0)
    return 4 * 2.5 ** (1 / p - 1) * _integral(lambda t: np.exp(-mu * t) * e1(t) * e5(t), mu)


@dataclass(frozen=True)
class ExampleCase:
    name: str
    system: JordanSystem
    split: SpectralSplit
    field: VectorField

    def stable_vector(self, *coords: float) -> np.ndarray:
        """Embed stable coordinates (in state order) into ``R^n``."""
        idx = [i for i in range(self.system.dimension) if abs(self.split.pi_s[i, i] - 1) < 1e-12]
        if len(coords) != len(idx):
            raise InvalidInputError(f"{self.name} takes {len(idx)} stable coordinates")
        out = np.zeros(self.system.dimension)
        out[idx] = coords
        return out


def ex1_field() -> VectorField:
    return VectorField.polynomial([[], [(1.0, (2, 0, 0))], [(3.0, (2, 0, 0))]], name="ex1")


def ex2_field() -> VectorField:
    return VectorField.polynomial([[(1.0, (2, 0))], [(1.0, (2, 0)), (1.0, (0, 2))]], name="ex2")


def liu_field() -> VectorField:
    return VectorField.polynomial([[], [(-4.0, (1, 0, 1))], []], name="liu")


def builtin_field(name: str) -> VectorField:
    fields = {"ex1": ex1_field, "ex2": ex2_field, "liu": liu_field}
    if name not in fields:
        raise InvalidInputError(f"unknown builtin field {name!r}; choose from {sorted(fields)}")
    return fields[name]()


def example_system(name: str, p: float) -> JordanSystem:
    if name == "ex1":
        return JordanSystem.from_blocks(p, [JordanBlock(-1.0, 1), JordanBlock(2.0, 2)])
    if name == "ex2":
        return JordanSystem.from_blocks(p, [JordanBlock(-2.0, 1), JordanBlock(2.0, 1)])
    if name == "liu":
        return JordanSystem.from_blocks(
            p, [JordanBlock(-1.0, 1), JordanBlock(2.5, 1), JordanBlock(-5.0, 1)]
        )
    raise InvalidInputError(f"unknown example {name!r}; choose from {NAMES}")


def example(name: str, p: float = 0.5) -> ExampleCase:
    system = example_system(name, p)
    return ExampleCase(name, system, build_split(system), builtin_field(name))
