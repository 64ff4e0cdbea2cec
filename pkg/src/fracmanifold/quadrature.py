"""Quadrature rules shared by the manifold operator and the PECE integrator.

Product-trapezoid: ``int_0^{t_k} (t_k - tau)^(p-1) phi(tau) dtau`` with
``phi`` replaced by its piecewise-linear interpolant on the uniform grid,
integrated exactly.  With ``c = h^p / (p (p+1))`` the weights are

* ``c * ((k-1)^(p+1) - (k-1-p) k^p)`` for ``j = 0``,
* ``c * ((d+1)^(p+1) - 2 d^(p+1) + (d-1)^(p+1))`` for ``0 < j < k``, ``d = k - j``,
* ``c`` for ``j = k``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import convolve


@lru_cache(maxsize=32)
def _trapezoid_tables(K: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    d = np.arange(K + 1, dtype=float)
    w = np.empty(K + 1)
    w[0] = 1.0
    w[1:] = (d[1:] + 1) ** (p + 1) - 2 * d[1:] ** (p + 1) + (d[1:] - 1) ** (p + 1)
    a0 = np.zeros(K + 1)
    a0[1:] = (d[1:] - 1) ** (p + 1) - (d[1:] - 1 - p) * d[1:] ** p
    w.setflags(write=False)
    a0.setflags(write=False)
    return w, a0


def product_trapezoid_weights(K: int, p: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """``(w, a0)`` such that the weight of node ``j`` at step ``k`` is
    ``w[k-j]`` for ``j >= 1`` and ``a0[k]`` for ``j = 0`` (``k >= 1``)."""
    w, a0 = _trapezoid_tables(int(K), float(p))
    c = h**p / (p * (p + 1))
    return c * w, c * a0


def rectangle_weights(K: int, p: float, h: float) -> np.ndarray:
    """Predictor weights: node ``j`` at step ``k`` gets ``b[k-1-j]``."""
    d = np.arange(K + 1, dtype=float)
    return h**p / p * ((d + 1) ** p - d**p)


def product_trapezoid_convolution(kernel, g, p: float, h: float) -> np.ndarray:
    """``out[k] = int_0^{t_k} (t_k - tau)^(p-1) kernel(t_k - tau) g(tau) dtau``.

    ``kernel`` holds samples ``kernel(t_d)`` (shape ``(K+1,)``) and ``g`` samples
    on the same grid (shape ``(K+1,)`` or ``(K+1, n)``); the product is
    interpolated linearly, so the rule is exact for ``kernel * g`` linear.
    """
    kernel = np.asarray(kernel)
    g = np.asarray(g)
    K = kernel.shape[0] - 1
    w, a0 = product_trapezoid_weights(K, p, h)
    wk = w * kernel
    if g.ndim == 1:
        body = convolve(wk, g)[: K + 1]
        out = body + (a0 - w) * kernel * g[0]
    else:
        body = np.stack([convolve(wk, g[:, i])[: K + 1] for i in range(g.shape[1])], axis=1)
        out = body + ((a0 - w) * kernel)[:, None] * g[0][None, :]
    out[0] = 0.0
    return out


def moment_convolution(M0, M1, g, h: float) -> np.ndarray:
    """``out[k] = int_0^{t_k} w(t_k - tau) g(tau) dtau`` with ``g`` piecewise
    linear and the kernel ``w`` integrated exactly.

    ``M0[d]`` and ``M1[d]`` sample ``int_0^x w`` and ``int_0^x s w(s) ds`` at
    ``x = d h`` (each up to an additive constant).  With
    ``w(x) = x^(p-1) kernel(x)`` this differs from
    :func:`product_trapezoid_convolution` only in leaving ``kernel``
    uninterpolated, which matters when ``kernel`` has ``x^p`` terms.
    """
    M0 = np.asarray(M0)
    M1 = np.asarray(M1)
    g = np.asarray(g)
    K = M0.shape[0] - 1
    x = np.arange(K + 1) * h
    dM0 = np.diff(M0)
    dM1 = np.diff(M1)
    left = (x[1:] * dM0 - dM1) / h  # node x_d of panel [x_d, x_{d+1}]
    right = (dM1 - x[:-1] * dM0) / h  # node x_{d+1}
    w = np.zeros(K + 1, dtype=np.result_type(left, right))
    w[:K] += left
    w[1:] += right
    # the node tau = 0 has no panel beyond it
    tail = np.zeros_like(w)
    tail[:K] = left
    if g.ndim == 1:
        out = convolve(w, g)[: K + 1] - tail * g[0]
    else:
        body = np.stack([convolve(w, g[:, i])[: K + 1] for i in range(g.shape[1])], axis=1)
        out = body - tail[:, None] * g[0][None, :]
    out[0] = 0.0
    return out


@lru_cache(maxsize=16)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on each panel ``[edges[i], edges[i+1]]``.

    Returns arrays of shape ``(n_panels, order)``.
    """
    x, w = _gauss_legendre(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return lo + half * (x[None, :] + 1.0), half * w[None, :]


def composite_gauss_legendre(func, a: float, b: float, n_panels: int, order: int = 10):
    """Composite Gauss-Legendre of a vectorised ``func`` over ``[a, b]``.

    ``func`` maps an array of nodes ``(m,)`` to ``(m,)`` or ``(m, ...)``.
    """
    nodes, weights = panel_nodes(np.linspace(a, b, n_panels + 1), order)
    vals = np.asarray(func(nodes.ravel()))
    wts = weights.ravel()
    return np.tensordot(wts, vals, axes=(0, 0))
