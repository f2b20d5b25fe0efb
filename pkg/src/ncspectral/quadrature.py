"""Product Gauss rules on the standard simplex via collapsed coordinates."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


class QuadratureError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 8
    atol: float = 1e-10
    rtol: float = 1e-13
    max_depth: int = 10
    max_points: int = 3_000_000

    def __post_init__(self):
        if self.atol <= 0 and self.rtol <= 0:
            raise ValueError("tolerance must be positive")
        if self.order < 1:
            raise ValueError("rule order must be positive")


DEFAULT_QUAD = QuadratureSpec()


@lru_cache(maxsize=256)
def simplex_rule(n: int, q: int):
    """Points (barycentric, shape (N, n+1)) and weights of a q^n point rule.

    The Duffy map s_k = u_k * prod_{i<k}(1-u_i) has Jacobian
    prod_i (1-u_i)^(n-i); that factor is absorbed into Gauss-Jacobi weights,
    so polynomials of degree < 2q are integrated exactly.
    """
    if n == 0:
        return np.ones((1, 1)), np.ones(1)
    axes_u, axes_w = [], []
    for i in range(1, n + 1):
        a = n - i
        x, w = roots_jacobi(q, a, 0.0)
        axes_u.append((x + 1.0) / 2.0)
        axes_w.append(w / 2.0 ** (a + 1))
    grids = np.meshgrid(*axes_u, indexing="ij")
    wgrid = np.meshgrid(*axes_w, indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    s = np.empty((u.shape[0], n + 1))
    rest = np.ones(u.shape[0])
    for k in range(n):
        s[:, k + 1] = rest * u[:, k]
        rest = rest * (1.0 - u[:, k])
    s[:, 0] = rest
    return s, w


def integrate_simplex(fn, n: int, spec: QuadratureSpec = DEFAULT_QUAD):
    """Integrate ``fn(s)`` over the n-simplex (volume 1/n!).

    ``fn`` receives barycentric points of shape (N, n+1) and returns an array
    of shape (N, ...).  The rule order grows until two successive estimates
    agree within ``max(atol, rtol*|I|)``.
    """
    if n == 0:
        s, w = simplex_rule(0, 1)
        return np.asarray(fn(s))[0]
    q = spec.order
    prev = None
    residual = np.inf
    for _ in range(spec.max_depth + 1):
        if q ** n > spec.max_points:
            break
        s, w = simplex_rule(n, q)
        vals = np.asarray(fn(s))
        est = np.tensordot(w, vals, axes=(0, 0))
        if prev is not None:
            residual = float(np.max(np.abs(est - prev)))
            scale = float(np.max(np.abs(est))) if np.size(est) else 0.0
            if residual <= max(spec.atol, spec.rtol * scale):
                return est
        prev = est
        q = q + max(2, q // 4)
    raise QuadratureError("simplex quadrature did not converge within budget", residual)
