"""Functional metrics g_ij(h), the symbol of their Laplacian, and the
commutative (theta = 0) scalar curvature used as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import functions as fnc
from .contraction_ir import SymbolExpr, laplace_type_symbol
from .dd_calculus import Atom, MultiScalarFunction
from .functions import ArrayProduct, BlockDiagonal, DetPower, MatrixFunction, ScaledMatrix
from .tfunc import ConformalT, QuadratureT, TwistedT
from .quadrature import DEFAULT_QUAD, QuadratureSpec

N_SAMPLES = 512


class MetricError(ValueError):
    pass


class GridTooCoarse(ValueError):
    pass


def _check_spd(G: np.ndarray, what: str):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise MetricError(f"{what} must be a square matrix")
    if not np.allclose(G, G.T, rtol=0, atol=1e-12 * max(1.0, np.abs(G).max())):
        raise MetricError(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise MetricError(f"{what} is not positive definite") from None
    return G


class FunctionalMetric:
    """g_ij(t) on a declared spectral interval, with derived accessors.

    ``family`` and ``params`` record how the metric was built so that
    closed-form T-functions can be used when they exist.
    """

    def __init__(self, g: MatrixFunction, interval: Sequence[float] = (-1.0, 1.0),
                 family: str = "general", params: Mapping | None = None):
        lo, hi = float(interval[0]), float(interval[1])
        if not lo < hi:
            raise MetricError("spectral interval must have lo < hi")
        self.g = g
        self.dim = g.dim
        self.interval = (lo, hi)
        self.family = family
        self.params = dict(params or {})
        self.ginv = g.inverse()
        self._validate()

    def samples(self) -> np.ndarray:
        lo, hi = self.interval
        inner = lo + (hi - lo) * (np.arange(N_SAMPLES) + 0.5) / N_SAMPLES
        return np.concatenate([[lo], inner, [hi]])

    def _validate(self):
        G = self.g.taylor(self.samples(), 0)[0]
        scale = max(1.0, float(np.abs(G).max()))
        if np.abs(G - np.swapaxes(G, -1, -2)).max() > 1e-12 * scale:
            raise MetricError("metric is not symmetric")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            eig = np.linalg.eigvalsh(G).min(axis=1)
            t = self.samples()[int(np.argmin(eig))]
            raise MetricError(f"metric is not positive definite at t={t:.6g}") from None

    # -- accessors -------------------------------------------------------------
    def __call__(self, t) -> np.ndarray:
        return self.g.eval(t)

    def inverse(self, t) -> np.ndarray:
        return self.ginv.eval(t)

    def det(self, t) -> float:
        return float(self.g.det().eval(t))

    def det_power(self, p: float) -> DetPower:
        return self.g.det_power(p)

    # -- Laplacian symbol functions ---------------------------------------------
    def bindings(self) -> dict:
        """P2, P1, P01, P02 of the Laplacian as MultiScalarFunctions."""
        gi = self.ginv
        q = self.g.det_power(0.25)
        qm = self.g.det_power(-0.25)
        gh = ArrayProduct([gi, self.g.det_power(0.5)])
        P2 = MultiScalarFunction.from_atoms(1, [Atom(gi, (0,))], label="P2")
        P1 = MultiScalarFunction(2, (
            (1.0, (Atom(qm, (0,)), Atom(q, (0, 1)), Atom(gi, (1,)))),
            (1.0, (Atom(gi, (0, 1)),)),
            (1.0, (Atom(q, (0,)), Atom(gi, (0,)), Atom(qm, (0, 1)))),
        ), "P1")
        P01 = MultiScalarFunction.from_atoms(2, [Atom(q, (0,)), Atom(gi, (0,)), Atom(qm, (0, 1))], label="P01")
        P02 = MultiScalarFunction(3, (
            (1.0, (Atom(qm, (0,)), Atom(gh, (0, 1)), Atom(qm, (1, 2)))),
            (2.0, (Atom(q, (0,)), Atom(gi, (0,)), Atom(qm, (0, 1, 2)))),
        ), "P02")
        return {"P2": P2, "P1": P1, "P01": P01, "P02": P02}

    def t_provider(self, method: str = "auto", quad: QuadratureSpec = DEFAULT_QUAD):
        if method not in ("auto", "quadrature", "closed-form"):
            raise ValueError(f"unknown T-function method {method!r}")
        p = self.params
        if method != "quadrature":
            if self.family in ("conformal", "constant"):
                return ConformalT(p["f"], p["g"])
            if self.family == "twisted":
                return TwistedT(p["f"], p["g"], p["gt"])
            if method == "closed-form":
                raise ValueError(f"no closed-form T-functions for the {self.family} family")
        return QuadratureT(self.ginv, quad)

    def __repr__(self):
        return f"FunctionalMetric({self.family}, d={self.dim}, interval={self.interval})"


# -- builders --------------------------------------------------------------------------

def _interval_positive(f, interval, what="f"):
    lo, hi = interval
    xs = np.linspace(lo, hi, N_SAMPLES + 2)
    vals = np.asarray(f.eval(xs), dtype=float)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise MetricError(f"{what} must be positive on the spectral interval")


def build_constant(g, interval=(-1.0, 1.0)) -> FunctionalMetric:
    g = _check_spd(g, "g")
    one = fnc.const(1.0)
    return FunctionalMetric(ScaledMatrix(one, g, "g"), interval, "constant", {"f": one, "g": g})


def build_conformal(f, g=None, d: int | None = None, interval=(-1.0, 1.0)) -> FunctionalMetric:
    """g_ij(t) = f(t)^{-1} g_ij with constant g (identity of size d if omitted)."""
    f = fnc.as_function(f)
    if g is None:
        if d is None:
            raise MetricError("give g or d")
        g = np.eye(d)
    g = _check_spd(g, "g")
    if d is not None and g.shape[0] != d:
        raise MetricError("g does not have dimension d")
    _interval_positive(f, interval)
    return FunctionalMetric(ScaledMatrix(1.0 / f, g, "g/f"), interval, "conformal", {"f": f, "g": g})


def build_twisted(f, g, gt, interval=(-1.0, 1.0)) -> FunctionalMetric:
    """Block metric f(t)^{-1} g (+) gt with constant blocks; gt may be empty."""
    f = fnc.as_function(f)
    g = _check_spd(g, "g")
    if gt is None or np.size(gt) == 0:
        m = build_conformal(f, g, interval=interval)
        return m
    gt = _check_spd(np.atleast_2d(gt), "gt")
    _interval_positive(f, interval)
    one = fnc.const(1.0)
    G = BlockDiagonal([ScaledMatrix(1.0 / f, g, "g/f"), ScaledMatrix(one, gt, "gt")])
    return FunctionalMetric(G, interval, "twisted", {"f": f, "g": g, "gt": gt})


def build_doubly_twisted(f, g, ft, gt, interval=(-1.0, 1.0)) -> FunctionalMetric:
    """Block metric f(t)^{-1} g (+) ft(t)^{-1} gt."""
    f, ft = fnc.as_function(f), fnc.as_function(ft)
    g = _check_spd(g, "g")
    gt = _check_spd(np.atleast_2d(gt), "gt")
    _interval_positive(f, interval)
    _interval_positive(ft, interval, "ft")
    G = BlockDiagonal([ScaledMatrix(1.0 / f, g, "g/f"), ScaledMatrix(1.0 / ft, gt, "gt/ft")])
    return FunctionalMetric(G, interval, "doubly_twisted", {"f": f, "g": g, "ft": ft, "gt": gt})


def build_general(entries, interval=(-1.0, 1.0)) -> FunctionalMetric:
    """Entries are ScalarFunctions, numbers or whitelist expressions in t."""
    rows = [[fnc.parse(e) if isinstance(e, str) else fnc.as_function(e) for e in row] for row in entries]
    return FunctionalMetric(MatrixFunction(rows), interval, "general")


def random_spd_metric(rng: np.random.Generator, d: int, interval=(-1.0, 1.0),
                      max_tries: int = 50) -> FunctionalMetric:
    """g(t) = M0 + e^{c t} M1 + t^2 M2 with a dominant SPD M0 and symmetric M1, M2.

    Draws are repeated until the sampled Cholesky check passes.
    """
    t = fnc.identity()
    for _ in range(max_tries):
        A = rng.normal(size=(d, d))
        M0 = A @ A.T + d * np.eye(d)
        M1 = rng.normal(size=(d, d)) * 0.4
        M1 = M1 + M1.T
        M2 = rng.normal(size=(d, d)) * 0.3
        M2 = M2 + M2.T
        c = float(rng.uniform(-1.0, 1.0))
        e = fnc.exp(t * c)
        entries = [[float(M0[i, j]) + e * float(M1[i, j]) + (t * t) * float(M2[i, j]) for j in range(d)]
                   for i in range(d)]
        try:
            return FunctionalMetric(MatrixFunction(entries), interval, "general",
                                    {"M0": M0, "M1": M1, "M2": M2, "c": c})
        except MetricError:
            continue
    raise MetricError("could not draw a positive definite metric")


# -- Laplacian symbol ------------------------------------------------------------------------

@dataclass
class LaplacianSymbol:
    """Homogeneous parts of the Laplacian symbol plus the bound functions."""

    parts: dict
    bindings: dict
    metric: FunctionalMetric = field(repr=False)

    @property
    def expr(self) -> SymbolExpr:
        out = SymbolExpr((), frozenset())
        for k in sorted(self.parts, reverse=True):
            out = out + self.parts[k]
        return out


def laplacian_symbol(m: FunctionalMetric) -> LaplacianSymbol:
    return LaplacianSymbol(laplace_type_symbol(), m.bindings(), m)


# -- commutative curvature -------------------------------------------------------------------

@dataclass(frozen=True)
class FourierField:
    """h(x) = sum a cos(k.x) + b sin(k.x) on the flat torus [0, 2 pi)^d."""

    modes: tuple  # ((k tuple, a, b), ...)
    d: int

    @staticmethod
    def random(rng: np.random.Generator, d: int, kmax: int = 2, amplitude: float = 0.3,
               center: float = 0.0) -> "FourierField":
        ks = [k for k in np.ndindex(*(2 * kmax + 1,) * d)]
        modes = []
        for k in ks:
            k = tuple(int(v) - kmax for v in k)
            if k <= tuple([0] * d):  # one of each +-k pair, no constant
                continue
            modes.append((k, float(rng.normal()), float(rng.normal())))
        total = sum(abs(a) + abs(b) for _, a, b in modes)
        modes = [(k, a * amplitude / total, b * amplitude / total) for k, a, b in modes]
        modes.append((tuple([0] * d), center, 0.0))
        return FourierField(tuple(modes), d)

    def _phase(self, x, k):
        return sum(kj * xj for kj, xj in zip(k, x))

    def values(self, x) -> np.ndarray:
        out = 0.0
        for k, a, b in self.modes:
            ph = self._phase(x, k)
            out = out + a * np.cos(ph) + b * np.sin(ph)
        return out

    def gradient(self, x) -> np.ndarray:
        out = [0.0] * self.d
        for k, a, b in self.modes:
            ph = self._phase(x, k)
            g = -a * np.sin(ph) + b * np.cos(ph)
            out = [o + kj * g for o, kj in zip(out, k)]
        return np.stack(np.broadcast_arrays(*out))

    def hessian(self, x) -> np.ndarray:
        d = self.d
        out = [[0.0] * d for _ in range(d)]
        for k, a, b in self.modes:
            ph = self._phase(x, k)
            v = -(a * np.cos(ph) + b * np.sin(ph))
            for i in range(d):
                for j in range(d):
                    out[i][j] = out[i][j] + k[i] * k[j] * v
        return np.stack([np.stack(np.broadcast_arrays(*row)) for row in out])


def torus_grid(n: int, d: int) -> np.ndarray:
    x = 2 * np.pi * np.arange(n) / n
    return np.stack(np.meshgrid(*([x] * d), indexing="ij"))


def _spectral_derivative(u: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    n = u.shape[axis]
    k = np.fft.fftfreq(n, 1.0 / n)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * u.ndim
    shape[axis] = n
    U = np.fft.fft(u, axis=axis)
    return np.real(np.fft.ifft(U * (1j * k.reshape(shape)) ** order, axis=axis))


def _check_resolved(u: np.ndarray, tol: float, what: str):
    spec = np.abs(np.fft.fftn(u))
    n = u.shape[0]
    k = np.abs(np.fft.fftfreq(n, 1.0 / n))
    grids = np.meshgrid(*([k] * u.ndim), indexing="ij")
    kk = np.max(np.stack(grids), axis=0)
    tail = spec[kk >= n // 3].max(initial=0.0)
    if tail > tol * max(spec.max(), 1e-300):
        raise GridTooCoarse(f"{what} is not resolved on a {n}-point grid (tail ratio {tail / spec.max():.2e})")


def _field_derivatives(h, n: int, d: int, tol: float):
    x = torus_grid(n, d)
    if isinstance(h, FourierField):
        return h.values(x), h.gradient(x), h.hessian(x)
    h = np.asarray(h, dtype=float)
    if h.shape != (n,) * d:
        raise ValueError(f"grid function must have shape {(n,) * d}")
    _check_resolved(h, tol, "h")
    grad = np.stack([_spectral_derivative(h, a) for a in range(d)])
    hess = np.stack([np.stack([_spectral_derivative(grad[i], j) for j in range(d)]) for i in range(d)])
    return h, grad, hess


def classical_scalar_curvature(m: FunctionalMetric, h, n: int = 64, tol: float = 1e-10) -> np.ndarray:
    """Scalar curvature of G_ij(x) = g_ij(h(x)) on the flat d-torus.

    Uses the closed matrix expression in g, g', g'' contracted with dh dh
    and the Hessian of h.  ``h`` is a FourierField (exact derivatives) or
    an array on the uniform n^d grid (spectral derivatives).
    """
    d = m.dim
    hv, grad, hess = _field_derivatives(h, n, d, tol)
    lo, hi = m.interval
    if hv.min() < lo - 1e-12 or hv.max() > hi + 1e-12:
        raise MetricError("h leaves the spectral interval of the metric")
    jet = m.g.taylor(hv, 2)
    g0, g1, g2 = jet[0], jet[1], 2.0 * jet[2]
    gi = np.linalg.inv(g0)
    A = gi @ g1                       # g^{-1} g'
    trA = np.trace(A, axis1=-2, axis2=-1)[..., None, None]
    trB = np.trace(gi @ g2, axis1=-2, axis2=-1)[..., None, None]
    trAA = np.trace(A @ A, axis1=-2, axis2=-1)[..., None, None]
    Agi = A @ gi
    first = (-gi * trB - 0.25 * gi * trA ** 2 + 0.75 * gi * trAA + trA * Agi
             + gi @ g2 @ gi - 1.5 * A @ A @ gi)
    second = Agi - gi * trA
    dh = np.moveaxis(grad, 0, -1)
    H = np.moveaxis(np.moveaxis(hess, 0, -1), 0, -1)
    return (np.einsum("...ij,...i,...j->...", first, dh, dh)
            + np.einsum("...ij,...ij->...", second, H))


def christoffel_scalar_curvature(m: FunctionalMetric, h, n: int = 64, tol: float = 1e-10) -> np.ndarray:
    """Oracle: Christoffel symbols and Ricci tensor from spectral derivatives
    of the sampled metric field, nothing else shared with the closed form."""
    d = m.dim
    hv, _, _ = _field_derivatives(h, n, d, tol)
    G = np.moveaxis(np.asarray(m.g.eval(hv)), (-2, -1), (0, 1))  # (d, d, n..n)
    for i in range(d):
        for j in range(d):
            _check_resolved(G[i, j], 1e-9, "metric field")
    Gi = np.moveaxis(np.linalg.inv(np.moveaxis(G, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    dG = np.stack([np.stack([np.stack([_spectral_derivative(G[i, j], k) for k in range(d)])
                             for j in range(d)]) for i in range(d)])  # dG[i, j, k] = d_k G_ij
    # Gamma[k, i, j] = 1/2 G^{kl} (d_i G_jl + d_j G_il - d_l G_ij)
    low = 0.5 * (np.einsum("jli...->ijl...", dG) + np.einsum("ilj...->ijl...", dG) - dG)
    Gam = np.einsum("kl...,ijl...->kij...", Gi, low)
    dGam = np.stack([np.stack([np.stack([np.stack([_spectral_derivative(Gam[k, i, j], a) for a in range(d)])
                                         for j in range(d)]) for i in range(d)]) for k in range(d)])
    # Ric_ij = d_k Gam^k_ij - d_j Gam^k_ik + Gam^k_kl Gam^l_ij - Gam^k_jl Gam^l_ik
    ric = (np.einsum("kijk...->ij...", dGam) - np.einsum("kikj...->ij...", dGam)
           + np.einsum("kkl...,lij...->ij...", Gam, Gam) - np.einsum("kjl...,lik...->ij...", Gam, Gam))
    return np.einsum("ij...,ij...->...", Gi, ric)
