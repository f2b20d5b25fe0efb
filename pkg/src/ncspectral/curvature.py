"""Second heat coefficient b_2, curvature functions and total curvature.

Densities are reported with the (4 pi)^{-d/2} factor stripped, so that
R = B21^{ij}(h0,h1)(d_i d_j h) + B22^{ij}(h0,h1,h2)(d_i h . d_j h).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import mpmath
import numpy as np

from . import contraction_ir as ir
from . import functions as fnc
from .dd_calculus import dd
from .metrics import FunctionalMetric
from .quadrature import DEFAULT_QUAD, QuadratureSpec
from .tfunc import tfunc_dim2, tfunc_dt4


# -- b_2 densities -----------------------------------------------------------------

@dataclass
class DensityB2:
    B21: Callable  # (t0, t1) -> (d, d), symmetrized
    B22: Callable  # (t0, t1, t2) -> (d, d); axis 0 pairs with the first delta
    provenance: str
    method: str
    dim: int

    def b21(self, i, j, t0, t1) -> float:
        return float(self.B21(t0, t1)[i, j])

    def b22(self, i, j, t0, t1, t2) -> float:
        return float(self.B22(t0, t1, t2)[i, j])


@lru_cache(maxsize=1)
def engine_b2_terms():
    """Lowered b_2 of a general Laplace type symbol, split by word shape."""
    bs = ir.parametrix(ir.laplace_type_symbol(), 2)
    low = ir.lower_to_tfunctions(bs[2])
    b21 = [t for t in low if len(t.word) == 1]
    b22 = [t for t in low if len(t.word) == 2]
    return b21, b22


def _sym(a):
    return 0.5 * (a + a.T)


def b2_engine(m: FunctionalMetric, method: str = "auto", quad: QuadratureSpec = DEFAULT_QUAD) -> DensityB2:
    b21, b22 = engine_b2_terms()
    fe = ir.FactorEvaluator(m.bindings())
    tp = m.t_provider(method, quad)

    def B21(t0, t1):
        return _sym(ir.evaluate_lowered(b21, (t0, t1), fe, tp, m.dim))

    def B22(t0, t1, t2):
        return ir.evaluate_lowered(b22, (t0, t1, t2), fe, tp, m.dim)

    return DensityB2(B21, B22, "engine", tp.method, m.dim)


class _Hand:
    def __init__(self, m: FunctionalMetric, tp):
        b = m.bindings()
        self.tp = tp
        self.P2, self.P1, self.P01, self.P02 = b["P2"], b["P1"], b["P01"], b["P02"]
        self.dP2 = self.P2.partial_dd(0)
        self.ddP2 = self.dP2.partial_dd(0)
        self.P1a = self.P1.partial_dd(0)   # [t0,t1; P1(., t2)]
        self.P1b = self.P1.partial_dd(1)   # [t1,t2; P1(t0, .)]

    def T(self, alpha, ts, rank):
        return self.tp(alpha, ts, rank)

    def B21(self, t0, t1):
        T, e = self.T, np.einsum
        P2 = self.P2((t0,))
        P1 = self.P1((t0, t1))
        dP2 = self.dP2((t0, t1))
        out = -T((1, 1), (t0, t1), 0) * self.P01((t0, t1))
        out = out + 2 * e("kl,ik,jl->ij", T((2, 1), (t0, t1), 2), P2, P1)
        out = out + e("kl,kl->", T((2, 1), (t0, t1), 2), dP2) * P2
        out = out - 4 * e("klmn,ik,jl,mn->ij", T((3, 1), (t0, t1), 4), P2, P2, dP2)
        return _sym(out)

    def B22(self, t0, t1, t2):
        T, e = self.T, np.einsum
        P2a, P2b = self.P2((t0,)), self.P2((t1,))
        P1a, P1b = self.P1((t0, t1)), self.P1((t1, t2))
        d01, d12 = self.dP2((t0, t1)), self.dP2((t1, t2))
        d012 = self.ddP2((t0, t1, t2))
        T111_2 = T((1, 1, 1), (t0, t1, t2), 2)
        T211_4 = T((2, 1, 1), (t0, t1, t2), 4)
        T21_02 = T((2, 1), (t0, t2), 2)
        out = -T((1, 1), (t0, t2), 0) * self.P02((t0, t1, t2))
        out = out + e("kl,ik,jl->ij", T111_2, P1a, P1b)
        out = out - 2 * e("klmn,im,kl,jn->ij", T211_4, P2a, d01, P1b)
        out = out + 2 * e("kl,ik,jl->ij", T21_02, P2a, self.P1a((t0, t1, t2)))
        out = out + 2 * e("kl,jk,il->ij", T21_02, P2a, self.P1b((t0, t1, t2)))
        out = out + e("kl,kl->", T111_2, d12) * P1a
        out = out - 2 * e("klmn,jl,ik,mn->ij", T211_4, P2a, P1a, d12)
        out = out - 2 * e("klmn,ik,jl,mn->ij", T((1, 2, 1), (t0, t1, t2), 4), P1a, P2b, d12)
        out = out - 2 * e("klmn,lm,kn->", T211_4, d01, d12) * P2a
        out = out - 4 * e("klmn,ik,jl,mn->ij", T211_4, P2a, d01, d12)
        out = out + 8 * e("klmnpq,ik,jn,lm,pq->ij", T((3, 1, 1), (t0, t1, t2), 6), P2a, P2a, d01, d12)
        out = out + 4 * e("klmnpq,ik,lm,jn,pq->ij", T((2, 2, 1), (t0, t1, t2), 6), P2a, d01, P2b, d12)
        out = out + 2 * e("kl,kl->", T21_02, d012) * P2a
        out = out - 8 * e("klmn,ik,jl,mn->ij", T((3, 1), (t0, t2), 4), P2a, P2a, d012)
        return out


def b2_hand(m: FunctionalMetric, method: str = "auto", quad: QuadratureSpec = DEFAULT_QUAD) -> DensityB2:
    tp = m.t_provider(method, quad)
    h = _Hand(m, tp)
    return DensityB2(h.B21, h.B22, "hand", tp.method, m.dim)


# -- extended precision evaluation of rational closed forms --------------------------------

_PERTURB = mpmath.mpf(10) ** -30


def _coincidence_safe(fn: Callable, pts: Sequence[float]) -> float:
    """fn(*pts) for a function with removable singularities on diagonals.

    Arguments are exact binary floats, so evaluating the closed form with
    enough digits reproduces the function at those inputs.  Exactly equal
    arguments are split by a symmetric perturbation of relative size 1e-30;
    averaging the two signs cancels the first order error.
    """
    x = [mpmath.mpf(float(p)) for p in pts]
    scale = max(abs(v) for v in x) or mpmath.mpf(1)
    seps = [abs(a - b) for a, b in itertools.combinations(x, 2)]
    exact = any(s == 0 for s in seps)
    if exact:
        small = _PERTURB * scale
    else:
        small = min(seps)
    digits = 30 + 8 * max(0, int(-math.log10(float(small / scale))) + 1)
    with mpmath.workdps(digits):
        if not exact:
            return float(fn(*x))
        n = len(x)
        v = [mpmath.mpf(k) - mpmath.mpf(n - 1) / 2 for k in range(n)]
        plus = fn(*[a + small * b for a, b in zip(x, v)])
        minus = fn(*[a - small * b for a, b in zip(x, v)])
        return float((plus + minus) / 2)


def _near2(d) -> bool:
    return abs(float(d) - 2.0) < 1e-12


def Kt_conformal(d: float, x, y):
    mp = mpmath
    if _near2(d):
        return -mp.sqrt(x) * mp.sqrt(y) / (x - y) ** 3 * ((x + y) * mp.log(x / y) + 2 * (y - x))
    d = mp.mpf(d)
    h = d / 2
    return (4 * x ** (2 - 3 * d / 4) * y ** (2 - 3 * d / 4) / (d * (d - 2) * (x - y) ** 3)
            * ((d - 1) * x ** h * y ** (h - 1) - (d - 1) * x ** (h - 1) * y ** h - x ** (d - 1) + y ** (d - 1)))


def Ht_conformal(d: float, x, y, z):
    mp = mpmath
    if _near2(d):
        return (2 * mp.sqrt(x) * mp.sqrt(z) / ((x - y) ** 2 * (x - z) ** 3 * (y - z) ** 2)
                * (-(x - y) * (x - z) * (y - z) * (x - 2 * y + z) + y * (x - z) ** 3 * mp.log(y)
                   + (y - z) ** 2 * (-2 * x ** 2 + x * y + y * z) * mp.log(x)
                   - (x - y) ** 2 * (x * y + z * y - 2 * z ** 2) * mp.log(z)))
    d = mp.mpf(d)
    h = d / 2
    pre = 2 * x ** (-3 * d / 4) * y ** (-d) * z ** (-3 * d / 4) / (
        (d - 2) * d * (x - y) ** 2 * (x - z) ** 3 * (y - z) ** 2)
    s = (x ** d * y ** d * z ** 2 * (x - y) * (3 * x ** 2 * y - 2 * x ** 2 * z - 4 * x * y ** 2 + 4 * x * y * z
                                              - 2 * x * z ** 2 + y * z ** 2)
         + x ** d * y ** (h + 1) * z ** (h + 1) * (x - z) ** 2 * (z - y) * (d * x + (1 - d) * y)
         + x ** d * y ** 3 * z ** d * (z - x) ** 3
         + x ** (h + 1) * y ** (3 * h) * z ** 2 * (x - y) * (x - z) ** 2
         + 2 * (d - 1) * x ** (h + 1) * y ** d * z ** (h + 1) * (x - y) * (x - z) * (z - y) * (x - 2 * y + z)
         - x ** (h + 1) * y ** (h + 1) * z ** d * (x - y) * (x - z) ** 2 * ((1 - d) * y + d * z)
         - x ** 2 * y ** (3 * h) * z ** (h + 1) * (x - z) ** 2 * (z - y)
         + x ** 2 * y ** d * z ** d * (y - z) * (x ** 2 * y - 2 * x ** 2 * z + 4 * x * y * z - 2 * x * z ** 2
                                                 - 4 * y ** 2 * z + 3 * y * z ** 2))
    return pre * s


def Kt_twisted(r: float, x, y):
    mp = mpmath
    if _near2(r):
        return (-x ** 2 + y ** 2 + 2 * x * y * mp.log(x / y)) / (mp.sqrt(x * y) * (x - y) ** 3)
    if abs(float(r) - 4.0) < 1e-12:
        return (x ** 2 - y ** 2 - (x ** 2 + y ** 2) * mp.log(x / y)) / (x * y * (x - y) ** 3)
    r = mp.mpf(r)
    h = r / 2
    return (((2 * r - 4) * (x ** 2 - y ** 2) * x ** h * y ** h + 4 * x ** 2 * y ** r - 4 * x ** r * y ** 2)
            / ((r - 4) * (r - 2) * x ** (3 * r / 4) * y ** (3 * r / 4) * (x - y) ** 3))


def Ht_twisted(r: float, x, y, z):
    mp = mpmath
    if _near2(r):
        return (1 / (2 * y * mp.sqrt(x * z) * (x - y) ** 2 * (x - z) ** 3 * (y - z) ** 2)
                * (-y * (x + y) * (x - z) ** 3 * (y + z) * mp.log(y)
                   - z * (x - y) ** 2 * (-3 * x ** 2 * y + x ** 2 * z - 8 * x * y ** 2 + 10 * x * y * z
                                         - 2 * x * z ** 2 + y * z ** 2 + z ** 3) * mp.log(z)
                   + x * (y - z) ** 2 * (x ** 3 + x ** 2 * y - 2 * x ** 2 * z + 10 * x * y * z + x * z ** 2
                                         - 8 * y ** 2 * z - 3 * y * z ** 2) * mp.log(x)
                   + 2 * y * (y - x) * (x - z) * (x + z) * (z - y) * (x - 2 * y + z)))
    if abs(float(r) - 4.0) < 1e-12:
        return (1 / (2 * x * (x - y) ** 2 * y ** 2 * (x - z) ** 3 * (y - z) ** 2 * z)
                * ((x ** 2 + y ** 2) * (x - z) ** 3 * (y ** 2 + z ** 2) * mp.log(y)
                   + mp.log(x) * (y - z) ** 2 * (x ** 4 * y + x ** 4 * z - 6 * x ** 3 * y ** 2 - 2 * x ** 3 * y * z
                                                 - 2 * x ** 3 * z ** 2 + 3 * x ** 2 * y ** 3 + x ** 2 * y ** 2 * z
                                                 + x ** 2 * y * z ** 2 + x ** 2 * z ** 3 + 2 * x * y ** 3 * z
                                                 - 4 * x * y ** 2 * z ** 2 + 3 * y ** 3 * z ** 2 + y ** 2 * z ** 3)
                   - mp.log(z) * (x - y) ** 2 * (x ** 3 * y ** 2 + x ** 3 * z ** 2 + 3 * x ** 2 * y ** 3
                                                 - 4 * x ** 2 * y ** 2 * z + x ** 2 * y * z ** 2 - 2 * x ** 2 * z ** 3
                                                 + 2 * x * y ** 3 * z + x * y ** 2 * z ** 2 - 2 * x * y * z ** 3
                                                 + x * z ** 4 + 3 * y ** 3 * z ** 2 - 6 * y ** 2 * z ** 3 + y * z ** 4)
                   - 2 * (x - y) * (x - z) * (y - z) * (x ** 3 * z + x ** 2 * y ** 2 - 2 * x ** 2 * z ** 2
                                                        - 2 * x * y ** 3 + 2 * x * y ** 2 * z + x * z ** 3
                                                        - 2 * y ** 3 * z + y ** 2 * z ** 2)))
    r = mp.mpf(r)
    h = r / 2
    pre = 2 * x ** (-3 * r / 4) * y ** (-r) * z ** (-3 * r / 4) / (
        (r - 4) * (r - 2) * (x - y) ** 2 * (x - z) ** 3 * (y - z) ** 2)
    s = (x ** r * y ** r * z ** 2 * (x - y) * (x ** 2 + 2 * x * (y - 2 * z) - 4 * y ** 2 + 6 * y * z - z ** 2)
         + x ** r * y ** h * z ** h * (x - z) ** 2 * (y - z) * ((r - 3) * y * z - x * ((r - 3) * z + y))
         - x ** r * y ** 2 * z ** r * (x - z) ** 3
         + x ** h * y ** (3 * h) * z ** 2 * (x - y) * (x - z) ** 2
         - x ** h * y ** r * z ** h * (x - y) * (x - z) * (y - z)
         * ((r - 3) * x ** 2 - 2 * x * ((r - 2) * y + (1 - r) * z) + z * ((r - 3) * z - 2 * (r - 2) * y))
         + x ** h * y ** h * z ** r * (y - x) * (x - z) ** 2 * (y * z - (r - 3) * x * (y - z))
         + x ** 2 * y ** (3 * h) * z ** h * (x - z) ** 2 * (y - z)
         - x ** 2 * y ** r * z ** r * (y - z) * (x ** 2 - 6 * x * y + 4 * x * z + 4 * y ** 2 - 2 * y * z - z ** 2))
    return pre * s


@dataclass
class CurvatureFunctions:
    """K(t0, t1), H(t0, t1, t2) built from K^t, H^t and a function f."""

    Kt: Callable
    Ht: Callable
    f: fnc.ScalarFunction
    dim: float
    kind: str = "conformal"

    def kt(self, x, y) -> float:
        return _coincidence_safe(lambda a, b: self.Kt(self.dim, a, b), (x, y))

    def ht(self, x, y, z) -> float:
        return _coincidence_safe(lambda a, b, c: self.Ht(self.dim, a, b, c), (x, y, z))

    def K(self, t0, t1) -> float:
        f = self.f
        return self.kt(f.eval(t0), f.eval(t1)) * float(dd([t0, t1], f))

    def H(self, t0, t1, t2) -> float:
        f = self.f
        x, y, z = (float(f.eval(t)) for t in (t0, t1, t2))
        return (self.ht(x, y, z) * float(dd([t0, t1], f)) * float(dd([t1, t2], f))
                + 2 * self.kt(x, z) * float(dd([t0, t1, t2], f)))


def _check_f(f):
    return fnc.parse(f) if isinstance(f, str) else fnc.as_function(f)


def kh_conformal(d: float, f) -> CurvatureFunctions:
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return CurvatureFunctions(Kt_conformal, Ht_conformal, _check_f(f), float(d), "conformal")


def kh_twisted(r: float, f) -> tuple:
    """(conformal functions in dimension r, tilde functions).

    The g block of a twisted metric carries the conformal K_r, H_r; the g~
    block carries K~_r, H~_r.  For r = 1 the first entry is None.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    f = _check_f(f)
    tilde = CurvatureFunctions(Kt_twisted, Ht_twisted, f, float(r), "twisted")
    return (kh_conformal(r, f) if r >= 2 else None), tilde


def homogeneity_check(K: CurvatureFunctions, samples: int = 20, rng=None, span: float = 2.0) -> float:
    """max |K(s0, s0+s1) - e^{(1-d/2)s0} K(0, s1)| / scale for f = e^t."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(samples):
        s0, s1 = rng.uniform(-span, span, size=2)
        lhs = K.K(s0, s0 + s1)
        rhs = math.exp((1 - K.dim / 2) * s0) * K.K(0.0, s1)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst


# -- total curvature ----------------------------------------------------------------------------

@dataclass
class TotalCurvatureKernel:
    metric: FunctionalMetric
    method: str
    dim: int
    interp_gap: float = 0.02
    _tp: object = field(default=None, repr=False)

    def A(self, t0, t1) -> np.ndarray:
        m = self.metric
        q0, q1 = m.det(t0) ** 0.25, m.det(t1) ** 0.25
        return q0 / q1 * m.inverse(t0) + q1 / q0 * m.inverse(t1)

    def tfuncs(self, t0, t1):
        """T_{;1,1}, T_{kl;2,1}, T_{kl;1,2} at (t0, t1)."""
        m = self.metric
        if self.method == "dim2":
            r = tfunc_dim2(m.ginv, t0, t1)
            return r.T11, r.T21, r.T12
        if self.method == "dt4":
            p = m.params
            a = tfunc_dt4(p["f"], p["ft"], p["g"], p["gt"], t0, t1)
            b = tfunc_dt4(p["f"], p["ft"], p["g"], p["gt"], t1, t0)
            return a.T11, a.T21, b.T21
        tp = self._tp
        return (float(tp((1, 1), (t0, t1), 0)), tp((2, 1), (t0, t1), 2), tp((1, 2), (t0, t1), 2))

    def _direct(self, t0, t1) -> np.ndarray:
        m = self.metric
        A = self.A(t0, t1)
        g0, g1 = m.inverse(t0), m.inverse(t1)
        T11, T21, T12 = self.tfuncs(t0, t1)
        e = np.einsum
        out = A * (m.det(t0) * m.det(t1)) ** 0.25 - 2 * A * T11
        out = out + e("kl,ik,lj->ij", T12, A, 2 * g1) + e("kl,kj,il->ij", T12, A, 2 * g1) \
            - e("kl,ik,lj->ij", T12, A, A)
        out = out + e("kl,ik,lj->ij", T21, A, 2 * g0) + e("kl,kj,il->ij", T21, A, 2 * g0) \
            - e("kl,ik,lj->ij", T21, A, A)
        return out / (2 * (t0 - t1) ** 2)

    def F_S(self, t0, t1) -> np.ndarray:
        """Near the diagonal the removable singularity is bridged by
        interpolation along t1 - t0 from well separated nodes."""
        t0, t1 = float(t0), float(t1)
        gap = self.interp_gap * max(1.0, abs(t0), abs(t1))
        if abs(t1 - t0) >= gap:
            return self._direct(t0, t1)
        mid, u = (t0 + t1) / 2, (t1 - t0) / 2
        nodes = gap * np.array([-3.0, -2.5, -2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 2.5, 3.0]) / 2
        vals = np.stack([self._direct(mid - s, mid + s) for s in nodes])
        # second barycentric form; |u| < gap/2 keeps u off the nodes
        w = 1.0 / np.array([np.prod(x - np.delete(nodes, k)) for k, x in enumerate(nodes)])
        c = w / (u - nodes)
        return np.tensordot(c, vals, axes=1) / c.sum()

    __call__ = F_S


def total_curvature_kernel(m: FunctionalMetric, method: str = "auto",
                           quad: QuadratureSpec = DEFAULT_QUAD) -> TotalCurvatureKernel:
    if method == "auto":
        if m.dim == 2:
            method = "dim2"
        elif m.family == "doubly_twisted" and m.dim == 4 and m.params["g"].shape[0] == 2:
            method = "dt4"
        else:
            method = "provider"
    tp = m.t_provider("auto", quad) if method == "provider" else None
    if method == "quadrature":
        tp, method = m.t_provider("quadrature", quad), "provider"
    return TotalCurvatureKernel(m, method, m.dim, _tp=tp)


def total_curvature_from_b2(density: DensityB2, t0: float, t1: float) -> np.ndarray:
    """F_S from a b_2 density, symmetrized as (F^{ij}(t0,t1) + F^{ji}(t1,t0))/2.

    Moving one derivation off B21(h) by parts gives
    F = -[t0,t1; B21(t,t)] + B22(t0,t1,t0).
    """
    def F(a, b):
        dB = (density.B21(a, a) - density.B21(b, b)) / (a - b)
        return density.B22(a, b, a) - dB
    return 0.5 * (F(t0, t1) + F(t1, t0).T)


def branch_dim2(m: FunctionalMetric, t0: float, t1: float) -> str:
    return tfunc_dim2(m.ginv, t0, t1).branch


def gauss_bonnet_check(m: FunctionalMetric, samples: int = 500, rng=None) -> dict:
    """max |F_S^{ij}| over random (t0, t1) in the interval squared."""
    if m.dim != 2:
        raise ValueError("the Gauss-Bonnet check needs a two dimensional metric")
    rng = np.random.default_rng(0) if rng is None else rng
    K = total_curvature_kernel(m)
    lo, hi = m.interval
    worst = 0.0
    branches: dict = {}
    for _ in range(samples):
        t0, t1 = rng.uniform(lo, hi, size=2)
        worst = max(worst, float(np.abs(K.F_S(t0, t1)).max()))
        if t0 != t1:
            b = branch_dim2(m, t0, t1)
            branches[b] = branches.get(b, 0) + 1
    return {"max_abs": worst, "branches": branches, "samples": samples}


# -- commutative evaluation --------------------------------------------------------------------

def _diagonal_interpolant(fn, lo: float, hi: float, tol: float = 1e-12, max_nodes: int = 129):
    """Chebyshev fit of a matrix-valued fn(t) on [lo, hi], doubled until
    held-out midpoints agree to tol (relative)."""
    from numpy.polynomial import chebyshev as cheb
    if hi - lo < 1e-12:
        v = np.asarray(fn(lo))
        return lambda t: np.broadcast_to(v, np.shape(t) + v.shape)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    k = 17
    while True:
        x = np.cos(np.pi * (np.arange(k) + 0.5) / k)
        vals = np.array([fn(mid + half * xi) for xi in x])
        shape = vals.shape[1:]
        coef = cheb.chebfit(x, vals.reshape(k, -1), k - 1)
        probe = np.cos(np.pi * np.arange(1, k) / k)
        want = np.array([fn(mid + half * xi) for xi in probe]).reshape(k - 1, -1)
        got = cheb.chebval(probe, coef).T
        scale = max(1.0, float(np.abs(want).max()))
        if np.abs(got - want).max() <= tol * scale or k >= max_nodes:
            if np.abs(got - want).max() > tol * scale:
                raise RuntimeError("diagonal interpolation did not converge")
            break
        k = 2 * k - 1

    def ev(t):
        t = np.asarray(t, float)
        y = cheb.chebval((t - mid) / half, coef)
        return np.moveaxis(y, 0, -1).reshape(t.shape + shape)
    return ev


def commutative_curvature(density: DensityB2, m: FunctionalMetric, h, n: int = 64,
                          tol: float = 1e-12) -> np.ndarray:
    """R on the flat torus when theta = 0: every slot becomes h(x) and
    delta_j acts as -i d_j, so R = -B21^{ij} d_i d_j h - B22^{ij} d_i h d_j h.

    The coincident values B21(t,t), B22(t,t,t) are smooth in the single
    variable t, so they are fitted once over the range of h."""
    from .metrics import _field_derivatives
    hv, grad, hess = _field_derivatives(h, n, m.dim, 1e-10)
    lo, hi = float(hv.min()), float(hv.max())
    b21 = _diagonal_interpolant(lambda t: density.B21(t, t), lo, hi, tol)
    b22 = _diagonal_interpolant(lambda t: density.B22(t, t, t), lo, hi, tol)
    B1, B2 = b21(hv), b22(hv)
    return (-np.einsum("...ij,ij...->...", B1, hess)
            - np.einsum("i...,...ij,j...->...", grad, B2, grad))
