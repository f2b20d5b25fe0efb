"""T-functions: the xi- and lambda-integrated kernels of parametrix terms.

For base matrices P_j = P_2(t_j) the defining simplex integral is

    T_{n;alpha}(t) = 1/(2^{|alpha|-2} beta!) * int_{Sigma_n} prod_j s_j^{alpha_j - 1}
                     * Wick_n(P(s)^{-1}) / sqrt(det P(s)) ds,
    P(s) = sum_j s_j P_j,  beta = alpha - 1,

where Wick_n sums products of inverse entries over all pairings of n.  Slots
with alpha_j = 0 are dropped.  Closed forms are provided for conformal,
twisted, doubly twisted and two-dimensional metrics.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import functions as fnc
from .dd_calculus import dd
from .functions import MatrixFunction
from .quadrature import DEFAULT_QUAD, QuadratureSpec, integrate_simplex

_LETTERS = string.ascii_letters


class NotPositiveDefinite(ValueError):
    pass


# -- Wick pairings ------------------------------------------------------------

@lru_cache(maxsize=None)
def wick_pairings(k: int) -> tuple:
    """All perfect matchings of positions 0..2k-1, as tuples of pairs."""
    if k < 0:
        raise ValueError("k must be non-negative")

    def rec(items):
        if not items:
            yield ()
            return
        first, rest = items[0], items[1:]
        for i, other in enumerate(rest):
            for tail in rec(rest[:i] + rest[i + 1:]):
                yield ((first, other),) + tail

    return tuple(rec(tuple(range(2 * k))))


def wick_sum(A: np.ndarray, n: Sequence[int]) -> np.ndarray:
    """sum over pairings of prod A[..., n_a, n_b] (batch axes first)."""
    n = list(n)
    if len(n) % 2:
        return np.zeros(A.shape[:-2])
    total = np.zeros(A.shape[:-2])
    for pairing in wick_pairings(len(n) // 2):
        term = np.ones(A.shape[:-2])
        for a, b in pairing:
            term = term * A[..., n[a], n[b]]
        total = total + term
    return total


def wick_tensor(A: np.ndarray, rank: int) -> np.ndarray:
    """Full tensor W[..., n_1..n_rank] = Wick sum of A over the indices."""
    batch = A.shape[:-2]
    d = A.shape[-1]
    if rank == 0:
        return np.ones(batch)
    if rank % 2:
        return np.zeros(batch + (d,) * rank)
    idx = _LETTERS[26:26 + rank]
    total = 0.0
    for pairing in wick_pairings(rank // 2):
        ops = ",".join(f"...{idx[a]}{idx[b]}" for a, b in pairing)
        total = total + np.einsum(f"{ops}->...{idx}", *([A] * len(pairing)))
    return total


# -- queries and the quadrature evaluator --------------------------------------

@dataclass(frozen=True)
class TFunctionQuery:
    metric: MatrixFunction  # P_2 of the operator (the inverse metric for a Laplacian)
    n: tuple
    alpha: tuple
    t: tuple

    def __post_init__(self):
        if len(self.alpha) != len(self.t):
            raise ValueError("alpha and t must have equal length")
        if any(a < 0 for a in self.alpha):
            raise ValueError("multiplicities must be non-negative")
        if len(self.n) != 2 * sum(self.alpha) - 4:
            raise ValueError(f"|n| must equal 2|alpha|-4, got {len(self.n)} for alpha={self.alpha}")


def _prefactor(alpha) -> float:
    beta_fact = math.prod(math.factorial(a - 1) for a in alpha)
    return 1.0 / (2.0 ** (sum(alpha) - 2) * beta_fact)


def _drop_zero(alpha, mats):
    keep = [i for i, a in enumerate(alpha) if a > 0]
    return tuple(alpha[i] for i in keep), [mats[i] for i in keep]


def t_integral(mats: Sequence[np.ndarray], alpha: Sequence[int], rank: int | None = None,
               n: Sequence[int] | None = None, quad: QuadratureSpec = DEFAULT_QUAD):
    """Quadrature for T given the matrices P_2(t_j).

    Pass ``n`` for a single component or ``rank`` for the whole tensor.
    """
    alpha, mats = _drop_zero(tuple(alpha), [np.asarray(m, dtype=float) for m in mats])
    if not alpha:
        raise ValueError("at least one positive multiplicity is required")
    stack = np.stack(mats)
    k = len(alpha) - 1
    expo = np.array(alpha, dtype=float) - 1.0

    def integrand(s):
        P = np.einsum("pj,jab->pab", s, stack)
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            eig = np.linalg.eigvalsh(P)
            bad = int(np.argmin(eig.min(axis=1)))
            raise NotPositiveDefinite(f"P(s) not positive definite at s={s[bad].tolist()}") from None
        sqrt_det = np.prod(np.diagonal(L, axis1=-2, axis2=-1), axis=-1)
        Pinv = np.linalg.inv(P)
        weight = np.prod(s ** expo, axis=1) / sqrt_det
        if n is not None:
            return weight * wick_sum(Pinv, n)
        W = wick_tensor(Pinv, rank)
        return W * weight.reshape((-1,) + (1,) * (W.ndim - 1))

    return _prefactor(alpha) * integrate_simplex(integrand, k, quad)


def tfunc_quadrature(q: TFunctionQuery, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    mats = [q.metric.eval(t) for t in q.t]
    for t, m in zip(q.t, mats):
        if np.min(np.linalg.eigvalsh(m)) <= 0:
            raise NotPositiveDefinite(f"metric not positive definite at t={t}")
    return float(t_integral(mats, q.alpha, n=q.n, quad=quad))


# -- closed forms via divided differences -------------------------------------

@lru_cache(maxsize=None)
def antiderivative(p: float, N: int):
    """G with G^(N)(u) = u^(-p), as a whitelist function.

    Generic p gives a power.  When p is an integer in 1..N the power is a
    polynomial of degree < N and a logarithmic term takes over:
    G = (-1)^(p-1) / (m! (p-1)!) u^m log u with m = N - p.
    """
    if N < 1:
        raise ValueError("need |alpha| >= 2")
    u = fnc.identity()
    pr = round(p)
    if abs(p - pr) < 1e-12 and 1 <= pr <= N:
        m = N - pr
        c = (-1) ** (pr - 1) / (math.factorial(m) * math.factorial(pr - 1))
        body = fnc.log(u) if m == 0 else (u ** m) * fnc.log(u)
        return body * c, "log"
    denom = math.prod(j - p for j in range(1, N + 1))
    return (u ** (N - p)) * (1.0 / denom), "power"


def scalar_T(alpha: Sequence[int], p: float, x: Sequence[float]) -> float:
    """1/(2^{|alpha|-2} beta!) int prod s^(alpha-1) (sum s_j x_j)^(-p) ds.

    Since d^beta [x; G] = beta! [x with node j repeated alpha_j times; G] the
    factorials cancel and only one confluent divided difference is needed.
    """
    alpha = list(alpha)
    keep = [i for i, a in enumerate(alpha) if a > 0]
    alpha = [alpha[i] for i in keep]
    x = [float(x[i]) for i in keep]
    N = sum(alpha) - 1
    G, _ = antiderivative(float(p), N)
    nodes = [xi for xi, a in zip(x, alpha) for _ in range(a)]
    return dd(nodes, G) / 2.0 ** (N - 1)


def tfunc_conformal(alpha: Sequence[int], d: float, x: Sequence[float]) -> float:
    """Scalar part T_alpha for P_2 = f(t) g^{-1}; x_j = f(t_j).

    Equals (-1)^{|alpha|-1} Gamma(d/2-1)/Gamma(d/2+|alpha|-2) d^beta[x; u^{1-d/2}]
    times 1/(2^{|alpha|-2} beta!); d = 2 takes the log branch automatically.
    """
    if d <= 0:
        raise ValueError("dimension must be positive")
    return scalar_T(alpha, d / 2.0 + sum(alpha) - 2, x)


def tfunc_twisted(k: int, alpha: Sequence[int], r: float, x: Sequence[float]) -> float:
    """T^k_alpha for the twisted metric; x_j = f(t_j) (x = t in the f(t)=t case)."""
    return scalar_T(alpha, (r + k) / 2.0, x)


def twisted_branch(k: int, alpha: Sequence[int], r: float) -> str:
    return antiderivative((r + k) / 2.0, sum(alpha) - 1)[1]


def conformal_tensor(alpha, d: int, x, g: np.ndarray, rank: int) -> np.ndarray:
    """Full T tensor for P_2 = f g^{-1}: sqrt|g| * Wick(g) * T_alpha."""
    g = np.asarray(g, dtype=float)
    return math.sqrt(np.linalg.det(g)) * wick_tensor(g, rank) * tfunc_conformal(alpha, d, x)


def twisted_tensor(alpha, r: int, x, g: np.ndarray, gt: np.ndarray, rank: int) -> np.ndarray:
    """Full T tensor for P_2 = f g^{-1} (+) gt^{-1}; the k-dependence is per entry."""
    g = np.asarray(g, dtype=float)
    gt = np.atleast_2d(np.asarray(gt, dtype=float)) if np.size(gt) else np.zeros((0, 0))
    dim = g.shape[0] + gt.shape[0]
    G = np.zeros((dim, dim))
    G[:r, :r] = g
    G[r:, r:] = gt
    vol = math.sqrt(np.linalg.det(g) * (np.linalg.det(gt) if gt.size else 1.0))
    W = wick_tensor(G, rank)
    if rank == 0:
        return vol * W * tfunc_twisted(0, alpha, r, x)
    counts = np.zeros((dim,) * rank, dtype=int)
    for axis in range(rank):
        shape = [1] * rank
        shape[axis] = dim
        counts = counts + (np.arange(dim) < r).astype(int).reshape(shape)
    table = {k: tfunc_twisted(k, alpha, r, x) for k in range(0, rank + 1, 2)}
    Tk = np.vectorize(lambda k: table.get(int(k), 0.0))(counts)
    return vol * W * Tk


# -- doubly twisted four-torus ------------------------------------------------

def _log_ratio_over_diff(rho: float) -> float:
    """log(rho)/(rho-1), series near rho = 1."""
    e = rho - 1.0
    if abs(e) < 1e-3:
        return sum((-1) ** k * e ** k / (k + 1) for k in range(12))
    return math.log(rho) / e


def _m_func(rho: float) -> float:
    """(1 + rho log rho - rho)/(1 - rho)^2 with u = rho - 1 kept explicit.

    Written as ((1+u) log1p(u) - u)/u^2 the numerator loses only eps/|u|;
    below |u| = 0.1 the series sum_{k>=2} (-u)^(k-2)/(k(k-1)) is used.
    """
    e = rho - 1.0
    if abs(e) < 0.1:
        return sum((-1) ** k * e ** (k - 2) / (k * (k - 1)) for k in range(2, 32))
    return (rho * math.log1p(e) - e) / e ** 2


@dataclass(frozen=True)
class DoublyTwistedT:
    T11: float
    T21: np.ndarray  # 4x4 block diagonal, indices (k, l)
    near_degenerate: bool


def tfunc_dt4(f, ft, g, gt, t0: float, t1: float) -> DoublyTwistedT:
    """Closed forms for P_2 = f g^{-1} (+) ft gt^{-1} on the four-torus.

    T_{;1,1} = sqrt(|g||gt|) log(rho)/(f0 ft1 - f1 ft0), rho = f0 ft1/(f1 ft0), and
    T_{kl;2,1} = g_kl sqrt(|g||gt|)(f1 ft0 + f0 ft1 (log rho - 1))/(2 f0 (f1 ft0 - f0 ft1)^2)
    on the first block, with (f, g) and (ft, gt) swapped on the second.  Both
    are rewritten through log(rho)/(rho-1) and (1 + rho log rho - rho)/(1-rho)^2,
    which have removable singularities at rho = 1.
    """
    g = np.asarray(g, dtype=float)
    gt = np.asarray(gt, dtype=float)
    f0, f1 = float(f(t0)), float(f(t1))
    h0, h1 = float(ft(t0)), float(ft(t1))
    vol = math.sqrt(np.linalg.det(g) * np.linalg.det(gt))
    rho = f0 * h1 / (f1 * h0)
    T11 = vol * _log_ratio_over_diff(rho) / (f1 * h0)
    # first block: g_kl vol (1 + rho(log rho - 1)) / (2 f0 f1 h0 (1 - rho)^2)
    blk1 = g * vol * _m_func(rho) / (2.0 * f0 * f1 * h0)
    rho2 = 1.0 / rho
    blk2 = gt * vol * _m_func(rho2) / (2.0 * h0 * h1 * f0)
    T21 = np.zeros((4, 4))
    T21[:2, :2] = blk1
    T21[2:, 2:] = blk2
    return DoublyTwistedT(T11, T21, abs(rho - 1.0) < 1e-3)


def tfunc_dt4_paper(f, ft, g, gt, t0, t1):
    """Literal transcription of the displayed formulas (no limit handling)."""
    g = np.asarray(g, dtype=float)
    gt = np.asarray(gt, dtype=float)
    f0, f1 = float(f(t0)), float(f(t1))
    h0, h1 = float(ft(t0)), float(ft(t1))
    vol = math.sqrt(np.linalg.det(g) * np.linalg.det(gt))
    T11 = vol / (f0 * h1 - f1 * h0) * math.log(f0 * h1 / (f1 * h0))

    def block(G, a0, a1, b0, b1):
        L = math.log(a0 * b1 / (a1 * b0))
        return G * vol * (a1 * b0 + a0 * b1 * (L - 1.0)) / (2.0 * a0 * (a1 * b0 - a0 * b1) ** 2)

    T21 = np.zeros((4, 4))
    T21[:2, :2] = block(g, f0, f1, h0, h1)
    T21[2:, 2:] = block(gt, h0, h1, f0, f1)
    return T11, T21


# -- dimension two ------------------------------------------------------------

def _adj2(M):
    return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])


def _S(w: float) -> float:
    """atanh(sqrt w)/sqrt w continued to w <= 0 (atan branch)."""
    if abs(w) < 1e-3:
        return sum(w ** k / (2 * k + 1) for k in range(10))
    if w > 0:
        r = math.sqrt(w)
        return math.atanh(r) / r
    r = math.sqrt(-w)
    return math.atan(r) / r


def _dS(w: float) -> float:
    if abs(w) < 0.05:
        return sum(k * w ** (k - 1) / (2 * k + 1) for k in range(1, 30))
    return (1.0 / (1.0 - w) - _S(w)) / (2.0 * w)


@dataclass(frozen=True)
class Dim2T:
    T11: float
    T21: np.ndarray
    T12: np.ndarray
    a: float
    b: float
    c: float
    branch: str


def _dim2_pair(P0: np.ndarray, P1: np.ndarray, degenerate_tol: float):
    """T_{;1,1}(t0,t1) and T_{kl;2,1}(t0,t1) from P_2(t0)=P0, P_2(t1)=P1.

    With Q(s) = det(s P0 + (1-s) P1) = c + b s + a s^2, R0 = sqrt(c),
    R1 = sqrt(a+b+c), sigma = R0 + R1 and w = a/sigma^2,

        T_{;1,1} = I(a, b) = 2 S(w) / sigma,

    which is the log (a > 0), arcsin (a < 0) or rational (a = 0) form in a
    single expression without cancellation.  T_{kl;2,1} = (adj(P1) J1 +
    adj(P0-P1) J2)/2 with J1 = -2 dI/db and J2 = -2 dI/da.
    """
    D = P0 - P1
    c = float(np.linalg.det(P1))
    a = float(np.linalg.det(D))
    b = float(np.trace(_adj2(P1) @ D))
    if c <= 0 or np.linalg.det(P0) <= 0 or P0[0, 0] <= 0 or P1[0, 0] <= 0:
        raise NotPositiveDefinite("P_2 must be positive definite at both points")
    R0 = math.sqrt(c)
    R1 = math.sqrt(float(np.linalg.det(P0)))
    sigma = R0 + R1
    w = a / sigma ** 2
    if w >= 1.0:
        raise NotPositiveDefinite("P(s) degenerates on the segment")
    S, dS = _S(w), _dS(w)
    T11 = 2.0 * S / sigma
    dsig = 1.0 / (2.0 * R1)
    dI_da = 2.0 * dS * (1.0 / sigma ** 2 - a / (sigma ** 3 * R1)) / sigma - 2.0 * S / sigma ** 2 * dsig
    dI_db = 2.0 * dS * (-a / (sigma ** 3 * R1)) / sigma - 2.0 * S / sigma ** 2 * dsig
    J1, J2 = -2.0 * dI_db, -2.0 * dI_da
    T21 = 0.5 * (_adj2(P1) * J1 + _adj2(D) * J2)
    scale = max(abs(b), c, 1e-300)
    branch = "a=0" if abs(a) <= degenerate_tol * scale else ("a>0" if a > 0 else "a<0")
    return T11, T21, a, b, c, branch


def tfunc_dim2(metric: MatrixFunction, t0: float, t1: float, degenerate_tol: float = 1e-12) -> Dim2T:
    """Two-dimensional T_{;1,1}, T_{kl;2,1}, T_{kl;1,2}; ``metric`` is P_2."""
    if metric.dim != 2:
        raise ValueError("tfunc_dim2 needs a 2 x 2 P_2")
    P0, P1 = metric.eval(t0), metric.eval(t1)
    T11, T21, a, b, c, branch = _dim2_pair(P0, P1, degenerate_tol)
    _, T12, *_ = _dim2_pair(P1, P0, degenerate_tol)
    return Dim2T(T11, T21, T12, a, b, c, branch)


def t11_dim2_branches(a: float, b: float, c: float) -> float:
    """Textbook antiderivatives of (c + b s + a s^2)^{-1/2} on [0, 1], by sign of a."""
    if a > 0:
        return math.log((2 * a + b + 2 * math.sqrt(a * a + a * b + a * c)) / (b + 2 * math.sqrt(a * c))) / math.sqrt(a)
    if a < 0:
        disc = math.sqrt(b * b - 4 * a * c)
        return (math.asin(b / disc) - math.asin((2 * a + b) / disc)) / math.sqrt(-a)
    return 2.0 / (math.sqrt(c) + math.sqrt(b + c))


# -- providers used by the numeric evaluation of lowered symbols --------------

class TProvider:
    """Maps (alpha, t-values, rank) to the full T tensor, with a cache."""

    method = "abstract"

    def __init__(self):
        self._cache: dict = {}

    def __call__(self, alpha, ts, rank: int) -> np.ndarray:
        key = (tuple(int(a) for a in alpha), tuple(float(t) for t in ts), int(rank))
        out = self._cache.get(key)
        if out is None:
            out = np.asarray(self._compute(*key), dtype=float)
            self._cache[key] = out
        return out

    def _compute(self, alpha, ts, rank):  # pragma: no cover - abstract
        raise NotImplementedError


def coincident_tensor(P: np.ndarray, alpha, rank: int) -> np.ndarray:
    """T when every P_2(t_j) equals P: the simplex integral is a Beta integral."""
    n = sum(alpha)
    vol = 1.0 / (2.0 ** (n - 2) * math.factorial(n - 1))
    return wick_tensor(np.linalg.inv(P), rank) * vol / math.sqrt(np.linalg.det(P))


class QuadratureT(TProvider):
    method = "quadrature"

    def __init__(self, p2, quad: QuadratureSpec = DEFAULT_QUAD):
        super().__init__()
        self.p2 = p2
        self.quad = quad

    def _compute(self, alpha, ts, rank):
        mats = [np.asarray(self.p2.eval(t), dtype=float) for t in ts]
        if all(np.array_equal(mats[0], m) for m in mats[1:]):
            if np.min(np.linalg.eigvalsh(mats[0])) <= 0:
                raise NotPositiveDefinite(f"P_2 not positive definite at t={ts[0]}")
            return coincident_tensor(mats[0], alpha, rank)
        return t_integral(mats, alpha, rank=rank, quad=self.quad)


class ConformalT(TProvider):
    """P_2 = f(t) g^{-1} with constant g."""

    method = "closed-form"

    def __init__(self, f, g):
        super().__init__()
        self.f = f
        self.g = np.asarray(g, dtype=float)

    def _compute(self, alpha, ts, rank):
        x = [float(self.f.eval(t)) for t in ts]
        return conformal_tensor(alpha, self.g.shape[0], x, self.g, rank)


class TwistedT(TProvider):
    """P_2 = f(t) g^{-1} (+) gt^{-1} with constant g, gt."""

    method = "closed-form"

    def __init__(self, f, g, gt):
        super().__init__()
        self.f = f
        self.g = np.asarray(g, dtype=float)
        self.gt = np.asarray(gt, dtype=float)

    def _compute(self, alpha, ts, rank):
        x = [float(self.f.eval(t)) for t in ts]
        return twisted_tensor(alpha, self.g.shape[0], x, self.g, self.gt, rank)
