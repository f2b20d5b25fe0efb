"""Finitely supported elements of the smooth noncommutative torus.

Monomials are normal ordered as U_1^{n_1} ... U_d^{n_d}.  Moving U_j^{m_j}
to the left past U_k^{n_k} (k > j) costs exp(2 pi i theta_{jk} n_k m_j), so

    U^n U^m = exp(2 pi i sum_{j<k} theta_{jk} m_j n_k) U^{n+m}.

With this convention U_k U_j = exp(2 pi i theta_{jk}) U_j U_k.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np


def _clean_theta(theta, d):
    th = np.zeros((d, d)) if theta is None else np.asarray(theta, dtype=float)
    if th.shape != (d, d) or not np.allclose(th, -th.T):
        raise ValueError("theta must be an antisymmetric d x d matrix")
    return th


class NCTorusElement:
    __slots__ = ("d", "theta", "keys", "vals")

    def __init__(self, d: int, theta, keys, vals):
        self.d = d
        self.theta = _clean_theta(theta, d)
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, d)
        vals = np.asarray(vals, dtype=complex).ravel()
        if len(keys):
            # merge equal exponents through a flat integer code (much faster than unique rows)
            lo = keys.min(axis=0)
            span = keys.max(axis=0) - lo + 1
            codes = np.ravel_multi_index(tuple((keys - lo).T), tuple(int(s) for s in span))
            codes, inv = np.unique(codes, return_inverse=True)
            keys = np.stack(np.unravel_index(codes, tuple(int(s) for s in span)), axis=1).astype(np.int64) + lo
            inv = np.asarray(inv).ravel()
            vals = (np.bincount(inv, weights=vals.real, minlength=len(keys))
                    + 1j * np.bincount(inv, weights=vals.imag, minlength=len(keys)))
            keep = vals != 0
            keys, vals = keys[keep], vals[keep]
        self.keys = keys
        self.vals = vals

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_dict(cls, d, theta, coeffs: dict):
        items = list(coeffs.items())
        keys = [k for k, _ in items]
        vals = [v for _, v in items]
        return cls(d, theta, np.array(keys, dtype=np.int64).reshape(-1, d), vals)

    @classmethod
    def scalar(cls, d, theta, c=1.0):
        return cls(d, theta, np.zeros((1, d), dtype=np.int64), [c])

    @classmethod
    def monomial(cls, d, theta, n: Sequence[int], c=1.0):
        return cls(d, theta, np.array([n], dtype=np.int64), [c])

    @classmethod
    def generator(cls, d, theta, k: int):
        n = [0] * d
        n[k] = 1
        return cls.monomial(d, theta, n)

    @classmethod
    def random(cls, rng, d, theta, radius: int = 1, density: float = 1.0, scale: float = 1.0):
        grid = np.array(list(itertools.product(range(-radius, radius + 1), repeat=d)), dtype=np.int64)
        mask = rng.random(len(grid)) < density
        vals = scale * (rng.normal(size=len(grid)) + 1j * rng.normal(size=len(grid)))
        return cls(d, theta, grid[mask], vals[mask])

    @classmethod
    def random_selfadjoint(cls, rng, d, theta, radius=1, density=1.0, scale=1.0):
        a = cls.random(rng, d, theta, radius, density, scale)
        return (a + a.adjoint()) * 0.5

    # -- algebra -----------------------------------------------------------
    def _like(self, keys, vals):
        return NCTorusElement(self.d, self.theta, keys, vals)

    def _check(self, other):
        if self.d != other.d or not np.array_equal(self.theta, other.theta):
            raise ValueError("dimension or theta mismatch")

    def __add__(self, other):
        if not isinstance(other, NCTorusElement):
            other = NCTorusElement.scalar(self.d, self.theta, other)
        self._check(other)
        return self._like(np.vstack([self.keys, other.keys]), np.concatenate([self.vals, other.vals]))

    __radd__ = __add__

    def __neg__(self):
        return self._like(self.keys, -self.vals)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, NCTorusElement):
            return nc_multiply(self, other)
        return self._like(self.keys, self.vals * complex(other))

    def __rmul__(self, other):
        return self._like(self.keys, self.vals * complex(other))

    def adjoint(self) -> "NCTorusElement":
        # (U^n)^* = (U^n)^{-1} = conj(phase(n, -n)) U^{-n}
        ph = _phase(self.theta, self.keys, -self.keys, pairwise=False)
        return self._like(-self.keys, np.conj(self.vals) * np.conj(ph))

    def coefficient(self, n) -> complex:
        hit = np.all(self.keys == np.asarray(n), axis=1)
        return complex(self.vals[hit][0]) if hit.any() else 0j

    def coefficients(self) -> dict:
        return {tuple(int(v) for v in k): complex(c) for k, c in zip(self.keys, self.vals)}

    def norm1(self) -> float:
        return float(np.sum(np.abs(self.vals)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.vals))) if len(self.vals) else 0.0

    def pruned(self, threshold: float) -> "NCTorusElement":
        keep = np.abs(self.vals) > threshold
        return self._like(self.keys[keep], self.vals[keep])

    def support_size(self) -> int:
        return len(self.vals)

    def __repr__(self):
        return f"NCTorusElement(d={self.d}, support={len(self.vals)})"


def _phase(theta, n, m, pairwise=True):
    upper = np.triu(theta, 1)
    if pairwise:
        arg = np.einsum("qj,jk,pk->pq", m, upper, n)
    else:
        arg = np.einsum("pj,jk,pk->p", m, upper, n)
    return np.exp(2j * math.pi * arg)


def nc_multiply(a: NCTorusElement, b: NCTorusElement) -> NCTorusElement:
    a._check(b)
    if len(a.vals) == 0 or len(b.vals) == 0:
        return a._like(np.zeros((0, a.d), dtype=np.int64), [])
    ph = _phase(a.theta, a.keys, b.keys)
    vals = (a.vals[:, None] * b.vals[None, :]) * ph
    keys = a.keys[:, None, :] + b.keys[None, :, :]
    return a._like(keys.reshape(-1, a.d), vals.ravel())


def nc_derivation(a: NCTorusElement, j: int) -> NCTorusElement:
    if not 0 <= j < a.d:
        raise IndexError("derivation index out of range")
    return a._like(a.keys, a.vals * a.keys[:, j])


def nc_trace(a: NCTorusElement) -> complex:
    return a.coefficient([0] * a.d)


def nc_power(h: NCTorusElement, k: int) -> NCTorusElement:
    out = NCTorusElement.scalar(h.d, h.theta, 1.0)
    for _ in range(k):
        out = out * h
    return out


def nc_exp(h: NCTorusElement, terms: int = 20, squarings: int | None = None,
           cutoff: float = 1e-18) -> NCTorusElement:
    """exp(h) by scaling and squaring with a truncated Taylor series.

    Coefficients below ``cutoff`` times the l1 norm are dropped after each
    product; without this the support radius doubles with every squaring.
    """
    if squarings is None:
        squarings = max(0, int(math.ceil(math.log2(max(h.norm1(), 1e-300)))) + 2)
    x = h * (1.0 / 2 ** squarings)
    out = NCTorusElement.scalar(h.d, h.theta, 1.0)
    term = NCTorusElement.scalar(h.d, h.theta, 1.0)
    for k in range(1, terms + 1):
        term = (term * x * (1.0 / k)).pruned(cutoff * out.norm1())
        if term.support_size() == 0:
            break
        out = out + term
    for _ in range(squarings):
        out = out * out
        out = out.pruned(cutoff * out.norm1())
    return out


# -- polynomial contraction forms --------------------------------------------

class PolyContraction:
    """Polynomial F(t_0..t_n) stored as {exponent tuple: coefficient}."""

    def __init__(self, arity: int, coeffs: dict):
        self.arity = arity
        clean = {}
        for k, v in coeffs.items():
            k = tuple(int(e) for e in k)
            if len(k) != arity or min(k) < 0:
                raise ValueError("bad exponent vector")
            if v != 0:
                clean[k] = clean.get(k, 0) + v
        self.coeffs = {k: v for k, v in clean.items() if v != 0}

    @classmethod
    def random(cls, rng, arity, degree=3, terms=4):
        coeffs = {}
        for _ in range(terms):
            e = tuple(rng.integers(0, degree + 1, size=arity))
            coeffs[e] = coeffs.get(e, 0) + float(rng.integers(-3, 4) or 1)
        return cls(arity, coeffs)

    def __call__(self, *t):
        return sum(c * np.prod([x ** e for x, e in zip(t, k)]) for k, c in self.coeffs.items())

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return PolyContraction(self.arity, out)

    def __mul__(self, other):
        if not isinstance(other, PolyContraction):
            return PolyContraction(self.arity, {k: v * other for k, v in self.coeffs.items()})
        out = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0) + v1 * v2
        return PolyContraction(self.arity, out)

    __rmul__ = __mul__

    def degree(self) -> int:
        return max((max(k) for k in self.coeffs), default=0)

    def partial_dd(self, slot: int) -> "PolyContraction":
        """Exact f_slot(t_0..t_{n+1}) using [a,b; u^p] = sum_{i+j=p-1} a^i b^j."""
        if not 0 <= slot < self.arity:
            raise IndexError("slot out of range")
        out = {}
        for k, v in self.coeffs.items():
            p = k[slot]
            for i in range(p):
                e = k[:slot] + (i, p - 1 - i) + k[slot + 1:]
                out[e] = out.get(e, 0) + v
        return PolyContraction(self.arity + 1, out)

    def substitute(self, new_arity: int, mapping: Sequence[int]) -> "PolyContraction":
        """G(s) = F(s[mapping[0]], ..., s[mapping[n]])."""
        out = {}
        for k, v in self.coeffs.items():
            e = [0] * new_arity
            for old, power in enumerate(k):
                e[mapping[old]] += power
            e = tuple(e)
            out[e] = out.get(e, 0) + v
        return PolyContraction(new_arity, out)

    def embed(self, new_arity: int, slots: Sequence[int]) -> "PolyContraction":
        return self.substitute(new_arity, slots)


def poly_contraction(F: PolyContraction, h: NCTorusElement, word: Sequence[NCTorusElement],
                     check_selfadjoint: bool = True) -> NCTorusElement:
    """sum_beta c_beta h^{beta_0} b_1 h^{beta_1} ... b_n h^{beta_n}."""
    if len(word) + 1 != F.arity:
        raise ValueError(f"word of length {len(word)} needs arity {len(word) + 1}, got {F.arity}")
    if check_selfadjoint:
        diff = h - h.adjoint()
        if diff.max_abs() > 1e-12 * max(1.0, h.max_abs()):
            raise ValueError("h must be selfadjoint")
    powers = [NCTorusElement.scalar(h.d, h.theta, 1.0)]
    for _ in range(F.degree()):
        powers.append(powers[-1] * h)
    total = NCTorusElement(h.d, h.theta, np.zeros((0, h.d), dtype=np.int64), [])
    for k, c in F.coeffs.items():
        term = powers[k[0]]
        for b, e in zip(word, k[1:]):
            term = term * b * powers[e]
        total = total + term * c
    return total


def _cheb_coefficients(F: Callable, arity: int, degree: int, box) -> np.ndarray:
    lo, hi = box
    m = degree + 1
    j = np.arange(m)
    nodes = np.cos(np.pi * (j + 0.5) / m)
    tmat = np.cos(np.outer(np.arange(m), np.pi * (j + 0.5) / m)) * (2.0 / m)
    tmat[0] *= 0.5
    grids = np.meshgrid(*([lo + (hi - lo) * (nodes + 1) / 2] * arity), indexing="ij")
    vals = np.asarray(F(*grids), dtype=complex)
    for axis in range(arity):
        vals = np.moveaxis(np.tensordot(tmat, vals, axes=(1, axis)), 0, axis)
    return vals


def chebyshev_contraction(F: Callable, arity: int, degree: int, box, h: NCTorusElement,
                          word: Sequence[NCTorusElement], tol: float | None = None):
    """Approximate F(h_0..h_n)(b_1..b_n) by a tensor Chebyshev expansion.

    Returns (element, bound) where bound estimates the uniform truncation
    error from the coefficients of a higher-degree interpolant.
    """
    if len(word) + 1 != arity:
        raise ValueError("arity mismatch")
    lo, hi = float(box[0]), float(box[1])
    r = h.norm1()
    if lo > -r or hi < r:
        raise ValueError(f"box [{lo}, {hi}] must contain [-{r}, {r}]")
    coef = _cheb_coefficients(F, arity, degree, (lo, hi))
    hi_deg = degree + max(8, degree // 2)
    coef_hi = _cheb_coefficients(F, arity, hi_deg, (lo, hi))
    inside = tuple(slice(0, degree + 1) for _ in range(arity))
    tail = np.abs(coef_hi).sum() - np.abs(coef_hi[inside]).sum()
    bound = float(tail * np.prod([b.norm1() for b in word]))
    if tol is not None and bound > tol:
        raise ValueError(f"Chebyshev tail {bound:.3e} exceeds requested tolerance {tol:.3e}")
    x = (h * 2.0 - (lo + hi)) * (1.0 / (hi - lo))
    cheb = [NCTorusElement.scalar(h.d, h.theta, 1.0), x]
    for _ in range(2, degree + 1):
        cheb.append(x * cheb[-1] * 2.0 - cheb[-2])
    total = NCTorusElement(h.d, h.theta, np.zeros((0, h.d), dtype=np.int64), [])
    cut = 1e-17 * max(np.abs(coef).max(), 1e-300)
    for idx in itertools.product(range(degree + 1), repeat=arity):
        c = coef[idx]
        if abs(c) <= cut:
            continue
        term = cheb[idx[0]]
        for b, k in zip(word, idx[1:]):
            term = term * b * cheb[k]
        total = total + term * c
    return total, bound
