"""Truncated Taylor series arithmetic.

A jet of order m is stored as an array ``c`` of shape ``(m + 1, *batch)``
holding the Taylor coefficients ``c[k] = f^(k)(x0) / k!``.  All routines
broadcast over the trailing batch axes.
"""

from __future__ import annotations

import math

import numpy as np


def const(value, order: int) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    out = np.zeros((order + 1,) + value.shape)
    out[0] = value
    return out


def variable(x, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros((order + 1,) + x.shape)
    out[0] = x
    if order >= 1:
        out[1] = 1.0
    return out


def _expand(a: np.ndarray, ndim: int) -> np.ndarray:
    # append singleton axes so that batch shapes broadcast from the left
    return a.reshape(a.shape + (1,) * (ndim - a.ndim))


def align(a: np.ndarray, b: np.ndarray):
    n = max(a.ndim, b.ndim)
    return _expand(a, n), _expand(b, n)


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = align(a, b)
    m = a.shape[0] - 1
    out = np.zeros((m + 1,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))
    for k in range(m + 1):
        for i in range(k + 1):
            out[k] += a[i] * b[k - i]
    return out


def div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = align(a, b)
    m = a.shape[0] - 1
    shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.zeros((m + 1,) + shape)
    for k in range(m + 1):
        acc = np.broadcast_to(a[k], shape).copy()
        for i in range(1, k + 1):
            acc -= b[i] * out[k - i]
        out[k] = acc / b[0]
    return out


def exp(a: np.ndarray) -> np.ndarray:
    m = a.shape[0] - 1
    out = np.zeros_like(a, dtype=float)
    out[0] = np.exp(a[0])
    for k in range(1, m + 1):
        acc = np.zeros_like(out[0])
        for j in range(1, k + 1):
            acc += j * a[j] * out[k - j]
        out[k] = acc / k
    return out


def log(a: np.ndarray) -> np.ndarray:
    if np.any(a[0] <= 0):
        raise ValueError("log of a non-positive value")
    m = a.shape[0] - 1
    out = np.zeros_like(a, dtype=float)
    out[0] = np.log(a[0])
    for k in range(1, m + 1):
        acc = k * a[k]
        for j in range(1, k):
            acc = acc - j * out[j] * a[k - j]
        out[k] = acc / (k * a[0])
    return out


def power(a: np.ndarray, p: float) -> np.ndarray:
    """Series of a**p for real p (a[0] > 0 unless p is a non-negative integer)."""
    if float(p).is_integer() and p >= 0:
        out = const(np.ones(a.shape[1:]), a.shape[0] - 1)
        for _ in range(int(p)):
            out = mul(out, a)
        return out
    if np.any(a[0] <= 0):
        if float(p).is_integer():
            return div(const(np.ones(a.shape[1:]), a.shape[0] - 1), power(a, -p))
        raise ValueError("non-integer power of a non-positive value")
    m = a.shape[0] - 1
    out = np.zeros_like(a, dtype=float)
    out[0] = a[0] ** p
    for k in range(1, m + 1):
        acc = np.zeros_like(out[0])
        for j in range(1, k + 1):
            acc += ((p + 1) * j - k) * a[j] * out[k - j]
        out[k] = acc / (k * a[0])
    return out


def compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Coefficients of outer(inner(x)) where ``outer`` is the jet at inner[0]."""
    outer, inner = align(outer, inner)
    m = inner.shape[0] - 1
    shift = inner.copy()
    shift[0] = 0.0
    out = np.zeros((m + 1,) + np.broadcast_shapes(outer.shape[1:], inner.shape[1:]))
    out[0] = outer[m]
    for k in range(m - 1, -1, -1):
        out = mul(out, shift)
        out[0] = out[0] + outer[k]
    return out


def derivatives(c: np.ndarray) -> np.ndarray:
    """Convert Taylor coefficients to derivative values."""
    fac = np.array([math.factorial(k) for k in range(c.shape[0])], dtype=float)
    return c * fac.reshape((-1,) + (1,) * (c.ndim - 1))


# -- matrix valued series: trailing two axes are (d, d) ---------------------

def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = a.shape[0] - 1
    out = np.zeros((m + 1,) + np.broadcast_shapes(a.shape[1:-2], b.shape[1:-2]) + (a.shape[-2], b.shape[-1]))
    for k in range(m + 1):
        for i in range(k + 1):
            out[k] += a[i] @ b[k - i]
    return out


def mat_inv(a: np.ndarray) -> np.ndarray:
    m = a.shape[0] - 1
    out = np.zeros_like(a, dtype=float)
    n0 = np.linalg.inv(a[0])
    out[0] = n0
    for k in range(1, m + 1):
        acc = np.zeros_like(n0)
        for j in range(1, k + 1):
            acc += a[j] @ out[k - j]
        out[k] = -n0 @ acc
    return out


def mat_det(a: np.ndarray) -> np.ndarray:
    """Series of det(a) from D' = tr(a^{-1} a') D."""
    m = a.shape[0] - 1
    out = np.zeros((m + 1,) + a.shape[1:-2])
    out[0] = np.linalg.det(a[0])
    if m == 0:
        return out
    inv = mat_inv(a[:m])
    da = np.stack([(k + 1) * a[k + 1] for k in range(m)])
    q = np.trace(mat_mul(inv, da), axis1=-2, axis2=-1)
    for k in range(1, m + 1):
        acc = np.zeros_like(out[0])
        for j in range(k):
            acc += q[j] * out[k - 1 - j]
        out[k] = acc / k
    return out
