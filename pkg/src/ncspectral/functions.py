"""Real functions of one variable with derivative access.

Everything here is built from a small whitelist (the identity, constants,
real powers, exp, log and arithmetic) and evaluated through truncated Taylor
series, so every derivative is exact up to rounding.  Matrix valued functions
(metrics and their inverses, determinants and determinant powers) share the
same interface.
"""

from __future__ import annotations

import ast
import math
from functools import reduce
from typing import Sequence

import numpy as np

from . import jets


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


class ArrayFunction:
    """Base class: ``taylor(x, m)`` returns shape ``(m+1, *x.shape, *self.shape)``."""

    shape: tuple = ()
    label: str = "?"
    max_order: int | None = None

    def taylor(self, x, order: int) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def eval(self, x):
        out = self.taylor(x, 0)[0]
        if out.ndim == 0:
            return float(out)
        return out

    __call__ = eval

    def derivative(self, order: int = 1) -> "ArrayFunction":
        if order < 0:
            raise ValueError("derivative order must be non-negative")
        if order == 0:
            return self
        if self.max_order is not None and order > self.max_order:
            raise ValueError(f"{self.label}: only {self.max_order} derivatives available")
        if isinstance(self, _Derivative):
            return _make_derivative(self.base, self.order + order)
        return _make_derivative(self, order)

    def values(self, x, order: int) -> np.ndarray:
        """Derivatives f, f', ..., f^(order) at x stacked on axis 0."""
        return jets.derivatives(self.taylor(x, order))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.label}>"


def _make_derivative(base, order):
    if base.shape == ():
        return _ScalarDerivative(base, order)
    return _Derivative(base, order)


class _Derivative(ArrayFunction):
    def __init__(self, base: ArrayFunction, order: int):
        self.base = base
        self.order = order
        self.shape = base.shape
        self.label = f"d{order}[{base.label}]"
        self.max_order = None if base.max_order is None else base.max_order - order

    def taylor(self, x, order):
        c = self.base.taylor(x, order + self.order)
        n = self.order
        fac = np.array([math.factorial(n + k) / math.factorial(k) for k in range(order + 1)])
        fac = fac.reshape((-1,) + (1,) * (c.ndim - 1))
        return c[n:] * fac


class ScalarFunction(ArrayFunction):
    """Scalar whitelist function.  Supports ``+ - * / **`` and composition."""

    shape = ()

    def __add__(self, other):
        return _Sum(self, as_function(other))

    def __radd__(self, other):
        return _Sum(as_function(other), self)

    def __sub__(self, other):
        return _Sum(self, _Scale(as_function(other), -1.0))

    def __rsub__(self, other):
        return _Sum(as_function(other), _Scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return _Scale(self, float(other))
        return _Prod(self, as_function(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return _Scale(self, 1.0 / float(other))
        return _Quot(self, as_function(other))

    def __rtruediv__(self, other):
        return _Quot(as_function(other), self)

    def __neg__(self):
        return _Scale(self, -1.0)

    def __pow__(self, p):
        return _Power(self, float(p))

    def compose(self, inner: "ScalarFunction") -> "ScalarFunction":
        return _Compose(self, inner)


class _ScalarDerivative(_Derivative, ScalarFunction):
    pass


class _Identity(ScalarFunction):
    label = "t"

    def taylor(self, x, order):
        return jets.variable(x, order)


class _Const(ScalarFunction):
    def __init__(self, value: float):
        self.value = float(value)
        self.label = repr(self.value)

    def taylor(self, x, order):
        return jets.const(np.full(np.shape(x), self.value), order)


class _Sum(ScalarFunction):
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.label = f"({a.label} + {b.label})"

    def taylor(self, x, order):
        return self.a.taylor(x, order) + self.b.taylor(x, order)


class _Scale(ScalarFunction):
    def __init__(self, a, c):
        self.a, self.c = a, c
        self.label = f"{c!r}*{a.label}"

    def taylor(self, x, order):
        return self.c * self.a.taylor(x, order)


class _Prod(ScalarFunction):
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.label = f"{a.label}*{b.label}"

    def taylor(self, x, order):
        return jets.mul(self.a.taylor(x, order), self.b.taylor(x, order))


class _Quot(ScalarFunction):
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.label = f"{a.label}/{b.label}"

    def taylor(self, x, order):
        den = self.b.taylor(x, order)
        if np.any(den[0] == 0):
            raise DomainError(f"division by zero in {self.label}")
        return jets.div(self.a.taylor(x, order), den)


class _Power(ScalarFunction):
    def __init__(self, a, p):
        self.a, self.p = a, p
        self.label = f"{a.label}^{p:g}"

    def taylor(self, x, order):
        base = self.a.taylor(x, order)
        if not (self.p.is_integer()) and np.any(base[0] <= 0):
            raise DomainError(f"{self.label} needs a positive base")
        if self.p < 0 and np.any(base[0] == 0):
            raise DomainError(f"{self.label} is singular at 0")
        return jets.power(base, self.p)


class _Exp(ScalarFunction):
    def __init__(self, a):
        self.a = a
        self.label = f"exp({a.label})"

    def taylor(self, x, order):
        return jets.exp(self.a.taylor(x, order))


class _Log(ScalarFunction):
    def __init__(self, a):
        self.a = a
        self.label = f"log({a.label})"

    def taylor(self, x, order):
        inner = self.a.taylor(x, order)
        if np.any(inner[0] <= 0):
            raise DomainError(f"{self.label} needs a positive argument")
        return jets.log(inner)


class _Compose(ScalarFunction):
    def __init__(self, outer, inner):
        self.outer, self.inner = outer, inner
        self.label = f"{outer.label}∘{inner.label}"

    def taylor(self, x, order):
        s = self.inner.taylor(x, order)
        return jets.compose(self.outer.taylor(s[0], order), s)


class TabulatedDerivatives(ScalarFunction):
    """A function known only through finitely many derivative callables."""

    def __init__(self, callables: Sequence, label: str = "f"):
        self.callables = list(callables)
        self.max_order = len(self.callables) - 1
        self.label = label

    def taylor(self, x, order):
        if order > self.max_order:
            raise ValueError(f"{self.label}: only {self.max_order} derivatives available")
        x = np.asarray(x, dtype=float)
        vals = [np.asarray(fn(x), dtype=float) / math.factorial(k) for k, fn in enumerate(self.callables[: order + 1])]
        return np.stack([np.broadcast_to(v, x.shape) for v in vals])


class _Entry(ScalarFunction):
    def __init__(self, base: ArrayFunction, index: tuple):
        self.base, self.index = base, tuple(index)
        self.label = f"{base.label}{list(self.index)}"

    def taylor(self, x, order):
        c = self.base.taylor(x, order)
        return c[(Ellipsis,) + self.index]


def identity() -> ScalarFunction:
    return _Identity()


def const(value: float) -> ScalarFunction:
    return _Const(value)


def as_function(obj) -> ScalarFunction:
    if isinstance(obj, ScalarFunction):
        return obj
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return _Const(float(obj))
    raise TypeError(f"cannot use {obj!r} as a scalar function")


def exp(f) -> ScalarFunction:
    return _Exp(as_function(f))


def log(f) -> ScalarFunction:
    return _Log(as_function(f))


def power(f, p: float) -> ScalarFunction:
    return _Power(as_function(f), float(p))


def sqrt(f) -> ScalarFunction:
    return power(f, 0.5)


# -- parsing -----------------------------------------------------------------

_UNARY = {"exp": exp, "log": log, "sqrt": sqrt}


def parse(text: str) -> ScalarFunction:
    """Parse a whitelist expression in the variable ``t``, e.g. ``"exp(2*t)"``."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse function {text!r}") from exc
    out = _build(tree.body, text)
    out.label = text
    return out


def _build(node, text):
    if isinstance(node, ast.Name):
        if node.id == "t":
            return identity()
        raise ValueError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return const(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand, text)
        return -inner if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp):
        left = _build(node.left, text)
        if isinstance(node.op, ast.Pow):
            exponent = _constant_value(node.right, text)
            return power(left, exponent)
        right = _build(node.right, text)
        ops = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
               ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b}
        for kind, fn in ops.items():
            if isinstance(node.op, kind):
                return fn(left, right)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _UNARY:
        if len(node.args) != 1:
            raise ValueError(f"{node.func.id} takes one argument in {text!r}")
        return _UNARY[node.func.id](_build(node.args[0], text))
    raise ValueError(f"unsupported expression in {text!r}")


def _constant_value(node, text) -> float:
    try:
        value = ast.literal_eval(node)
    except ValueError:
        value = None
    if not isinstance(value, (int, float)):
        raise ValueError(f"exponent must be a number in {text!r}")
    return float(value)


# -- matrix valued functions -------------------------------------------------

class MatrixFunction(ArrayFunction):
    """d x d matrix of scalar functions of one variable."""

    def __init__(self, entries, label: str = "g"):
        rows = [[as_function(e) for e in row] for row in entries]
        d = len(rows)
        if any(len(r) != d for r in rows):
            raise ValueError("matrix function must be square")
        self.entries = rows
        self.dim = d
        self.shape = (d, d)
        self.label = label

    def taylor(self, x, order):
        cols = [np.stack([e.taylor(x, order) for e in row], axis=-1) for row in self.entries]
        return np.stack(cols, axis=-2)

    def entry(self, i: int, j: int) -> ScalarFunction:
        return self.entries[i][j]

    def inverse(self) -> "MatrixInverse":
        return MatrixInverse(self)

    def det(self) -> "DetPower":
        return DetPower(self, 1.0)

    def det_power(self, p: float) -> "DetPower":
        return DetPower(self, p)


class ScaledMatrix(MatrixFunction):
    """``s(t) * G`` for a scalar function s and constant matrix G."""

    def __init__(self, scale: ScalarFunction, matrix, label: str | None = None):
        matrix = np.asarray(matrix, dtype=float)
        self.scale = as_function(scale)
        self.matrix = matrix
        self.dim = matrix.shape[0]
        self.shape = matrix.shape
        self.entries = [[self.scale * float(matrix[i, j]) for j in range(self.dim)] for i in range(self.dim)]
        self.label = label or f"{self.scale.label}*G"

    def taylor(self, x, order):
        s = self.scale.taylor(x, order)
        return s[..., None, None] * self.matrix


class BlockDiagonal(MatrixFunction):
    def __init__(self, blocks: Sequence[MatrixFunction], label: str = "g"):
        self.blocks = list(blocks)
        self.dim = sum(b.dim for b in self.blocks)
        self.shape = (self.dim, self.dim)
        self.label = label
        zero = const(0.0)
        rows = []
        offset = 0
        for b in self.blocks:
            for i in range(b.dim):
                row = [zero] * self.dim
                for j in range(b.dim):
                    row[offset + j] = b.entry(i, j)
                rows.append(row)
            offset += b.dim
        self.entries = rows

    def taylor(self, x, order):
        parts = [b.taylor(x, order) for b in self.blocks]
        lead = parts[0].shape[:-2]
        out = np.zeros(lead + (self.dim, self.dim))
        offset = 0
        for b, p in zip(self.blocks, parts):
            out[..., offset:offset + b.dim, offset:offset + b.dim] = p
            offset += b.dim
        return out


class MatrixInverse(ArrayFunction):
    def __init__(self, base: MatrixFunction):
        self.base = base
        self.dim = base.dim
        self.shape = base.shape
        self.label = f"inv({base.label})"

    def taylor(self, x, order):
        return jets.mat_inv(self.base.taylor(x, order))

    def entry(self, i: int, j: int) -> ScalarFunction:
        return _Entry(self, (i, j))


class DetPower(ScalarFunction):
    """det(M(t))**p with derivatives from Jacobi's formula."""

    def __init__(self, base: MatrixFunction, p: float):
        self.base, self.p = base, float(p)
        self.label = f"det({base.label})^{p:g}"

    def taylor(self, x, order):
        det = jets.mat_det(self.base.taylor(x, order))
        if np.any(det[0] <= 0):
            raise DomainError(f"{self.label}: determinant is not positive")
        if self.p == 1.0:
            return det
        return jets.power(det, self.p)


class ArrayProduct(ArrayFunction):
    """Pointwise product of array functions with broadcasting."""

    def __init__(self, factors: Sequence[ArrayFunction]):
        self.factors = list(factors)
        self.shape = reduce(np.broadcast_shapes, [f.shape for f in self.factors], ())
        self.label = "*".join(f.label for f in self.factors)

    def taylor(self, x, order):
        xnd = np.ndim(x)
        out = None
        for f in self.factors:
            c = f.taylor(x, order)
            c = c.reshape(c.shape[: 1 + xnd] + (1,) * (len(self.shape) - len(f.shape)) + f.shape)
            out = c if out is None else _mul_shaped(out, c)
        return out


def _mul_shaped(a, b):
    m = a.shape[0] - 1
    out = np.zeros((m + 1,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))
    for k in range(m + 1):
        for i in range(k + 1):
            out[k] += a[i] * b[k - i]
    return out
