"""Newton divided differences, confluent nodes, and partial divided differences.

``dd`` is the workhorse.  Nodes are sorted; a tableau entry spanning a short
interval is computed from a Taylor expansion at its left node,

    [x_i..x_j; f] = sum_r f^(j-i+r)(x_i)/(j-i+r)! * h_r(x_i - x_i, ..., x_j - x_i),

with h_r the complete homogeneous symmetric polynomial.  Repeated nodes are the
special case where every h_r with r > 0 vanishes, so confluent and
near-confluent nodes share one code path.  Longer spans use the usual
recursion, which then only ever divides by gaps larger than the cluster
tolerance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .functions import ArrayFunction, ScalarFunction
from .quadrature import DEFAULT_QUAD, QuadratureSpec, integrate_simplex

CLUSTER_TOL = 0.05
_TAIL_EPS = 1e-18
_MAX_EXTRA = 80


@dataclass(frozen=True)
class DDConfig:
    """``cluster_tol`` is relative to max(1, max|x|)."""

    cluster_tol: float = CLUSTER_TOL


DEFAULT_DD = DDConfig()


def _check_nodes(nodes) -> np.ndarray:
    x = np.asarray(nodes, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one node")
    if not np.all(np.isfinite(x)):
        raise ValueError("nodes must be finite")
    return x


def _complete_homogeneous(y: np.ndarray, rmax: int) -> np.ndarray:
    h = np.zeros(rmax + 1)
    h[0] = 1.0
    for v in y:
        for r in range(1, rmax + 1):
            h[r] += v * h[r - 1]
    return h


def _taylor_entry(f: ArrayFunction, y: np.ndarray, coeffs_for):
    """Divided difference over x0 + y (y[0] = 0) from Taylor data at x0."""
    n = len(y) - 1
    spread = float(np.max(np.abs(y)))
    if spread == 0.0:
        return coeffs_for(n)[n]
    limit = _MAX_EXTRA if f.max_order is None else max(0, f.max_order - n)
    extra = min(12, limit)
    while True:
        c = coeffs_for(n + extra)
        h = _complete_homogeneous(y, extra)
        terms = [c[n + r] * h[r] for r in range(extra + 1)]
        total = sum(terms[1:], terms[0])
        tail = max(float(np.max(np.abs(t))) for t in terms[-3:])
        ref = float(np.max(np.abs(total))) if np.size(total) else 0.0
        if tail <= _TAIL_EPS * max(ref, 1e-300) or extra >= limit:
            return total if tail <= 1e-14 * max(ref, 1e-300) else None
        extra = min(limit, extra * 2)


def dd(nodes: Sequence[float], f: ArrayFunction, config: DDConfig = DEFAULT_DD):
    """[x_0, ..., x_n; f] with any pattern of repeated nodes."""
    x = np.sort(_check_nodes(nodes))
    n = len(x) - 1
    if n == 0:
        return f.eval(x[0])
    mult = max(len(list(g)) for _, g in itertools.groupby(x))
    if f.max_order is not None and mult - 1 > f.max_order:
        raise ValueError(f"{f.label}: {mult - 1} derivatives needed, {f.max_order} available")
    scale = max(1.0, float(np.max(np.abs(x))))
    tol = config.cluster_tol * scale

    cache: dict[int, np.ndarray] = {}

    def coeffs_at(i):
        def get(order):
            c = cache.get(i)
            if c is None or c.shape[0] <= order:
                c = f.taylor(x[i], order)
                cache[i] = c
            return c
        return get

    vals = [f.eval(xi) for xi in x]
    table = list(vals)
    for level in range(1, n + 1):
        nxt = []
        for i in range(n + 1 - level):
            j = i + level
            span = x[j] - x[i]
            entry = None
            if span <= tol:
                entry = _taylor_entry(f, x[i:j + 1] - x[i], coeffs_at(i))
            if entry is None:
                if span == 0.0:
                    raise ValueError(f"{f.label}: confluent nodes need derivatives")
                entry = (table[i + 1] - table[i]) / span
            nxt.append(entry)
        table = nxt
    out = table[0]
    return float(out) if np.ndim(out) == 0 else out


def dd_recursive(nodes: Sequence[float], f: ScalarFunction) -> float:
    """Plain Newton recursion; repeated nodes use f^(k)/k! on the diagonal."""
    x = np.sort(_check_nodes(nodes))
    n = len(x) - 1
    table = [f.eval(v) for v in x]
    for level in range(1, n + 1):
        nxt = []
        for i in range(n + 1 - level):
            j = i + level
            if x[j] == x[i]:
                nxt.append(f.derivative(level).eval(x[i]) / math.factorial(level))
            else:
                nxt.append((table[i + 1] - table[i]) / (x[j] - x[i]))
        table = nxt
    return table[0]


def dd_explicit(nodes: Sequence[float], f: ScalarFunction) -> float:
    """sum_j f(x_j) / prod_{l != j} (x_j - x_l); distinct nodes only."""
    x = _check_nodes(nodes)
    if len(set(x.tolist())) != len(x):
        raise ValueError("explicit sum formula needs distinct nodes")
    total = 0.0
    for j, xj in enumerate(x):
        den = np.prod([xj - xl for l, xl in enumerate(x) if l != j])
        total += f.eval(xj) / den
    return float(total)


def dd_hermite_genocchi(nodes: Sequence[float], f: ScalarFunction,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integrate f^(n)(sum s_j x_j) over the standard n-simplex."""
    x = _check_nodes(nodes)
    n = len(x) - 1
    fn = f.derivative(n)
    return float(integrate_simplex(lambda s: fn.eval(s @ x), n, quad))


def dd_node_derivative(nodes: Sequence[float], f: ArrayFunction, orders: Sequence[int],
                       config: DDConfig = DEFAULT_DD):
    """d^beta/dx^beta [x_0..x_n; f]: node j repeated beta_j more times, times beta!."""
    x = list(_check_nodes(nodes))
    if len(orders) != len(x):
        raise ValueError("orders must match nodes")
    extra = []
    weight = 1
    for xj, b in zip(x, orders):
        if b < 0:
            raise ValueError("derivative orders must be non-negative")
        extra.extend([xj] * b)
        weight *= math.factorial(b)
    return weight * dd(x + extra, f, config)


# -- multivariate functions built from divided differences -------------------

@dataclass(frozen=True)
class Atom:
    """[t_{slots[0]}, ..., t_{slots[-1]}; fn]; slots may repeat."""

    fn: ArrayFunction
    slots: tuple

    def evaluate(self, t, config: DDConfig = DEFAULT_DD):
        return dd([t[s] for s in self.slots], self.fn, config)


@dataclass(frozen=True)
class MultiScalarFunction:
    """Sum of coefficient * product of atoms, a function of (t_0..t_{arity-1}).

    This class is closed under partial divided differences and partial
    derivatives, which is all the symbol calculus needs.
    """

    arity: int
    terms: tuple = field(default=())  # tuple of (coef, tuple[Atom])
    label: str = "F"

    @staticmethod
    def from_atoms(arity: int, atoms: Sequence[Atom], coef: float = 1.0, label: str = "F"):
        return MultiScalarFunction(arity, ((float(coef), tuple(atoms)),), label)

    @staticmethod
    def of(fn: ArrayFunction, arity: int = 1, slot: int = 0, label: str | None = None):
        return MultiScalarFunction.from_atoms(arity, [Atom(fn, (slot,))], 1.0, label or fn.label)

    def __add__(self, other: "MultiScalarFunction") -> "MultiScalarFunction":
        if self.arity != other.arity:
            raise ValueError("arity mismatch")
        return MultiScalarFunction(self.arity, self.terms + other.terms, self.label)

    def scale(self, c: float) -> "MultiScalarFunction":
        return MultiScalarFunction(self.arity, tuple((c * k, a) for k, a in self.terms), self.label)

    def __mul__(self, other: "MultiScalarFunction") -> "MultiScalarFunction":
        if self.arity != other.arity:
            raise ValueError("arity mismatch")
        terms = tuple((c1 * c2, a1 + a2) for c1, a1 in self.terms for c2, a2 in other.terms)
        return MultiScalarFunction(self.arity, terms, self.label)

    def eval(self, t, config: DDConfig = DEFAULT_DD):
        t = [float(v) for v in t]
        if len(t) != self.arity:
            raise ValueError(f"{self.label} takes {self.arity} arguments, got {len(t)}")
        total = 0.0
        for coef, atoms in self.terms:
            prod = coef
            for atom in atoms:
                prod = prod * atom.evaluate(t, config)
            total = total + prod
        return total

    __call__ = eval

    def partial(self, slot: int, order: int = 1) -> "MultiScalarFunction":
        """Partial derivative in one slot (node repetition on each atom)."""
        self._check_slot(slot, self.arity)
        out = self
        for _ in range(order):
            terms = []
            for coef, atoms in out.terms:
                for k, atom in enumerate(atoms):
                    mult = atom.slots.count(slot)
                    if mult == 0:
                        continue
                    # d/dx of [.., x (m times), ..] = m * [.., x (m+1 times), ..]
                    new = Atom(atom.fn, tuple(sorted(atom.slots + (slot,))))
                    terms.append((coef * mult, atoms[:k] + (new,) + atoms[k + 1:]))
            out = MultiScalarFunction(self.arity, tuple(terms), self.label)
        return out

    def partial_dd(self, slot: int) -> "MultiScalarFunction":
        """f_j(t_0..t_{n+1}) = [t_j, t_{j+1}; u -> f(.., t_{j-1}, u, t_{j+2}, ..)]."""
        self._check_slot(slot, self.arity)

        def shift(s):
            return s + 1 if s > slot else s

        terms = []
        for coef, atoms in self.terms:
            dep = [k for k, a in enumerate(atoms) if slot in a.slots]
            for pos, k in enumerate(dep):
                before = set(dep[:pos])
                for variant in _split_atom(atoms[k], slot, shift):
                    new_atoms = []
                    for m, a in enumerate(atoms):
                        if m == k:
                            new_atoms.append(variant)
                        elif m in dep:
                            # factors before the differenced one sit at t_j, after it at t_{j+1}
                            target = slot if m in before else slot + 1
                            new_atoms.append(Atom(a.fn, tuple(target if s == slot else shift(s) for s in a.slots)))
                        else:
                            new_atoms.append(Atom(a.fn, tuple(shift(s) for s in a.slots)))
                    terms.append((coef, tuple(new_atoms)))
        return MultiScalarFunction(self.arity + 1, tuple(terms), f"{self.label}_{slot}")

    @staticmethod
    def _check_slot(slot, arity):
        if not 0 <= slot < arity:
            raise IndexError(f"slot {slot} out of range for arity {arity}")


def _split_atom(atom: Atom, slot: int, shift):
    """[a,b; u -> [Y, u (m times); f]] = sum_i [Y, a (i times), b (m+1-i times); f]."""
    others = tuple(shift(s) for s in atom.slots if s != slot)
    m = atom.slots.count(slot)
    out = []
    for i in range(1, m + 1):
        out.append(Atom(atom.fn, tuple(sorted(others + (slot,) * i + (slot + 1,) * (m + 1 - i)))))
    return out


def partial_dd(f: MultiScalarFunction, slot: int, t: Sequence[float], config: DDConfig = DEFAULT_DD):
    if len(t) != f.arity + 1:
        raise ValueError(f"need {f.arity + 1} arguments for a partial divided difference")
    return f.partial_dd(slot).eval(t, config)
