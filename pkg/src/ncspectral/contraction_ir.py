"""Term rewriting for symbols written in contraction form.

A term stands for

    c * xi_{n_1} ... xi_{n_k} * prod_s B_0(t_s)^{alpha_s} * prod_f F_f(t_{args_f})  (w_1 ... w_n)

where the w's form the noncommutative word (each entry a derivative
delta_{i_1}...delta_{i_m}(h)) and t_0..t_n are the slots between word
entries.  Tensor indices are plain integers; an index that occurs twice in a
term is summed.  Factors are scalar functions of the slots (matrix entries
selected by their indices), so they commute with each other; only the word
order is significant.

A factor is a base function (``P2``, ``P1``, ``P01``, ``P02`` for a
Laplace type operator) followed by a chain of partial divided differences,
recorded as the argument positions at which they were taken.
"""

from __future__ import annotations

import itertools
import math
import string
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

_fresh = itertools.count(1_000_000)


def fresh_index() -> int:
    return next(_fresh)


BASE_ARITY = {"P2": 1, "P1": 2, "P01": 2, "P02": 3}


@dataclass(frozen=True)
class FactorRef:
    name: str
    idx: tuple
    ops: tuple
    args: tuple
    base_arity: int = 1

    def __post_init__(self):
        if len(self.args) != self.base_arity + len(self.ops):
            raise ValueError(f"{self.name}: {len(self.args)} slots for arity {self.base_arity + len(self.ops)}")

    def signature(self):
        return (self.name, self.ops, self.args, self.base_arity, len(self.idx))


@dataclass(frozen=True)
class ContractionTerm:
    const: Fraction
    alpha: tuple
    xi: tuple
    factors: tuple
    word: tuple

    def __post_init__(self):
        if len(self.alpha) != len(self.word) + 1:
            raise ValueError("need one slot more than word entries")
        for f in self.factors:
            if any(not 0 <= s < len(self.alpha) for s in f.args):
                raise ValueError(f"factor {f.name} refers to a missing slot")

    @property
    def degree(self) -> int:
        """Homogeneity in (xi, lambda^{1/2})."""
        return len(self.xi) - 2 * sum(self.alpha)

    @property
    def n_slots(self) -> int:
        return len(self.alpha)

    def indices(self) -> list:
        out = list(self.xi)
        for f in self.factors:
            out.extend(f.idx)
        for e in self.word:
            out.extend(e)
        return out

    def bound(self) -> set:
        counts = defaultdict(int)
        for i in self.indices():
            counts[i] += 1
        return {i for i, c in counts.items() if c >= 2}

    def free(self) -> set:
        counts = defaultdict(int)
        for i in self.indices():
            counts[i] += 1
        return {i for i, c in counts.items() if c == 1}

    def rename(self, mapping: Mapping[int, int]) -> "ContractionTerm":
        m = lambda i: mapping.get(i, i)
        return ContractionTerm(
            self.const,
            self.alpha,
            tuple(sorted(m(i) for i in self.xi)),
            tuple(replace(f, idx=tuple(m(i) for i in f.idx)) for f in self.factors),
            tuple(tuple(sorted(m(i) for i in e)) for e in self.word),
        )

    def refresh(self) -> "ContractionTerm":
        """Rename every bound index to a fresh one."""
        return self.rename({i: fresh_index() for i in self.bound()})

    def scale(self, c) -> "ContractionTerm":
        return replace(self, const=self.const * Fraction(c))


@dataclass(frozen=True)
class SymbolExpr:
    terms: tuple = ()
    symmetric: frozenset = field(default=frozenset({"P2"}))

    def __add__(self, other: "SymbolExpr") -> "SymbolExpr":
        return SymbolExpr(self.terms + other.terms, self.symmetric | other.symmetric)

    def scale(self, c) -> "SymbolExpr":
        return SymbolExpr(tuple(t.scale(c) for t in self.terms), self.symmetric)

    def by_degree(self) -> dict:
        out = defaultdict(list)
        for t in self.terms:
            out[t.degree].append(t)
        return dict(out)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def term(const=1, alpha=(0,), xi=(), factors=(), word=()) -> ContractionTerm:
    return ContractionTerm(Fraction(const), tuple(alpha), tuple(sorted(xi)), tuple(factors),
                           tuple(tuple(sorted(e)) for e in word))


def factor(name: str, idx: Sequence[int], args: Sequence[int], ops: Sequence[int] = (),
           base_arity: int | None = None) -> FactorRef:
    arity = BASE_ARITY.get(name, len(args) - len(ops)) if base_arity is None else base_arity
    return FactorRef(name, tuple(idx), tuple(ops), tuple(args), arity)


def b0_symbol() -> SymbolExpr:
    return SymbolExpr((term(1, (1,)),))


def laplace_type_symbol(symmetric: Iterable[str] = ("P2", "P1", "P01", "P02"),
                        include: Iterable[str] = ("P2", "P1", "P01", "P02")) -> dict:
    """Homogeneous parts {2: p2, 1: p1, 0: p0} of a Laplace type operator.

    p2 = P2^{kl}(t0) xi_k xi_l, p1 = P1^{jl}(t0,t1)(delta_j h) xi_l and
    p0 = P01^{ij}(t0,t1)(delta_i delta_j h) + P02^{ij}(t0,t1,t2)(delta_i h . delta_j h).
    Leaving a name out of ``include`` sets that function to zero.
    """
    include = set(include)
    sym = frozenset(symmetric)
    k, l, i, j = (fresh_index() for _ in range(4))
    parts = {2: [], 1: [], 0: []}
    if "P2" in include:
        parts[2].append(term(1, (0,), (k, l), (factor("P2", (k, l), (0,)),)))
    if "P1" in include:
        parts[1].append(term(1, (0, 0), (l,), (factor("P1", (j, l), (0, 1)),), ((j,),)))
    if "P01" in include:
        parts[0].append(term(1, (0, 0), (), (factor("P01", (i, j), (0, 1)),), ((i, j),)))
    if "P02" in include:
        parts[0].append(term(1, (0, 0, 0), (), (factor("P02", (i, j), (0, 1, 2)),), ((i,), (j,))))
    return {deg: SymbolExpr(tuple(ts), sym) for deg, ts in parts.items() if ts}


# -- the three rewriting rules -------------------------------------------------

def _multiply_terms(a: ContractionTerm, b: ContractionTerm) -> ContractionTerm:
    a, b = a.refresh(), b.refresh()
    m = len(a.word)
    shifted = tuple(replace(f, args=tuple(s + m for s in f.args)) for f in b.factors)
    alpha = a.alpha[:-1] + (a.alpha[-1] + b.alpha[0],) + b.alpha[1:]
    return ContractionTerm(a.const * b.const, alpha, tuple(sorted(a.xi + b.xi)),
                           a.factors + shifted, a.word + b.word)


def symbol_multiply(a: SymbolExpr, b: SymbolExpr) -> SymbolExpr:
    """Product of contraction forms: words concatenate and the last slot of
    the left factor is identified with the first slot of the right one."""
    terms = tuple(_multiply_terms(x, y) for x in a.terms for y in b.terms)
    return SymbolExpr(terms, a.symmetric | b.symmetric)


def xi_derivative(t: ContractionTerm, direction: int) -> list:
    """d/d xi_direction of one term (product rule over xi's and B_0 powers)."""
    out = []
    for p, b in enumerate(t.xi):
        rest = t.xi[:p] + t.xi[p + 1:]
        others = [i for i in rest] + [i for f in t.factors for i in f.idx] + [i for e in t.word for i in e]
        if b not in others:
            raise ValueError(f"xi index {b} is free; the Kronecker delta cannot be absorbed")
        out.append(replace(t, xi=rest).rename({b: direction}))
    for s, a in enumerate(t.alpha):
        if a == 0:
            continue
        l = fresh_index()
        alpha = t.alpha[:s] + (a + 1,) + t.alpha[s + 1:]
        out.append(ContractionTerm(t.const * (-2 * a), alpha, tuple(sorted(t.xi + (l,))),
                                   t.factors + (factor("P2", (direction, l), (s,)),), t.word))
    return out


def delta_derivative(t: ContractionTerm, direction: int, constants: frozenset = frozenset()) -> list:
    """delta_direction of a B_0-free term.

    Word entries are differentiated in place, and for every slot s the
    factors depending on t_s are differenced (Leibniz rule for divided
    differences) while delta(h) is spliced into the word at position s.
    Factors whose base function is listed in ``constants`` have vanishing
    divided differences.
    """
    if any(t.alpha):
        raise ValueError("delta derivatives apply to B_0-free terms only")
    out = []
    for p, e in enumerate(t.word):
        word = t.word[:p] + (tuple(sorted(e + (direction,))),) + t.word[p + 1:]
        out.append(replace(t, word=word))
    n = len(t.word)
    for s in range(n + 1):
        occ = [(fi, q) for fi, f in enumerate(t.factors) for q, arg in enumerate(f.args) if arg == s]
        for k, (fk, qk) in enumerate(occ):
            if t.factors[fk].name in constants:
                continue
            before = set(occ[:k])
            new_factors = []
            for fi, f in enumerate(t.factors):
                args = []
                ops = f.ops
                for q, arg in enumerate(f.args):
                    if (fi, q) == (fk, qk):
                        args.extend((s, s + 1))
                    elif arg < s:
                        args.append(arg)
                    elif arg > s:
                        args.append(arg + 1)
                    else:
                        args.append(s if (fi, q) in before else s + 1)
                if fi == fk:
                    # iterated differences of a one-variable function are the full one
                    ops = (0,) * (len(f.ops) + 1) if f.base_arity == 1 else f.ops + (qk,)
                new_factors.append(replace(f, ops=ops, args=tuple(args)))
            word = t.word[:s] + ((direction,),) + t.word[s:]
            out.append(ContractionTerm(t.const, (0,) * (n + 2), t.xi, tuple(new_factors), word))
    return out


def xi_derivative_expr(e: SymbolExpr, direction: int) -> SymbolExpr:
    return SymbolExpr(tuple(x for t in e.terms for x in xi_derivative(t, direction)), e.symmetric)


def delta_derivative_expr(e: SymbolExpr, direction: int, constants: frozenset = frozenset()) -> SymbolExpr:
    return SymbolExpr(tuple(x for t in e.terms for x in delta_derivative(t, direction, constants)),
                      e.symmetric)


# -- canonical form --------------------------------------------------------------

def _canonical_key(t: ContractionTerm, symmetric: frozenset):
    order = sorted(range(len(t.factors)), key=lambda i: t.factors[i].signature())
    facs = [t.factors[i] for i in order]
    groups = [list(g) for _, g in itertools.groupby(range(len(facs)), key=lambda i: facs[i].signature())]
    sym_pos = [i for i, f in enumerate(facs) if f.name in symmetric and len(f.idx) == 2]
    pair_pos = [p for p, e in enumerate(t.word) if len(e) == 2 and e[0] != e[1]]
    best = None
    for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
        seq = [facs[i] for g in perm for i in g]
        for flips in itertools.product((False, True), repeat=len(sym_pos)):
            flip = {p for p, fl in zip(sym_pos, flips) if fl}
            idx_lists = [f.idx[::-1] if i in flip else f.idx for i, f in enumerate(seq)]
            for worders in itertools.product((False, True), repeat=len(pair_pos)):
                wflip = {p for p, fl in zip(pair_pos, worders) if fl}
                words = [e[::-1] if p in wflip else e for p, e in enumerate(t.word)]
                names: dict = {}

                def nm(i):
                    if i not in names:
                        names[i] = len(names)
                    return names[i]

                w = tuple(tuple(nm(i) for i in e) for e in words)
                fs = tuple((f.name, f.ops, f.args, f.base_arity, tuple(nm(i) for i in ids))
                           for f, ids in zip(seq, idx_lists))
                xi = tuple(sorted(nm(i) for i in t.xi))
                key = (t.alpha, tuple(tuple(sorted(e)) for e in w), fs, xi)
                if best is None or key < best:
                    best = key
    return best


def _from_key(key, const) -> ContractionTerm:
    alpha, word, fs, xi = key
    factors = tuple(FactorRef(name, idx, ops, args, ar) for name, ops, args, ar, idx in fs)
    return ContractionTerm(const, alpha, xi, factors, word)


def simplify(e: SymbolExpr) -> SymbolExpr:
    """Canonical index names and factor order, like terms merged, zeros dropped."""
    acc: dict = {}
    order = []
    for t in e.terms:
        key = _canonical_key(t, e.symmetric)
        if key not in acc:
            acc[key] = Fraction(0)
            order.append(key)
        acc[key] += t.const
    terms = tuple(_from_key(k, acc[k]) for k in sorted(order) if acc[k] != 0)
    return SymbolExpr(terms, e.symmetric)


# -- parametrix ------------------------------------------------------------------

def parametrix(p: Mapping[int, SymbolExpr], N: int, constants: Iterable[str] = ()) -> list:
    """Symbols b_0..b_N of (P - lambda)^{-1}.

    b_n = - sum_{j<n} sum_k (1/m!) d_xi^{a_1..a_m} b_j  delta^{a_1..a_m} p_k  b_0,
    m = n - j + k - 2, with the directions a summed (the 1/m! sum over index
    tuples equals the usual sum over multi-indices divided by alpha!).
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    if N > 4:
        raise ValueError("orders above 4 are not supported")
    constants = frozenset(constants)
    sym = frozenset().union(*(e.symmetric for e in p.values())) if p else frozenset({"P2"})
    b0 = SymbolExpr(b0_symbol().terms, sym)
    bs = [b0]
    for n in range(1, N + 1):
        acc = SymbolExpr((), sym)
        for j in range(n):
            for k, pk in sorted(p.items()):
                m = n - j + k - 2
                if m < 0:
                    continue
                dirs = [fresh_index() for _ in range(m)]
                x = bs[j]
                y = pk
                for a in dirs:
                    x = xi_derivative_expr(x, a)
                    y = delta_derivative_expr(y, a, constants)
                prod = symbol_multiply(symbol_multiply(x, y), b0)
                acc = acc + prod.scale(Fraction(-1, math.factorial(m)))
        bs.append(simplify(acc))
    return bs


# -- lowering to T-functions ---------------------------------------------------------

@dataclass(frozen=True)
class TFunctionRef:
    xi: tuple
    alpha: tuple
    slots: tuple

    def __post_init__(self):
        if len(self.xi) != 2 * sum(self.alpha) - 4:
            raise ValueError(f"T-function needs {2 * sum(self.alpha) - 4} xi indices, got {len(self.xi)}")


@dataclass(frozen=True)
class LoweredTerm:
    const: Fraction
    tref: TFunctionRef
    factors: tuple
    word: tuple
    n_slots: int

    @property
    def xi(self) -> tuple:
        return self.tref.xi


def lower_to_tfunctions(e: SymbolExpr) -> list:
    """Replace (xi monomial, B_0 powers) of each term by a T-function.

    Slots with zero multiplicity are dropped from the T-function.  With the
    T-function normalization the resulting density carries an overall
    (4 pi)^{-d/2}, which callers absorb.
    """
    out = []
    for t in e.terms:
        if len(t.xi) != 2 * sum(t.alpha) - 4:
            raise ValueError(f"term of degree {t.degree} cannot be integrated to a T-function")
        slots = tuple(s for s, a in enumerate(t.alpha) if a > 0)
        tref = TFunctionRef(t.xi, tuple(t.alpha[s] for s in slots), slots)
        out.append(LoweredTerm(t.const, tref, t.factors, t.word, t.n_slots))
    return out


# -- numeric evaluation ----------------------------------------------------------------

class FactorEvaluator:
    """Evaluates factors from MultiScalarFunction bindings (matrix valued)."""

    def __init__(self, bindings: Mapping, config=None):
        self.bindings = dict(bindings)
        self.config = config
        self._chains: dict = {}
        self._values: dict = {}

    def function(self, name: str, ops: tuple):
        key = (name, ops)
        fn = self._chains.get(key)
        if fn is None:
            fn = self.bindings[name] if not ops else self.function(name, ops[:-1]).partial_dd(ops[-1])
            self._chains[key] = fn
        return fn

    def __call__(self, f: FactorRef, t: Sequence[float]) -> np.ndarray:
        vals = tuple(float(t[s]) for s in f.args)
        key = (f.name, f.ops, vals)
        v = self._values.get(key)
        if v is None:
            fn = self.function(f.name, f.ops)
            v = fn.eval(vals) if self.config is None else fn.eval(vals, self.config)
            v = np.asarray(v, dtype=float)
            self._values[key] = v
        return v


_LET = string.ascii_letters


def evaluate_lowered(terms: Sequence[LoweredTerm], t: Sequence[float], factors: FactorEvaluator,
                     tprovider, dim: int) -> np.ndarray:
    """Sum of const * T * factors with the word indices left open.

    All terms must share the word shape; the output axes follow the word
    entries in order (for b_2: B21[a, b] or B22[a, b]).
    """
    if not terms:
        raise ValueError("nothing to evaluate")
    shape = tuple(len(e) for e in terms[0].word)
    rank_out = sum(shape)
    total = np.zeros((dim,) * rank_out)
    for lt in terms:
        if tuple(len(e) for e in lt.word) != shape:
            raise ValueError("terms with different word shapes")
        letters: dict = {}

        def L(i):
            if i not in letters:
                letters[i] = _LET[len(letters)]
            return letters[i]

        out_idx = "".join(L(i) for e in lt.word for i in e)
        ts = tuple(float(t[s]) for s in lt.tref.slots)
        T = tprovider(lt.tref.alpha, ts, len(lt.tref.xi))
        ops = [T]
        subs = ["".join(L(i) for i in lt.tref.xi)]
        for f in lt.factors:
            ops.append(factors(f, t))
            subs.append("".join(L(i) for i in f.idx))
        val = np.einsum(",".join(subs) + "->" + out_idx, *ops)
        total = total + float(lt.const) * val
    return total


# -- pretty printing ---------------------------------------------------------------------

_NAMES = "ijklmnpqrsuvwxyzabcdefgho"


def _index_names(t) -> dict:
    names: dict = {}
    seq = [i for e in t.word for i in e] + [i for f in t.factors for i in f.idx] + list(t.xi)
    for i in seq:
        if i not in names:
            names[i] = _NAMES[len(names) % len(_NAMES)] + ("" if len(names) < len(_NAMES) else str(len(names) // len(_NAMES)))
    return names


def format_factor(f: FactorRef, names: Mapping[int, str]) -> str:
    sup = "".join(names[i] for i in f.idx)
    head = f"{f.name}^{{{sup}}}" if sup else f.name
    ts = [f"t{s}" for s in f.args]
    if not f.ops:
        return f"{head}({','.join(ts)})"
    if f.base_arity == 1 and all(q == 0 for q in f.ops):
        return f"[{','.join(ts)};{head}]"
    if len(f.ops) == 1:
        q = f.ops[0]
        inner = ts[:q] + ["."] + ts[q + 2:]
        return f"[{ts[q]},{ts[q + 1]};{head}({','.join(inner)})]"
    return f"{head}|dd{list(f.ops)}({','.join(ts)})"


def format_word(word, names) -> str:
    parts = []
    for e in word:
        parts.append("".join(f"d_{names[i]}" for i in e) + "(h)")
    return "(" + " . ".join(parts) + ")" if parts else "()"


def _const_str(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_term(t: ContractionTerm) -> str:
    names = _index_names(t)
    bits = [_const_str(t.const)]
    if t.xi:
        bits.append("".join(f"xi_{names[i]}" for i in t.xi))
    for s, a in enumerate(t.alpha):
        if a:
            bits.append(f"B0^{a}(t{s})" if a > 1 else f"B0(t{s})")
    bits.extend(format_factor(f, names) for f in t.factors)
    return " ".join(bits) + " " + format_word(t.word, names)


def format_lowered(t: LoweredTerm) -> str:
    names = _index_names(t)
    xi = "".join(names[i] for i in t.tref.xi)
    al = ",".join(str(a) for a in t.tref.alpha)
    ts = ",".join(f"t{s}" for s in t.tref.slots)
    bits = [_const_str(t.const), f"T_{{{xi};{al}}}({ts})"]
    bits.extend(format_factor(f, names) for f in t.factors)
    return " ".join(bits) + " " + format_word(t.word, names)


def format_expr(e) -> str:
    items = e.terms if isinstance(e, SymbolExpr) else e
    fmt = format_lowered if items and isinstance(items[0], LoweredTerm) else format_term
    return "\n".join(fmt(t) for t in items)
