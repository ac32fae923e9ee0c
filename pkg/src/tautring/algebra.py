"""Bigraded polynomial algebra on the formal generators x[i,j] and y.

Variables x[i,j] carry bidegree (i, j) and exist for 0 <= i <= j + 2,
0 <= j <= 2g - 2, i + j even, (i, j) != (0, 0); the extra variable y has
bidegree (0, 2).  x[0,0] is not a variable: it is the rational constant g
and is substituted away at construction time.  Monomials are sparse
exponent maps, polynomials are sparse term maps with exact rational
(or integer) coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import re

# A variable is ("x", i, j) or ("y",).  A monomial is a tuple of
# (variable_index, exponent) pairs sorted by variable index; the empty
# tuple is the unit.  A polynomial is a dict mapping monomials to exact
# coefficients (int or Fraction), with no zero values stored.
Variable = tuple
Monomial = tuple
Polynomial = dict

Y_VAR: Variable = ("y",)


class InputError(ValueError):
    """Raised for invalid user-supplied parameters."""


def legal_variables(g: int) -> list:
    """All variables of the genus-g algebra in canonical order.

    Canonical order: x[i,j] sorted by (j, i) ascending, then y last.
    """
    if g < 1:
        raise InputError(f"genus must be >= 1, got {g}")
    out = []
    for j in range(0, 2 * g - 1):
        for i in range(0, j + 3):
            if (i + j) % 2 == 0 and (i, j) != (0, 0):
                out.append(("x", i, j))
    out.append(Y_VAR)
    return out


def variable_bidegree(v: Variable) -> tuple:
    if v == Y_VAR:
        return (0, 2)
    return (v[1], v[2])


@dataclass
class AlgebraContext:
    """Immutable registry of the genus-g variables and their ordering."""

    genus: int
    variables: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    bidegrees: list = field(default_factory=list)

    def __post_init__(self):
        if not self.variables:
            self.variables = legal_variables(self.genus)
            self.index = {v: k for k, v in enumerate(self.variables)}
            self.bidegrees = [variable_bidegree(v) for v in self.variables]
        # scratch caches; keyed data is immutable once computed
        self._enum_cache = {}
        self._f_mono_cache = {}
        self._f_pos_cache = {}
        self._collapse_cache = {}

    # -- variable helpers -------------------------------------------------

    def has_variable(self, v: Variable) -> bool:
        return v in self.index

    def var(self, v: Variable) -> int:
        return self.index[v]

    def x(self, i: int, j: int) -> Monomial:
        v = ("x", i, j)
        if v not in self.index:
            raise InputError(f"x[{i},{j}] is not a variable at genus {self.genus}")
        return ((self.index[v], 1),)

    def y(self) -> Monomial:
        return ((self.index[Y_VAR], 1),)

    # -- monomial helpers --------------------------------------------------

    def mono_bidegree(self, m: Monomial) -> tuple:
        a = b = 0
        for vi, e in m:
            da, db = self.bidegrees[vi]
            a += da * e
            b += db * e
        return (a, b)

    def mono_codim(self, m: Monomial) -> int:
        a, b = self.mono_bidegree(m)
        return (a + b) // 2

    def mono_mul(self, m1: Monomial, m2: Monomial) -> Monomial:
        if not m1:
            return m2
        if not m2:
            return m1
        d = dict(m1)
        for vi, e in m2:
            d[vi] = d.get(vi, 0) + e
        return tuple(sorted(d.items()))

    def mono_sort_key(self, m: Monomial):
        """Graded (by codimension), then lexicographic on the dense
        exponent vector in canonical variable order.  Compatible with
        multiplication by a fixed monomial."""
        dense = [0] * len(self.variables)
        for vi, e in m:
            dense[vi] = e
        return (self.mono_codim(m), tuple(dense))

    def sort_monomials(self, monos) -> list:
        return sorted(monos, key=self.mono_sort_key)

    # -- enumeration -------------------------------------------------------

    def enumerate_monomials(self, bidegree: tuple, exclude=()) -> list:
        """All monomials of exactly the given bidegree, canonical order."""
        i, j = bidegree
        if i < 0 or j < 0:
            return []
        key = (i, j, frozenset(exclude))
        hit = self._enum_cache.get(key)
        if hit is not None:
            return hit
        excl = {self.index[v] for v in exclude}
        vars_avail = [
            (vi, self.bidegrees[vi])
            for vi in range(len(self.variables))
            if vi not in excl
        ]
        out = []
        n = len(vars_avail)

        def rec(pos, ri, rj, acc):
            if ri == 0 and rj == 0:
                out.append(tuple(acc))
                return
            if pos == n:
                return
            vi, (da, db) = vars_avail[pos]
            # exponent 0 branch first
            rec(pos + 1, ri, rj, acc)
            e = 1
            while da * e <= ri and db * e <= rj:
                if da == 0 and db == 0:
                    break
                acc.append((vi, e))
                rec(pos + 1, ri - da * e, rj - db * e, acc)
                acc.pop()
                e += 1

        rec(0, i, j, [])
        out = [tuple(sorted(m)) for m in out]
        out = self.sort_monomials(out)
        self._enum_cache[key] = out
        return out

    # -- textual form ------------------------------------------------------

    def mono_to_str(self, m: Monomial) -> str:
        if not m:
            return "1"
        parts = []
        for vi, e in m:
            v = self.variables[vi]
            base = "y" if v == Y_VAR else f"x[{v[1]},{v[2]}]"
            parts.append(base if e == 1 else f"{base}^{e}")
        return "*".join(parts)

    def mono_from_str(self, s: str) -> Monomial:
        s = s.strip()
        if s == "1":
            return ()
        d = {}
        for factor in s.split("*"):
            factor = factor.strip()
            mm = re.fullmatch(r"(y|x\[(-?\d+),(-?\d+)\])(?:\^(\d+))?", factor)
            if not mm:
                raise InputError(f"cannot parse monomial factor {factor!r}")
            if mm.group(1) == "y":
                v = Y_VAR
            else:
                v = ("x", int(mm.group(2)), int(mm.group(3)))
            if v not in self.index:
                raise InputError(f"{factor!r} is not a variable at genus {self.genus}")
            e = int(mm.group(4)) if mm.group(4) else 1
            vi = self.index[v]
            d[vi] = d.get(vi, 0) + e
        return tuple(sorted(d.items()))

    def poly_to_str(self, p: Polynomial) -> str:
        if not p:
            return "0"
        terms = sorted(p.items(), key=lambda kv: self.mono_sort_key(kv[0]))
        parts = []
        for m, c in terms:
            c = Fraction(c)
            parts.append(f"{c.numerator}/{c.denominator}*{self.mono_to_str(m)}")
        return " + ".join(parts)

    def poly_from_str(self, s: str) -> Polynomial:
        s = s.strip()
        if s == "0":
            return {}
        p = {}
        for term in s.split(" + "):
            coeff_s, mono_s = term.split("*", 1)
            num, den = coeff_s.split("/")
            c = Fraction(int(num), int(den))
            m = self.mono_from_str(mono_s)
            p[m] = p.get(m, 0) + c
        return {m: c for m, c in p.items() if c != 0}


def make_context(g: int) -> AlgebraContext:
    if not isinstance(g, int) or g < 1:
        raise InputError(f"genus must be a positive integer, got {g!r}")
    return AlgebraContext(genus=g)


def bidegree_of(ctx: AlgebraContext, m: Monomial) -> tuple:
    return ctx.mono_bidegree(m)


def enumerate_monomials(ctx: AlgebraContext, bidegree: tuple, exclude=()) -> list:
    return ctx.enumerate_monomials(bidegree, exclude)


# -- polynomial arithmetic ----------------------------------------------------

def poly_zero() -> Polynomial:
    return {}


def poly_mono(m: Monomial, c=1) -> Polynomial:
    return {m: c} if c != 0 else {}


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    out = dict(a)
    for m, c in b.items():
        nc = out.get(m, 0) + c
        if nc:
            out[m] = nc
        else:
            out.pop(m, None)
    return out


def poly_iadd_term(p: Polynomial, m: Monomial, c) -> None:
    nc = p.get(m, 0) + c
    if nc:
        p[m] = nc
    else:
        p.pop(m, None)


def poly_scale(a: Polynomial, c) -> Polynomial:
    if c == 0:
        return {}
    return {m: v * c for m, v in a.items()}


def poly_mul(ctx: AlgebraContext, a: Polynomial, b: Polynomial) -> Polynomial:
    out = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = ctx.mono_mul(m1, m2)
            poly_iadd_term(out, m, c1 * c2)
    return out


def poly_equal(a: Polynomial, b: Polynomial) -> bool:
    keys = set(a) | set(b)
    return all(Fraction(a.get(m, 0)) == Fraction(b.get(m, 0)) for m in keys)


def poly_bidegrees(ctx: AlgebraContext, p: Polynomial) -> set:
    return {ctx.mono_bidegree(m) for m in p}


def poly_homogeneous_bidegree(ctx: AlgebraContext, p: Polynomial):
    """Bidegree of a homogeneous polynomial, None for 0, error otherwise."""
    degs = poly_bidegrees(ctx, p)
    if not degs:
        return None
    if len(degs) > 1:
        raise ValueError(f"polynomial not homogeneous: bidegrees {sorted(degs)}")
    return degs.pop()
