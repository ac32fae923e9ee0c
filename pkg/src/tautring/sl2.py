"""The sl2 triple (E, F, H) acting on the bigraded algebra.

E multiplies by x[2,0], H scales the (i, j) component by i - g, and F is
the second-order differential operator

    F = 1/2 * sum_{i,j,k,l} ( y*x[i-1,j-1]*x[k-1,l-1]
                              - C(i+k-2, i-1)*x[i+k-2, j+l] ) d/dx[i,j] d/dx[k,l]
        + sum_{i,j} x[i-2,j] d/dx[i,j]

with the conventions x[0,0] = g, x[a,b] = 0 for a < 0, b < 0 or b > 2g-2,
and C(n, -1) = 0.  F is linear over the subalgebra generated by y and the
x[0,*] variables, which is exploited by caching F on the positive part
(the factors with first index >= 1) of each monomial.
"""
from __future__ import annotations

from fractions import Fraction
from math import comb, factorial

from .algebra import (
    AlgebraContext,
    Monomial,
    Polynomial,
    Y_VAR,
    poly_iadd_term,
    poly_mul,
    poly_scale,
)


def _binom(n: int, k: int) -> int:
    if k < 0 or n < 0 or k > n:
        return 0
    return comb(n, k)


def _var_monomial(ctx: AlgebraContext, a: int, b: int):
    """x[a,b] as (coefficient, monomial), honoring the boundary rules.

    Returns None when x[a,b] = 0; (g, unit) for x[0,0]."""
    if a < 0 or b < 0 or b > 2 * ctx.genus - 2:
        return None
    if (a, b) == (0, 0):
        return (ctx.genus, ())
    return (1, ((ctx.index[("x", a, b)], 1),))


def split_column0(ctx: AlgebraContext, m: Monomial):
    """Split a monomial into (column-0 part, positive part).

    The column-0 part collects the factors of i-degree zero (y and the
    x[0,*] variables), which F treats as constants."""
    c0 = []
    pos = []
    for vi, e in m:
        if ctx.bidegrees[vi][0] == 0:
            c0.append((vi, e))
        else:
            pos.append((vi, e))
    return tuple(c0), tuple(pos)


def _f_positive_monomial(ctx: AlgebraContext, pos: Monomial,
                         cache: bool = True) -> Polynomial:
    """F applied to a monomial all of whose factors have i-degree >= 1.

    Direct term-by-term expansion: one first-order term per factor slot,
    one second-order term per unordered pair of factor slots (with
    multiplicity).  `cache=False` skips the per-context memo for bulk
    callers that consume each expansion once."""
    cached = ctx._f_mono_cache.get(pos)
    if cached is not None:
        return cached
    g = ctx.genus
    slots = [(ctx.variables[vi][1], ctx.variables[vi][2], vi, e) for vi, e in pos]
    out: Polynomial = {}

    def rest_without(drops) -> Monomial:
        # drops: dict vi -> count to remove
        res = []
        for vi, e in pos:
            d = drops.get(vi, 0)
            if e - d > 0:
                res.append((vi, e - d))
        return tuple(res)

    # first-order part: x[a-2,b] * d/dx[a,b]
    for a, b, vi, e in slots:
        vm = _var_monomial(ctx, a - 2, b)
        if vm is None:
            continue
        cf, mono = vm
        term = ctx.mono_mul(mono, rest_without({vi: 1}))
        poly_iadd_term(out, term, e * cf)

    # second-order part over unordered pairs of slots
    n = len(slots)
    for s1 in range(n):
        a, b, vi1, e1 = slots[s1]
        for s2 in range(s1, n):
            c, d, vi2, e2 = slots[s2]
            if s1 == s2:
                if e1 < 2:
                    continue
                mult = e1 * (e1 - 1) // 2
                drops = {vi1: 2}
            else:
                mult = e1 * e2
                drops = {vi1: 1, vi2: 1}
            rest = rest_without(drops)
            # y * x[a-1,b-1] * x[c-1,d-1]
            vm1 = _var_monomial(ctx, a - 1, b - 1)
            vm2 = _var_monomial(ctx, c - 1, d - 1)
            if vm1 is not None and vm2 is not None:
                cf1, m1 = vm1
                cf2, m2 = vm2
                term = ctx.mono_mul(ctx.y(), ctx.mono_mul(m1, ctx.mono_mul(m2, rest)))
                poly_iadd_term(out, term, mult * cf1 * cf2)
            # - C(a+c-2, a-1) * x[a+c-2, b+d]
            bc = _binom(a + c - 2, a - 1)
            if bc:
                vm3 = _var_monomial(ctx, a + c - 2, b + d)
                if vm3 is not None:
                    cf3, m3 = vm3
                    term = ctx.mono_mul(m3, rest)
                    poly_iadd_term(out, term, -mult * bc * cf3)

    if cache:
        ctx._f_mono_cache[pos] = out
    return out


def apply_E(ctx: AlgebraContext, p: Polynomial) -> Polynomial:
    e_mono = ctx.x(2, 0)
    return {ctx.mono_mul(e_mono, m): c for m, c in p.items()}


def apply_F(ctx: AlgebraContext, p: Polynomial) -> Polynomial:
    out: Polynomial = {}
    for m, c in p.items():
        c0, pos = split_column0(ctx, m)
        if not pos:
            continue
        for m2, c2 in _f_positive_monomial(ctx, pos).items():
            poly_iadd_term(out, ctx.mono_mul(c0, m2), c * c2)
    return out


def apply_H(ctx: AlgebraContext, p: Polynomial) -> Polynomial:
    g = ctx.genus
    out: Polynomial = {}
    for m, c in p.items():
        i, _ = ctx.mono_bidegree(m)
        cc = c * (i - g)
        if cc:
            out[m] = cc
    return out


def apply_F_power(ctx: AlgebraContext, p: Polynomial, nu: int) -> Polynomial:
    if nu < 0:
        raise ValueError("F power must be nonnegative")
    for _ in range(nu):
        if not p:
            break
        p = apply_F(ctx, p)
    return p


# -- formal Fourier transform on a quotient column ---------------------------

class NonNilpotentColumnError(ValueError):
    """The requested column has nonzero pieces beyond i = 2g."""


def _operator_matrix(ctx, quotient, j, op, shift):
    """Matrix of op on the direct sum of the column-j quotient pieces.

    Basis: concatenation of the standard monomials of the pieces (i, j),
    i = 0..2g ascending.  Columns indexed by source basis, rows by target."""
    g = ctx.genus
    pieces = [(i, quotient.standard_monomials((i, j))) for i in range(0, 2 * g + 1)]
    offsets = {}
    total = 0
    for i, basis in pieces:
        offsets[i] = total
        total += len(basis)
    mat = [[Fraction(0)] * total for _ in range(total)]
    for i, basis in pieces:
        ti = i + shift
        if ti < 0 or ti > 2 * g:
            # image must vanish in the quotient
            for col, m in enumerate(basis):
                img = op({m: 1})
                coords = quotient.reduce_to_coordinates((ti, j), img)
                if any(coords):
                    raise NonNilpotentColumnError(
                        f"operator image escapes the column band at piece ({i},{j})"
                    )
            continue
        for col, m in enumerate(basis):
            img = op({m: 1})
            coords = quotient.reduce_to_coordinates((ti, j), img)
            for row, c in enumerate(coords):
                mat[offsets[ti] + row][offsets[i] + col] = Fraction(c)
    return mat, offsets, [len(b) for _, b in pieces]


def _mat_mul(a, b):
    n, k, m2 = len(a), len(b), len(b[0]) if b else 0
    out = [[Fraction(0)] * m2 for _ in range(n)]
    for r in range(n):
        ar = a[r]
        outr = out[r]
        for t in range(k):
            v = ar[t]
            if v:
                bt = b[t]
                for c in range(m2):
                    if bt[c]:
                        outr[c] += v * bt[c]
    return out


def _mat_exp_nilpotent(m, scale=1):
    n = len(m)
    ident = [[Fraction(1 if r == c else 0) for c in range(n)] for r in range(n)]
    result = [row[:] for row in ident]
    power = [row[:] for row in ident]
    k = 1
    while True:
        power = _mat_mul(power, m)
        if all(all(v == 0 for v in row) for row in power):
            break
        coef = Fraction(scale**k, factorial(k))
        for r in range(n):
            for c in range(n):
                result[r][c] += coef * power[r][c]
        k += 1
        if k > n + 1:
            raise NonNilpotentColumnError("operator is not nilpotent on the column")
    return result


def fourier_matrix(ctx: AlgebraContext, quotient, j: int):
    """The composite exp(e) exp(-f) exp(e) on the column-j quotient pieces.

    Returns (matrix, offsets, piece_dims) in the concatenated standard
    monomial basis over i = 0..2g."""
    g = ctx.genus
    e_mat, offsets, dims = _operator_matrix(
        ctx, quotient, j, lambda p: apply_E(ctx, p), +2
    )
    f_mat, _, _ = _operator_matrix(ctx, quotient, j, lambda p: apply_F(ctx, p), -2)
    exp_e = _mat_exp_nilpotent(e_mat)
    exp_mf = _mat_exp_nilpotent(f_mat, scale=-1)
    return _mat_mul(exp_e, _mat_mul(exp_mf, exp_e)), offsets, dims
