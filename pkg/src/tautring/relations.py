"""Relation subspaces defining the two formal quotient rings.

The quotient on the Jacobian side divides the full bigraded algebra by
the span of all F-power images of monomials of i-degree above 2g; the
moduli side (column 0) divides each piece A_(0,2i) by the ideal spanned
by F^{g+1} of the x[2,0]-free monomials of bidegree (2g+2, 2i).

Relation spaces are computed per bidegree by row reduction (exact
integer echelon for small batches, multi-prime reconstructed RREF with
exact verification for large ones).  Three reductions make the
generator sets small and the iteration structurally finite, each
checked against the literal generator recipe in the tests:

* Funneling: the ambient piece on the first column of i-degree above 2g
  is spanned by its monomials, all of which are relation generators, so
  every F-power image from a higher column factors through it.  Sources
  are therefore taken from that single column; the collapse depth is at
  most g + 1.
* F is linear over the column-0 subalgebra, so a generator with a
  column-0 factor c is c times a generator of a lower piece and is
  recovered by ideal closure; only column-0-free sources are expanded.
* F^{g+1} annihilates x[2,0]-ful monomials of i-degree 2g + 2, so
  sources collapsing all the way to column 0 are taken x[2,0]-free.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import (
    AlgebraContext,
    Monomial,
    Polynomial,
    poly_iadd_term,
    poly_mul,
)
from .sl2 import _f_positive_monomial, apply_F, apply_F_power, split_column0
from .linalg import (
    IntEchelon,
    ModEchelon,
    RankPolicy,
    SparseMatrix,
    _row_to_int,
    prime_stream,
)


class ResourceAbort(RuntimeError):
    """A resource limit was hit; carries the partial results."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial or {}


def _check_deadline(deadline, partial):
    if deadline is not None and time.monotonic() > deadline:
        raise ResourceAbort("time limit exceeded", partial=partial)


@dataclass
class RelationBasis:
    """Row-reduced spanning set of the relation subspace of one piece."""

    bidegree: tuple
    monomial_basis: list  # ambient monomials, canonical order
    rows: list  # RREF rows, dict column -> Fraction
    provenance: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.rows)

    @property
    def dimension(self) -> int:
        return len(self.monomial_basis) - len(self.rows)

    def pivot_columns(self) -> list:
        return [min(r) for r in self.rows]

    def standard_monomials(self) -> list:
        pivots = set(self.pivot_columns())
        return [m for c, m in enumerate(self.monomial_basis) if c not in pivots]

    def as_matrix(self) -> SparseMatrix:
        return SparseMatrix(self.rows, len(self.monomial_basis))

    def row_polynomials(self) -> list:
        out = []
        for r in self.rows:
            out.append({self.monomial_basis[c]: v for c, v in r.items()})
        return out


def poly_to_row(poly: Polynomial, index_of: dict) -> dict:
    return {index_of[m]: c for m, c in poly.items() if c}


def _assemble_rref(rows: list, ncols: int, policy: RankPolicy = None) -> list:
    """Echelon basis (pivot coefficient 1, not back-substituted) of the
    row span of a batch of sparse exact rows.

    Exact elimination is only paid for rows that pass a mod-p
    independence prefilter; the skipped rows are verified to lie in the
    final exact span modulo a second independent prime, and any that
    fail are inserted exactly after all.  The returned rows are exact
    and span exactly the input row space."""
    policy = policy or RankPolicy()
    if policy.method == "exact":
        ech = IntEchelon()
        for r in rows:
            ech.insert(r)
    else:
        primes = prime_stream(policy.prime_seed)
        p1, p2 = next(primes), next(primes)
        filt = ModEchelon(p1)
        ech = IntEchelon()
        skipped = []
        for r in rows:
            ir = _row_to_int(r)
            if not ir:
                continue
            if filt.insert(ir):
                ech.insert(ir)
            else:
                skipped.append(ir)
        if skipped:
            check = ModEchelon(p2)
            for piv_row in ech.pivots.values():
                check.insert(dict(piv_row))
            for ir in skipped:
                if check.reduce(ir):
                    # prefilter was unlucky for this row: take it exactly
                    ech.insert(ir)
                    check.insert(ir)
                    filt.insert(ir)
    return _echelon_rows(ech)


def _echelon_rows(ech: IntEchelon) -> list:
    """Pivot-1 rational rows of an integer echelon, by pivot column."""
    out = []
    for c in sorted(ech.pivots):
        row = ech.pivots[c]
        lead = row[c]
        out.append({k: Fraction(v, lead) for k, v in row.items()})
    return out


# -- monomial source sets -----------------------------------------------------

def mon_without_x20(ctx: AlgebraContext, bidegree: tuple) -> list:
    """Monomials of the given bidegree with no x[2,0] factor."""
    return ctx.enumerate_monomials(bidegree, exclude=[("x", 2, 0)])


def positive_monomials(ctx: AlgebraContext, bidegree: tuple) -> list:
    """Column-0-free, x[2,0]-free monomials of the given bidegree."""
    exclude = [("x", 2, 0)] + [
        v for v in ctx.variables if v != ("x", 2, 0) and ctx.bidegrees[ctx.index[v]][0] == 0
    ]
    return ctx.enumerate_monomials(bidegree, exclude=exclude)


def column_free_monomials(ctx: AlgebraContext, bidegree: tuple) -> list:
    """Column-0-free monomials (x[2,0] allowed)."""
    exclude = [v for v in ctx.variables if ctx.bidegrees[ctx.index[v]][0] == 0]
    return ctx.enumerate_monomials(bidegree, exclude=exclude)


def reduced_sources(ctx: AlgebraContext, i: int, j: int) -> list:
    """Source monomials whose partial collapses span the pure relation
    span of the piece (i, j), i <= 2g.

    Only the first column above 2g of matching parity is needed: that
    piece of the ambient algebra is spanned by its monomials, all of
    which are relation generators, so every F-power image from a higher
    column factors through it.  Column-0 factors are stripped
    (F-linearity turns them into ideal-closure multiples of lower
    pieces), and for a column-0 target the x[2,0]-ful sources collapse
    to zero outright."""
    g = ctx.genus
    src_col = 2 * g + 2 - ((2 * g + 2 - i) % 2)
    if i == 0:
        return positive_monomials(ctx, (src_col, j))
    return column_free_monomials(ctx, (src_col, j))


# -- partial collapse: iterated F down to a target i-degree ------------------

def partial_collapse(ctx: AlgebraContext, pos: Monomial, target_i: int) -> dict:
    """F^((w - target_i)/2)(pos) for a column-0-free monomial of i-degree w.

    The result is a polynomial of i-degree target_i with integer
    coefficients, memoized on (pos, target_i); F-linearity over the
    column-0 subalgebra makes this the complete answer for any multiple
    and lets the recursion share subtrees across sources."""
    key = (pos, target_i)
    cached = ctx._collapse_cache.get(key)
    if cached is not None:
        return cached
    w = ctx.mono_bidegree(pos)[0]
    if w < target_i or (w - target_i) % 2:
        raise ValueError(f"cannot collapse i-degree {w} to {target_i}")
    if w == target_i:
        return {pos: 1}
    terms = ctx._f_pos_cache.get(pos)
    if terms is None:
        terms = []
        for m, c in _f_positive_monomial(ctx, pos).items():
            c0, sub = split_column0(ctx, m)
            terms.append((c0, sub, c))
        terms = ctx._f_pos_cache[pos] = tuple(terms)
    out: dict = {}
    mono_mul = ctx.mono_mul
    for c0, sub, c in terms:
        sub_val = partial_collapse(ctx, sub, target_i)
        if c0:
            for m2, c2 in sub_val.items():
                poly_iadd_term(out, mono_mul(c0, m2), c * c2)
        else:
            for m2, c2 in sub_val.items():
                poly_iadd_term(out, m2, c * c2)
    ctx._collapse_cache[key] = out
    return out


def collapse(ctx: AlgebraContext, pos: Monomial) -> dict:
    """F^(w)(pos) for a column-0-free monomial of i-degree 2w: the full
    collapse to a column-0 polynomial."""
    return partial_collapse(ctx, pos, 0)


# -- moduli-side (column 0) relation generators ------------------------------

def rtilde_generators(ctx: AlgebraContext, i: int) -> list:
    """F^{g+1} of every x[2,0]-free monomial of bidegree (2g+2, 2i)."""
    if i < 0:
        raise ValueError("codimension must be nonnegative")
    g = ctx.genus
    out = []
    for m in mon_without_x20(ctx, (2 * g + 2, 2 * i)):
        c0, pos = split_column0(ctx, m)
        poly = {ctx.mono_mul(c0, m2): c for m2, c in collapse(ctx, pos).items()}
        out.append((m, poly))
    return [poly for _, poly in out]


def rtilde_table(ctx: AlgebraContext, codim_cap: int,
                 policy: RankPolicy = None, deadline: float = None,
                 fetch=None, store=None) -> dict:
    """RelationBasis of each piece A_(0, 2i), i <= codim_cap.

    Generators per degree: the collapse images of the column-0-free
    sources at (2g+2, 2i) plus variable multiples of the lower rows
    (together spanning exactly the ideal piece)."""
    g = ctx.genus
    col0_vars = [
        (vi, ctx.bidegrees[vi][1] // 2)
        for vi, v in enumerate(ctx.variables)
        if ctx.bidegrees[vi][0] == 0
    ]
    bases = {}
    for d in range(codim_cap + 1):
        _check_deadline(deadline, bases)
        if fetch:
            hit = fetch((0, 2 * d))
            if hit is not None:
                bases[d] = hit
                continue
        ambient = ctx.enumerate_monomials((0, 2 * d))
        index_of = {m: c for c, m in enumerate(ambient)}
        rows = []
        provenance = []
        for vi, wt in col0_vars:
            lower = bases.get(d - wt)
            if lower is None or not lower.rows:
                continue
            vmono = ((vi, 1),)
            for r in lower.row_polynomials():
                shifted = {ctx.mono_mul(vmono, m): c for m, c in r.items()}
                rows.append(poly_to_row(shifted, index_of))
            provenance.append(
                {"kind": "closure", "multiplier": ctx.mono_to_str(vmono),
                 "from_codim": d - wt, "count": len(lower.rows)}
            )
        npure = 0
        for pos in positive_monomials(ctx, (2 * g + 2, 2 * d)):
            poly = collapse(ctx, pos)
            if poly:
                rows.append(poly_to_row(poly, index_of))
                npure += 1
        if npure:
            provenance.append({"kind": "pure", "nu": g + 1, "count": npure})
        bases[d] = RelationBasis(
            bidegree=(0, 2 * d),
            monomial_basis=ambient,
            rows=_assemble_rref(rows, len(ambient), policy),
            provenance=provenance,
        )
        if store:
            store((0, 2 * d), bases[d])
    return bases


# -- Jacobian-side relation spaces -------------------------------------------

def _pure_span(ctx: AlgebraContext, bidegree: tuple, policy: RankPolicy = None):
    """RREF span of all F-power images of above-2g monomials that land
    in the given piece (i <= 2g): the partial collapses of the reduced
    sources of every higher column of the same j-degree."""
    cache = getattr(ctx, "_pure_cache", None)
    if cache is None:
        cache = ctx._pure_cache = {}
    hit = cache.get(bidegree)
    if hit is not None:
        return hit
    i, j = bidegree
    g = ctx.genus
    ambient = ctx.enumerate_monomials(bidegree)
    index_of = {m: c for c, m in enumerate(ambient)}
    rows = []
    for src in reduced_sources(ctx, i, j):
        poly = partial_collapse(ctx, src, i)
        if poly:
            rows.append(poly_to_row(poly, index_of))
    rref = _assemble_rref(rows, len(ambient), policy)
    cache[bidegree] = (ambient, rref)
    return ambient, rref


def ttilde_relation_space(ctx: AlgebraContext, bidegree: tuple, lower: dict,
                          policy: RankPolicy = None) -> RelationBasis:
    """Relation subspace of the piece at `bidegree` of the Jacobian-side
    quotient, given the RelationBasis of every strictly lower piece."""
    i, j = bidegree
    g = ctx.genus
    ambient = ctx.enumerate_monomials(bidegree)
    index_of = {m: c for c, m in enumerate(ambient)}
    if i > 2 * g:
        # outside the house: everything is a relation
        rows = [{c: Fraction(1)} for c in range(len(ambient))]
        return RelationBasis(bidegree, ambient, rows, [{"kind": "outside-house"}])
    rows = []
    provenance = []
    for vi, v in enumerate(ctx.variables):
        da, db = ctx.bidegrees[vi]
        src = (i - da, j - db)
        basis = lower.get(src)
        if basis is None:
            if src[0] >= 0 and src[1] >= 0 and ctx.enumerate_monomials(src):
                raise ValueError(f"missing lower piece {src} for closure at {bidegree}")
            continue
        vmono = ((vi, 1),)
        for r in basis.row_polynomials():
            shifted = {ctx.mono_mul(vmono, m): c for m, c in r.items()}
            rows.append(poly_to_row(shifted, index_of))
        if basis.rows:
            provenance.append(
                {"kind": "closure", "multiplier": ctx.mono_to_str(vmono),
                 "from": list(src), "count": len(basis.rows)}
            )
    _, pure_rref = _pure_span(ctx, bidegree, policy)
    if pure_rref:
        rows.extend(pure_rref)
        provenance.append({"kind": "pure", "count": len(pure_rref)})
    return RelationBasis(bidegree, ambient,
                         _assemble_rref(rows, len(ambient), policy), provenance)


def compute_ttilde(ctx: AlgebraContext, codim_cap: int,
                   policy: RankPolicy = None, deadline: float = None,
                   fetch=None, store=None) -> dict:
    """RelationBasis of every piece with codimension <= codim_cap.

    `fetch(bidegree) -> RelationBasis | None` may supply a precomputed
    piece (e.g. from cache); `store(bidegree, basis)` is called for each
    freshly computed one."""
    bases = {}
    for codim in range(codim_cap + 1):
        _check_deadline(deadline, bases)
        for i in range(0, 2 * codim + 1):
            j = 2 * codim - i
            basis = fetch((i, j)) if fetch else None
            if basis is None:
                basis = ttilde_relation_space(ctx, (i, j), bases, policy)
                if store:
                    store((i, j), basis)
            bases[(i, j)] = basis
    return bases


# -- literal reference recipe (for validation at tiny sizes) -----------------

def ttilde_relation_space_reference(
    ctx: AlgebraContext, bidegree: tuple, lower: dict, nu_window: int = 3
) -> RelationBasis:
    """Direct transcription of the generator recipe: F-power images of
    *all* monomials above i-degree 2g, iterated until the span is stable
    for `nu_window` consecutive steps past power g+1.  Exponentially more
    work than the production path; used to validate it."""
    i, j = bidegree
    g = ctx.genus
    ambient = ctx.enumerate_monomials(bidegree)
    index_of = {m: c for c, m in enumerate(ambient)}
    ech = IntEchelon()
    if i > 2 * g:
        for m in ambient:
            ech.insert(poly_to_row({m: 1}, index_of))
    for vi, v in enumerate(ctx.variables):
        da, db = ctx.bidegrees[vi]
        basis = lower.get((i - da, j - db))
        if basis is None:
            continue
        vmono = ((vi, 1),)
        for r in basis.row_polynomials():
            shifted = {ctx.mono_mul(vmono, m): c for m, c in r.items()}
            ech.insert(poly_to_row(shifted, index_of))
    nu = 1
    stable = 0
    while True:
        src_col = i + 2 * nu
        grew = False
        if src_col > 2 * g:
            for m in ctx.enumerate_monomials((src_col, j)):
                img = apply_F_power(ctx, {m: 1}, nu)
                if img and ech.insert(poly_to_row(img, index_of)):
                    grew = True
        if nu >= g + 1:
            stable = 0 if grew else stable + 1
            if stable >= nu_window:
                break
        nu += 1
    return RelationBasis(bidegree, ambient, _echelon_rows(ech), [])
