"""Base change between the column-0 p-classes and the kappa/psi classes,
pushforward along the forgetful map, and analysis of the unpointed ring.

Kappa-side monomials are sparse tuples of (index, exponent) pairs where
index 0 is psi and index j >= 1 is kappa_j; kappa_0 is the constant
2g - 2 and kappa_{-1} = 0, both substituted on sight.  deg(psi) = 1 and
deg(kappa_j) = j.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .algebra import (
    AlgebraContext,
    InputError,
    Monomial,
    Polynomial,
    Y_VAR,
    poly_iadd_term,
    poly_mul,
)
from .linalg import RankPolicy, SparseMatrix, rank as matrix_rank
from .quotient import DimensionTable, PairingReport, IncompleteTableError
from .relations import RelationBasis, _assemble_rref, _check_deadline, rtilde_table

KappaMonomial = tuple  # sorted ((index, exp), ...); index 0 = psi
KappaPolynomial = dict  # KappaMonomial -> exact coefficient

PSI = 0


def kmono_mul(m1: KappaMonomial, m2: KappaMonomial) -> KappaMonomial:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for k, e in m2:
        d[k] = d.get(k, 0) + e
    return tuple(sorted(d.items()))


def kmono_degree(m: KappaMonomial) -> int:
    return sum((k if k else 1) * e for k, e in m)


def kmono_to_str(m: KappaMonomial) -> str:
    if not m:
        return "1"
    parts = []
    for k, e in m:
        base = "psi" if k == PSI else f"kappa{k}"
        parts.append(base if e == 1 else f"{base}^{e}")
    return "*".join(parts)


def kp_iadd_term(p: KappaPolynomial, m: KappaMonomial, c) -> None:
    nc = p.get(m, 0) + c
    if nc:
        p[m] = nc
    else:
        p.pop(m, None)


def kp_mul(a: KappaPolynomial, b: KappaPolynomial) -> KappaPolynomial:
    out: KappaPolynomial = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            kp_iadd_term(out, kmono_mul(m1, m2), c1 * c2)
    return out


def kp_pow(a: KappaPolynomial, e: int) -> KappaPolynomial:
    out = {(): Fraction(1)}
    for _ in range(e):
        out = kp_mul(out, a)
    return out


# -- base change --------------------------------------------------------------

def _p_image(g: int, i: int) -> KappaPolynomial:
    """The kappa/psi expansion of x[0, 2i]:
    (1/2^(i+1)) * sum_j C(i+1, j+1) psi^(i-j) kappa_j + psi^i."""
    out: KappaPolynomial = {}
    pref = Fraction(1, 2 ** (i + 1))
    for j in range(0, i + 1):
        c = pref * comb(i + 1, j + 1)
        if j == 0:
            c *= 2 * g - 2  # kappa_0 is the constant 2g - 2
            mono = (((PSI, i),) if i else ())
        else:
            mono = tuple(sorted(([(PSI, i - j)] if i - j else []) + [(j, 1)]))
        kp_iadd_term(out, mono, c)
    kp_iadd_term(out, ((PSI, i),) if i else (), Fraction(1))
    return out


def p_to_kappa(ctx: AlgebraContext, P: Polynomial) -> KappaPolynomial:
    """Rewrite a column-0 polynomial in the kappa/psi basis."""
    g = ctx.genus
    images = {}
    out: KappaPolynomial = {}
    for mono, coeff in P.items():
        term = {(): Fraction(coeff)}
        for vi, e in mono:
            v = ctx.variables[vi]
            if v == Y_VAR:
                term = kp_mul(term, {((PSI, e),): Fraction(1)})
                continue
            if v[1] != 0:
                raise InputError(
                    f"{ctx.mono_to_str(mono)} is not in the column-0 subalgebra")
            i = v[2] // 2
            if i not in images:
                images[i] = _p_image(g, i)
            term = kp_mul(term, kp_pow(images[i], e))
        for m, c in term.items():
            kp_iadd_term(out, m, c)
    return out


def _kappa_as_p(ctx: AlgebraContext, j: int) -> Polynomial:
    """kappa_j as a column-0 polynomial, by triangular inversion."""
    cache = getattr(ctx, "_kappa_p_cache", None)
    if cache is None:
        cache = ctx._kappa_p_cache = {}
    if j in cache:
        return cache[j]
    g = ctx.genus
    if j == 0:
        return {(): Fraction(2 * g - 2)}
    if 2 * j > 2 * g - 2:
        raise InputError(
            f"kappa_{j} has no preimage variable x[0,{2 * j}] at genus {g}")
    # invert x[0,2j] = (1/2^(j+1)) sum_t C(j+1, t+1) psi^(j-t) kappa_t + psi^j
    y = ctx.y()
    out: Polynomial = {((ctx.index[("x", 0, 2 * j)], 1),): Fraction(2 ** (j + 1))}
    poly_iadd_term(out, tuple([(y[0][0], j)]), -Fraction(2 ** (j + 1)))
    for t in range(0, j):
        sub = _kappa_as_p(ctx, t)
        c = Fraction(comb(j + 1, t + 1))
        psi_pow = {(((y[0][0]), j - t),): Fraction(1)} if j - t else {(): Fraction(1)}
        piece = poly_mul(ctx, psi_pow, {m: v * c for m, v in sub.items()})
        for m, v in piece.items():
            poly_iadd_term(out, m, -v)
    cache[j] = out
    return out


def kappa_to_p(ctx: AlgebraContext, Q: KappaPolynomial) -> Polynomial:
    """Inverse base change: kappa/psi polynomial to the p-basis."""
    y = ctx.y()[0][0]
    out: Polynomial = {}
    for mono, coeff in Q.items():
        term: Polynomial = {(): Fraction(coeff)}
        for k, e in mono:
            if k == PSI:
                factor = {((y, e),): Fraction(1)}
                term = poly_mul(ctx, term, factor)
            else:
                base = _kappa_as_p(ctx, k)
                for _ in range(e):
                    term = poly_mul(ctx, term, base)
        for m, c in term.items():
            poly_iadd_term(out, m, c)
    return out


# -- pushforward along the forgetful map --------------------------------------

def qstar_pushforward(Q: KappaPolynomial, g: int) -> KappaPolynomial:
    """psi^s * kappa-monomial maps to kappa_{s-1} * kappa-monomial;
    kappa_{-1} = 0 and kappa_0 = 2g - 2.  Degree drops by exactly 1."""
    out: KappaPolynomial = {}
    for mono, coeff in Q.items():
        d = dict(mono)
        s = d.pop(PSI, 0)
        if s == 0:
            continue  # kappa_{-1} = 0
        if s == 1:
            kp_iadd_term(out, tuple(sorted(d.items())), coeff * (2 * g - 2))
        else:
            d[s - 1] = d.get(s - 1, 0) + 1
            kp_iadd_term(out, tuple(sorted(d.items())), coeff)
    return out


# -- the unpointed ring -------------------------------------------------------

def kappa_monomials(degree: int, max_index: int) -> list:
    """All kappa-only monomials of the given degree with indices <= max_index."""
    out = []

    def rec(k, remaining, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        if k > remaining or k > max_index:
            return
        rec(k + 1, remaining, acc)
        e = 1
        while k * e <= remaining:
            acc.append((k, e))
            rec(k + 1, remaining - k * e, acc)
            acc.pop()
            e += 1

    rec(1, degree, [])
    return sorted(out)


@dataclass
class MgQuotient:
    """Reduction structure for the kappa ring of the unpointed space."""

    genus: int
    codim_cap: int
    bases: dict  # degree -> RelationBasis (monomial_basis: kappa monomials)

    def standard_monomials(self, degree: int) -> list:
        b = self.bases.get(degree)
        return b.standard_monomials() if b is not None else []

    def dimension(self, degree: int) -> int:
        b = self.bases.get(degree)
        return b.dimension if b is not None else 0

    def reduce_to_coordinates(self, degree: int, poly: KappaPolynomial) -> list:
        b = self.bases.get(degree)
        if b is None:
            raise IncompleteTableError(f"degree {degree} not computed")
        index_of = {m: c for c, m in enumerate(b.monomial_basis)}
        vec = {}
        for m, c in poly.items():
            if c:
                col = index_of[m]
                nv = vec.get(col, Fraction(0)) + Fraction(c)
                if nv:
                    vec[col] = nv
                else:
                    vec.pop(col, None)
        for row in b.rows:
            p = min(row)
            c = vec.get(p)
            if c:
                for col, v in row.items():
                    nv = vec.get(col, Fraction(0)) - c * v
                    if nv:
                        vec[col] = nv
                    else:
                        vec.pop(col, None)
        pivots = {min(r) for r in b.rows}
        return [vec.get(col, Fraction(0))
                for col in range(len(b.monomial_basis)) if col not in pivots]


def mg_relation_bases(g: int, codim_cap: int, policy: RankPolicy = None,
                      ctx: AlgebraContext = None, rtilde=None,
                      deadline: float = None) -> MgQuotient:
    """Relation bases of the kappa ring, degree by degree.

    Generators at degree d: pushforwards of psi^s times the column-0
    relations with s + (relation codim) = d + 1, plus kappa-multiples of
    the lower-degree rows (the full multiplier enumeration factors
    through the projection formula into exactly this set)."""
    if ctx is None:
        from .algebra import make_context
        ctx = make_context(g)
    if rtilde is None:
        rtilde = rtilde_table(ctx, codim_cap + 1, policy, deadline=deadline)
    # convert each column-0 relation row once
    converted = {}  # codim -> list of KappaPolynomial
    for e, basis in rtilde.items():
        converted[e] = [p_to_kappa(ctx, r) for r in basis.row_polynomials()]
    bases = {}
    for d in range(codim_cap + 1):
        _check_deadline(deadline, bases)
        ambient = kappa_monomials(d, d if d else 1)
        index_of = {m: c for c, m in enumerate(ambient)}
        rows = []
        provenance = []
        for k in range(1, d + 1):
            lowerb = bases.get(d - k)
            if lowerb is None or not lowerb.rows:
                continue
            kmono = ((k, 1),)
            cnt = 0
            for r in lowerb.rows:
                shifted = {}
                for col, v in r.items():
                    shifted[index_of[kmono_mul(kmono, lowerb.monomial_basis[col])]] = v
                rows.append(shifted)
                cnt += 1
            provenance.append({"kind": "closure", "multiplier": f"kappa{k}",
                               "from_degree": d - k, "count": cnt})
        npush = 0
        for e, polys in converted.items():
            s = d + 1 - e
            if s < 0:
                continue
            psi_s = {((PSI, s),): Fraction(1)} if s else {(): Fraction(1)}
            for P in polys:
                img = qstar_pushforward(kp_mul(psi_s, P), g)
                if img:
                    rows.append({index_of[m]: c for m, c in img.items()})
                    npush += 1
        if npush:
            provenance.append({"kind": "pushforward", "count": npush})
        bases[d] = RelationBasis(
            bidegree=(None, d), monomial_basis=ambient,
            rows=_assemble_rref(rows, len(ambient), policy),
            provenance=provenance)
    return MgQuotient(genus=g, codim_cap=codim_cap, bases=bases)


def mg_ring_analysis(g: int, codim_cap: int, policy: RankPolicy = None,
                     quotient: MgQuotient = None):
    """(DimensionTable, PairingReport) for the unpointed kappa ring."""
    if quotient is None:
        quotient = mg_relation_bases(g, codim_cap, policy)
    records = []
    for d in range(codim_cap + 1):
        b = quotient.bases[d]
        records.append({
            "bidegree": None,
            "codim": d,
            "monomials": len(b.monomial_basis),
            "relation_rank": b.rank,
            "dim": b.dimension,
        })
    table = DimensionTable(genus=g, mode="mg", records=records)
    sd = g - 2
    if codim_cap < sd:
        table.complete = False
        return table, PairingReport(
            genus=g, mode="mg", socle_degree=sd, socle_dim=-1, records=[],
            gorenstein=False, reason="cap below socle degree")
    socle_dim = quotient.dimension(sd)
    if socle_dim != 1:
        return table, PairingReport(
            genus=g, mode="mg", socle_degree=sd, socle_dim=socle_dim,
            records=[], gorenstein=False, reason="socle dimension != 1")
    policy = policy or RankPolicy()
    recs = []
    gorenstein = True
    for a in range(0, sd // 2 + 1):
        left = quotient.standard_monomials(a)
        right = quotient.standard_monomials(sd - a)
        rows = []
        for ml in left:
            row = {}
            for col, mr in enumerate(right):
                coords = quotient.reduce_to_coordinates(
                    sd, {kmono_mul(ml, mr): Fraction(1)})
                if coords and coords[0]:
                    row[col] = coords[0]
            rows.append(row)
        cert = matrix_rank(SparseMatrix([r for r in rows if r], len(right)), policy)
        rec = {"codim": a, "dim_left": len(left), "dim_right": len(right),
               "rank": cert.rank, "missing_left": len(left) - cert.rank,
               "missing_right": len(right) - cert.rank}
        recs.append(rec)
        if rec["missing_left"] or rec["missing_right"]:
            gorenstein = False
    return table, PairingReport(genus=g, mode="mg", socle_degree=sd,
                                socle_dim=1, records=recs, gorenstein=gorenstein)
