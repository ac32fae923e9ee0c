"""Acceptance suite: the twelve primary criteria.

Each criterion is one test function producing a single pass/fail line.
Extended (hours-scale) and cluster-scale runs are opt-in via the
TAUTRING_EXTENDED / TAUTRING_CLUSTER environment variables.
"""

import json
import os
import random
import time

import pytest

from tautring.algebra import (
    enumerate_monomials,
    make_context,
    poly_add,
    poly_equal,
    poly_mono,
    poly_mul,
    poly_scale,
)
from tautring.linalg import RankPolicy, SparseMatrix, rank, reduce_against, rref
from tautring.modengine import certified_report
from tautring.quotient import (
    QuotientBasis,
    build_quotient,
    dimension_table,
    fourier_symmetry_check,
    gorenstein_transfer,
    pairing_report,
    socle_check,
    sympow_dimensions,
)
from tautring.relations import (
    collapse,
    compute_ttilde,
    poly_to_row,
    rtilde_table,
)
from tautring.sl2 import apply_E, apply_F, apply_F_power, apply_H, split_column0

EXTENDED = bool(os.environ.get("TAUTRING_EXTENDED"))
CLUSTER = bool(os.environ.get("TAUTRING_CLUSTER"))


# -- shared expensive structures ----------------------------------------------

@pytest.fixture(scope="module")
def ttilde_exact():
    """Full exact quotient tables for g = 2, 3, 4."""
    out = {}
    for g in (2, 3, 4):
        ctx = make_context(g)
        out[g] = (ctx, compute_ttilde(ctx, 2 * g - 1))
    return out


@pytest.fixture(scope="module")
def g5_ttilde():
    """Certified two-prime analysis of the full g = 5 bigraded quotient."""
    t0 = time.time()
    report = certified_report(5, 9, "ttilde", RankPolicy())
    return report, time.time() - t0


def _random_homogeneous(ctx, rng, max_codim=6):
    for _ in range(50):
        c = rng.randint(1, max_codim)
        i = rng.randint(0, 2 * c)
        j = 2 * c - i
        monos = enumerate_monomials(ctx, (i, j))
        if monos:
            chosen = rng.sample(monos, min(len(monos), rng.randint(1, 4)))
            return {m: rng.randint(-9, 9) or 1 for m in chosen}
    raise AssertionError("no nonempty bidegree found")


# -- criteria -----------------------------------------------------------------

def test_criterion_01_sl2_axioms():
    """[E,F] = H, [H,E] = 2E, [H,F] = -2F on random polynomials."""
    for g in range(2, 7):
        ctx = make_context(g)
        rng = random.Random(900 + g)
        for _ in range(100):
            p = _random_homogeneous(ctx, rng)
            ef = poly_add(apply_E(ctx, apply_F(ctx, p)),
                          poly_scale(apply_F(ctx, apply_E(ctx, p)), -1))
            assert poly_equal(ef, apply_H(ctx, p))
            he = poly_add(apply_H(ctx, apply_E(ctx, p)),
                          poly_scale(apply_E(ctx, apply_H(ctx, p)), -1))
            assert poly_equal(he, poly_scale(apply_E(ctx, p), 2))
            hf = poly_add(apply_H(ctx, apply_F(ctx, p)),
                          poly_scale(apply_F(ctx, apply_H(ctx, p)), -1))
            assert poly_equal(hf, poly_scale(apply_F(ctx, p), -2))


def test_criterion_02_quadratic_image_identity():
    """F of the square of the (1,1) generator equals g^2 y - x[0,2]."""
    for g in range(2, 9):
        ctx = make_context(g)
        sq = poly_mul(ctx, poly_mono(ctx.x(1, 1)), poly_mono(ctx.x(1, 1)))
        want = {ctx.y(): g * g, ctx.x(0, 2): -1}
        assert poly_equal(apply_F(ctx, sq), want), g


def test_criterion_03_top_weight_vanishing():
    """F^(g+1) annihilates x[2,0] times every monomial of first degree 2g."""
    for g in range(2, 6):
        ctx = make_context(g)
        x20 = ctx.x(2, 0)
        for i in range(0, g):
            checked = set()
            for beta in enumerate_monomials(ctx, (2 * g, 2 * i)):
                _, pos = split_column0(ctx, beta)
                if pos in checked:
                    continue  # column-0 cofactors factor out of F
                checked.add(pos)
                assert collapse(ctx, ctx.mono_mul(x20, pos)) == {}, (g, i, beta)
            assert checked


def test_criterion_04_low_degree_bound():
    """No relations in the column-0 quotient up to degree floor(g/3)."""
    for g in range(2, 13):
        ctx = make_context(g)
        bound = g // 3
        table = rtilde_table(ctx, bound)
        for d in range(bound + 1):
            assert table[d].rank == 0, (g, d)
    # the first relation coefficient that forces the bound is negative
    for i in (1, 2, 3):
        for g in range(i + 1, 13):
            ctx = make_context(g)
            x31 = ctx.x(3, 1)
            mono = ctx.mono_mul(x31, x31)
            for _ in range(i - 1):
                mono = ctx.mono_mul(mono, ctx.mono_mul(x31, x31))
            img = collapse(ctx, mono)  # F^(3i) of x31^(2i)
            coeff = img.get(ctx.x(0, 2 * i), 0)
            assert coeff < 0, (i, g)


def test_criterion_05_bigraded_gorenstein(ttilde_exact, g5_ttilde):
    """Bigraded quotient Gorenstein for g <= 5 within the 10-minute budget."""
    t0 = time.time()
    for g, (ctx, bases) in ttilde_exact.items():
        q = QuotientBasis(ctx=ctx, mode="ttilde", bases=bases,
                          codim_cap=2 * g - 1)
        table = dimension_table(ctx, "ttilde", 2 * g - 1, quotient=q)
        codim, dim, location = socle_check(ctx, "ttilde", table)
        assert (codim, dim) == (2 * g - 1, 1)
        assert location == [((2 * g, 2 * g - 2), 1)]
        report = pairing_report(ctx, "ttilde", q)
        assert report.gorenstein, g
    report5, dur5 = g5_ttilde
    assert report5.socle_dim == 1
    assert report5.socle_location == [(10, 8)]
    assert report5.gorenstein
    assert all(r == min(da, db) for _, da, db, r in report5.pairing_ranks)
    assert time.time() - t0 + dur5 < 600


@pytest.mark.skipif(not EXTENDED, reason="extended run (set TAUTRING_EXTENDED)")
@pytest.mark.parametrize("g", [6, 7])
def test_criterion_05_bigraded_gorenstein_extended(g):
    report = certified_report(g, 2 * g - 1, "ttilde", RankPolicy())
    assert report.gorenstein
    assert report.socle_location == [(2 * g, 2 * g - 2)]


def test_criterion_06_pointed_ring_gorenstein():
    """Column-0 quotient Gorenstein for g <= 12 within the 30-minute budget."""
    t0 = time.time()
    for g in range(2, 13):
        report = certified_report(g, g - 1, "rtilde", RankPolicy())
        assert report.socle_dim == 1, g
        assert report.gorenstein, g
        assert report.dims == report.dims[::-1], g
    assert time.time() - t0 < 1800


@pytest.mark.skipif(not EXTENDED, reason="extended run (set TAUTRING_EXTENDED)")
@pytest.mark.parametrize("g", list(range(13, 20)))
def test_criterion_06_pointed_ring_gorenstein_extended(g):
    report = certified_report(g, g - 1, "rtilde", RankPolicy())
    assert report.gorenstein, g


@pytest.mark.skipif(not CLUSTER, reason="cluster-scale run (set TAUTRING_CLUSTER)")
def test_criterion_06_first_failure_g20():
    report = certified_report(20, 19, "rtilde", RankPolicy())
    assert not report.gorenstein
    assert report.missing == [(10, 1)]


def test_criterion_07_unpointed_ring_gorenstein():
    """Unpointed kappa ring Gorenstein for g <= 15 within the 60-minute budget."""
    t0 = time.time()
    for g in range(3, 16):
        report = certified_report(g, g - 2, "mg", RankPolicy())
        assert report.socle_dim == 1, g
        assert report.gorenstein, g
        assert report.dims == report.dims[::-1], g
    assert time.time() - t0 < 3600


@pytest.mark.skipif(not CLUSTER, reason="cluster-scale run (set TAUTRING_CLUSTER)")
def test_criterion_07_first_failure_g24():
    report = certified_report(24, 22, "mg", RankPolicy())
    assert not report.gorenstein
    assert report.missing == [(12, 1)]


def test_criterion_08_fourier_symmetry(ttilde_exact, g5_ttilde):
    """dim(i, j) = dim(2g - i, j) and invertible reflection operators."""
    for g, (ctx, bases) in ttilde_exact.items():
        q = QuotientBasis(ctx=ctx, mode="ttilde", bases=bases,
                          codim_cap=2 * g - 1)
        assert fourier_symmetry_check(ctx, q) == [], g
    # g = 5: certified dimensions of every piece obey the reflection ...
    report5, _ = g5_ttilde
    for (i, j), d in report5.piece_dims.items():
        mirror = (10 - i, j)
        if mirror in report5.piece_dims:
            assert report5.piece_dims[mirror] == d, (i, j)
    # ... and the reflection operators on the affordable columns are invertible
    ctx5 = make_context(5)
    q5 = build_quotient(ctx5, "ttilde", 7)
    assert fourier_symmetry_check(ctx5, q5) == []


def test_criterion_09_closure_and_stability_invariants(ttilde_exact):
    """Relation spaces form an F-stable ideal (exhaustive for g <= 4)."""
    for g, (ctx, bases) in ttilde_exact.items():
        spans = {}
        for bd, b in bases.items():
            spans[bd] = (SparseMatrix(b.rows, len(b.monomial_basis)),
                         {m: c for c, m in enumerate(b.monomial_basis)})
        for bd, b in bases.items():
            rows = b.row_polynomials()
            for r in rows:
                # ideal closure: v * r stays a relation, for every generator v
                for vi in range(len(ctx.variables)):
                    da, db = ctx.bidegrees[vi]
                    target = (bd[0] + da, bd[1] + db)
                    if target not in spans:
                        continue
                    vmono = ((vi, 1),)
                    shifted = {ctx.mono_mul(vmono, m): c for m, c in r.items()}
                    span, index_of = spans[target]
                    residual, _ = reduce_against(
                        poly_to_row(shifted, index_of), span)
                    assert residual == {}, (g, bd, vi)
                # F-stability: F(r) is a relation one weight step down
                img = apply_F(ctx, r)
                target = (bd[0] - 2, bd[1])
                if target in spans:
                    span, index_of = spans[target]
                    residual, _ = reduce_against(
                        poly_to_row(img, index_of), span)
                    assert residual == {}, (g, bd)
                elif target[0] < 0:
                    assert img == {}, (g, bd)


def test_criterion_10_symmetric_power_transfer():
    """Transfer verdict matches an independently assembled block pairing."""
    g, n = 2, 3
    ctx = make_context(g)
    q = build_quotient(ctx, "ttilde", 2 * g - 1)
    table = dimension_table(ctx, "ttilde", 2 * g - 1, quotient=q)
    report = pairing_report(ctx, "ttilde", q)
    dims = sympow_dimensions(g, n, table.dims_by_codim())
    sd = g - 1 + n
    assert dims[sd] == 1  # one-dimensional socle at degree g - 1 + n
    transfer = gorenstein_transfer(report, g, n)

    # independent oracle: the symmetric-power pairing in the product basis
    # decomposes into blocks indexed by the auxiliary exponent; the block
    # of (codim i, exponent jl) vs (codim sd - i, exponent jr) vanishes
    # unless jl + jr = n - g, where it is the bigraded socle pairing
    def codim_basis(i):
        out = []
        for j in range(max(0, i - 2 * g + 1), min(i, n - g) + 1):
            c = i - j
            for key in q.codim_pieces(c):
                for m in q.standard_monomials(key):
                    out.append((j, key, m))
        return out

    socle_key = (2 * g, 2 * g - 2)
    oracle_perfect = True
    for i in range(0, sd // 2 + 1):
        left = codim_basis(i)
        right = codim_basis(sd - i)
        assert len(left) == dims[i] and len(right) == dims[sd - i]
        rows = []
        for jl, kl, ml in left:
            row = {}
            for col, (jr, kr, mr) in enumerate(right):
                if jl + jr != n - g:
                    continue
                target = (kl[0] + kr[0], kl[1] + kr[1])
                if target != socle_key:
                    continue
                coords = q.reduce_to_coordinates(
                    target, poly_mul(ctx, {ml: 1}, {mr: 1}))
                if coords and coords[0]:
                    row[col] = coords[0]
            rows.append(row)
        cert = rank(SparseMatrix([r for r in rows if r], len(right)))
        if cert.rank != len(left) or len(left) != len(right):
            oracle_perfect = False
    assert transfer["gorenstein"] == oracle_perfect
    assert transfer["gorenstein"] is True


def test_criterion_11_linear_algebra_certification():
    """Modular rank agrees with exact rank; RREF and reduction identities."""
    rng = random.Random(20240911)
    for trial in range(200):
        nrows = rng.randint(1, 60)
        ncols = rng.randint(1, 60)
        density = rng.choice([0.05, 0.15, 0.4])
        rows = []
        for _ in range(nrows):
            row = {c: rng.randint(-99, 99) or 1
                   for c in range(ncols) if rng.random() < density}
            rows.append(row)
        m = SparseMatrix(rows, ncols)
        exact = rank(m, RankPolicy(method="exact")).rank
        modular = rank(m, RankPolicy(method="modular")).rank
        assert exact == modular, trial
        if trial % 4 == 0:
            r1 = rref(m)
            assert rref(r1).rows == r1.rows
        if trial % 4 == 1 and rows:
            basis = rref(m)
            from fractions import Fraction
            coeffs = [Fraction(rng.randint(-3, 3)) for _ in basis.rows]
            vec = {}
            for cf, row in zip(coeffs, basis.rows):
                for c, v in row.items():
                    nv = vec.get(c, Fraction(0)) + cf * v
                    if nv:
                        vec[c] = nv
                    else:
                        vec.pop(c, None)
            residual, coords = reduce_against(dict(vec), basis)
            assert residual == {}
            back = {}
            for cf, row in zip(coords, basis.rows):
                for c, v in row.items():
                    nv = back.get(c, Fraction(0)) + cf * v
                    if nv:
                        back[c] = nv
                    else:
                        back.pop(c, None)
            assert back == vec


def test_criterion_12_determinism(tmp_path):
    """Byte-identical JSON across thread counts and cache states."""
    from tautring.cli import main

    cache = str(tmp_path / "cache")
    outs = []
    for k, extra in enumerate((
        ["--threads", "1"],
        ["--threads", "8"],
        ["--threads", "1", "--cache-dir", cache],   # cold cache
        ["--threads", "8", "--cache-dir", cache],   # warm cache
    )):
        out = tmp_path / f"run{k}.json"
        code = main(["compute", "--genus", "3", "--mode", "ttilde",
                     "--max-codim", "5", "--seed", "20240911",
                     "--out", str(out), *extra])
        assert code == 0
        outs.append(out.read_bytes())
    assert len(set(outs)) == 1
    json.loads(outs[0])  # well-formed
