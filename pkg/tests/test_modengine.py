"""Vectorized multi-prime engine: validation against the exact path."""

import random

import numpy as np
import pytest

from tautring.algebra import make_context
from tautring.linalg import ModEchelon, RankPolicy, _is_prime
from tautring.modengine import (
    CollapsePlan,
    DenseModSpace,
    TtildePlan,
    _matmul_mod,
    _strip_x20,
    certified_report,
    engine_primes,
    modular_mg_report,
    modular_rtilde_report,
    modular_ttilde_report,
)
from tautring.relations import collapse, positive_monomials, rtilde_table


def test_engine_primes_fit_in_vector_arithmetic():
    primes = engine_primes(20240911, 8)
    assert primes == engine_primes(20240911, 8)
    assert len(set(primes)) == 8
    for p in primes:
        assert p < 2**31  # products of two residues stay below 2^62
        assert _is_prime(p)


def test_matmul_mod_matches_python_bigints():
    rng = np.random.default_rng(0)
    p = engine_primes(1, 1)[0]
    a = rng.integers(0, p, size=(7, 11), dtype=np.int64)
    b = rng.integers(0, p, size=(11, 5), dtype=np.int64)
    got = _matmul_mod(a, b, p)
    want = np.array(
        [
            [sum(int(a[i, k]) * int(b[k, j]) for k in range(11)) % p for j in range(5)]
            for i in range(7)
        ],
        dtype=np.int64,
    )
    assert (got == want).all()


def test_dense_mod_space_matches_sparse_echelon():
    rng = random.Random(2)
    p = engine_primes(3, 1)[0]
    for _ in range(30):
        nrows, ncols = rng.randint(1, 20), rng.randint(1, 15)
        rows = [
            [rng.randint(-9, 9) if rng.random() < 0.4 else 0 for _ in range(ncols)]
            for _ in range(nrows)
        ]
        dense = DenseModSpace(ncols, p)
        dense.insert_block(np.array(rows, dtype=np.int64) % p)
        ech = ModEchelon(p)
        for r in rows:
            ech.insert({c: v for c, v in enumerate(r) if v})
        assert dense.rank == ech.rank
        pivots = sorted(ech.pivots)
        assert list(dense.pivots) == pivots
        std = [c for c in range(ncols) if c not in set(pivots)]
        assert dense.standard_columns() == std


def test_x20_strip_scalar_matches_exact_collapse():
    for g in (2, 3):
        ctx = make_context(g)
        x20 = ctx.x(2, 0)
        for w in range(2, 2 * g - 1, 2):
            for m in positive_monomials(ctx, (w, 2)):
                stripped, factor = _strip_x20(ctx, ctx.mono_mul(x20, m), g)
                assert stripped == m
                full = collapse(ctx, ctx.mono_mul(x20, m))
                base = collapse(ctx, m)
                assert full == {k: factor * v for k, v in base.items() if factor * v}


@pytest.mark.parametrize("g", [2, 3, 4, 5, 6])
def test_modular_rtilde_matches_exact(g):
    ctx = make_context(g)
    exact = rtilde_table(ctx, g - 1)
    exact_dims = [exact[d].dimension for d in range(g)]
    p = engine_primes(20240911, 1)[0]
    report = modular_rtilde_report(g, g - 1, p)
    assert report.dims == exact_dims
    assert report.socle_dim == 1
    assert report.gorenstein


@pytest.mark.parametrize("g", [3, 4, 5])
def test_modular_mg_matches_exact(g):
    from tautring.pushforward import mg_relation_bases

    quotient = mg_relation_bases(g, g - 2)
    exact_dims = [quotient.dimension(d) for d in range(g - 1)]
    p = engine_primes(20240911, 1)[0]
    report = modular_mg_report(g, g - 2, p)
    assert report.dims == exact_dims
    assert report.gorenstein


def test_collapse_plan_reuse_across_primes():
    g = 4
    plan = CollapsePlan(make_context(g), g - 1)
    p1, p2 = engine_primes(7, 2)
    r1 = modular_rtilde_report(g, g - 1, p1, plan=plan)
    r2 = modular_rtilde_report(g, g - 1, p2, plan=plan)
    assert r1.dims == r2.dims
    assert r1.pairing_ranks == r2.pairing_ranks


def test_certified_report_two_primes():
    report = certified_report(5, 4, "rtilde", RankPolicy())
    assert report.dims == [1, 2, 3, 2, 1]
    assert report.gorenstein
    report = certified_report(5, 3, "mg", RankPolicy())
    assert report.dims == [1, 1, 1, 1]
    assert report.gorenstein


@pytest.mark.parametrize("g", [2, 3, 4])
def test_modular_ttilde_matches_exact_per_piece(g):
    from tautring.relations import compute_ttilde

    ctx = make_context(g)
    exact = compute_ttilde(ctx, 2 * g - 1)
    p = engine_primes(20240911, 1)[0]
    report = modular_ttilde_report(g, 2 * g - 1, p)
    for key, d in report.piece_dims.items():
        assert exact[key].dimension == d, key
    # every exact piece inside the house appears in the modular report
    for key, b in exact.items():
        if key[0] <= 2 * g:
            assert key in report.piece_dims
    assert report.socle_location == [(2 * g, 2 * g - 2)]
    assert report.socle_dim == 1
    assert report.gorenstein


def test_modular_ttilde_plan_reuse():
    g = 3
    plan = TtildePlan(make_context(g), 2 * g - 1)
    p1, p2 = engine_primes(5, 2)
    r1 = modular_ttilde_report(g, 2 * g - 1, p1, plan=plan)
    r2 = modular_ttilde_report(g, 2 * g - 1, p2, plan=plan)
    assert r1.piece_dims == r2.piece_dims
    assert r1.pairing_ranks == r2.pairing_ranks


def test_certified_ttilde_small():
    report = certified_report(3, 5, "ttilde", RankPolicy())
    assert report.dims == [1, 4, 8, 8, 4, 1]
    assert report.gorenstein
    assert report.socle_location == [(6, 4)]
