"""Kappa/psi base change, forgetful pushforward, unpointed-ring analysis."""

import random
from fractions import Fraction

import pytest

from tautring.algebra import InputError, enumerate_monomials, make_context
from tautring.pushforward import (
    PSI,
    kappa_monomials,
    kappa_to_p,
    kmono_degree,
    kmono_mul,
    kp_mul,
    mg_relation_bases,
    mg_ring_analysis,
    p_to_kappa,
    qstar_pushforward,
)


def test_kappa_monomial_arithmetic():
    a = ((1, 2),)  # kappa1^2
    b = ((PSI, 1), (2, 1))  # psi * kappa2
    ab = kmono_mul(a, b)
    assert ab == ((PSI, 1), (1, 2), (2, 1))
    assert kmono_degree(ab) == 1 + 2 + 2
    assert kmono_mul((), a) == a


def test_kappa_monomials_are_partitions():
    # kappa-only monomials of degree d = partitions of d into parts <= max_index
    assert kappa_monomials(0, 3) == [()]
    assert len(kappa_monomials(4, 4)) == 5  # partitions of 4
    assert len(kappa_monomials(5, 2)) == 3  # partitions of 5 into parts 1, 2
    for m in kappa_monomials(6, 3):
        assert kmono_degree(m) == 6
        assert all(k >= 1 for k, _ in m)


@pytest.mark.parametrize("g", [2, 3, 4])
def test_base_change_round_trip(g):
    ctx = make_context(g)
    rng = random.Random(60 + g)
    for d in range(0, min(g, 4)):
        monos = enumerate_monomials(ctx, (0, 2 * d))
        for _ in range(5):
            P = {m: Fraction(rng.randint(-5, 5)) for m in monos}
            P = {m: c for m, c in P.items() if c}
            back = kappa_to_p(ctx, p_to_kappa(ctx, P))
            assert back == P


def test_p_to_kappa_rejects_positive_columns():
    ctx = make_context(3)
    with pytest.raises(InputError):
        p_to_kappa(ctx, {ctx.x(1, 1): 1})


def test_pushforward_psi_powers():
    # psi^s pushes to kappa_{s-1}; kappa_0 = 2g - 2; kappa_{-1} = 0
    g = 3
    assert qstar_pushforward({(): Fraction(1)}, g) == {}
    assert qstar_pushforward({((PSI, 1),): Fraction(1)}, g) == {
        (): Fraction(2 * g - 2)
    }
    assert qstar_pushforward({((PSI, 3),): Fraction(2)}, g) == {((2, 1),): Fraction(2)}


def test_pushforward_is_linear_over_kappa():
    # q_*(psi^s * kM) = q_*(psi^s) * kM for kappa-only kM
    g = 4
    kM = ((1, 1), (2, 1))
    for s in range(0, 4):
        lhs = qstar_pushforward({kmono_mul(((PSI, s),) if s else (), kM): Fraction(1)}, g)
        rhs = kp_mul(
            qstar_pushforward({((PSI, s),) if s else (): Fraction(1)}, g),
            {kM: Fraction(1)},
        )
        assert lhs == rhs, s


def test_pushforward_drops_degree_by_one():
    g = 5
    rng = random.Random(9)
    for _ in range(20):
        parts = [(PSI, rng.randint(1, 3))] + [
            (rng.randint(1, 3), 1) for _ in range(rng.randint(0, 2))
        ]
        mono = kmono_mul((), tuple(sorted(dict(parts).items())))
        out = qstar_pushforward({mono: Fraction(1)}, g)
        for m in out:
            assert kmono_degree(m) == kmono_degree(mono) - 1


def test_mg_dimension_tables_small():
    expect = {
        3: [1, 1],
        4: [1, 1, 1],
        5: [1, 1, 1, 1],
        6: [1, 1, 2, 1, 1],
    }
    for g, dims in expect.items():
        quotient = mg_relation_bases(g, g - 2)
        got = [quotient.dimension(d) for d in range(g - 1)]
        assert got == dims, g


@pytest.mark.parametrize("g", [3, 4, 5])
def test_mg_ring_gorenstein_small(g):
    table, report = mg_ring_analysis(g, g - 2)
    assert report.socle_dim == 1
    assert report.gorenstein
    assert report.socle_degree == g - 2


def test_mg_socle_spanned_by_top_kappa_class():
    # the one-dimensional top piece exists and every pairing block is square
    table, report = mg_ring_analysis(4, 2)
    for rec in report.records:
        assert rec["dim_left"] == rec["dim_right"] == rec["rank"]
