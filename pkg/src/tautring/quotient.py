"""Quotient bases, dimension tables, socle and pairing analysis.

Covers the three quotient rings: the bigraded Jacobian-side ring
("ttilde", pieces indexed by bidegree), the column-0 moduli-side ring
("rtilde", one piece per codimension), and the unpointed ring ("mg",
handled in the pushforward module but reported through the same types).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import AlgebraContext, Polynomial, poly_mul
from .linalg import RankPolicy, SparseMatrix, rank as matrix_rank
from .relations import RelationBasis, compute_ttilde, rtilde_table


class IncompleteTableError(ValueError):
    """The dimension data does not reach the degree required."""


@dataclass
class QuotientBasis:
    """Reduction structure for a family of quotient pieces.

    `bases` maps a piece key (bidegree tuple) to its RelationBasis.
    Pieces not present but inside the declared band reduce to zero."""

    ctx: AlgebraContext
    mode: str  # "rtilde" | "ttilde"
    bases: dict
    codim_cap: int

    def _basis(self, bidegree):
        return self.bases.get(tuple(bidegree))

    def dimension(self, bidegree) -> int:
        b = self._basis(bidegree)
        return b.dimension if b is not None else 0

    def standard_monomials(self, bidegree) -> list:
        b = self._basis(bidegree)
        return b.standard_monomials() if b is not None else []

    def reduce_to_coordinates(self, bidegree, poly: Polynomial) -> list:
        """Coordinates of the class of `poly` in the standard-monomial
        basis of the piece.  The piece must be computed (or empty)."""
        b = self._basis(tuple(bidegree))
        if b is None:
            i, j = bidegree
            if 0 <= i and 0 <= j and (i + j) // 2 <= self.codim_cap:
                raise IncompleteTableError(f"piece {tuple(bidegree)} not computed")
            return []
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
        # eliminate pivot columns with the RREF rows
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
        coords = []
        for col in range(len(b.monomial_basis)):
            if col not in pivots:
                coords.append(vec.pop(col, Fraction(0)))
        if vec:
            raise AssertionError("reduction left unresolved pivot coordinates")
        return coords

    def codim_pieces(self, codim: int) -> list:
        """Piece keys at the given codimension, canonical order."""
        if self.mode == "rtilde":
            return [(0, 2 * codim)]
        return [(i, 2 * codim - i) for i in range(0, 2 * codim + 1)]

    def codim_dimension(self, codim: int) -> int:
        return sum(self.dimension(b) for b in self.codim_pieces(codim))


@dataclass
class DimensionTable:
    genus: int
    mode: str
    records: list  # dicts: bidegree, codim, monomials, relation_rank, dim
    complete: bool = True

    def dims_by_codim(self) -> dict:
        out = {}
        for r in self.records:
            out[r["codim"]] = out.get(r["codim"], 0) + r["dim"]
        return out


@dataclass
class PairingReport:
    genus: int
    mode: str
    socle_degree: int
    socle_dim: int
    records: list  # dicts: codim, dim_left, dim_right, rank, missing_left/right
    gorenstein: bool
    reason: str = ""


def build_quotient(ctx: AlgebraContext, mode: str, codim_cap: int) -> QuotientBasis:
    if mode == "rtilde":
        table = rtilde_table(ctx, codim_cap)
        bases = {(0, 2 * d): b for d, b in table.items()}
    elif mode == "ttilde":
        bases = compute_ttilde(ctx, codim_cap)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return QuotientBasis(ctx=ctx, mode=mode, bases=bases, codim_cap=codim_cap)


def dimension_table(ctx: AlgebraContext, mode: str, codim_cap: int,
                    quotient: QuotientBasis = None) -> DimensionTable:
    if codim_cap < 0:
        raise ValueError("codim_cap must be nonnegative")
    if quotient is None:
        quotient = build_quotient(ctx, mode, codim_cap)
    records = []
    for codim in range(codim_cap + 1):
        for key in quotient.codim_pieces(codim):
            b = quotient._basis(key)
            if b is None:
                continue
            records.append({
                "bidegree": list(key),
                "codim": codim,
                "monomials": len(b.monomial_basis),
                "relation_rank": b.rank,
                "dim": b.dimension,
            })
    return DimensionTable(genus=ctx.genus, mode=mode, records=records)


def socle_codim(genus: int, mode: str) -> int:
    return {"ttilde": 2 * genus - 1, "rtilde": genus - 1, "mg": genus - 2}[mode]


def socle_check(ctx: AlgebraContext, mode: str, table: DimensionTable):
    """(socle codim, total dim there, list of (bidegree, dim) carrying it)."""
    target = socle_codim(ctx.genus, mode)
    records = [r for r in table.records if r["codim"] == target]
    if not records and target > 0:
        if max((r["codim"] for r in table.records), default=-1) < target:
            raise IncompleteTableError(
                f"table stops before the socle codimension {target}")
    dim = sum(r["dim"] for r in records)
    location = [(tuple(r["bidegree"]), r["dim"]) for r in records if r["dim"]]
    return target, dim, location


def multiply_reduce(ctx: AlgebraContext, quotient: QuotientBasis,
                    b1, coords1, b2, coords2) -> list:
    """Product of two classes given in standard-monomial coordinates,
    reduced at the sum bidegree."""
    basis1 = quotient.standard_monomials(b1)
    basis2 = quotient.standard_monomials(b2)
    p1 = {m: c for m, c in zip(basis1, coords1) if c}
    p2 = {m: c for m, c in zip(basis2, coords2) if c}
    target = (b1[0] + b2[0], b1[1] + b2[1])
    return quotient.reduce_to_coordinates(target, poly_mul(ctx, p1, p2))


def _codim_basis(quotient: QuotientBasis, codim: int) -> list:
    """Standard monomials of a whole codimension as (bidegree, monomial)."""
    out = []
    for key in quotient.codim_pieces(codim):
        for m in quotient.standard_monomials(key):
            out.append((key, m))
    return out


def pairing_report(ctx: AlgebraContext, mode: str, quotient: QuotientBasis,
                   policy: RankPolicy = None) -> PairingReport:
    g = ctx.genus
    sd = socle_codim(g, mode)
    if quotient.codim_cap < sd:
        raise IncompleteTableError(
            f"quotient computed to codim {quotient.codim_cap}, socle is {sd}")
    policy = policy or RankPolicy()
    socle_basis = _codim_basis(quotient, sd)
    socle_dim = len(socle_basis)
    if socle_dim != 1:
        return PairingReport(
            genus=g, mode=mode, socle_degree=sd, socle_dim=socle_dim,
            records=[], gorenstein=False, reason="socle dimension != 1")
    socle_key, _ = socle_basis[0]
    records = []
    gorenstein = True
    for a in range(0, sd // 2 + 1):
        left = _codim_basis(quotient, a)
        right = _codim_basis(quotient, sd - a)
        rows = []
        for kl, ml in left:
            row = {}
            for col, (kr, mr) in enumerate(right):
                target = (kl[0] + kr[0], kl[1] + kr[1])
                if target != socle_key:
                    continue
                coords = quotient.reduce_to_coordinates(
                    target, poly_mul(ctx, {ml: 1}, {mr: 1}))
                if coords and coords[0]:
                    row[col] = coords[0]
            rows.append(row)
        mat = SparseMatrix([r for r in rows if r], len(right))
        cert = matrix_rank(mat, policy)
        rk = cert.rank
        rec = {
            "codim": a,
            "dim_left": len(left),
            "dim_right": len(right),
            "rank": rk,
            "missing_left": len(left) - rk,
            "missing_right": len(right) - rk,
        }
        records.append(rec)
        if rec["missing_left"] or rec["missing_right"]:
            gorenstein = False
    return PairingReport(genus=g, mode=mode, socle_degree=sd,
                         socle_dim=1, records=records, gorenstein=gorenstein)


# -- Fourier symmetry ---------------------------------------------------------

def fourier_symmetry_check(ctx: AlgebraContext, quotient: QuotientBasis) -> list:
    """Violations of the reflection dim(i, j) = dim(2g - i, j) together
    with non-invertibility of the Fourier matrix between paired pieces."""
    from .sl2 import fourier_matrix
    from .linalg import SparseMatrix as SM, rank as mrank, RankPolicy as RP

    g = ctx.genus
    violations = []
    seen_cols = set()
    for (i, j) in quotient.bases:
        if quotient.dimension((i, j)) != quotient.dimension((2 * g - i, j)):
            if (2 * g - i + j) // 2 <= quotient.codim_cap:
                violations.append({
                    "kind": "dimension",
                    "piece": [i, j],
                    "mirror": [2 * g - i, j],
                    "dims": [quotient.dimension((i, j)),
                             quotient.dimension((2 * g - i, j))],
                })
        seen_cols.add(j)
    for j in sorted(seen_cols):
        # need the whole column present to exponentiate the operators
        if any((i + j) // 2 > quotient.codim_cap
               for i in range(j % 2, 2 * g + 1, 2)):
            continue
        mat, offsets, dims = fourier_matrix(ctx, quotient, j)
        n = len(mat)
        if n == 0:
            continue
        rows = [{c: v for c, v in enumerate(r) if v} for r in mat]
        cert = mrank(SM(rows, n), RP())
        if cert.rank != n:
            violations.append({"kind": "fourier-rank", "column": j,
                               "size": n, "rank": cert.rank})
    return violations


# -- symmetric powers ---------------------------------------------------------

def sympow_dimensions(g: int, n: int, ttilde_dims_by_codim: dict) -> list:
    """Dimensions per codim of the symmetric-power ring, n >= 2g - 1.

    dim at codim i = sum over j in [max(0, i-2g+1), min(i, n-g)] of the
    Jacobian-side dim at codim i - j."""
    if n < 2 * g - 1:
        raise ValueError(f"symmetric power n={n} below the band 2g-1={2*g-1}")
    need = 2 * g - 1
    if any(c not in ttilde_dims_by_codim for c in range(need + 1)):
        raise IncompleteTableError("need dims through codim 2g-1")
    out = []
    for i in range(0, g - 1 + n + 1):
        lo = max(0, i - 2 * g + 1)
        hi = min(i, n - g)
        out.append(sum(ttilde_dims_by_codim[i - j] for j in range(lo, hi + 1)))
    return out


def gorenstein_transfer(ttilde_report: PairingReport, g: int, n: int) -> dict:
    """Gorenstein verdict for the symmetric-power ring: the pairing is
    block triangular with the Jacobian-side pairings on the diagonal."""
    if n < 2 * g - 1:
        raise ValueError(f"symmetric power n={n} below the band 2g-1={2*g-1}")
    defects = []
    for rec in ttilde_report.records:
        if rec["missing_left"] or rec["missing_right"]:
            a = rec["codim"]
            # the block at ttilde codim a appears at sympow degrees a+j
            defects.append({
                "ttilde_codim": a,
                "sympow_degrees": [a + j for j in range(0, n - g + 1)],
                "missing": max(rec["missing_left"], rec["missing_right"]),
            })
    if ttilde_report.socle_dim != 1:
        return {"gorenstein": False, "reason": "socle dimension != 1",
                "defects": defects}
    return {"gorenstein": ttilde_report.gorenstein,
            "reason": "" if ttilde_report.gorenstein else "pairing defects",
            "defects": defects,
            "note": "Gorenstein at n implies Gorenstein at n-1"}


# -- the Dutch-house diagram --------------------------------------------------

@dataclass
class HouseSpec:
    genus: int
    base_dimension: int = None

    def __post_init__(self):
        if self.base_dimension is None:
            self.base_dimension = 3 * self.genus - 2

    def blocks(self) -> list:
        g, d = self.genus, self.base_dimension
        out = []
        for i in range(0, 2 * g + 1):
            jmax = min(i, 2 * g - i) + 2 * d
            for j in range(0, jmax + 1):
                if (i + j) % 2 == 0:
                    out.append((i, j))
        return out


def house_render(spec: HouseSpec, dims: DimensionTable = None,
                 format: str = "text") -> str:
    blocks = set(spec.blocks())
    annot = {}
    if dims is not None:
        for r in dims.records:
            annot[tuple(r["bidegree"])] = r["dim"]
    jmax = max(j for _, j in blocks)
    imax = max(i for i, _ in blocks)
    if format == "text":
        lines = []
        for j in range(jmax, -1, -1):
            cells = []
            for i in range(0, imax + 1):
                if (i, j) in blocks:
                    if (i, j) in annot:
                        cells.append(f"{annot[(i, j)]:>3}")
                    else:
                        cells.append("  #")
                else:
                    cells.append("   ")
            lines.append(f"j={j:>2} |" + "".join(cells))
        lines.append("      " + "".join(f"{i:>3}" for i in range(imax + 1)))
        return "\n".join(lines)
    if format == "svg":
        cell = 22
        width = (imax + 1) * cell + 40
        height = (jmax + 1) * cell + 40
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" font-family="monospace" font-size="10">'
        ]
        for (i, j) in sorted(blocks):
            x = 20 + i * cell
            y = 20 + (jmax - j) * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="#f4e8d0" stroke="#333"/>')
            if (i, j) in annot:
                parts.append(
                    f'<text x="{x + cell / 2}" y="{y + cell / 2 + 3}" '
                    f'text-anchor="middle">{annot[(i, j)]}</text>')
        parts.append("</svg>")
        return "\n".join(parts)
    raise ValueError(f"unknown format {format!r}")
