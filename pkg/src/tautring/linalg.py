"""Exact sparse linear algebra over the rationals, with a modular path.

Rows are sparse dicts (column index -> coefficient).  The exact path uses
fraction-free integer elimination; the modular path computes ranks modulo
at least two deterministic primes above 2^31 and escalates on
disagreement.  Reduced echelon forms reconstructed from modular images
are re-verified exactly before being returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd


class IntegrityError(RuntimeError):
    """Modular computation could not be certified."""


# -- deterministic prime stream ----------------------------------------------

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def prime_stream(seed: int):
    """Deterministic stream of distinct primes in (2^31, 2^32)."""
    # simple LCG; only reproducibility matters here
    state = (seed * 6364136223846793005 + 1442695040888963407) & (2**64 - 1)
    seen = set()
    while True:
        state = (state * 6364136223846793005 + 1442695040888963407) & (2**64 - 1)
        cand = (1 << 31) | (state >> 33) | 1
        if cand not in seen and _is_prime(cand):
            seen.add(cand)
            yield cand


@dataclass(frozen=True)
class RankPolicy:
    method: str = "auto"  # "exact" | "modular" | "auto"
    exact_entry_threshold: int = 5_000
    prime_seed: int = 20240911
    min_primes: int = 2
    max_primes: int = 8


@dataclass
class RankCertificate:
    rank: int
    method: str
    primes_used: list = field(default_factory=list)
    verified: bool = True


@dataclass
class SparseMatrix:
    rows: list  # list of dict[int, Fraction|int]
    ncols: int

    @staticmethod
    def from_dense(rows, ncols=None):
        if ncols is None:
            ncols = max((len(r) for r in rows), default=0)
        out = []
        for r in rows:
            out.append({c: Fraction(v) for c, v in enumerate(r) if v})
        return SparseMatrix(out, ncols)

    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def transpose(self) -> "SparseMatrix":
        rows = [dict() for _ in range(self.ncols)]
        for ri, r in enumerate(self.rows):
            for c, v in r.items():
                rows[c][ri] = v
        return SparseMatrix(rows, len(self.rows))


# -- integer fraction-free echelon -------------------------------------------

def _row_to_int(row: dict) -> dict:
    """Scale a rational sparse row to a primitive integer row."""
    if not row:
        return {}
    den = 1
    for v in row.values():
        f = Fraction(v)
        den = den * f.denominator // gcd(den, f.denominator)
    out = {c: int(Fraction(v) * den) for c, v in row.items()}
    g = 0
    for v in out.values():
        g = gcd(g, v)
    if g > 1:
        out = {c: v // g for c, v in out.items()}
    return out


class IntEchelon:
    """Incremental echelon structure over Z (fraction-free, gcd-normalized).

    Pivot selection: smallest column index of each inserted row after
    reduction.  Rows are kept primitive (content 1)."""

    def __init__(self):
        self.pivots = {}  # pivot column -> integer row dict

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def reduce(self, row: dict) -> dict:
        """Reduce an integer row against the stored rows (not in place)."""
        row = dict(row)
        while row:
            lead = min(row)
            piv = self.pivots.get(lead)
            if piv is None:
                return row
            a = row[lead]
            b = piv[lead]
            g = gcd(a, b)
            ma, mb = b // g, a // g
            new = {}
            for c, v in row.items():
                new[c] = v * ma
            for c, v in piv.items():
                nv = new.get(c, 0) - v * mb
                if nv:
                    new[c] = nv
                else:
                    new.pop(c, None)
            row = new
            if row:
                g = 0
                for v in row.values():
                    g = gcd(g, v)
                if g > 1:
                    row = {c: v // g for c, v in row.items()}
        return row

    def insert(self, row: dict) -> bool:
        """Insert a row (integer or rational); True if rank grew."""
        row = _row_to_int(row)
        row = self.reduce(row)
        if not row:
            return False
        self.pivots[min(row)] = row
        return True

    def rref_rows(self) -> list:
        """Fully reduced rational rows (pivot coefficient 1), pivot order."""
        cols = sorted(self.pivots)
        rows = []
        for c in cols:
            r = {k: Fraction(v) for k, v in self.pivots[c].items()}
            rows.append(r)
        # back-substitute pivots above
        for idx in range(len(rows) - 1, -1, -1):
            piv_col = cols[idx]
            piv_row = rows[idx]
            lead = piv_row[piv_col]
            rows[idx] = {k: v / lead for k, v in piv_row.items()}
            for jdx in range(idx):
                r = rows[jdx]
                a = r.get(piv_col)
                if a:
                    rr = dict(r)
                    for k, v in rows[idx].items():
                        nv = rr.get(k, 0) - a * v
                        if nv:
                            rr[k] = nv
                        else:
                            rr.pop(k, None)
                    rows[jdx] = rr
        return rows


class ModEchelon:
    """Incremental echelon over GF(p) with sparse dict rows."""

    def __init__(self, p: int):
        self.p = p
        self.pivots = {}  # pivot column -> row dict, pivot value 1

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def reduce(self, row: dict) -> dict:
        p = self.p
        row = {c: v % p for c, v in row.items() if v % p}
        get = row.get
        while row:
            lead = min(row)
            piv = self.pivots.get(lead)
            if piv is None:
                return row
            a = row[lead]
            for c, v in piv.items():
                nv = (get(c, 0) - a * v) % p
                if nv:
                    row[c] = nv
                else:
                    row.pop(c, None)
        return row

    def insert(self, row: dict) -> bool:
        row = self.reduce(row)
        if not row:
            return False
        lead = min(row)
        inv = pow(row[lead], -1, self.p)
        self.pivots[lead] = {c: v * inv % self.p for c, v in row.items()}
        return True


def _rank_mod(matrix: SparseMatrix, p: int) -> int:
    ech = ModEchelon(p)
    for row in matrix.rows:
        irow = _row_to_int(row)
        # a denominator divisible by p would have been cleared already;
        # entries are exact so reduction mod p is well defined
        ech.insert(irow)
    return ech.rank


def rank(matrix: SparseMatrix, policy: RankPolicy = RankPolicy()) -> RankCertificate:
    """Exact rank over Q with the policy-selected engine."""
    method = policy.method
    if method == "auto":
        method = "exact" if matrix.nnz() <= policy.exact_entry_threshold else "modular"
    if method == "exact":
        ech = IntEchelon()
        for row in matrix.rows:
            ech.insert(row)
        return RankCertificate(rank=ech.rank, method="exact")
    primes = prime_stream(policy.prime_seed)
    used = []
    ranks = []
    while len(used) < policy.max_primes:
        p = next(primes)
        used.append(p)
        ranks.append(_rank_mod(matrix, p))
        if len(used) >= policy.min_primes:
            tail = ranks[-policy.min_primes:]
            if len(set(tail)) == 1:
                # ranks can only drop mod p, so take the max ever observed
                if max(ranks) != tail[0]:
                    continue
                return RankCertificate(
                    rank=tail[0], method="modular", primes_used=used, verified=True
                )
    raise IntegrityError(
        f"modular ranks did not stabilize after {policy.max_primes} primes: {ranks}"
    )


def rref(matrix: SparseMatrix) -> SparseMatrix:
    """Deterministic reduced row echelon form over Q."""
    ech = IntEchelon()
    for row in matrix.rows:
        ech.insert(row)
    return SparseMatrix(ech.rref_rows(), matrix.ncols)


def reduce_against(vector: dict, basis: SparseMatrix):
    """Express vector = coords . basis + residual against an RREF basis.

    The residual has zero entries in all pivot columns."""
    piv_of_row = [min(r) for r in basis.rows]
    residual = {c: Fraction(v) for c, v in vector.items() if v}
    coords = [Fraction(0)] * len(basis.rows)
    for idx, pc in enumerate(piv_of_row):
        a = residual.get(pc)
        if a:
            coords[idx] = a
            for c, v in basis.rows[idx].items():
                nv = residual.get(c, 0) - a * v
                if nv:
                    residual[c] = nv
                else:
                    residual.pop(c, None)
    return residual, coords


# -- CRT and rational reconstruction -----------------------------------------

def crt_pair(r1: int, m1: int, r2: int, m2: int):
    """Combine residues; moduli must be coprime."""
    inv = pow(m1 % m2, -1, m2)
    t = (r2 - r1) % m2 * inv % m2
    return (r1 + m1 * t) % (m1 * m2), m1 * m2


def rational_reconstruct(a: int, m: int):
    """Find p/q with a*q = p (mod m), |p|, q <= sqrt(m/2); None on failure."""
    a %= m
    bound = int((m / 2) ** 0.5)
    r0, r1 = m, a
    s0, s1 = 0, 1
    while r1 > bound:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
    if abs(s1) > bound or s1 == 0:
        return None
    if gcd(r1, abs(s1)) != 1:
        return None
    return Fraction(r1, s1) if s1 > 0 else Fraction(-r1, -s1)


def rref_modular_reconstructed(matrix: SparseMatrix, policy: RankPolicy = RankPolicy()):
    """RREF via modular images, CRT, rational reconstruction, exact re-check.

    Returns (SparseMatrix rref, RankCertificate).  Raises IntegrityError
    if reconstruction or the exact verification fails within the prime
    budget."""
    primes_iter = prime_stream(policy.prime_seed)
    used = []
    images = []  # list of (p, pivot_cols, rows mod p)
    int_rows = [_row_to_int(r) for r in matrix.rows]
    while len(used) < policy.max_primes:
        p = next(primes_iter)
        used.append(p)
        ech = ModEchelon(p)
        for row in int_rows:
            ech.insert(row)
        # full back-substitution mod p
        cols = sorted(ech.pivots)
        rows = [dict(ech.pivots[c]) for c in cols]
        for idx in range(len(rows) - 1, -1, -1):
            for jdx in range(idx):
                a = rows[jdx].get(cols[idx])
                if a:
                    r = rows[jdx]
                    for k, v in rows[idx].items():
                        nv = (r.get(k, 0) - a * v) % p
                        if nv:
                            r[k] = nv
                        else:
                            r.pop(k, None)
        images.append((p, tuple(cols), rows))
        # keep only images agreeing on the pivot structure seen most often
        if len(images) < policy.min_primes:
            continue
        sig = max((im[1] for im in images), key=lambda s: sum(1 for im in images if im[1] == s))
        agreeing = [im for im in images if im[1] == sig]
        if len(agreeing) < policy.min_primes:
            continue
        # CRT-combine and reconstruct
        modulus = 1
        combined = [dict() for _ in sig]
        for pp, _, rows_p in agreeing:
            for ri, row_p in enumerate(rows_p):
                for c, v in row_p.items():
                    prev = combined[ri].get(c, 0)
                    if modulus == 1:
                        combined[ri][c] = v % pp
                    else:
                        combined[ri][c] = crt_pair(prev, modulus, v, pp)[0]
                # entries present in earlier primes but zero mod pp stay, CRT with 0
                for c in list(combined[ri]):
                    if c not in row_p and modulus != 1:
                        combined[ri][c] = crt_pair(combined[ri][c], modulus, 0, pp)[0]
            modulus *= pp
        ok = True
        rat_rows = []
        for row in combined:
            rrow = {}
            for c, v in row.items():
                f = rational_reconstruct(v, modulus)
                if f is None:
                    ok = False
                    break
                if f:
                    rrow[c] = f
            if not ok:
                break
            rat_rows.append(rrow)
        if not ok:
            continue
        candidate = SparseMatrix(rat_rows, matrix.ncols)
        # exact verification: every original row must reduce to zero
        if all(not reduce_against(r, candidate)[0] for r in matrix.rows):
            cert = RankCertificate(
                rank=len(rat_rows),
                method="modular",
                primes_used=[im[0] for im in agreeing],
                verified=True,
            )
            return candidate, cert
    raise IntegrityError("modular RREF reconstruction failed within the prime budget")
