"""Vectorized mod-p engine for the column-0 quotient rings at large genus.

The column-0 quotient in codimension d is the quotient of the degree-d
column-0 piece by the span of the full F-power collapses of the
column-0-free monomials one weight step above 2g (plus ideal closure).
The exact engine materializes these collapses as exact integer
polynomials; that is the right tool up to moderate genus, but the number
of intermediate monomials grows too fast beyond that.

This engine computes the same spans modulo one or more word-sized
primes, with all per-monomial polynomial arithmetic replaced by sparse
matrix products over blocks of numpy vectors:

* collapse values are vectors over the (small) column-0 monomial bases;
* monomial layers are processed bottom-up by weight, so each layer is a
  sparse-matrix combination of earlier layers;
* x[2,0]-ful monomials never enter a layer: multiplying a monomial of
  first degree w by x[2,0] scales its full collapse by the exact factor
  (w/2 + 1)(g - w/2), so such factors are stripped on the fly (the
  factor vanishes exactly for the top-weight sources, which is why those
  sources are enumerated x[2,0]-free to begin with).

Results carry the same certification semantics as the modular rank
policy: every reported number is computed independently modulo at least
two primes drawn from the deterministic prime stream and must agree.
Ranks modulo a prime never exceed the exact rank, so a full-rank
pairing verdict modulo a prime is a proof of the exact perfect-pairing
statement given the dimensions.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse

from .algebra import AlgebraContext, InputError, make_context
from .linalg import IntegrityError, RankPolicy, _is_prime, prime_stream


def engine_primes(seed: int, count: int) -> list:
    """Deterministic primes in [2^24, 2^25) for the vectorized engine.

    Below 2^25 a dot product of residues fits int64 without splitting
    the factors, as long as no accumulated row has more than 2^12 terms
    ((p-1)^2 * 2^12 < 2^62); the expansion fan-in per monomial stays
    far below that bound.  The primes are derived deterministically
    from the word-sized rank-policy stream."""
    stream = prime_stream(seed)
    out = []
    while len(out) < count:
        q = (1 << 24) | (next(stream) % (1 << 24)) | 1
        while not _is_prime(q):
            q += 2
        if q not in out:
            out.append(q)
    return out


def _matmul_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """(a @ b) % p without int64 overflow, for entries reduced mod p < 2^31.

    The right factor is split into 16-bit halves so every accumulated
    dot product stays below 2^63 (requires inner dimension <= 2^16).
    For the sub-2^25 engine primes and short inner dimensions the direct
    product already fits, skipping the split."""
    inner = a.shape[-1] if a.ndim else 1
    if p < (1 << 26) and inner <= (1 << 12):
        return (a @ b) % p
    lo = b & 0xFFFF
    hi = b >> 16
    return ((a @ lo) + ((a @ hi) % p << 16)) % p
from .pushforward import (
    PSI,
    kappa_monomials,
    kmono_mul,
    kp_mul,
    p_to_kappa,
    qstar_pushforward,
)
from .relations import ResourceAbort, _check_deadline, column_free_monomials
from .sl2 import _binom, _f_positive_monomial, split_column0


# -- column-0 bases and multiplication maps ----------------------------------

class ColumnBases:
    """Monomial bases of the column-0 pieces (0, 2d), d <= cap."""

    def __init__(self, ctx: AlgebraContext, cap: int):
        self.ctx = ctx
        self.cap = cap
        self.basis = {}   # d -> list of monomials
        self.index = {}   # d -> dict monomial -> column
        for d in range(cap + 1):
            monos = ctx.enumerate_monomials((0, 2 * d))
            self.basis[d] = monos
            self.index[d] = {m: k for k, m in enumerate(monos)}
        self._mult_maps = {}

    def dim(self, d: int) -> int:
        return len(self.basis[d])

    def mult_map(self, c0, d_from: int) -> np.ndarray:
        """Column indices of c0 * basis(d_from) inside basis(d_to)."""
        key = (c0, d_from)
        hit = self._mult_maps.get(key)
        if hit is None:
            ctx = self.ctx
            d_to = d_from + ctx.mono_codim(c0)
            idx = self.index[d_to]
            hit = np.array(
                [idx[ctx.mono_mul(c0, m)] for m in self.basis[d_from]],
                dtype=np.int64,
            )
            self._mult_maps[key] = hit
        return hit


def _positive_buckets(ctx: AlgebraContext, wmax: int, jmax: int) -> dict:
    """All column-0-free, x[2,0]-free monomials with first degree <= wmax
    and second degree <= jmax, bucketed by exact bidegree.

    One bounded recursion over the positive variables; every partial
    assignment is itself a valid monomial, so there are no dead branches
    (unlike per-bidegree enumeration with an exact target)."""
    vp = sorted(
        (vi, a, b)
        for vi, (a, b) in enumerate(ctx.bidegrees)
        if a >= 1 and (a, b) != (2, 0)
    )
    buckets = {}
    nvars = len(vp)

    def rec(pos, w, j, acc):
        buckets.setdefault((w, j), []).append(tuple(acc))
        for k in range(pos, nvars):
            vi, a, b = vp[k]
            e = 1
            while w + a * e <= wmax and j + b * e <= jmax:
                acc.append((vi, e))
                rec(k + 1, w + a * e, j + b * e, acc)
                acc.pop()
                e += 1

    rec(0, 0, 0, [])
    return buckets


def _strip_x20(ctx: AlgebraContext, m, g: int):
    """Remove every x[2,0] factor of m; return (stripped, exact factor).

    Stripping one x[2,0] from a monomial of first degree w scales the
    full collapse by (w/2 + 1)(g - w/2), where w is the first degree of
    the remaining monomial."""
    x20 = ctx.index[("x", 2, 0)]
    k = 0
    rest = []
    for vi, e in m:
        if vi == x20:
            k = e
        else:
            rest.append((vi, e))
    if not k:
        return m, 1
    stripped = tuple(rest)
    w = ctx.mono_bidegree(stripped)[0]
    factor = 1
    for t in range(k):
        nu = w // 2 + 1 + t
        factor *= nu * (g - nu + 1)
    return stripped, factor


# -- mod-p echelon over dense numpy rows -------------------------------------

class DenseModSpace:
    """Row space modulo p over a fixed small column dimension, kept in
    reduced row echelon form (pivot value 1, pivot columns cleared)."""

    def __init__(self, ncols: int, p: int):
        self.ncols = ncols
        self.p = p
        self.rows = np.zeros((0, ncols), dtype=np.int64)
        self.pivots = []  # pivot column of each row, increasing

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def insert_block(self, block: np.ndarray) -> None:
        """Add a block of rows (any count) to the span.

        Rows are reduced chunk-wise against the stored reduced echelon;
        the few survivors are inserted one at a time (re-reducing, since
        each insertion changes the span)."""
        chunk = max(256, 4 * self.ncols)
        # conversion to int64 happens chunk-wise inside reduce_block, so
        # disk-backed int32 blocks never materialize in full
        for start in range(0, block.shape[0], chunk):
            sub = self.reduce_block(block[start:start + chunk])
            sub = sub[sub.any(axis=1)]
            for row in sub:
                self._insert_row(row)

    def _insert_row(self, row: np.ndarray) -> None:
        p = self.p
        if self.rank:
            row = (row - _matmul_mod(row[self.pivots], self.rows, p)) % p
        nz = np.nonzero(row)[0]
        if not nz.size:
            return
        lead = int(nz[0])
        row = row * pow(int(row[lead]), -1, p) % p
        col = self.rows[:, lead].copy()
        if col.any():
            self.rows = (self.rows - np.outer(col, row)) % p
        at = int(np.searchsorted(np.array(self.pivots), lead))
        self.rows = np.insert(self.rows, at, row, axis=0)
        self.pivots.insert(at, lead)

    def reduce_block(self, block: np.ndarray) -> np.ndarray:
        p = self.p
        block = np.asarray(block, dtype=np.int64) % p
        if self.rank:
            block = (block - _matmul_mod(block[:, self.pivots], self.rows, p)) % p
        return block

    def standard_columns(self) -> list:
        piv = set(self.pivots)
        return [c for c in range(self.ncols) if c not in piv]


# -- the collapse DP ---------------------------------------------------------

def _malloc_trim() -> None:
    """Return freed allocator arenas to the OS (no-op off glibc)."""
    try:
        import ctypes
        ctypes.CDLL("libc.so.6").malloc_trim(0)
    except Exception:
        pass


class _ShellStore:
    """Keyed store for collapse shells that spills large arrays to disk.

    Shells are written once and read back a bounded number of times, so
    arrays above the threshold live in .npy files and are loaded as
    read-only memmaps; peak resident memory stays near the largest
    single shell instead of the sum of all live shells."""

    def __init__(self, spill_bytes: int = 16 << 20):
        self.spill_bytes = spill_bytes
        self._items = {}
        self._dir = None
        self._counter = 0

    def put(self, key, arr: np.ndarray) -> None:
        if arr.nbytes >= self.spill_bytes:
            if self._dir is None:
                self._dir = tempfile.mkdtemp(prefix="tautring-shells-")
            path = os.path.join(self._dir, f"{self._counter}.npy")
            self._counter += 1
            np.save(path, arr)
            self._items[key] = path
        else:
            self._items[key] = arr

    def alloc(self, shape, dtype=np.int32) -> np.ndarray:
        """Writable array of the given shape, disk-backed when large.
        Not yet registered under a key; pass to `adopt` or `discard`."""
        nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if nbytes >= self.spill_bytes:
            if self._dir is None:
                self._dir = tempfile.mkdtemp(prefix="tautring-shells-")
            path = os.path.join(self._dir, f"{self._counter}.npy")
            self._counter += 1
            return np.lib.format.open_memmap(
                path, mode="w+", dtype=dtype, shape=tuple(shape))
        return np.zeros(shape, dtype=dtype)

    def adopt(self, key, arr: np.ndarray) -> None:
        """Register an array obtained from `alloc` under a key."""
        if isinstance(arr, np.memmap):
            arr.flush()
            self._items[key] = arr.filename
            del arr
        else:
            self._items[key] = arr

    @staticmethod
    def discard(arr: np.ndarray) -> None:
        """Drop an `alloc` result that will not be adopted."""
        if isinstance(arr, np.memmap):
            path = arr.filename
            del arr
            os.unlink(path)

    def get(self, key) -> np.ndarray:
        v = self._items[key]
        if isinstance(v, str):
            return np.load(v, mmap_mode="r")
        return v

    def keys(self):
        return list(self._items.keys())

    def delete(self, key) -> None:
        v = self._items.pop(key)
        if isinstance(v, str):
            os.unlink(v)

    def close(self) -> None:
        for k in self.keys():
            self.delete(k)
        if self._dir is not None:
            os.rmdir(self._dir)
            self._dir = None


def _emit_collapse_terms(ctx, pos, w, j, row, index_of, buckets, tables):
    """Expand F on one x[2,0]-free positive monomial and append the
    resulting (row, sub index, coefficient) triples to `buckets`, keyed
    by (column-0 cofactor, sub-piece bidegree).

    Equivalent to `_f_positive_monomial` followed by `split_column0` and
    `_strip_x20` per output term, but emits raw triples: no polynomial
    dicts, no generic monomial products, no re-splitting.  Duplicate
    (row, sub) entries are allowed; the sweep's sparse products sum them.
    Exploits two structural facts about the piece monomials: they carry
    no column-0 factors and no x[i,0] factors, so only the second-order
    y-part can create an x[2,0] factor (from x[3,1]) or the scalar g
    (from x[1,1]).  Returns the number of triples appended."""
    g, bide, x0_of, pos_of, yv = tables
    n = len(pos)
    slots = [(bide[vi][0], bide[vi][1], vi, e) for vi, e in pos]
    emitted = 0

    def drop1(k):
        vi, e = pos[k]
        if e == 1:
            return pos[:k] + pos[k + 1:]
        return pos[:k] + ((vi, e - 1),) + pos[k + 1:]

    def drop2(k1, k2):
        # k1 < k2; remove one factor instance from each slot
        out = []
        for t, (vi, e) in enumerate(pos):
            d = (t == k1) + (t == k2)
            if e - d > 0:
                out.append((vi, e - d))
        return tuple(out)

    def insert1(m, u):
        for t, (vi, e) in enumerate(m):
            if vi == u:
                return m[:t] + ((vi, e + 1),) + m[t + 1:]
            if vi > u:
                return m[:t] + ((u, 1),) + m[t:]
        return m + ((u, 1),)

    def emit(c0, wj, sub, cc):
        nonlocal emitted
        bucket = buckets.get((c0, wj))
        if bucket is None:
            bucket = buckets[(c0, wj)] = ([], [], [])
        bucket[0].append(row)
        bucket[1].append(index_of[wj][sub])
        bucket[2].append(cc)
        emitted += 1

    # first-order part: x[a-2,b] * d/dx[a,b]; a == 2 forces b >= 2 (no
    # x[2,0] in pos), so the image is x[0,b] (column-0), never a scalar
    for k in range(n):
        a, b, vi, e = slots[k]
        if a == 1:
            continue
        rest = drop1(k)
        if a == 2:
            emit(((x0_of[b], 1),), (w - 2, j - b), rest, e)
        else:
            emit((), (w - 2, j), insert1(rest, pos_of[(a - 2, b)]), e)

    # second-order part over unordered pairs of slots
    for s1 in range(n):
        a, b, vi1, e1 = slots[s1]
        for s2 in range(s1, n):
            c, d, vi2, e2 = slots[s2]
            if s1 == s2:
                if e1 < 2:
                    continue
                mult = e1 * (e1 - 1) // 2
                rest = (pos[:s1] + pos[s1 + 1:] if e1 == 2
                        else pos[:s1] + ((vi1, e1 - 2),) + pos[s1 + 1:])
            else:
                mult = e1 * e2
                rest = drop2(s1, s2)
            wr = w - a - c          # first degree of rest
            jr = j - b - d
            # y * x[a-1,b-1] * x[c-1,d-1]: pos factors have b, d >= 1
            sc = mult
            x0s = []
            sub = rest
            ws, js = wr, jr
            n20 = 0
            for aa, bb in ((a, b), (c, d)):
                if aa == 1:
                    if bb == 1:
                        sc *= g                    # x[0,0] = g
                    else:
                        x0s.append(x0_of[bb - 1])
                elif (aa, bb) == (3, 1):
                    n20 += 1                       # x[2,0]: strip later
                else:
                    sub = insert1(sub, pos_of[(aa - 1, bb - 1)])
                    ws += aa - 1
                    js += bb - 1
            for t in range(n20):
                nu = ws // 2 + 1 + t
                sc *= nu * (g - nu + 1)
            if sc:
                if len(x0s) == 2:
                    u1, u2 = sorted(x0s)
                    c0 = (((u1, 2), (yv, 1)) if u1 == u2
                          else ((u1, 1), (u2, 1), (yv, 1)))
                elif x0s:
                    c0 = ((x0s[0], 1), (yv, 1))
                else:
                    c0 = ((yv, 1),)
                emit(c0, (ws, js), sub, sc)
            # - C(a+c-2, a-1) * x[a+c-2, b+d]; a == c == 1 gives the
            # column-0 factor x[0,b+d] (b+d >= 2, never x[0,0] or x[2,0])
            bc = _binom(a + c - 2, a - 1)
            if bc:
                if a + c == 2:
                    u = x0_of.get(b + d)
                    if u is not None:
                        emit(((u, 1),), (wr, jr), rest, -mult * bc)
                else:
                    u = pos_of.get((a + c - 2, b + d))
                    if u is not None:
                        emit((), (w - 2, j),
                             insert1(rest, u), -mult * bc)
    return emitted


class CollapsePlan:
    """Prime-independent collapse structure for one (genus, cap) pair.

    Built once: monomial layers (bottom-up by weight) and, per layer
    piece, the F-expansion terms bucketed by (column-0 cofactor, source
    piece) as integer numpy triples.  `collapse(p)` then replays the
    plan modulo any word-sized prime with sparse matrix products."""

    def __init__(self, ctx: AlgebraContext, cap: int, deadline=None):
        g = ctx.genus
        self.ctx = ctx
        self.cap = cap
        self.top = 2 * g + 2
        self.bases = ColumnBases(ctx, cap)
        jmax = 2 * cap
        raw = _positive_buckets(ctx, self.top, jmax)
        self.sizes = {}     # (w, j) -> monomial count (even w, even j)
        index_of = {}
        for (w, j), lst in raw.items():
            if w % 2 == 0 and j % 2 == 0:
                self.sizes[(w, j)] = len(lst)
                index_of[(w, j)] = {m: k for k, m in enumerate(lst)}
        raw = None
        # term buckets per target piece; the monomial lists themselves
        # are not retained (only counts and index positions matter)
        self.terms = {}     # (w, j) -> {(c0, (w_sub, j_sub)): (rows, subs, cs)}
        self.max_drop = 2   # largest w - w_sub over all term buckets
        self._spill_bytes = 1 << 20
        self._term_dir = None
        x0_of = {b: vi for vi, (a, b) in enumerate(ctx.bidegrees)
                 if a == 0 and ctx.variables[vi][0] == "x"}
        pos_of = {(a, b): vi for vi, (a, b) in enumerate(ctx.bidegrees)
                  if a >= 1}
        tables = (g, ctx.bidegrees, x0_of, pos_of, ctx.index[("y",)])
        for w in range(2, self.top + 1, 2):
            _check_deadline(deadline, {})
            for j in range(0, jmax + 1, 2):
                piece_index = index_of.get((w, j))
                if not piece_index:
                    continue
                # accumulate in bounded python lists, flushing to numpy
                # chunks so the build-phase footprint stays flat
                done = {}     # key -> list of packed array triples
                buckets = {}
                pending = 0

                def flush():
                    for key, (r, s, cs) in buckets.items():
                        done.setdefault(key, []).append(
                            (np.array(r, dtype=np.int32),
                             np.array(s, dtype=np.int32),
                             np.array(cs, dtype=np.int64)))
                    buckets.clear()

                for m, row in piece_index.items():
                    pending += _emit_collapse_terms(
                        ctx, m, w, j, row, index_of, buckets, tables)
                    if pending >= 1_000_000:
                        flush()
                        pending = 0
                flush()
                if done:
                    self.max_drop = max(
                        self.max_drop, max(w - sw for _, (sw, _) in done))
                n_rb = (len(piece_index) - 1) // self._ROW_BLOCK + 1
                packed = {}
                for key, parts in done.items():
                    r, s, c = (np.concatenate([pp[k] for pp in parts])
                               for k in range(3))
                    # group by (output row block, sub-shell block) and
                    # sort by row inside each group, so the sweep slices
                    # contiguous runs instead of masking
                    n_sb = (self.sizes[key[1]] - 1) // self._SUB_BLOCK + 1
                    group = ((r.astype(np.int64) >> self._ROW_SHIFT) * n_sb
                             + (s >> self._SUB_SHIFT))
                    order = np.lexsort((r, group))
                    offsets = np.searchsorted(
                        group[order], np.arange(n_rb * n_sb + 1))
                    packed[key] = (r[order], s[order], c[order],
                                   offsets, n_sb)
                done = None
                nbytes = sum(r.nbytes + s.nbytes + c.nbytes
                             for r, s, c, _, _ in packed.values())
                if nbytes >= self._spill_bytes:
                    # large pieces: keep only keys and offset tables
                    # resident and park the index arrays on disk until
                    # the sweep (one .npy per array, memory-mappable)
                    if self._term_dir is None:
                        self._term_dir = tempfile.mkdtemp(
                            prefix="tautring-terms-")
                    metas = []
                    for k, (key, (r, s, c, off, n_sb)) in enumerate(
                            packed.items()):
                        for tag, arr in (("r", r), ("s", s), ("c", c)):
                            np.save(os.path.join(
                                self._term_dir, f"{w}-{j}-{k}{tag}.npy"), arr)
                        metas.append((key, off, n_sb))
                    self.terms[(w, j)] = (metas, self._term_dir, f"{w}-{j}")
                else:
                    self.terms[(w, j)] = packed
        _malloc_trim()

    def _iter_terms(self, w, j):
        """Yield (bucket key, group offsets, sub-block count, rows, subs,
        coeffs); spilled arrays arrive as read-only memmaps, so callers
        may slice before materializing."""
        stored = self.terms[(w, j)]
        if isinstance(stored, dict):
            for key, (rows_, subs_, cs_, off, n_sb) in stored.items():
                yield key, off, n_sb, rows_, subs_, cs_
        else:
            metas, d, prefix = stored
            for k, (key, off, n_sb) in enumerate(metas):
                yield key, off, n_sb, *(
                    np.load(os.path.join(d, f"{prefix}-{k}{t}.npy"),
                            mmap_mode="r") for t in "rsc")

    def release(self) -> None:
        """Delete spilled term files (plan becomes unusable)."""
        for stored in self.terms.values():
            if not isinstance(stored, dict):
                metas, d, prefix = stored
                for k in range(len(metas)):
                    for t in "rsc":
                        try:
                            os.unlink(os.path.join(d, f"{prefix}-{k}{t}.npy"))
                        except OSError:
                            pass
        self.terms = {}
        if self._term_dir is not None:
            try:
                os.rmdir(self._term_dir)
            except OSError:
                pass
            self._term_dir = None

    def __del__(self):
        try:
            self.release()
        except Exception:
            pass

    # the sweep is blocked in both directions so that no int64 transient
    # scales with a full piece: output rows in _ROW_BLOCK slices, sub-shell
    # rows in _SUB_BLOCK slices; terms are pre-grouped accordingly
    _ROW_SHIFT = 15
    _SUB_SHIFT = 14
    _ROW_BLOCK = 1 << _ROW_SHIFT
    _SUB_BLOCK = 1 << _SUB_SHIFT

    def _piece_rows(self, w, j, layers, p, out) -> None:
        """Mod-p collapse rows of the piece (w, j) from the lower shells,
        written into `out` (int32, possibly disk-backed)."""
        n, ncols = out.shape
        buckets = list(self._iter_terms(w, j))
        edges = np.arange(self._ROW_BLOCK + 1)
        for rb, r0 in enumerate(range(0, n, self._ROW_BLOCK)):
            r1 = min(r0 + self._ROW_BLOCK, n)
            acc = np.zeros((r1 - r0, ncols), dtype=np.int64)
            for (c0, sub_piece), offsets, n_sb, rows_, subs_, cs_ in buckets:
                base = rb * n_sb
                if offsets[base] == offsets[base + n_sb]:
                    continue
                sub_mat = layers.get(sub_piece)
                nsub = sub_mat.shape[0]
                contrib = np.zeros((r1 - r0, sub_mat.shape[1]),
                                   dtype=np.int64)
                for sb in range(n_sb):
                    o0, o1 = int(offsets[base + sb]), int(offsets[base + sb + 1])
                    if o0 == o1:
                        continue
                    b0 = sb << self._SUB_SHIFT
                    b1 = min(b0 + self._SUB_BLOCK, nsub)
                    rr = np.asarray(rows_[o0:o1], dtype=np.int64) - r0
                    ss = np.asarray(subs_[o0:o1], dtype=np.int64) - b0
                    data = np.asarray(cs_[o0:o1]) % p
                    # rows are sorted inside the group: build the CSR
                    # matrix directly, no coordinate sort
                    indptr = np.searchsorted(rr, edges[:r1 - r0 + 1])
                    t = sparse.csr_matrix(
                        (data, ss, indptr), shape=(r1 - r0, b1 - b0))
                    if p < (1 << 26):
                        # residue products fit int64 directly (engine
                        # primes are < 2^25)
                        block = np.asarray(sub_mat[b0:b1], dtype=np.int64)
                        contrib += (t @ block) % p
                    else:
                        block = np.asarray(sub_mat[b0:b1])
                        # split the right factor to keep products in int64
                        lo = (block & 0xFFFF).astype(np.int64)
                        hi = (block >> 16).astype(np.int64)
                        contrib += ((t @ lo) + ((t @ hi) % p << 16)) % p
                contrib %= p
                # multiplication by c0 is injective on monomials, so the
                # target columns are distinct and += is safe
                cols = self.bases.mult_map(c0, sub_piece[1] // 2)
                acc[:, cols] += contrib
            out[r0:r1] = acc % p

    def collapse(self, p: int, deadline=None, consume=None) -> dict:
        """Mod-p collapse rows of the (2g+2, 2d) sources for one prime.

        Returns {d: rows}; row order matches the bucket enumeration order
        of the plan (the same for every prime).  With `consume(d, rows)`
        the top pieces are handed over one at a time in increasing d and
        never held together (the peak-memory shell)."""
        layers = _ShellStore()
        layers.put((0, 0), np.ones((1, 1), dtype=np.int32))
        result = {}
        try:
            for w in range(2, self.top + 1, 2):
                _check_deadline(deadline, {})
                shell = sorted(j for (ww, j) in self.sizes if ww == w)
                for j in shell:
                    # entries are < p < 2^31, so int32 suffices
                    out = layers.alloc(
                        (self.sizes[(w, j)], self.bases.dim(j // 2)))
                    self._piece_rows(w, j, layers, p, out)
                    if w == self.top:
                        if consume is not None:
                            consume(j // 2, out)
                        else:
                            result[j // 2] = np.array(out)  # detach from disk
                        layers.discard(out)
                    else:
                        layers.adopt((w, j), out)
                    out = None
                # x20 stripping looks back at most max_drop weight steps,
                # so older shells can be released
                for k in layers.keys():
                    if k[0] <= w - self.max_drop and k != (0, 0):
                        layers.delete(k)
                _malloc_trim()
        finally:
            layers.close()
        return result


def _relation_spaces(plan: CollapsePlan, p: int, deadline=None) -> dict:
    """Mod-p relation row spaces of the column-0 quotient, per degree."""
    ctx = plan.ctx
    bases = plan.bases
    col0_vars = [
        (((vi, 1),), ctx.bidegrees[vi][1] // 2)
        for vi in range(len(ctx.variables))
        if ctx.bidegrees[vi][0] == 0
    ]
    spaces = {}

    def closure_through(limit):
        for d in range(len(spaces), limit + 1):
            _check_deadline(deadline, {})
            space = DenseModSpace(bases.dim(d), p)
            for vmono, wt in col0_vars:
                lower = spaces.get(d - wt)
                if lower is None or not lower.rank:
                    continue
                cols = bases.mult_map(vmono, d - wt)
                shifted = np.zeros((lower.rank, bases.dim(d)), dtype=np.int64)
                shifted[:, cols] = lower.rows
                space.insert_block(shifted)
            spaces[d] = space

    def consume(d, rows):
        # top pieces arrive in increasing d, so every lower space is final
        closure_through(d)
        spaces[d].insert_block(rows)

    plan.collapse(p, deadline, consume=consume)
    closure_through(plan.cap)
    return spaces


# -- the bigraded quotient: per-column F-power sweeps ------------------------

def _apply_f_exact(ctx: AlgebraContext, m) -> dict:
    """F of a single monomial, without populating the per-context memo."""
    from .algebra import poly_iadd_term

    c0, pos = split_column0(ctx, m)
    if not pos:
        return {}
    out = {}
    for m2, c in _f_positive_monomial(ctx, pos, cache=False).items():
        poly_iadd_term(out, ctx.mono_mul(c0, m2), c)
    return out


class TtildePlan:
    """Prime-independent structure for the bigraded quotient at one genus.

    Per second degree j, the relation generators of every piece (i, j)
    are the F-power images of the column-0-free monomials at the first
    column above 2g of matching parity.  One downward sweep per column
    produces them for every target i at once; the sweep steps are exact
    integer sparse matrices of F between consecutive ambient bases."""

    def __init__(self, ctx: AlgebraContext, cap: int, deadline=None):
        g = ctx.genus
        self.ctx = ctx
        self.cap = cap
        self.ambient = {}     # (i, j) -> monomial list (sweep + quotient pieces)
        self.index = {}
        self.fmatsT = {}      # (w, j) -> csr of F^T : ambient(w,j) -> ambient(w-2,j)
        self.targets = {}     # j -> descending list of target first degrees
        self.sources = {}     # j -> one-hot rows of the column-free sources
        self.pieces = []      # quotient pieces (i, j), i <= 2g, codim <= cap
        for j in range(0, 2 * cap + 1):
            hi = min(2 * g, 2 * cap - j)
            targets = [i for i in range(hi - (hi - j) % 2, j % 2 - 1, -2)]
            if not targets:
                continue
            self.targets[j] = targets
            self.pieces.extend((i, j) for i in targets)
            src_col = 2 * g + 2 - ((2 * g + 2 - j) % 2)
            for w in range(src_col, j % 2, -2):
                _check_deadline(deadline, {})
                amb = self._amb(w, j)
                lower_index = self.index[self._key(w - 2, j)]
                rows, cols, vals = [], [], []
                for c, m in enumerate(amb):
                    for m2, v in _apply_f_exact(ctx, m).items():
                        rows.append(lower_index[m2])
                        cols.append(c)
                        vals.append(v)
                self.fmatsT[(w, j)] = sparse.csr_matrix(
                    (np.array(vals, dtype=np.int64),
                     (np.array(rows, dtype=np.int32),
                      np.array(cols, dtype=np.int32))),
                    shape=(len(self.ambient[(w - 2, j)]), len(amb)),
                )
            src = self._amb(src_col, j)
            free = set(column_free_monomials(ctx, (src_col, j)))
            self.sources[j] = np.array(
                [c for c, m in enumerate(src) if m in free], dtype=np.int64)
        self.pieces.sort(key=lambda ij: ((ij[0] + ij[1]) // 2, ij[0]))

    def _key(self, i, j):
        self._amb(i, j)
        return (i, j)

    def _amb(self, i, j):
        amb = self.ambient.get((i, j))
        if amb is None:
            amb = self.ambient[(i, j)] = self.ctx.enumerate_monomials((i, j))
            self.index[(i, j)] = {m: c for c, m in enumerate(amb)}
        return amb

    def piece_spaces(self, p: int, deadline=None) -> dict:
        """Mod-p relation row space of every quotient piece."""
        ctx = self.ctx
        spaces = {}
        for j, targets in self.targets.items():
            _check_deadline(deadline, {})
            src_col = 2 * ctx.genus + 2 - ((2 * ctx.genus + 2 - j) % 2)
            n_src = len(self.sources[j])
            vt = np.zeros((len(self.ambient[(src_col, j)]), n_src),
                          dtype=np.int64)
            vt[self.sources[j], np.arange(n_src)] = 1
            for w in range(src_col, targets[-1], -2):
                fmT = self.fmatsT[(w, j)]
                t = sparse.csr_matrix(
                    (fmT.data % p, fmT.indices, fmT.indptr), shape=fmT.shape)
                lo = vt & 0xFFFF
                hi = vt >> 16
                vt = ((t @ lo) + ((t @ hi) % p << 16)) % p
                i = w - 2
                if i in targets:
                    space = DenseModSpace(len(self.ambient[(i, j)]), p)
                    space.insert_block(vt.T)
                    spaces[(i, j)] = space
        # ideal closure, in codimension order over finalized lower pieces
        shift_maps = {}
        for (i, j) in self.pieces:
            space = spaces.get((i, j))
            if space is None:
                space = spaces[(i, j)] = DenseModSpace(
                    len(self.ambient[(i, j)]), p)
            for vi in range(len(ctx.variables)):
                da, db = ctx.bidegrees[vi]
                src = (i - da, j - db)
                lower = spaces.get(src)
                if lower is None or not lower.rank:
                    continue
                key = (vi, src)
                cols = shift_maps.get(key)
                if cols is None:
                    vmono = ((vi, 1),)
                    idx = self.index[(i, j)]
                    cols = np.array(
                        [idx[ctx.mono_mul(vmono, m)] for m in self.ambient[src]],
                        dtype=np.int64)
                    shift_maps[key] = cols
                shifted = np.zeros((lower.rank, space.ncols), dtype=np.int64)
                shifted[:, cols] = lower.rows
                space.insert_block(shifted)
        return spaces


def modular_ttilde_report(g: int, cap: int, p: int,
                          deadline=None, plan: "TtildePlan" = None):
    """One-prime dimension/pairing analysis of the bigraded quotient."""
    if plan is None:
        plan = TtildePlan(make_context(g), cap, deadline)
    ctx = plan.ctx
    spaces = plan.piece_spaces(p, deadline)
    piece_dims = {
        key: len(plan.ambient[key]) - spaces[key].rank for key in plan.pieces
    }
    dims = [0] * (cap + 1)
    for (i, j), d in piece_dims.items():
        dims[(i + j) // 2] += d
    socle_degree = 2 * g - 1
    if socle_degree > cap:
        raise InputError(
            f"pairing analysis needs codim cap >= {socle_degree}, got {cap}")
    socle_key = (2 * g, 2 * g - 2)
    socle_dim = dims[socle_degree]
    location = sorted(
        key for key, d in piece_dims.items()
        if d and (key[0] + key[1]) // 2 == socle_degree
    )
    ranks = None
    if socle_dim == 1 and location == [socle_key]:
        socle_space = spaces[socle_key]
        s0 = socle_space.standard_columns()[0]
        coord = np.zeros(socle_space.ncols, dtype=np.int64)
        coord[s0] = 1
        for r, pc in enumerate(socle_space.pivots):
            coord[pc] = (-socle_space.rows[r, s0]) % p
        socle_index = plan.index[socle_key]

        def codim_basis(c):
            out = []
            for key in plan.pieces:
                if (key[0] + key[1]) // 2 == c:
                    amb = plan.ambient[key]
                    out.extend((key, amb[col])
                               for col in spaces[key].standard_columns())
            return out

        ranks = []
        for a in range(0, socle_degree // 2 + 1):
            left = codim_basis(a)
            right = codim_basis(socle_degree - a)
            mat = np.zeros((len(left), len(right)), dtype=np.int64)
            for ra, (kl, ml) in enumerate(left):
                for rb, (kr, mr) in enumerate(right):
                    if (kl[0] + kr[0], kl[1] + kr[1]) != socle_key:
                        continue
                    mat[ra, rb] = coord[socle_index[ctx.mono_mul(ml, mr)]]
            span = DenseModSpace(max(len(right), 1), p)
            span.insert_block(mat)
            ranks.append((a, len(left), len(right), span.rank))
    missing = []
    gorenstein = ranks is not None
    if ranks:
        for a, da, db, r in ranks:
            if r < min(da, db) or da != db:
                gorenstein = False
                missing.append((a, max(da, db) - r))
    return ModularRingReport(
        genus=g, mode="ttilde", prime=p, dims=dims,
        socle_degree=socle_degree, socle_dim=socle_dim,
        pairing_ranks=ranks or [], gorenstein=gorenstein, missing=missing,
        piece_dims=piece_dims, socle_location=location)


# -- quotient analysis over one prime ----------------------------------------

@dataclass
class ModularRingReport:
    """Dimensions and pairing verdicts of a graded quotient mod p."""

    genus: int
    mode: str
    prime: int
    dims: list                      # dim per degree, 0..cap
    socle_degree: int
    socle_dim: int
    pairing_ranks: list             # (degree a, dim a, dim sd-a, rank)
    gorenstein: bool
    missing: list = field(default_factory=list)  # (degree, count)
    piece_dims: dict = None         # bigraded modes: (i, j) -> dim
    socle_location: list = None     # bigraded modes: pieces carrying the socle


def _pairing_over_space(p, degrees, dims, spaces, std_cols, mult,
                        socle_degree):
    """Rank of each socle pairing block; shared by both ring flavours.

    `mult(a, ka, b, kb)` gives the socle ambient column of the product of
    standard monomial ka of degree a with kb of degree b."""
    socle_space = spaces[socle_degree]
    socle_std = std_cols[socle_degree]
    if len(socle_std) != 1:
        return None
    s0 = socle_std[0]
    # coordinate of each ambient socle column in the 1-dim quotient
    ncols = socle_space.ncols
    coord = np.zeros(ncols, dtype=np.int64)
    coord[s0] = 1
    for r, pc in enumerate(socle_space.pivots):
        coord[pc] = (-socle_space.rows[r, s0]) % p
    out = []
    for a in degrees:
        b = socle_degree - a
        da, db = dims[a], dims[b]
        mat = np.zeros((da, db), dtype=np.int64)
        for ra, ka in enumerate(std_cols[a]):
            for rb, kb in enumerate(std_cols[b]):
                mat[ra, rb] = coord[mult(a, ka, b, kb)]
        span = DenseModSpace(max(db, 1), p)
        span.insert_block(mat)
        out.append((a, da, db, span.rank))
    return out


def modular_rtilde_report(g: int, cap: int, p: int,
                          deadline=None, plan: CollapsePlan = None
                          ) -> ModularRingReport:
    """One-prime dimension/pairing analysis of the column-0 quotient."""
    if plan is None:
        plan = CollapsePlan(make_context(g), cap, deadline)
    ctx = plan.ctx
    spaces = _relation_spaces(plan, p, deadline)
    bases = plan.bases
    dims = [bases.dim(d) - spaces[d].rank for d in range(cap + 1)]
    std_cols = {d: spaces[d].standard_columns() for d in range(cap + 1)}
    socle_degree = g - 1
    if socle_degree > cap:
        raise InputError(
            f"pairing analysis needs codim cap >= {socle_degree}, got {cap}")
    socle_dim = dims[socle_degree]

    def mult(a, ka, b, kb):
        m = ctx.mono_mul(bases.basis[a][ka], bases.basis[b][kb])
        return bases.index[socle_degree][m]

    degrees = list(range(0, socle_degree // 2 + 1))
    ranks = None
    if socle_dim == 1:
        ranks = _pairing_over_space(
            p, degrees, dims, spaces, std_cols, mult, socle_degree)
    missing = []
    gorenstein = socle_dim == 1 and ranks is not None
    if ranks:
        for a, da, db, r in ranks:
            want = min(da, db)
            if r < want or da != db:
                gorenstein = False
                missing.append((a, max(da, db) - r))
    return ModularRingReport(
        genus=g, mode="rtilde", prime=p, dims=dims,
        socle_degree=socle_degree, socle_dim=socle_dim,
        pairing_ranks=ranks or [], gorenstein=gorenstein, missing=missing)


def modular_mg_report(g: int, cap: int, p: int,
                      deadline=None, plan: CollapsePlan = None
                      ) -> ModularRingReport:
    """One-prime dimension/pairing analysis of the kappa subring image."""
    if plan is None:
        # relations of codim cap+1 push forward into degree cap with s = 0
        plan = CollapsePlan(make_context(g), cap + 1, deadline)
    ctx = plan.ctx
    spaces = _relation_spaces(plan, p, deadline)
    bases = plan.bases

    kbasis = {d: kappa_monomials(d, d if d else 1) for d in range(cap + 1)}
    kindex = {d: {m: k for k, m in enumerate(kbasis[d])} for d in kbasis}

    def push_matrix(e: int, s: int, d: int) -> np.ndarray:
        """Mod-p matrix of P |-> q_*(psi^s * P) from the column-0 basis
        of degree e into the kappa basis of degree d = e + s - 1."""
        mat = np.zeros((bases.dim(e), len(kbasis[d])), dtype=np.int64)
        psi_s = {((PSI, s),): 1} if s else {(): 1}
        for row, m in enumerate(bases.basis[e]):
            kp = p_to_kappa(ctx, {m: 1})
            image = qstar_pushforward(kp_mul(psi_s, kp), g)
            for km, c in image.items():
                c = Fraction(c)
                val = c.numerator * pow(c.denominator, -1, p) % p
                mat[row, kindex[d][km]] = (mat[row, kindex[d][km]] + val) % p
        return mat

    kmult_maps = {}

    def kmult_map(t: int, d_from: int) -> np.ndarray:
        key = (t, d_from)
        hit = kmult_maps.get(key)
        if hit is None:
            unit = ((t, 1),)
            d_to = d_from + t
            hit = np.array(
                [kindex[d_to][kmono_mul(unit, m)] for m in kbasis[d_from]],
                dtype=np.int64)
            kmult_maps[key] = hit
        return hit

    kspaces = {}
    for d in range(cap + 1):
        _check_deadline(deadline, {})
        space = DenseModSpace(len(kbasis[d]), p)
        for t in range(1, d + 1):
            lower = kspaces.get(d - t)
            if lower is None or not lower.rank:
                continue
            cols = kmult_map(t, d - t)
            shifted = np.zeros((lower.rank, len(kbasis[d])), dtype=np.int64)
            shifted[:, cols] = lower.rows
            space.insert_block(shifted)
        for e in range(0, d + 2):
            s = d + 1 - e
            rel = spaces.get(e)
            if rel is None or not rel.rank:
                continue
            space.insert_block(_matmul_mod(rel.rows, push_matrix(e, s, d), p))
        kspaces[d] = space

    dims = [len(kbasis[d]) - kspaces[d].rank for d in range(cap + 1)]
    std_cols = {d: kspaces[d].standard_columns() for d in range(cap + 1)}
    socle_degree = g - 2
    if socle_degree > cap:
        raise InputError(
            f"pairing analysis needs codim cap >= {socle_degree}, got {cap}")
    socle_dim = dims[socle_degree]

    def mult(a, ka, b, kb):
        m = kmono_mul(kbasis[a][ka], kbasis[b][kb])
        return kindex[socle_degree][m]

    degrees = list(range(0, socle_degree // 2 + 1))
    ranks = None
    if socle_dim == 1:
        ranks = _pairing_over_space(
            p, degrees, dims, kspaces, std_cols, mult, socle_degree)
    missing = []
    gorenstein = socle_dim == 1 and ranks is not None
    if ranks:
        for a, da, db, r in ranks:
            if r < min(da, db) or da != db:
                gorenstein = False
                missing.append((a, max(da, db) - r))
    return ModularRingReport(
        genus=g, mode="mg", prime=p, dims=dims,
        socle_degree=socle_degree, socle_dim=socle_dim,
        pairing_ranks=ranks or [], gorenstein=gorenstein, missing=missing)


def certified_report(g: int, cap: int, mode: str,
                     policy: RankPolicy = None,
                     deadline=None) -> ModularRingReport:
    """Run the modular analysis over at least two primes; all dimension
    and pairing numbers must agree or IntegrityError is raised."""
    policy = policy or RankPolicy()
    fn = {"rtilde": modular_rtilde_report, "mg": modular_mg_report,
          "ttilde": modular_ttilde_report}[mode]
    if mode == "ttilde":
        plan = TtildePlan(make_context(g), cap, deadline)
    else:
        plan_cap = cap if mode == "rtilde" else cap + 1
        plan = CollapsePlan(make_context(g), plan_cap, deadline)
    nprimes = max(2, policy.min_primes)
    reports = []
    for p in engine_primes(policy.prime_seed, nprimes):
        reports.append(fn(g, cap, p, deadline, plan=plan))
    first = reports[0]
    for other in reports[1:]:
        same = (first.dims == other.dims
                and first.socle_dim == other.socle_dim
                and first.pairing_ranks == other.pairing_ranks
                and first.gorenstein == other.gorenstein
                and first.piece_dims == other.piece_dims
                and first.socle_location == other.socle_location)
        if not same:
            raise IntegrityError(
                f"modular reports disagree between primes for genus {g} "
                f"mode {mode}")
    return first
