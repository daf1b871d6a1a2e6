"""LDPC codes: alist files, systematic encoding, normalized min-sum decoding.

Codes are defined by a binary parity-check matrix H (m x n over GF(2)).
Encoding places information bits verbatim on the non-pivot columns of the
reduced H and solves the pivot (parity) columns, so every codeword satisfies
H c^T = 0 by construction. Decoding is belief propagation with the
normalized min-sum check update (factor 0.75 by default); non-convergence
is a returned flag, never an error.

A generator for random (col_weight, row_weight)-regular codes is included
(``make_regular_code`` or ``python -m semvid.baseline.ldpc``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CodeError

MIN_SUM_FACTOR = 0.75


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    """(m, n) 0/1 -> (m, ceil(n/64)) uint64, bit j of word w = column 64*w + j."""
    m, n = bits.shape
    words = (n + 63) // 64
    padded = np.zeros((m, words * 64), dtype=np.uint8)
    padded[:, :n] = bits
    out = np.zeros((m, words), dtype=np.uint64)
    for j in range(64):
        out |= padded[:, j::64].astype(np.uint64) << np.uint64(j)
    return out


def _get_bit(packed: np.ndarray, col: int) -> np.ndarray:
    w, b = divmod(col, 64)
    return ((packed[:, w] >> np.uint64(b)) & np.uint64(1)).astype(np.uint8)


def _rref_gf2(bits: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2); returns (packed rows, pivot columns)."""
    m, n = bits.shape
    rows = _pack_rows(bits)
    pivots: list[int] = []
    r = 0
    for col in range(n):
        if r >= m:
            break
        colbits = _get_bit(rows[r:], col)
        hit = np.nonzero(colbits)[0]
        if hit.size == 0:
            continue
        pivot_row = r + int(hit[0])
        if pivot_row != r:
            rows[[r, pivot_row]] = rows[[pivot_row, r]]
        # eliminate this column from every other row
        others = np.nonzero(_get_bit(rows, col))[0]
        others = others[others != r]
        rows[others] ^= rows[r]
        pivots.append(col)
        r += 1
    return rows[: len(pivots)], pivots


def _unpack_rows(packed: np.ndarray, n: int) -> np.ndarray:
    m, words = packed.shape
    out = np.zeros((m, words * 64), dtype=np.uint8)
    for j in range(64):
        out[:, j::64] = ((packed >> np.uint64(j)) & np.uint64(1)).astype(np.uint8)
    return out[:, :n]


@dataclass
class LdpcCode:
    """A parity-check code with precomputed systematic-encoding structure."""

    h: np.ndarray  # (m, n) uint8 over GF(2)
    n: int = field(init=False)
    m: int = field(init=False)
    k: int = field(init=False)
    info_cols: np.ndarray = field(init=False)  # systematic positions, len k
    pivot_cols: np.ndarray = field(init=False)
    _generator: np.ndarray = field(init=False, repr=False)  # (k, n) uint8
    _row_adj: np.ndarray = field(init=False, repr=False)  # (m, dmax) int64, -1 padded
    _row_mask: np.ndarray = field(init=False, repr=False)
    _col_gather: np.ndarray = field(init=False, repr=False)  # (n, cmax) flat msg index
    _col_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.uint8) & 1
        if h.ndim != 2 or h.size == 0:
            raise CodeError("parity-check matrix must be a nonempty 2-D binary matrix")
        if (h.sum(axis=1) == 0).any():
            raise CodeError("parity-check matrix has an empty row")
        self.h = h
        self.m, self.n = h.shape

        rref, pivots = _rref_gf2(h)
        rank = len(pivots)
        self.k = self.n - rank
        if self.k <= 0:
            raise CodeError(f"code has no information positions (rank {rank} of {self.n})")
        pivot_set = set(pivots)
        self.pivot_cols = np.asarray(pivots, dtype=np.int64)
        self.info_cols = np.asarray(
            [c for c in range(self.n) if c not in pivot_set], dtype=np.int64
        )
        # generator rows: basis codeword per information column
        rref_bits = _unpack_rows(rref, self.n)
        gen = np.zeros((self.k, self.n), dtype=np.uint8)
        gen[np.arange(self.k), self.info_cols] = 1
        gen[:, self.pivot_cols] = rref_bits[:, self.info_cols].T
        self._generator = gen

        # padded adjacency for the message-passing decoder
        row_lists = [np.nonzero(h[r])[0] for r in range(self.m)]
        dmax = max(len(rl) for rl in row_lists)
        self._row_adj = np.full((self.m, dmax), -1, dtype=np.int64)
        self._row_mask = np.zeros((self.m, dmax), dtype=bool)
        for r, rl in enumerate(row_lists):
            self._row_adj[r, : len(rl)] = rl
            self._row_mask[r, : len(rl)] = True
        col_slots: list[list[int]] = [[] for _ in range(self.n)]
        for r in range(self.m):
            for s in range(dmax):
                v = self._row_adj[r, s]
                if v >= 0:
                    col_slots[v].append(r * dmax + s)
        cmax = max((len(cs) for cs in col_slots), default=0)
        if cmax == 0:
            raise CodeError("parity-check matrix has no edges")
        self._col_gather = np.zeros((self.n, cmax), dtype=np.int64)
        self._col_mask = np.zeros((self.n, cmax), dtype=bool)
        for v, cs in enumerate(col_slots):
            self._col_gather[v, : len(cs)] = cs
            self._col_mask[v, : len(cs)] = True

    @property
    def design_rate(self) -> float:
        return self.k / self.n

    def syndrome(self, codeword: np.ndarray) -> np.ndarray:
        return (self.h @ (np.asarray(codeword, dtype=np.uint8) & 1)) % 2


def ldpc_encode(info_bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Encode k information bits into an n-bit codeword with zero syndrome."""
    info = np.asarray(info_bits, dtype=np.uint8) & 1
    if info.shape != (code.k,):
        raise CodeError(f"expected {code.k} information bits, got {info.shape}")
    if not info.any():
        return np.zeros(code.n, dtype=np.uint8)
    return np.bitwise_xor.reduce(code._generator[info.astype(bool)], axis=0)


def ldpc_encode_blocks(info_blocks: np.ndarray, code: LdpcCode) -> np.ndarray:
    """(B, k) -> (B, n); vectorized over blocks."""
    blocks = np.asarray(info_blocks, dtype=np.uint8) & 1
    return (blocks.astype(np.int64) @ code._generator.astype(np.int64) % 2).astype(np.uint8)


def ldpc_decode(
    llrs: np.ndarray,
    code: LdpcCode,
    max_iters: int = 50,
    alpha: float = MIN_SUM_FACTOR,
) -> tuple[np.ndarray, bool]:
    """Normalized min-sum decoding of one block. Positive LLR means bit 0.

    Returns (hard bits, converged); converged is true iff a zero-syndrome
    word was reached within ``max_iters`` iterations.
    """
    bits, converged = ldpc_decode_blocks(llrs[None, :], code, max_iters, alpha)
    return bits[0], bool(converged[0])


def ldpc_decode_blocks(
    llrs: np.ndarray,
    code: LdpcCode,
    max_iters: int = 50,
    alpha: float = MIN_SUM_FACTOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched normalized min-sum over (B, n) LLR blocks."""
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.ndim != 2 or llrs.shape[1] != code.n:
        raise CodeError(f"expected (B, {code.n}) llrs, got {llrs.shape}")
    B = llrs.shape[0]
    m, dmax = code._row_adj.shape
    adj = np.where(code._row_mask, code._row_adj, 0)
    mask = code._row_mask[None, :, :]

    def hard_and_syndrome(totals):
        bits = (totals < 0).astype(np.uint8)
        par = (bits[:, adj] * code._row_mask[None, :, :]).sum(axis=-1) % 2
        # zero totals are undecided ties; a word built on them is not converged
        decided = (np.abs(totals) > 0).all(axis=-1)
        return bits, (par == 0).all(axis=-1) & decided

    out_bits, done = hard_and_syndrome(llrs)
    if done.all():
        return out_bits, done

    v2c = np.where(mask, llrs[:, adj], 0.0)
    for _ in range(max_iters):
        absm = np.where(mask, np.abs(v2c), np.inf)
        sgn = np.where(v2c < 0, -1.0, 1.0)
        sgn = np.where(mask, sgn, 1.0)
        sign_prod = sgn.prod(axis=-1, keepdims=True)
        idx1 = absm.argmin(axis=-1)
        min1 = np.take_along_axis(absm, idx1[..., None], axis=-1)
        tmp = absm.copy()
        np.put_along_axis(tmp, idx1[..., None], np.inf, axis=-1)
        min2 = tmp.min(axis=-1, keepdims=True)
        is_min = np.arange(dmax)[None, None, :] == idx1[..., None]
        min_excl = np.where(is_min, min2, min1)
        # a degree-1 check pins its variable with (finite) full confidence
        min_excl = np.where(np.isfinite(min_excl), min_excl, 1e12)
        c2v = np.where(mask, alpha * sign_prod * sgn * min_excl, 0.0)

        flat = c2v.reshape(B, m * dmax)
        totals = llrs + (flat[:, code._col_gather] * code._col_mask[None, :, :]).sum(axis=-1)
        v2c = np.where(mask, totals[:, adj] - c2v, 0.0)

        bits, ok = hard_and_syndrome(totals)
        newly = ok & ~done
        if newly.any():
            out_bits[newly] = bits[newly]
            done = done | ok
            if done.all():
                break
    if not done.all():
        bits, _ = hard_and_syndrome(totals)
        out_bits[~done] = bits[~done]
    return out_bits, done


def make_regular_code(
    n: int, seed: int, col_weight: int = 3, row_weight: int = 6
) -> LdpcCode:
    """Random (col_weight, row_weight)-regular parity-check code, duplicate-free."""
    if (n * col_weight) % row_weight:
        raise CodeError(
            f"n * col_weight must be divisible by row_weight "
            f"({n} * {col_weight} vs {row_weight})"
        )
    m = n * col_weight // row_weight
    rng = np.random.default_rng(seed)
    var_sockets = np.repeat(np.arange(n), col_weight)
    for _ in range(200):
        perm = rng.permutation(var_sockets)
        rows = np.repeat(np.arange(m), row_weight)
        # resolve duplicate (check, var) edges by local swaps
        clean = True
        for _ in range(50):
            edges = rows.astype(np.int64) * n + perm
            order = np.argsort(edges, kind="stable")
            dup_pos = order[1:][np.diff(edges[order]) == 0]
            if dup_pos.size == 0:
                break
            for p in dup_pos:  # scalar swaps keep perm a permutation
                q = int(rng.integers(perm.size))
                perm[p], perm[q] = perm[q], perm[p]
        else:
            clean = False
        if clean:
            h = np.zeros((m, n), dtype=np.uint8)
            h[rows, perm] = 1
            if (h.sum(axis=1) == row_weight).all() and (h.sum(axis=0) == col_weight).all():
                return LdpcCode(h)
    raise CodeError("could not draw a duplicate-free regular code; try another seed")


def write_alist(code: LdpcCode, path: str) -> str:
    """Standard alist text format (1-based indices, zero padded)."""
    h = code.h
    n, m = code.n, code.m
    col_deg = h.sum(axis=0)
    row_deg = h.sum(axis=1)
    lines = [f"{n} {m}", f"{col_deg.max()} {row_deg.max()}"]
    lines.append(" ".join(str(int(d)) for d in col_deg))
    lines.append(" ".join(str(int(d)) for d in row_deg))
    for v in range(n):
        checks = (np.nonzero(h[:, v])[0] + 1).tolist()
        checks += [0] * (int(col_deg.max()) - len(checks))
        lines.append(" ".join(str(c) for c in checks))
    for r in range(m):
        vs = (np.nonzero(h[r])[0] + 1).tolist()
        vs += [0] * (int(row_deg.max()) - len(vs))
        lines.append(" ".join(str(v) for v in vs))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def load_alist(path: str) -> LdpcCode:
    """Parse an alist parity-check file (bit-exact; zero pads ignored)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [ln.split() for ln in f.read().split("\n") if ln.strip()]
    except OSError as exc:
        raise CodeError(f"cannot read alist file {path!r}: {exc}") from exc
    try:
        n, m = int(lines[0][0]), int(lines[0][1])
        col_deg = [int(x) for x in lines[2]]
        row_deg = [int(x) for x in lines[3]]
        if len(col_deg) != n or len(row_deg) != m:
            raise CodeError(f"degree lists in {path!r} do not match dimensions")
        h = np.zeros((m, n), dtype=np.uint8)
        for v in range(n):
            entries = [int(x) for x in lines[4 + v] if int(x) > 0]
            if len(entries) != col_deg[v]:
                raise CodeError(f"column {v} degree mismatch in {path!r}")
            for c in entries:
                h[c - 1, v] = 1
        for r in range(m):
            entries = [int(x) for x in lines[4 + n + r] if int(x) > 0]
            if sorted(entries) != sorted((np.nonzero(h[r])[0] + 1).tolist()):
                raise CodeError(f"row {r} adjacency mismatch in {path!r}")
    except (IndexError, ValueError) as exc:
        raise CodeError(f"malformed alist file {path!r}: {exc}") from exc
    return LdpcCode(h)


def _main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(description="Generate a regular LDPC code (alist).")
    parser.add_argument("--n", type=int, required=True, help="code length")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--col-weight", type=int, default=3)
    parser.add_argument("--row-weight", type=int, default=6)
    parser.add_argument("--out", required=True, help="output alist path")
    args = parser.parse_args(argv)
    code = make_regular_code(args.n, args.seed, args.col_weight, args.row_weight)
    write_alist(code, args.out)
    print(f"wrote ({args.col_weight},{args.row_weight})-regular n={code.n} k={code.k} -> {args.out}")


if __name__ == "__main__":
    _main()
