"""GF(2) linear algebra.

Two representations are used: dense ``uint8`` numpy matrices for code
matrices, and Python ints as bit rows (bit ``c`` is column ``c``) for the
many small eliminations done by the decoder and the min-rank search.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def as_gf2(a) -> np.ndarray:
    return (np.asarray(a, dtype=np.int64) & 1).astype(np.uint8)


def rref(a) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns."""
    r = as_gf2(a).copy()
    if r.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    rows, cols = r.shape
    pivots: list[int] = []
    top = 0
    for c in range(cols):
        if top == rows:
            break
        hits = np.flatnonzero(r[top:, c])
        if hits.size == 0:
            continue
        p = top + int(hits[0])
        if p != top:
            r[[top, p]] = r[[p, top]]
        others = np.flatnonzero(r[:, c])
        others = others[others != top]
        if others.size:
            r[others] ^= r[top]
        pivots.append(c)
        top += 1
    return r, pivots


def rank(a) -> int:
    return len(rref(a)[1])


def nullspace(a) -> np.ndarray:
    """Basis (as rows) of {x : a x^T = 0}."""
    a = as_gf2(a)
    cols = a.shape[1]
    r, pivots = rref(a)
    free = [c for c in range(cols) if c not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for row, p in enumerate(pivots):
            basis[i, p] = r[row, f]
    return basis


def inverse(a) -> np.ndarray:
    a = as_gf2(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix is not square")
    r, pivots = rref(np.hstack([a, np.eye(n, dtype=np.uint8)]))
    if pivots[:n] != list(range(n)):
        raise np.linalg.LinAlgError("matrix is singular over GF(2)")
    return r[:, n:]


def matmul(a, b) -> np.ndarray:
    return (as_gf2(a).astype(np.int64) @ as_gf2(b).astype(np.int64) & 1).astype(np.uint8)


# -- bit-row (int) helpers -------------------------------------------------

def pack_row(bits: Iterable[int]) -> int:
    out = 0
    for i, b in enumerate(bits):
        if b & 1:
            out |= 1 << i
    return out


def unpack_row(row: int, width: int) -> np.ndarray:
    return np.array([(row >> i) & 1 for i in range(width)], dtype=np.uint8)


def rank_rows(rows: Sequence[int]) -> int:
    """Rank of int bit rows (xor basis insertion)."""
    basis: dict[int, int] = {}
    for v in rows:
        while v:
            top = v.bit_length() - 1
            b = basis.get(top)
            if b is None:
                basis[top] = v
                break
            v ^= b
    return len(basis)


def eliminate(rows: Sequence[int]) -> tuple[list[int], list[int], list[int]]:
    """Full Gauss-Jordan elimination of int rows, tracking combinations.

    Returns ``(reduced, combos, pivots)``: ``reduced[i]`` equals the XOR of
    the input rows flagged in ``combos[i]``. Rows ``0..len(pivots)-1`` are
    in reduced echelon form with pivot column ``pivots[i]``; the remaining
    rows are zero.
    """
    reduced = list(rows)
    combos = [1 << i for i in range(len(rows))]
    pivots: list[int] = []
    top = 0
    width = max((r.bit_length() for r in reduced), default=0)
    for c in range(width):
        bit = 1 << c
        p = next((i for i in range(top, len(reduced)) if reduced[i] & bit), None)
        if p is None:
            continue
        reduced[top], reduced[p] = reduced[p], reduced[top]
        combos[top], combos[p] = combos[p], combos[top]
        for i in range(len(reduced)):
            if i != top and reduced[i] & bit:
                reduced[i] ^= reduced[top]
                combos[i] ^= combos[top]
        pivots.append(c)
        top += 1
        if top == len(reduced):
            break
    return reduced, combos, pivots


def solve_unit(rows: Sequence[int], column: int,
               _cache: tuple[list[int], list[int], list[int]] | None = None) -> int | None:
    """Combination of ``rows`` whose XOR is the unit vector on ``column``.

    Returns the combination as an int bitmask over rows, or ``None`` when the
    unit vector is not in the row space.
    """
    reduced, combos, pivots = _cache if _cache is not None else eliminate(rows)
    try:
        i = pivots.index(column)
    except ValueError:
        return None
    if reduced[i] != 1 << column:
        return None
    return combos[i]
