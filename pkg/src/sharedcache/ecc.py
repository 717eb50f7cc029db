"""Error-correcting delivery: concatenate the delivery bits with a binary
linear block code and decode received words by syndrome lookup.

Matrix files hold one row per line as a string of 0/1 characters; blank
lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from itertools import combinations
from math import ceil
from typing import Iterable, Sequence

import numpy as np

from . import gf2
from .delivery import TransmissionLog
from .errors import (DimensionMismatch, ParamsInvalid, TooManyErrors, UncorrectableSyndrome,
                     UnknownCodeParameters)

TABLE = "TABLE"
CONSTRUCTIVE = "CONSTRUCTIVE"
EXHAUSTIVE_DISTANCE_MAX_K = 20
MAX_REDUNDANCY = 24

# Known optimal lengths N_2[k, d] that no built-in family reaches.
_OPTIMAL_TABLE = {(7, 3): 11}


def parse_matrix(text: str) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if set(line) - {"0", "1"}:
            raise ParamsInvalid(f"matrix line {lineno}: only 0/1 characters allowed")
        rows.append([int(c) for c in line])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParamsInvalid("matrix rows must be non-empty and of equal length")
    return np.array(rows, dtype=np.uint8)


def format_matrix(m: np.ndarray, comment: str | None = None) -> str:
    lines = [f"# {comment}"] if comment else []
    lines += ["".join(str(int(b)) for b in row) for row in gf2.as_gf2(m)]
    return "\n".join(lines) + "\n"


class LinearBlockCode:
    """Binary [n, k, d] code given by a full-rank generator matrix."""

    def __init__(self, G, min_distance: int | None = None, name: str = ""):
        G = gf2.as_gf2(G)
        if G.ndim != 2 or G.shape[0] > G.shape[1] or G.shape[0] == 0:
            raise DimensionMismatch(f"generator shape {G.shape} is not k x n with 1 <= k <= n")
        k, n = G.shape
        _, pivots = gf2.rref(G)
        if len(pivots) != k:
            raise DimensionMismatch("generator matrix is not full rank")
        if n - k > MAX_REDUNDANCY:
            raise ParamsInvalid(f"n - k = {n - k} exceeds the syndrome table limit {MAX_REDUNDANCY}")
        G.setflags(write=False)
        self.G = G
        self.k, self.n = k, n
        self.name = name or f"[{n},{k}]"
        self.H = gf2.nullspace(G)
        self.H.setflags(write=False)
        # information set: k columns on which G is invertible
        self.info = np.array(pivots)
        self._decode_matrix = gf2.inverse(G[:, self.info])
        if k <= EXHAUSTIVE_DISTANCE_MAX_K:
            d = self._exhaustive_distance()
            if min_distance is not None and min_distance != d:
                raise ParamsInvalid(f"claimed distance {min_distance}, actual {d}")
            self.d = d
        elif min_distance is None:
            raise ParamsInvalid(f"k = {k} is too large to verify the distance; pass min_distance")
        else:
            self.d = int(min_distance)
        self.t = (self.d - 1) // 2
        self._table = self._coset_leaders()

    def __repr__(self):
        return f"LinearBlockCode({self.name}, n={self.n}, k={self.k}, d={self.d})"

    def _exhaustive_distance(self) -> int:
        if self.k == self.n:
            return 1
        msgs = (np.arange(1, 1 << self.k)[:, None] >> np.arange(self.k)) & 1
        weights = gf2.matmul(msgs, self.G).sum(axis=1)
        return int(weights.min())

    def _syndrome_key(self, word: np.ndarray) -> int:
        s = gf2.matmul(self.H, word.reshape(-1, 1)).ravel() if self.H.size else np.zeros(0)
        return gf2.pack_row(s)

    def _coset_leaders(self) -> dict[int, np.ndarray]:
        """Minimum-weight leaders up to weight t; lexicographic order settles ties."""
        table: dict[int, np.ndarray] = {}
        for w in range(self.t + 1):
            for pos in combinations(range(self.n), w):
                e = np.zeros(self.n, dtype=np.uint8)
                e[list(pos)] = 1
                table.setdefault(self._syndrome_key(e), e)
        return table

    @property
    def table_size(self) -> int:
        return len(self._table)

    def encode(self, message) -> np.ndarray:
        m = gf2.as_gf2(message)
        if m.shape[-1] != self.k:
            raise DimensionMismatch(f"message length {m.shape[-1]} != k = {self.k}")
        return gf2.matmul(m, self.G)

    def syndrome(self, word) -> np.ndarray:
        w = gf2.as_gf2(word)
        return gf2.matmul(w, self.H.T)

    def correct(self, word) -> np.ndarray:
        w = gf2.as_gf2(word)
        if w.shape != (self.n,):
            raise DimensionMismatch(f"received word length {w.shape} != n = {self.n}")
        leader = self._table.get(self._syndrome_key(w))
        if leader is None:
            raise UncorrectableSyndrome(
                f"syndrome {self.syndrome(w).tolist()} has no leader of weight <= {self.t}")
        return w ^ leader

    def unencode(self, codeword) -> np.ndarray:
        c = gf2.as_gf2(codeword)
        return gf2.matmul(c[..., self.info], self._decode_matrix)

    def decode(self, word) -> np.ndarray:
        return self.unencode(self.correct(word))


def identity_code(k: int) -> LinearBlockCode:
    return LinearBlockCode(np.eye(k, dtype=np.uint8), name=f"identity[{k},{k},1]")


def repetition_code(d: int) -> LinearBlockCode:
    return LinearBlockCode(np.ones((1, d), dtype=np.uint8), name=f"repetition[{d},1,{d}]")


def _redundancy_d3(k: int) -> int:
    r = 2
    while (1 << r) < k + r + 1:
        r += 1
    return r


def shortened_hamming(k: int) -> LinearBlockCode:
    """Systematic [k + r, k, 3] code, G = [I | P].

    Rows of P are distinct r-bit vectors of weight >= 2, taken by increasing
    weight and then value, so the parity-check columns are distinct and nonzero.
    """
    if k < 1:
        raise ParamsInvalid("k must be positive")
    r = _redundancy_d3(k)
    vectors = sorted((v for v in range(1 << r) if bin(v).count("1") >= 2),
                     key=lambda v: (bin(v).count("1"), v))[:k]
    P = np.array([[(v >> (r - 1 - i)) & 1 for i in range(r)] for v in vectors], dtype=np.uint8)
    G = np.hstack([np.eye(k, dtype=np.uint8), P])
    return LinearBlockCode(G, name=f"shortened-hamming[{k + r},{k},3]")


def load_code(text: str, name: str = "", min_distance: int | None = None) -> LinearBlockCode:
    return LinearBlockCode(parse_matrix(text), min_distance=min_distance, name=name)


def hamming_11_7_3() -> LinearBlockCode:
    """The fixed [11,7,3] code shipped with the package."""
    text = resources.files("sharedcache").joinpath("data/hamming_11_7_3.txt").read_text()
    return load_code(text, name="hamming[11,7,3]", min_distance=3)


def lookup_entry(k: int, d: int) -> tuple[int, str]:
    """(N_2[k, d], TABLE | CONSTRUCTIVE). Every family listed meets its lower bound."""
    if k < 1 or d < 1:
        raise UnknownCodeParameters(f"no code for k={k}, d={d}")
    if (k, d) in _OPTIMAL_TABLE:
        return _OPTIMAL_TABLE[(k, d)], TABLE
    if d == 1:
        return k, CONSTRUCTIVE
    if k == 1:
        return d, CONSTRUCTIVE
    if d == 2:
        return k + 1, CONSTRUCTIVE
    if d == 3:
        return k + _redundancy_d3(k), CONSTRUCTIVE
    raise UnknownCodeParameters(f"N_2[{k},{d}] is not in the built-in table")


def lookup_optimal_length(k: int, d: int) -> int:
    return lookup_entry(k, d)[0]


def code_for(k: int, delta: int) -> LinearBlockCode:
    """A built-in optimal code of dimension k correcting ``delta`` errors."""
    d = 2 * delta + 1
    if delta == 0:
        return identity_code(k)
    if k == 1:
        return repetition_code(d)
    if d == 3:
        code = hamming_11_7_3() if k == 7 else shortened_hamming(k)
        return code
    raise UnknownCodeParameters(f"no built-in code for k={k}, delta={delta}")


@dataclass(frozen=True, eq=False)
class CodedDeliveryRun:
    """Delivery bits split into k-bit blocks (the last one zero-padded), each
    encoded with ``code``; ``errors`` are flipped positions in the stream."""

    log: TransmissionLog
    code: LinearBlockCode
    delta: int
    plaintext: np.ndarray
    padding: int
    codeword: np.ndarray
    errors: tuple[int, ...] = ()
    received: np.ndarray | None = None

    @property
    def blocks(self) -> int:
        return self.codeword.size // self.code.n

    @property
    def coded_bits(self) -> int:
        return int(self.codeword.size)

    @property
    def coded_time(self) -> Fraction:
        return Fraction(self.coded_bits, self.log.file_size)

    @property
    def padding_time(self) -> Fraction:
        return Fraction(self.padding, self.log.file_size)


def plaintext_of(log: TransmissionLog) -> np.ndarray:
    if not log.transmissions:
        return np.zeros(0, dtype=np.uint8)
    return np.concatenate([np.asarray(t.payload, dtype=np.uint8) for t in log.transmissions])


def encode_concatenated(log: TransmissionLog, code: LinearBlockCode, delta: int = 0, *,
                        single_block: bool = False) -> CodedDeliveryRun:
    if code.d < 2 * delta + 1:
        raise DimensionMismatch(f"distance {code.d} cannot correct {delta} errors")
    plain = plaintext_of(log)
    if single_block and plain.size > code.k:
        raise DimensionMismatch(f"{plain.size} delivery bits exceed k = {code.k}")
    blocks = max(1, ceil(plain.size / code.k))
    padding = blocks * code.k - plain.size
    padded = np.concatenate([plain, np.zeros(padding, dtype=np.uint8)]).reshape(blocks, code.k)
    codeword = code.encode(padded).ravel()
    return CodedDeliveryRun(log, code, delta, plain, padding, codeword, (), codeword.copy())


def inject_errors(run: CodedDeliveryRun, positions: Iterable[int]) -> CodedDeliveryRun:
    positions = tuple(sorted(set(int(p) for p in positions)))
    if len(positions) > run.delta:
        raise TooManyErrors(f"{len(positions)} errors exceed delta = {run.delta}")
    if any(not 0 <= p < run.coded_bits for p in positions):
        raise ParamsInvalid(f"error positions must lie in 0..{run.coded_bits - 1}")
    received = run.codeword.copy()
    received[list(positions)] ^= 1
    return dataclasses.replace(run, errors=positions, received=received)


def syndrome_decode(run: CodedDeliveryRun, code: LinearBlockCode | None = None) -> np.ndarray:
    """Recovered delivery bits (padding stripped)."""
    code = code or run.code
    words = run.received.reshape(run.blocks, code.n)
    plain = np.concatenate([code.decode(w) for w in words])
    return plain[:run.plaintext.size]


def restore_log(run: CodedDeliveryRun, bits: np.ndarray) -> TransmissionLog:
    """Put decoded bits back into the transmissions for the usual user decoding."""
    payloads, at = [], 0
    for t in run.log.transmissions:
        payloads.append(bits[at:at + t.length])
        at += t.length
    return run.log.with_payloads(payloads)


def repetition_per_bit_time(log: TransmissionLog, delta: int) -> Fraction:
    """Baseline: every delivery bit repeated 2*delta + 1 times."""
    return (2 * delta + 1) * log.normalized_time


def ecc_roundtrip(log: TransmissionLog, code: LinearBlockCode, delta: int,
                  positions: Sequence[int] = ()) -> tuple[CodedDeliveryRun, TransmissionLog]:
    run = inject_errors(encode_concatenated(log, code, delta), positions)
    return run, restore_log(run, syndrome_decode(run))
