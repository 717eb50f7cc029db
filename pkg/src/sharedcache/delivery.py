"""Offline delivery over the shared link and per-user decoding.

Two schemes are implemented:

* ``deliver_distinct``: one round per user position j; in each round, for
  every cache subset S (largest first) the server XORs, over the caches
  λ ∈ S that still have a j-th user, the subfile W^{d}_{S minus λ} that user needs.
* ``deliver_nondistinct``: the φ-subfile of each distinct requested file is
  sent once, users repeating a file within a cache are dropped, and the
  coded rounds (|S| >= 2 only) are restricted to subsets that help a round
  leader.

Coded payloads are zero-padded to their longest component; the log keeps
each component's true length so receivers can strip the padding.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .association import Association, dedup_within_caches, leaders, profile_of
from .errors import NonDistinctDemand, ParamsMismatch, UndecodableSubfile
from .gf2 import eliminate, solve_unit
from .placement import Label, PlacementState, canonical_labels, format_label

CODED = "coded"
UNCODED_SUBFILE = "uncoded-subfile"
UNCODED_FILE = "uncoded-file"


@dataclass(frozen=True)
class Component:
    """One XOR term: ``user`` wants W^file_label (label None = the whole file)."""

    user: int | None
    file: int
    label: Label | None
    length: int


@dataclass(frozen=True, eq=False)
class Transmission:
    kind: str
    round: int
    subset: Label | None
    components: tuple[Component, ...]
    payload: np.ndarray

    @property
    def length(self) -> int:
        return int(self.payload.size)

    def describe(self) -> str:
        return " + ".join(f"W{c.file}_{format_label(c.label)}" for c in self.components)


@dataclass(frozen=True, eq=False)
class TransmissionLog:
    """Ordered server transmissions plus what receivers need to interpret them.

    ``association`` is the association served by the coded rounds (after any
    reduction); ``leaders`` is empty when every served user is a leader.
    """

    transmissions: tuple[Transmission, ...]
    file_size: int
    demand: tuple[int, ...]
    scheme: str
    association: Association
    uncached: tuple[int, ...] = ()
    leaders: Mapping[int, frozenset[int]] = field(default_factory=dict)
    representative: Mapping[int, int] = field(default_factory=dict)
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def total_bits(self) -> int:
        return sum(t.length for t in self.transmissions)

    @property
    def normalized_time(self) -> Fraction:
        return Fraction(self.total_bits, self.file_size)

    def __len__(self):
        return len(self.transmissions)

    def __iter__(self):
        return iter(self.transmissions)

    def _build_index(self):
        if not self._index:
            for t in self.transmissions:
                if t.kind == UNCODED_FILE:
                    self._index[("file", t.components[0].file)] = t
                elif t.round == 0:
                    self._index[("phi", t.components[0].file)] = t
                else:
                    self._index[(t.round, t.subset)] = t
        return self._index

    def at(self, j: int, subset: Label) -> Transmission | None:
        return self._build_index().get((j, tuple(subset)))

    def phi(self, n: int) -> Transmission | None:
        return self._build_index().get(("phi", n))

    def whole_file(self, n: int) -> Transmission | None:
        return self._build_index().get(("file", n))

    def with_payloads(self, payloads: Sequence[np.ndarray]) -> "TransmissionLog":
        """Same log with payloads replaced (e.g. after channel decoding)."""
        if len(payloads) != len(self.transmissions):
            raise ValueError("payload count does not match the log")
        txs = []
        for t, p in zip(self.transmissions, payloads):
            p = np.asarray(p, dtype=np.uint8)
            if p.size != t.length:
                raise ValueError("payload length changed")
            txs.append(Transmission(t.kind, t.round, t.subset, t.components, p))
        return TransmissionLog(tuple(txs), self.file_size, self.demand, self.scheme,
                               self.association, self.uncached, self.leaders,
                               self.representative)


def measured_time(log: TransmissionLog) -> Fraction:
    return log.normalized_time


def num_distinct(demand: Sequence[int]) -> int:
    return len(set(demand))


def _component_bits(placement: PlacementState, c: Component) -> np.ndarray:
    bits = placement.library.bits(c.file)
    return bits if c.label is None else bits[placement.subfile(c.file, c.label)]


def _transmit(placement: PlacementState, kind: str, j: int, subset, comps) -> Transmission:
    length = max(c.length for c in comps)
    payload = np.zeros(length, dtype=np.uint8)
    for c in comps:
        payload[:c.length] ^= _component_bits(placement, c)
    payload.setflags(write=False)
    return Transmission(kind, j, subset, tuple(comps), payload)


def coded_rounds(placement: PlacementState, assoc: Association, demand: Sequence[int], *,
                 min_size: int = 1, round_leaders: Mapping[int, frozenset[int]] | None = None
                 ) -> list[Transmission]:
    """The round/subset loops, run on the cache order of the sorted profile.

    With ``round_leaders`` a subset is sent only if one of its active caches
    serves a leader of that round.
    """
    lam = placement.params.num_caches
    profile, perm = profile_of(assoc)
    out = []
    for j in range(1, profile.num_rounds + 1):
        q_j = None if round_leaders is None else round_leaders[j]
        for s in range(lam, min_size - 1, -1):
            for canon in combinations(range(1, lam + 1), s):
                active = sorted(perm[c - 1] for c in canon if profile[c - 1] >= j)
                if not active:
                    continue
                users = [assoc.groups[p - 1][j - 1] for p in active]
                if q_j is not None and not q_j.intersection(users):
                    continue
                subset = tuple(sorted(perm[c - 1] for c in canon))
                comps = []
                for p, u in zip(active, users):
                    f = demand[u - 1]
                    lab = tuple(x for x in subset if x != p)
                    comps.append(Component(u, f, lab, placement.subfile_size(f, lab)))
                kind = CODED if len(comps) > 1 else UNCODED_SUBFILE
                out.append(_transmit(placement, kind, j, subset, comps))
    return out


def _check_inputs(placement: PlacementState, assoc: Association, demand: Sequence[int]):
    p = placement.params
    if assoc.num_caches != p.num_caches:
        raise ParamsMismatch(f"association has {assoc.num_caches} caches, params say {p.num_caches}")
    if len(demand) != p.num_users:
        raise ParamsMismatch(f"demand has {len(demand)} entries for K={p.num_users}")
    try:
        assoc.check_covers(p.num_users)
    except ValueError as exc:
        raise ParamsMismatch(str(exc)) from exc


def _check_cached(placement: PlacementState, files) -> None:
    missing = sorted(set(files) - set(placement.files))
    if missing:
        raise ParamsMismatch(f"files {missing} are not in the placement")


def deliver_distinct(placement: PlacementState, assoc: Association, demand: Sequence[int], *,
                     strict: bool = True) -> TransmissionLog:
    """Delivery for distinct demands.

    ``strict=False`` runs the same loops on a demand with repeats (used as a
    baseline for the repeated-demand scheme).
    """
    demand = tuple(int(x) for x in demand)
    _check_inputs(placement, assoc, demand)
    _check_cached(placement, demand)
    if strict and num_distinct(demand) != len(demand):
        raise NonDistinctDemand(f"demand {demand} has repeats; use deliver_nondistinct")
    txs = coded_rounds(placement, assoc, demand)
    return TransmissionLog(tuple(txs), placement.params.file_size, demand, "distinct", assoc)


def _phi_transmissions(placement: PlacementState, files) -> list[Transmission]:
    return [_transmit(placement, UNCODED_SUBFILE, 0, (),
                      [Component(None, n, (), placement.subfile_size(n, ()))])
            for n in files]


def nondistinct_phase(placement: PlacementState, assoc: Association, demand: Sequence[int]):
    """φ-subfiles, within-cache dedup and leader-gated rounds for ``assoc``."""
    files = sorted({demand[u - 1] for u in assoc.users})
    txs = _phi_transmissions(placement, files)
    reduced = dedup_within_caches(assoc, demand)
    rounds = reduced.profile.num_rounds
    round_leaders = {j: leaders(reduced.association, demand, j) for j in range(1, rounds + 1)}
    txs += coded_rounds(placement, reduced.association, demand, min_size=2,
                        round_leaders=round_leaders)
    return txs, reduced, round_leaders


def deliver_nondistinct(placement: PlacementState, assoc: Association,
                        demand: Sequence[int]) -> TransmissionLog:
    demand = tuple(int(x) for x in demand)
    _check_inputs(placement, assoc, demand)
    _check_cached(placement, demand)
    txs, reduced, round_leaders = nondistinct_phase(placement, assoc, demand)
    return TransmissionLog(tuple(txs), placement.params.file_size, demand, "nondistinct",
                           reduced.association, leaders=round_leaders,
                           representative=dict(reduced.representative))


# -- decoding -----------------------------------------------------------------

class _Reader:
    """Memoized reads from one cache, turning access violations into decode errors."""

    def __init__(self, placement: PlacementState, cache: int):
        self.view = placement.cache_view(cache)
        self._memo: dict = {}

    def holds(self, label) -> bool:
        return self.view.holds(label)

    def read(self, n: int, label: Label) -> np.ndarray:
        key = (n, label)
        got = self._memo.get(key)
        if got is None:
            try:
                got = self.view.read(n, label)
            except PermissionError as exc:
                raise UndecodableSubfile(str(exc)) from exc
            self._memo[key] = got
        return got


def _cached_part(placement: PlacementState, reader: _Reader, d: int) -> np.ndarray:
    out = np.zeros(placement.params.file_size, dtype=np.uint8)
    for label in canonical_labels(placement.params.num_caches):
        if reader.holds(label):
            out[placement.subfile(d, label)] = reader.read(d, label)
    return out


def _whole(log: TransmissionLog, d: int) -> np.ndarray:
    t = log.whole_file(d)
    if t is None:
        raise UndecodableSubfile(f"file {d} was never sent uncoded")
    return np.array(t.payload, dtype=np.uint8)


def _cancel(placement: PlacementState, log: TransmissionLog, cache: int, j: int,
            d: int) -> np.ndarray:
    """Direct decoding: strip cached side information from the round-j transmissions."""
    reader = _Reader(placement, cache)
    out = _cached_part(placement, reader, d)
    for label in canonical_labels(placement.params.num_caches):
        if cache in label:
            continue
        idx = placement.subfile(d, label)
        t = log.phi(d) if not label else None
        if t is not None:
            value = np.array(t.payload)
        else:
            subset = tuple(sorted(label + (cache,)))
            t = log.at(j, subset)
            mine = None if t is None else next((c for c in t.components if c.label == label), None)
            if mine is None or mine.file != d:
                if idx.size == 0:
                    continue
                raise UndecodableSubfile(
                    f"no round-{j} transmission carries W{d}_{format_label(label)}")
            value = np.array(t.payload[:mine.length])
            for c in t.components:
                if c is not mine:
                    value[:c.length] ^= reader.read(c.file, c.label)[:mine.length]
        if value.size != idx.size:
            raise UndecodableSubfile(f"length mismatch for W{d}_{format_label(label)}")
        out[idx] = value
    return out


def decode_user(user: int, assoc: Association, placement: PlacementState,
                log: TransmissionLog) -> np.ndarray:
    """Recover the user's file from its cache and a distinct-demand log."""
    d = log.demand[user - 1]
    if d in log.uncached:
        return _whole(log, d)
    cache = assoc.cache_of(user)
    j = log.association.position_of(user)
    return _cancel(placement, log, cache, j, d)


def _solve(placement: PlacementState, log: TransmissionLog, cache: int, d: int) -> np.ndarray:
    """Decode by GF(2) elimination over every received transmission.

    XOR aligns bit offsets, so the system splits by offset inside subfiles.
    Offsets where the same set of components is non-empty share one
    coefficient matrix; each such band is eliminated once and the wanted
    bits are rebuilt as XORs of the band's residual payloads.
    """
    reader = _Reader(placement, cache)
    out = _cached_part(placement, reader, d)
    wanted = [lab for lab in canonical_labels(placement.params.num_caches)
              if cache not in lab and placement.subfile_size(d, lab) > 0]
    if not wanted:
        return out
    columns: dict = {}
    for lab in wanted:
        columns.setdefault((d, lab), len(columns))
    txs = [t for t in log.transmissions if t.length > 0]
    for t in txs:
        for c in t.components:
            if not reader.holds(c.label):
                columns.setdefault((c.file, c.label), len(columns))
    cuts = {0}
    cuts.update(c.length for t in txs for c in t.components)
    cuts.update(placement.subfile_size(d, lab) for lab in wanted)
    cuts = sorted(cuts)
    for a, b in zip(cuts, cuts[1:]):
        rows, residuals = [], []
        for t in txs:
            if t.length <= a:
                continue
            row = 0
            res = np.array(t.payload[a:b])
            for c in t.components:
                if c.length <= a:
                    continue
                if reader.holds(c.label):
                    res ^= reader.read(c.file, c.label)[a:b]
                else:
                    row |= 1 << columns[(c.file, c.label)]
            if row:
                rows.append(row)
                residuals.append(res)
        elim = eliminate(rows)
        for lab in wanted:
            idx = placement.subfile(d, lab)
            if idx.size <= a:
                continue
            combo = solve_unit(rows, columns[(d, lab)], elim)
            if combo is None:
                raise UndecodableSubfile(
                    f"cache-{cache} user cannot solve W{d}_{format_label(lab)} at offsets {a}..{b}")
            value = np.zeros(b - a, dtype=np.uint8)
            i = 0
            while combo:
                if combo & 1:
                    value ^= residuals[i]
                combo >>= 1
                i += 1
            out[idx[a:b]] = value
    return out


def decode_user_general(user: int, assoc: Association, placement: PlacementState,
                        log: TransmissionLog) -> np.ndarray:
    """Decoder for any log: leaders cancel directly, everyone else solves over GF(2).

    Users dropped as within-cache duplicates decode exactly like the retained
    user they map to.
    """
    d = log.demand[user - 1]
    if d in log.uncached:
        return _whole(log, d)
    cache = assoc.cache_of(user)
    rep = log.representative.get(user, user)
    j = log.association.position_of(rep)
    if not log.leaders or rep in log.leaders.get(j, ()):
        return _cancel(placement, log, cache, j, d)
    return _solve(placement, log, cache, d)


def decode_all(assoc: Association, placement: PlacementState, log: TransmissionLog,
               general: bool | None = None) -> dict[int, bool]:
    """Decode every user and compare with the library; returns user -> success."""
    if general is None:
        general = bool(log.leaders)
    decode = decode_user_general if general else decode_user
    result = {}
    for u in range(1, len(log.demand) + 1):
        try:
            bits = decode(u, assoc, placement, log)
        except UndecodableSubfile:
            result[u] = False
            continue
        result[u] = bool(np.array_equal(bits, placement.library.bits(log.demand[u - 1])))
    return result


# -- trace format -------------------------------------------------------------

TRACE_HEADER = "# round\tkind\tsubset\tcomponents\tlength\tsha256"


def payload_digest(payload: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(int(payload.size).to_bytes(8, "big"))
    h.update(np.packbits(np.asarray(payload, dtype=np.uint8)).tobytes())
    return h.hexdigest()[:16]


def _format_component(c: Component) -> str:
    who = "*" if c.user is None else f"u{c.user}"
    return f"{who}:W{c.file}_{format_label(c.label)}:{c.length}"


def to_trace(log: TransmissionLog) -> str:
    """One tab-separated line per transmission.

    Columns: round, kind, subset (``{1,2}``, ``{}`` for φ, ``*`` for a whole
    file), components joined by ``+`` as ``u<user>:W<file>_<label>:<length>``
    (``*`` for no single user), payload length in bits, first 16 hex digits of
    sha256(length as 8-byte big-endian || packbits(payload)).
    """
    lines = [TRACE_HEADER]
    for t in log.transmissions:
        comps = "+".join(_format_component(c) for c in t.components)
        lines.append(f"{t.round}\t{t.kind}\t{format_label(t.subset)}\t{comps}\t{t.length}\t"
                     f"{payload_digest(t.payload)}")
    return "\n".join(lines) + "\n"


def _parse_label(text: str) -> Label | None:
    if text == "*":
        return None
    inner = text.strip()[1:-1]
    return tuple(int(x) for x in inner.split(",")) if inner else ()


def parse_trace(text: str) -> list[dict]:
    """Inverse of ``to_trace`` (without payload bits)."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            raise ValueError(f"line {lineno}: expected 6 columns, got {len(cols)}")
        comps = []
        for item in cols[3].split("+"):
            who, name, length = item.split(":")
            file_part, label_part = name[1:].split("_", 1)
            comps.append(Component(None if who == "*" else int(who[1:]), int(file_part),
                                   _parse_label(label_part), int(length)))
        records.append({"round": int(cols[0]), "kind": cols[1], "subset": _parse_label(cols[2]),
                        "components": tuple(comps), "length": int(cols[4]), "sha256": cols[5]})
    return records
