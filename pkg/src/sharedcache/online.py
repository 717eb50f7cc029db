"""Online coded caching with least-recently-sent (LRS) replacement.

Caches prefetch from a list of N' = βN files. Per slot: the popular set
evolves, demanded files that are not cached are sent whole, the rest is
served by the offline rounds, and each uncached file then replaces the
least recently sent cached file in every cache.

Send clocks are ``(slot, rank)`` pairs. Whole files sent uncoded get ranks
1, 2, ... in send order; every file appearing in the coded phase of a slot
gets the same rank (one past the last uncoded send). Files never sent keep
``(0, 0)``. Ties on the clock are broken by the smallest ordering parameter,
and the new file inherits the evicted file's parameter.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import prng
from .analytics import t_online
from .association import Association, profile_of
from .converse import certify_optimality
from .delivery import (UNCODED_FILE, Component, TransmissionLog, _transmit, coded_rounds,
                       decode_all, nondistinct_phase, num_distinct)
from .errors import (ArrivalAlreadyPopular, DemandOutsidePopularSet, ParamsInvalid,
                     ParamsMismatch, QuotaNonIntegral)
from .placement import EXACT, Library, PlacementState, SystemParams, place_exact, place_random

NEVER = (0, 0)


@dataclass(frozen=True, eq=False)
class OnlineState:
    params: SystemParams
    placement: PlacementState
    order: Mapping[int, int]
    popular: frozenset[int]
    last_sent: Mapping[int, tuple[int, int]] = field(default_factory=dict)
    t: int = 0
    seed: int = 0

    def __post_init__(self):
        files = set(self.placement.files)
        if set(self.order) != files:
            raise ParamsInvalid("ordering parameters must cover exactly the cached files")
        if sorted(self.order.values()) != list(range(1, len(files) + 1)):
            raise ParamsInvalid("ordering parameters must be a permutation of 1..N'")
        if len(self.popular) != self.params.num_files:
            raise ParamsInvalid(f"popular set has {len(self.popular)} files, N={self.params.num_files}")

    @property
    def cached_files(self) -> tuple[int, ...]:
        """Cached file ids sorted by ordering parameter."""
        return tuple(sorted(self.order, key=self.order.get))

    def clock(self, n: int) -> tuple[int, int]:
        return self.last_sent.get(n, NEVER)


def initial_state(params: SystemParams, files: Sequence[int], popular: Iterable[int], *,
                  order: Sequence[int] | None = None, mode: str = EXACT, seed: int = 0,
                  library: Library | None = None) -> OnlineState:
    """Prefetch ``files`` (N' of them). ``order[i]`` is the parameter of ``files[i]``;
    by default a seeded shuffle of 1..N'."""
    files = list(files)
    library = library or Library(params.file_size, seed)
    if mode == EXACT:
        placement = place_exact(params, files=files, library=library)
    else:
        placement = place_random(params, seed, files=files, library=library)
    if order is None:
        perm = prng.generator(prng.derive_key(seed, 0x6F72646572)).permutation(len(files)) + 1
        order = [int(x) for x in perm]
    if len(order) != len(files):
        raise ParamsInvalid("one ordering parameter per cached file is required")
    return OnlineState(params, placement, dict(zip(files, order)), frozenset(popular), {}, 0, seed)


def evolve_popular(state: OnlineState, arrivals: Iterable) -> tuple[OnlineState, list[int]]:
    """Swap arrivals into the popular set, one departure each.

    An arrival is a file id (a uniformly random popular file departs, seeded
    by (seed, slot, arrival index)) or a pair ``(new, departing)``.
    Returns the new state and the departed files.
    """
    popular = set(state.popular)
    departed = []
    slot = state.t + 1
    for i, item in enumerate(arrivals):
        new, leaving = (item, None) if isinstance(item, (int, np.integer)) else item
        new = int(new)
        if new in popular:
            raise ArrivalAlreadyPopular(f"file {new} is already popular")
        if leaving is None:
            pool = sorted(popular)
            rng = prng.generator(prng.derive_key(state.seed, slot, i, 0x6576))
            leaving = pool[int(rng.integers(len(pool)))]
        elif leaving not in popular:
            raise ParamsInvalid(f"departing file {leaving} is not popular")
        popular.remove(leaving)
        popular.add(new)
        departed.append(int(leaving))
    return dataclasses.replace(state, popular=frozenset(popular)), departed


class SlotDelivery(NamedTuple):
    log: TransmissionLog
    association: Association
    uncached: tuple[int, ...]


def lrs_deliver(state: OnlineState, assoc: Association, demand: Sequence[int]) -> SlotDelivery:
    """Send uncached demanded files whole, then run the offline rounds on the rest.

    Demands repeated across users are an extension: the remainder goes through
    the repeated-demand scheme.
    """
    demand = tuple(int(x) for x in demand)
    params = state.params
    if len(demand) != params.num_users or assoc.num_caches != params.num_caches:
        raise ParamsMismatch("demand/association do not match the system parameters")
    outside = sorted(set(demand) - state.popular)
    if outside:
        raise DemandOutsidePopularSet(f"files {outside} are not in the popular set")
    placement = state.placement
    uncached: list[int] = []
    requesters: list[int] = []
    for k, f in enumerate(demand, start=1):
        if f not in placement:
            requesters.append(k)
            if f not in uncached:
                uncached.append(f)
    txs = []
    for f in uncached:
        first = demand.index(f) + 1
        txs.append(_transmit(placement, UNCODED_FILE, 0, None,
                             [Component(first, f, None, params.file_size)]))
    reduced = assoc.without(requesters)
    rest = [demand[u - 1] for u in reduced.users]
    if num_distinct(rest) == len(rest):
        txs += coded_rounds(placement, reduced, demand)
        log = TransmissionLog(tuple(txs), params.file_size, demand, "online", reduced,
                              tuple(uncached))
    else:
        more, red, round_leaders = nondistinct_phase(placement, reduced, demand)
        log = TransmissionLog(tuple(txs + more), params.file_size, demand, "online-nondistinct",
                              red.association, tuple(uncached), round_leaders,
                              dict(red.representative))
    return SlotDelivery(log, reduced, tuple(uncached))


@dataclass(frozen=True)
class Eviction:
    new_file: int
    evicted: int
    candidates: tuple[int, ...]
    tie_broken_by_order: bool


def send_clocks(log: TransmissionLog, slot: int) -> dict[int, tuple[int, int]]:
    clocks: dict[int, tuple[int, int]] = {}
    rank = 0
    for t in log.transmissions:
        if t.kind == UNCODED_FILE:
            rank += 1
            clocks[t.components[0].file] = (slot, rank)
    coded = (slot, rank + 1)
    for t in log.transmissions:
        if t.kind != UNCODED_FILE:
            for c in t.components:
                clocks.setdefault(c.file, coded)
    return clocks


def cache_update(state: OnlineState, demand: Sequence[int],
                 log: TransmissionLog) -> tuple[OnlineState, list[Eviction]]:
    """Record this slot's sends, then replace LRS files with the uncached demands."""
    params = state.params
    if params.quota.denominator != 1:
        raise QuotaNonIntegral(f"M*F/N' = {params.quota} is not an integer")
    slot = state.t + 1
    last_sent = dict(state.last_sent)
    last_sent.update(send_clocks(log, slot))
    placement = state.placement
    order = dict(state.order)
    evictions = []
    for new in log.uncached:
        oldest = min(last_sent.get(n, NEVER) for n in order)
        candidates = tuple(sorted(n for n in order if last_sent.get(n, NEVER) == oldest))
        victim = min(candidates, key=order.get)
        evictions.append(Eviction(new, victim, candidates, len(candidates) > 1))
        placement = placement.replace_file(victim, new, slot)
        order[new] = order.pop(victim)
        last_sent.pop(victim, None)
    new_state = dataclasses.replace(state, placement=placement, order=order,
                                    last_sent=last_sent, t=slot)
    return new_state, evictions


@dataclass
class SlotReport:
    slot: int
    arrivals: tuple[int, ...]
    departures: tuple[int, ...]
    demand: tuple[int, ...]
    measured: Fraction
    u_count: int
    formula: Fraction | None
    evictions: list[Eviction]
    cached_after: tuple[int, ...]
    decoded: dict[int, bool]
    verdict: object = None

    @property
    def ok(self) -> bool:
        formula_ok = self.formula is None or self.formula == self.measured
        verdict_ok = self.verdict is None or self.verdict.status == "OPTIMAL"
        return all(self.decoded.values()) and formula_ok and verdict_ok


def run_slot(state: OnlineState, assoc: Association, arrivals, demand,
             verify: bool = True, certify: bool = False) -> tuple[OnlineState, SlotReport]:
    """One slot. ``certify`` attaches a converse verdict (exact mode, distinct demands)."""
    state, departed = evolve_popular(state, arrivals)
    slot = state.t + 1
    delivery = lrs_deliver(state, assoc, demand)
    log = delivery.log
    decoded = decode_all(assoc, state.placement, log) if verify else {}
    formula = None
    distinct = num_distinct(demand) == len(demand)
    if distinct and state.placement.mode == EXACT and state.params.cache_size > 0:
        formula = t_online(profile_of(delivery.association)[0], len(delivery.uncached),
                           state.params)
    verdict = None
    if certify and formula is not None:
        verdict = certify_optimality(state.placement, assoc, demand, log)
    new_state, evictions = cache_update(state, demand, log)
    new_arrivals = tuple(int(a if isinstance(a, (int, np.integer)) else a[0]) for a in arrivals)
    report = SlotReport(slot, new_arrivals, tuple(departed), tuple(demand), log.normalized_time,
                        len(delivery.uncached), formula, evictions, new_state.cached_files, decoded,
                        verdict)
    return new_state, report


def run_trace(state: OnlineState, assoc: Association, trace, verify: bool = True,
              certify: bool = False) -> tuple[OnlineState, list[SlotReport]]:
    """Apply (arrivals, demand) slots in order; every user is decoded when ``verify``."""
    reports = []
    for arrivals, demand in trace:
        state, report = run_slot(state, assoc, arrivals, demand, verify, certify)
        reports.append(report)
    return state, reports


def parse_trace(text: str) -> list[tuple[list, tuple[int, ...]]]:
    """Read a demand trace: one slot per line, ``<arrivals> | <demand>``.

    Arrivals are comma-separated file ids, ``new:departing`` to force the
    departing file, or ``-`` for none. The demand lists one file id per user,
    separated by commas or spaces. ``#`` starts a comment.
    """
    slots = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "|" not in line:
            raise ValueError(f"trace line {lineno}: expected '<arrivals> | <demand>'")
        left, right = (part.strip() for part in line.split("|", 1))
        arrivals: list = []
        if left not in ("", "-"):
            for item in left.split(","):
                item = item.strip()
                if ":" in item:
                    new, old = item.split(":")
                    arrivals.append((int(new), int(old)))
                else:
                    arrivals.append(int(item))
        demand = tuple(int(x) for x in right.replace(",", " ").split())
        if not demand:
            raise ValueError(f"trace line {lineno}: empty demand")
        slots.append((arrivals, demand))
    return slots


def format_trace(slots) -> str:
    lines = ["# arrivals | demand"]
    for arrivals, demand in slots:
        items = [f"{a[0]}:{a[1]}" if isinstance(a, tuple) else str(a) for a in arrivals]
        lines.append(f"{','.join(items) or '-'} | {' '.join(map(str, demand))}")
    return "\n".join(lines) + "\n"
