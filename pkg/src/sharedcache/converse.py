"""Index-coding view of a delivery phase and optimality certificates.

Each wanted bit is a message and gets its own receiver, whose side
information is every message cached at that user's cache. With distinct
demands each message is wanted by exactly one receiver, so generalized
independent sets are the acyclic induced subgraphs of the side-information
digraph (edge i -> m when the receiver of message i knows message m).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from itertools import product
from typing import Iterable, Sequence

from .association import Association, profile_of
from .delivery import TransmissionLog, num_distinct
from .errors import CertificateFailed, NonDistinctDemand, ParamsInvalid, TooLarge
from .gf2 import rank_rows
from .placement import EXACT, Label, PlacementState, canonical_labels, format_label

DEFAULT_MESSAGE_BUDGET = 24
DEFAULT_MINRANK_BUDGET = 1 << 24


@dataclass(frozen=True)
class Message:
    file: int
    label: Label | None
    bit: int

    def __str__(self):
        return f"W{self.file}_{format_label(self.label)}[{self.bit}]"


@dataclass(frozen=True)
class Receiver:
    user: int
    cache: int
    wanted: int
    side_info: frozenset[int]


@dataclass(frozen=True, eq=False)
class IndexCodingInstance:
    messages: tuple[Message, ...]
    receivers: tuple[Receiver, ...]
    requested_subfiles: int

    @property
    def num_messages(self) -> int:
        return len(self.messages)

    def interference(self, i: int) -> frozenset[int]:
        """Y_i: messages receiver i neither wants nor knows."""
        r = self.receivers[i]
        return frozenset(range(self.num_messages)) - r.side_info - {r.wanted}

    def successors(self) -> list[frozenset[int]]:
        """Side-information digraph indexed by message (single-unicast)."""
        succ: list[frozenset[int]] = [frozenset()] * self.num_messages
        seen = set()
        for r in self.receivers:
            if r.wanted in seen:
                raise ParamsInvalid("instance is not single-unicast")
            seen.add(r.wanted)
            succ[r.wanted] = r.side_info
        return succ


def build_instance(placement: PlacementState, assoc: Association, demand: Sequence[int],
                   uncached: Iterable[int] = (), *,
                   offsets: Sequence[int] | None = None) -> IndexCodingInstance:
    """Messages are the wanted bits; ``offsets`` keeps only those positions inside
    each subfile (and each whole uncached file) to form a reduced instance."""
    demand = tuple(demand)
    if num_distinct(demand) != len(demand):
        raise NonDistinctDemand("the index-coding converse assumes distinct demands")
    uncached = set(uncached)
    lam = placement.params.num_caches
    messages: list[Message] = []
    owner: list[int] = []
    subfiles = 0
    for user in range(1, len(demand) + 1):
        d = demand[user - 1]
        cache = assoc.cache_of(user)
        if d in uncached:
            bits = range(placement.params.file_size)
            picked = bits if offsets is None else [bits[o] for o in offsets if o < len(bits)]
            messages += [Message(d, None, b) for b in picked]
            owner += [user] * len(picked)
            subfiles += 1
            continue
        for label in canonical_labels(lam):
            if cache in label:
                continue
            subfiles += 1
            idx = placement.subfile(d, label)
            picked = idx if offsets is None else [idx[o] for o in offsets if o < idx.size]
            messages += [Message(d, label, int(b)) for b in picked]
            owner += [user] * len(picked)
    receivers = []
    for i, user in enumerate(owner):
        cache = assoc.cache_of(user)
        known = frozenset(m for m, msg in enumerate(messages)
                          if msg.label is not None and cache in msg.label)
        receivers.append(Receiver(user, cache, i, known))
    return IndexCodingInstance(tuple(messages), tuple(receivers), subfiles)


def dump_instance(instance: IndexCodingInstance) -> str:
    """Adjacency list: ``<id> <message> user=<k> -> <side-information ids>``."""
    lines = ["# id message user -> side_information"]
    for r in instance.receivers:
        known = " ".join(map(str, sorted(r.side_info)))
        lines.append(f"{r.wanted} {instance.messages[r.wanted]} user={r.user} -> {known}".rstrip())
    return "\n".join(lines) + "\n"


def is_acyclic(instance: IndexCodingInstance, members: Iterable[int]) -> bool:
    members = set(members)
    succ = instance.successors()
    sorter = TopologicalSorter({m: succ[m] & members for m in members})
    try:
        sorter.prepare()
    except CycleError:
        return False
    return True


@dataclass(frozen=True)
class GeneralizedIndependentSet:
    members: frozenset[int]
    size: int


def construct_H(instance: IndexCodingInstance, assoc: Association, demand: Sequence[int],
                uncached: Iterable[int] = ()) -> GeneralizedIndependentSet:
    """Whole uncached files, plus for each cached demand n every subfile W^n_S
    with S avoiding canonical caches 1..c(n), where c(n) is the canonical
    position of the requester's cache in the profile of the users served by
    coded delivery."""
    uncached = set(uncached)
    coded_users = [u for u in range(1, len(demand) + 1) if demand[u - 1] not in uncached]
    served = assoc.without(u for u in assoc.users if u not in coded_users)
    _, perm = profile_of(served)
    position = {phys: i + 1 for i, phys in enumerate(perm)}
    c_of = {demand[u - 1]: position[assoc.cache_of(u)] for u in coded_users}
    members = set()
    for m, msg in enumerate(instance.messages):
        if msg.label is None:
            members.add(m)
        elif all(position[x] > c_of[msg.file] for x in msg.label):
            members.add(m)
    if not is_acyclic(instance, members):
        raise CertificateFailed("constructed set induces a cycle in the side-information graph")
    return GeneralizedIndependentSet(frozenset(members), len(members))


def _shortest_cycle(succ: list[int], alive: int) -> list[int]:
    best: list[int] | None = None
    v_alive = [v for v in range(len(succ)) if alive >> v & 1]
    for start in v_alive:
        parent = {start: None}
        queue = deque([start])
        found = None
        while queue and found is None:
            v = queue.popleft()
            nbrs = succ[v] & alive
            while nbrs:
                w = (nbrs & -nbrs).bit_length() - 1
                nbrs &= nbrs - 1
                if w == start:
                    found = v
                    break
                if w not in parent:
                    parent[w] = v
                    queue.append(w)
        if found is not None:
            cycle = [found]
            while parent[cycle[-1]] is not None:
                cycle.append(parent[cycle[-1]])
            if best is None or len(cycle) < len(best):
                best = cycle
                if len(best) == 2:
                    break
    assert best is not None
    return best


def _max_acyclic(succ: list[int], pred: list[int], alive: int, memo: dict) -> int:
    if alive in memo:
        return memo[alive]
    start = alive
    free = 0
    changed = True
    while changed:
        changed = False
        v_bits = alive
        while v_bits:
            v = (v_bits & -v_bits).bit_length() - 1
            v_bits &= v_bits - 1
            if not succ[v] & alive or not pred[v] & alive:
                alive &= ~(1 << v)
                free += 1
                changed = True
    if alive:
        cycle = _shortest_cycle(succ, alive)
        free += max(_max_acyclic(succ, pred, alive & ~(1 << v), memo) for v in cycle)
    memo[start] = free
    return free


def alpha_bruteforce(instance: IndexCodingInstance,
                     budget: int = DEFAULT_MESSAGE_BUDGET) -> int:
    """Exact generalized independence number (maximum acyclic induced subgraph).

    Vertices with no in- or out-edges left cannot lie on a cycle and are
    taken for free; otherwise some vertex of a shortest cycle must be dropped,
    and each choice is searched.
    """
    n = instance.num_messages
    if n > budget:
        raise TooLarge(f"{n} messages exceed the brute-force budget of {budget}")
    succ_sets = instance.successors()
    succ = [sum(1 << w for w in s) for s in succ_sets]
    pred = [0] * n
    for v, s in enumerate(succ_sets):
        for w in s:
            pred[w] |= 1 << v
    return _max_acyclic(succ, pred, (1 << n) - 1, {})


def minrank_bruteforce(instance: IndexCodingInstance,
                       budget: int = DEFAULT_MINRANK_BUDGET,
                       lower_bound: int | None = None) -> int:
    """Exact binary min-rank: minimum rank of rows e_{f(i)} + v_i, v_i on X_i.

    Enumerates every fitting matrix. With ``lower_bound`` (any valid lower
    bound on the min-rank, e.g. the independence number) the search stops as
    soon as that rank is reached.
    """
    free = [sorted(r.side_info) for r in instance.receivers]
    total = sum(len(f) for f in free)
    if 1 << total > budget:
        raise TooLarge(f"2^{total} fitting matrices exceed the min-rank budget of {budget}")
    base = [1 << r.wanted for r in instance.receivers]
    choices = [[sum(1 << col for col, bit in zip(cols, bits) if bit)
                for bits in product((0, 1), repeat=len(cols))] for cols in free]
    best = len(base)
    for picks in product(*choices):
        r = rank_rows([b | p for b, p in zip(base, picks)])
        if r < best:
            best = r
            if lower_bound is not None and best <= lower_bound:
                break
    return best


def scheme_code_length(log: TransmissionLog, offsets: Sequence[int] | None = None) -> int:
    """Bits the scheme sends for the (optionally reduced) instance."""
    if offsets is None:
        return log.total_bits
    return sum(1 for t in log.transmissions for o in offsets if o < t.length)


@dataclass
class Verdict:
    h_bits: int
    measured_bits: int
    file_size: int
    alpha: int | None = None
    kappa: int | None = None
    reduced: dict | None = None
    failures: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "OPTIMAL" if not self.failures else "FAILED"

    @property
    def h_time(self) -> Fraction:
        return Fraction(self.h_bits, self.file_size)

    def summary(self) -> str:
        parts = [f"|H| = {self.h_bits} bits ({self.h_time} F)",
                 f"scheme = {self.measured_bits} bits"]
        if self.alpha is not None:
            parts.append(f"alpha = {self.alpha}, kappa = {self.kappa}")
        if self.reduced:
            r = self.reduced
            parts.append(f"reduced: |H| = {r['h']}, alpha = {r['alpha']}, kappa = {r['kappa']}, "
                         f"scheme = {r['scheme']}")
        text = "; ".join(parts) + f" -> {self.status}"
        if self.failures:
            text += " (" + "; ".join(self.failures) + ")"
        return text


def _brute(instance, budget, minrank_budget):
    alpha = alpha_bruteforce(instance, budget)
    kappa = minrank_bruteforce(instance, minrank_budget, lower_bound=alpha)
    return alpha, kappa


def certify_optimality(placement: PlacementState, assoc: Association, demand: Sequence[int],
                       log: TransmissionLog, *, budget: int = DEFAULT_MESSAGE_BUDGET,
                       minrank_budget: int = DEFAULT_MINRANK_BUDGET) -> Verdict:
    """Check |H| <= alpha <= kappa <= scheme bits with equality throughout.

    The constructive part (|H| equals the scheme's bits, H acyclic) is always
    checked. Brute force runs on the full instance when within budget,
    otherwise on the reduced instance keeping offset 0 of every subfile.
    """
    if placement.mode != EXACT:
        raise ParamsInvalid("certificates need exact-fraction placement")
    uncached = tuple(log.uncached)
    instance = build_instance(placement, assoc, demand, uncached)
    verdict = Verdict(0, log.total_bits, placement.params.file_size)
    try:
        H = construct_H(instance, assoc, demand, uncached)
    except CertificateFailed as exc:
        verdict.failures.append(str(exc))
        return verdict
    verdict.h_bits = H.size
    if H.size != log.total_bits:
        verdict.failures.append(f"|H| = {H.size} differs from the scheme's {log.total_bits} bits")
    try:
        alpha, kappa = _brute(instance, budget, minrank_budget)
    except TooLarge:
        pass
    else:
        verdict.alpha, verdict.kappa = alpha, kappa
        if not H.size <= alpha <= kappa <= log.total_bits:
            verdict.failures.append(
                f"sandwich broken: |H|={H.size}, alpha={alpha}, kappa={kappa}, T*F={log.total_bits}")
        elif not H.size == alpha == kappa == log.total_bits:
            verdict.failures.append("bounds do not meet")
        return verdict
    offsets = (0,)
    reduced = build_instance(placement, assoc, demand, uncached, offsets=offsets)
    rH = construct_H(reduced, assoc, demand, uncached)
    scheme = scheme_code_length(log, offsets)
    record = {"messages": reduced.num_messages, "h": rH.size, "scheme": scheme,
              "alpha": None, "kappa": None}
    verdict.reduced = record
    try:
        record["alpha"], record["kappa"] = _brute(reduced, budget, minrank_budget)
    except TooLarge:
        return verdict
    if not rH.size == record["alpha"] == record["kappa"] == scheme:
        verdict.failures.append(f"reduced instance bounds do not meet: {record}")
    return verdict
