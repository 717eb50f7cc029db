"""User-to-cache association, profiles and delivery rounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import NotAPartition, RoundOutOfRange


@dataclass(frozen=True)
class Association:
    """``groups[λ-1]`` is the ordered user list U_λ of cache λ (users are 1-based).

    Groups may be empty. After reductions (dedup, online removal) the groups
    cover a subset of the users, so only disjointness is enforced here;
    ``check_covers`` validates a full partition of [K].
    """

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(u) for u in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        seen: set[int] = set()
        for g in groups:
            for u in g:
                if u < 1:
                    raise NotAPartition(f"user ids are 1-based, got {u}")
                if u in seen:
                    raise NotAPartition(f"user {u} appears in more than one cache")
                seen.add(u)

    @classmethod
    def from_profile(cls, counts: Sequence[int]) -> "Association":
        """Consecutive user ids: cache 1 gets 1..L_1, cache 2 the next L_2, ..."""
        groups, nxt = [], 1
        for c in counts:
            if c < 0:
                raise NotAPartition(f"negative group size {c}")
            groups.append(tuple(range(nxt, nxt + c)))
            nxt += c
        return cls(tuple(groups))

    @property
    def num_caches(self) -> int:
        return len(self.groups)

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(sorted(u for g in self.groups for u in g))

    @property
    def num_users(self) -> int:
        return sum(len(g) for g in self.groups)

    def cache_of(self, user: int) -> int:
        for lam, g in enumerate(self.groups, start=1):
            if user in g:
                return lam
        raise KeyError(f"user {user} is not associated to any cache")

    def position_of(self, user: int) -> int:
        """1-based position j of the user inside its cache, i.e. its round."""
        return self.groups[self.cache_of(user) - 1].index(user) + 1

    def check_covers(self, num_users: int) -> None:
        if self.users != tuple(range(1, num_users + 1)):
            raise NotAPartition(f"groups {self.groups} do not partition users 1..{num_users}")

    def without(self, users: Iterable[int]) -> "Association":
        drop = set(users)
        return Association(tuple(tuple(u for u in g if u not in drop) for g in self.groups))


@dataclass(frozen=True)
class Profile:
    """Non-increasing user counts per cache."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise NotAPartition(f"negative count in {counts}")
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise NotAPartition(f"profile {counts} is not sorted non-increasing")

    @classmethod
    def of(cls, counts: Iterable[int]) -> "Profile":
        return cls(tuple(sorted(counts, reverse=True)))

    def __iter__(self):
        return iter(self.counts)

    def __len__(self):
        return len(self.counts)

    def __getitem__(self, i):
        return self.counts[i]

    @property
    def num_users(self) -> int:
        return sum(self.counts)

    @property
    def num_rounds(self) -> int:
        return self.counts[0] if self.counts else 0

    def round_sizes(self) -> list[int]:
        """|R_j| for j = 1..L_1."""
        return [sum(1 for c in self.counts if c >= j) for j in range(1, self.num_rounds + 1)]


def profile_of(assoc: Association) -> tuple[Profile, tuple[int, ...]]:
    """Sorted profile and the canonical-to-physical cache permutation.

    ``perm[i]`` is the physical cache id at canonical position ``i + 1``.
    Equal group sizes keep their physical order.
    """
    order = sorted(range(assoc.num_caches), key=lambda i: -len(assoc.groups[i]))
    perm = tuple(i + 1 for i in order)
    return Profile(tuple(len(assoc.groups[i]) for i in order)), perm


def round_users(assoc: Association, j: int) -> frozenset[int]:
    """R_j: the j-th user of every cache serving at least j users."""
    rounds = max((len(g) for g in assoc.groups), default=0)
    if not 1 <= j <= rounds:
        raise RoundOutOfRange(f"round {j} outside 1..{rounds}")
    return frozenset(g[j - 1] for g in assoc.groups if len(g) >= j)


class Reduced(NamedTuple):
    association: Association
    profile: Profile
    representative: Mapping[int, int]


def dedup_within_caches(assoc: Association, demand: Sequence[int]) -> Reduced:
    """Keep, per cache, the first user (in group order) asking for each file.

    ``representative`` maps every user present in ``assoc`` to the retained
    user of the same cache with the same demand (retained users map to themselves).
    """
    groups, rep = [], {}
    for g in assoc.groups:
        first: dict[int, int] = {}
        kept = []
        for u in g:
            f = demand[u - 1]
            if f not in first:
                first[f] = u
                kept.append(u)
            rep[u] = first[f]
        groups.append(tuple(kept))
    reduced = Association(tuple(groups))
    return Reduced(reduced, profile_of(reduced)[0], rep)


def leaders(assoc: Association, demand: Sequence[int], j: int) -> frozenset[int]:
    """Q_j: lowest user id among round-j users for each distinct file."""
    best: dict[int, int] = {}
    for u in round_users(assoc, j):
        f = demand[u - 1]
        if f not in best or u < best[f]:
            best[f] = u
    return frozenset(best.values())
