"""Closed-form delivery times, evaluated exactly over the rationals.

All functions take the sorted profile (or a sequence that is sorted on
entry) and a ``SystemParams`` whose ``catalog_size`` is N offline and N'
online. Binomials with n < k are zero.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

from .association import Association, dedup_within_caches, round_users
from .errors import IdentityViolated, ParamsInvalid, ZeroMemory
from .placement import SystemParams


@lru_cache(maxsize=None)
def binom(n: int, k: int) -> int:
    if k < 0 or n < k or n < 0:
        return 0
    return comb(n, k)


def _profile(L, num_caches: int) -> tuple[int, ...]:
    counts = sorted((int(x) for x in L), reverse=True)
    if len(counts) > num_caches:
        if any(counts[num_caches:]):
            raise ParamsInvalid(f"profile {tuple(L)} has more than {num_caches} nonzero caches")
        counts = counts[:num_caches]
    return tuple(counts + [0] * (num_caches - len(counts)))


@lru_cache(maxsize=1024)
def _numerators(q: Fraction, num_caches: int) -> tuple[tuple[int, ...], int]:
    """q^s (1-q)^{Λ-s} = num[s] / b^Λ for s = 0..Λ, with q = a/b; returns (num, b^Λ).

    Sums are accumulated over the integers and divided once, which keeps the
    closed forms exact and fast.
    """
    a, b = q.numerator, q.denominator
    return tuple(a ** s * (b - a) ** (num_caches - s) for s in range(num_caches + 1)), b ** num_caches


def _round_sizes(L: Sequence[int]) -> list[int]:
    return [sum(1 for c in L if c >= j) for j in range(1, max(L, default=0) + 1)]


def profile_weight(L: Sequence[int], num_caches: int, s: int) -> int:
    """Σ_{n=1}^{Λ-s+1} L_n C(Λ-n, s-1): users served by s-subset transmissions."""
    return sum(L[n - 1] * binom(num_caches - n, s - 1) for n in range(1, num_caches - s + 2))


def round_weight(L: Sequence[int], num_caches: int, s: int,
                 sizes: Sequence[int] | None = None) -> int:
    """Σ_j [C(Λ,s) - C(Λ-|R_j|, s)]: number of s-subset transmissions over all rounds."""
    sizes = _round_sizes(L) if sizes is None else sizes
    return sum(binom(num_caches, s) - binom(num_caches - r, s) for r in sizes)


def _prefactor(params: SystemParams, K: int) -> Fraction:
    if params.cache_size == 0:
        raise ZeroMemory(Fraction(K))
    return (params.catalog_size - params.cache_size) / params.cache_size


def t_offline(L, params: SystemParams) -> Fraction:
    """Optimal worst-case delivery time for profile L."""
    lam = params.num_caches
    L = _profile(L, lam)
    pre = _prefactor(params, sum(L))
    num, den = _numerators(params.q, lam)
    return pre * Fraction(sum(profile_weight(L, lam, s) * num[s] for s in range(1, lam + 1)), den)


def t_rounds(L, params: SystemParams) -> Fraction:
    """Same time written as a sum over rounds; defined at M = 0 as well."""
    lam = params.num_caches
    L = _profile(L, lam)
    num, den = _numerators(params.q, lam)
    sizes = _round_sizes(L)
    total = 0
    for s in range(1, lam + 1):
        count = sum(binom(lam, s) - binom(lam - r, s) for r in sizes)
        total += count * num[s - 1]
    return Fraction(total, den)


def t_uniform(K: int, num_caches: int, params: SystemParams) -> Fraction:
    if K % num_caches:
        raise ParamsInvalid(f"uniform association needs Λ | K (K={K}, Λ={num_caches})")
    q = params.q
    return _prefactor(params, K) * Fraction(K, num_caches) * (1 - (1 - q) ** num_caches)


def t_dedicated(K: int, params: SystemParams) -> Fraction:
    """Decentralized time of a network where every user has its own cache."""
    q = params.q
    return _prefactor(params, K) * (1 - (1 - q) ** K)


def t_single_cache(K: int, params: SystemParams) -> Fraction:
    return K * (1 - params.q)


def nondistinct_terms(demand: Sequence[int], assoc: Association) -> tuple[int, list[int]]:
    """N_e(d) and the per-round distinct counts N_e(j) after within-cache dedup."""
    reduced = dedup_within_caches(assoc, demand).association
    rounds = max((len(g) for g in reduced.groups), default=0)
    per_round = [len({demand[u - 1] for u in round_users(reduced, j)})
                 for j in range(1, rounds + 1)]
    return len({demand[u - 1] for u in assoc.users}), per_round


def t_nondistinct(demand: Sequence[int], assoc: Association, params: SystemParams) -> Fraction:
    lam = params.num_caches
    num, den = _numerators(params.q, lam)
    n_e, per_round = nondistinct_terms(demand, assoc)
    total = n_e * num[0]
    for s in range(2, lam + 1):
        count = sum(binom(lam, s) - binom(lam - ne, s) for ne in per_round)
        total += count * num[s - 1]
    return Fraction(total, den)


def t_online(L_reduced, u_count: int, params: SystemParams) -> Fraction:
    """``u_count`` whole uncached files plus the offline time on the reduced profile."""
    L = _profile(L_reduced, params.num_caches)
    if sum(L) == 0:
        return Fraction(u_count)
    return u_count + t_offline(L, params)


def h_size(L, params: SystemParams) -> Fraction:
    """Normalized size of the constructed generalized independent set.

    Σ_n Σ_{s=0}^{Λ-n} L_n C(Λ-n, s) q^s (1-q)^{Λ-s}: for a user at canonical
    cache n, the subfiles avoiding caches 1..n.
    """
    lam = params.num_caches
    L = _profile(L, lam)
    num, den = _numerators(params.q, lam)
    return Fraction(sum(L[n - 1] * binom(lam - n, s) * num[s]
                        for n in range(1, lam + 1) for s in range(0, lam - n + 1)), den)


@lru_cache(maxsize=None)
def _hockey_stick_failure(lam: int):
    for s in range(1, lam + 1):
        lhs = sum(binom(lam - n, s - 1) for n in range(1, lam - s + 2))
        if lhs != binom(lam, s):
            return s, lhs, binom(lam, s)
    return None


@dataclass
class IdentityReport:
    profile: tuple[int, ...]
    checked: dict[str, bool] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checked.values())


def check_identities(params: SystemParams, L) -> IdentityReport:
    """Verify the algebra linking the closed forms; raise IdentityViolated on failure.

    hockey_stick     Σ_{n=1}^{Λ-s+1} C(Λ-n, s-1) = C(Λ, s)
    round_profile    round-count sum equals the profile-weighted sum, per s
    uniform          Λ | K: uniform closed form equals the general one
    single_cache     all users on one cache: K(1 - M/N) equals the general one
    converse_match   normalized |H| equals the delivery time
    """
    lam = params.num_caches
    L = _profile(L, lam)
    K = sum(L)
    report = IdentityReport(L)

    bad = _hockey_stick_failure(lam)
    if bad is not None:
        raise IdentityViolated("hockey_stick", bad[0], L, bad[1], bad[2])
    report.checked["hockey_stick"] = True

    sizes = _round_sizes(L)
    for s in range(1, lam + 1):
        lhs, rhs = round_weight(L, lam, s, sizes), profile_weight(L, lam, s)
        if lhs != rhs:
            raise IdentityViolated("round_profile", s, L, lhs, rhs)
    report.checked["round_profile"] = True

    if params.cache_size == 0:
        for name in ("uniform", "single_cache", "converse_match"):
            report.skipped[name] = "M = 0"
        return report

    general = t_offline(L, params)
    rounds = t_rounds(L, params)
    if general != rounds:
        raise IdentityViolated("round_profile", None, L, rounds, general)

    if K % lam == 0 and K > 0:
        uni = (K // lam,) * lam
        lhs, rhs = t_uniform(K, lam, params), t_offline(uni, params)
        if lhs != rhs:
            raise IdentityViolated("uniform", None, uni, lhs, rhs)
        report.checked["uniform"] = True
    else:
        report.skipped["uniform"] = "Λ does not divide K"

    single = (K,) + (0,) * (lam - 1)
    lhs, rhs = t_single_cache(K, params), t_offline(single, params)
    if lhs != rhs:
        raise IdentityViolated("single_cache", None, single, lhs, rhs)
    report.checked["single_cache"] = True

    lhs = h_size(L, params)
    if lhs != general:
        raise IdentityViolated("converse_match", None, L, lhs, general)
    report.checked["converse_match"] = True
    return report


def formula_rows(points: Iterable[tuple[Sequence[int], SystemParams, str]]) -> list[dict]:
    """Evaluate (profile, params, scheme) points; scheme in offline|uniform|single|dedicated."""
    rows = []
    for L, params, scheme in points:
        K = sum(L)
        flag = ""
        try:
            if scheme == "offline":
                t = t_offline(L, params)
            elif scheme == "uniform":
                t = t_uniform(K, params.num_caches, params)
            elif scheme == "single":
                t = t_single_cache(K, params)
            elif scheme == "dedicated":
                t = t_dedicated(K, params)
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
        except ZeroMemory as exc:
            t, flag = exc.limit, "M=0 limit"
        rows.append({"L": "(" + ",".join(map(str, L)) + ")", "M": str(params.cache_size),
                     "scheme": scheme, "time": str(t), "decimal": f"{float(t):.6f}",
                     "note": flag})
    return rows


def formula_table(points) -> str:
    """CSV with columns L, M, scheme, time, decimal, note."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["L", "M", "scheme", "time", "decimal", "note"],
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(formula_rows(points))
    return buf.getvalue()
