"""Decentralized uncoded prefetching.

Every cache independently stores ``M F / catalog_size`` bits of every file.
The union of those choices labels each bit of a file with the set of caches
holding it, which partitions the file into ``2**num_caches`` subfiles.

Labels are sorted tuples of 1-based cache indices; ``()`` is the empty set.
Internally a bit's label is stored as a bitmask (cache ``c`` -> bit ``c-1``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from . import prng
from .errors import FractionNotRealizable, NonIntegralCacheQuota, ParamsInvalid

Label = tuple[int, ...]

RANDOM = "random"
EXACT = "exact"
EXACT_SEED_TOKEN = "exact"


def _fraction(x) -> Fraction:
    if isinstance(x, float):
        raise ParamsInvalid(f"use an exact rational instead of the float {x!r}")
    return Fraction(x)


@dataclass(frozen=True)
class SystemParams:
    """N files of F bits, K users, Λ caches of M files each.

    ``beta`` > 1 turns on the online setting: caches prefetch from a list of
    ``catalog_size = beta * N`` files while users request from N popular ones.
    """

    num_files: int
    num_users: int
    num_caches: int
    cache_size: Fraction
    file_size: int
    beta: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "cache_size", _fraction(self.cache_size))
        object.__setattr__(self, "beta", _fraction(self.beta))
        for name in ("num_files", "num_users", "num_caches", "file_size"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ParamsInvalid(f"{name} must be an integer, got {v!r}")
        if self.num_files < 1 or self.num_users < 1 or self.num_caches < 1:
            raise ParamsInvalid("N, K and Λ must be positive")
        if self.num_caches > self.num_users:
            raise ParamsInvalid(f"Λ={self.num_caches} exceeds K={self.num_users}")
        if self.num_caches > 32:
            raise ParamsInvalid("at most 32 caches are supported")
        if self.file_size < 1:
            raise ParamsInvalid("file size must be at least one bit")
        if self.beta < 1:
            raise ParamsInvalid(f"beta={self.beta} must be >= 1")
        if (self.beta * self.num_files).denominator != 1:
            raise ParamsInvalid(f"beta*N = {self.beta * self.num_files} is not an integer")
        if not 0 <= self.cache_size <= self.catalog_size:
            raise ParamsInvalid(f"M={self.cache_size} outside [0, {self.catalog_size}]")

    @property
    def catalog_size(self) -> int:
        return int(self.beta * self.num_files)

    @property
    def q(self) -> Fraction:
        """Probability that a given bit sits in a given cache."""
        return self.cache_size / self.catalog_size

    @property
    def quota(self) -> Fraction:
        return self.cache_size * self.file_size / self.catalog_size

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **changes)


def label_mask(label: Iterable[int]) -> int:
    m = 0
    for c in label:
        m |= 1 << (c - 1)
    return m


def mask_label(mask: int) -> Label:
    return tuple(i + 1 for i in range(int(mask).bit_length()) if mask >> i & 1)


def labels_of_size(num_caches: int, s: int) -> list[Label]:
    return list(itertools.combinations(range(1, num_caches + 1), s))


def canonical_labels(num_caches: int) -> list[Label]:
    """All subsets of [Λ]: by size, then lexicographically (φ first)."""
    return [lab for s in range(num_caches + 1) for lab in labels_of_size(num_caches, s)]


def format_label(label: Label | None) -> str:
    if label is None:
        return "*"
    return "{" + ",".join(map(str, label)) + "}"


def expected_subfile_size(params: SystemParams, s: int) -> Fraction:
    lam = params.num_caches
    if not 0 <= s <= lam:
        raise ParamsInvalid(f"subset size {s} outside [0, {lam}]")
    q = params.q
    return q ** s * (1 - q) ** (lam - s) * params.file_size


class Library:
    """File contents, keyed by file id, generated on first use.

    Bits of file ``n`` are ``prng.random_bits(derive_key(seed, n), F)``
    unless explicit contents were supplied.
    """

    def __init__(self, file_size: int, seed: int = 0,
                 contents: Mapping[int, np.ndarray] | None = None):
        self.file_size = file_size
        self.seed = seed
        self._files: dict[int, np.ndarray] = {}
        for n, bits in (contents or {}).items():
            arr = np.asarray(bits, dtype=np.uint8) & 1
            if arr.shape != (file_size,):
                raise ParamsInvalid(f"file {n} has {arr.size} bits, expected {file_size}")
            arr.setflags(write=False)
            self._files[n] = arr

    def bits(self, n: int) -> np.ndarray:
        arr = self._files.get(n)
        if arr is None:
            arr = prng.random_bits(prng.derive_key(self.seed, n), self.file_size)
            arr.setflags(write=False)
            self._files[n] = arr
        return arr

    def __eq__(self, other):
        if not isinstance(other, Library):
            return NotImplemented
        return self.file_size == other.file_size and self.seed == other.seed

    def __hash__(self):
        return hash((self.file_size, self.seed))


@dataclass(frozen=True, eq=False)
class PlacementState:
    """Realized cache contents: a label for every bit of every cached file."""

    params: SystemParams
    mode: str
    seed: int | None
    masks: Mapping[int, np.ndarray]
    library: Library
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def files(self) -> tuple[int, ...]:
        return tuple(sorted(self.masks))

    def __contains__(self, n: int) -> bool:
        return n in self.masks

    def label_of(self, n: int, b: int) -> Label:
        return mask_label(int(self.masks[n][b]))

    def _groups(self, n: int) -> dict[int, np.ndarray]:
        groups = self._index.get(n)
        if groups is None:
            m = self.masks[n]
            order = np.argsort(m, kind="stable")
            sm = m[order]
            cuts = np.flatnonzero(np.diff(sm)) + 1
            groups = {}
            for chunk in np.split(order, cuts):
                if chunk.size:
                    chunk.setflags(write=False)
                    groups[int(m[chunk[0]])] = chunk
            self._index[n] = groups
        return groups

    def subfile(self, n: int, label: Iterable[int]) -> np.ndarray:
        """Bit indices of W^n_S, ascending."""
        got = self._groups(n).get(label_mask(label))
        return got if got is not None else np.empty(0, dtype=np.int64)

    def subfile_size(self, n: int, label: Iterable[int]) -> int:
        return int(self.subfile(n, label).size)

    def cached_count(self, n: int, cache: int) -> int:
        return int(np.count_nonzero(self.masks[n] & (1 << (cache - 1))))

    def cache_view(self, cache: int) -> "CacheView":
        return CacheView(self, cache)

    def replace_file(self, old: int, new: int, slot: int) -> "PlacementState":
        """Evict ``old`` everywhere and prefetch ``new`` in every cache."""
        masks = dict(self.masks)
        del masks[old]
        masks[new] = _file_masks(self.params, self.mode, self.seed, new, slot)
        return PlacementState(self.params, self.mode, self.seed, masks, self.library)

    def __eq__(self, other):
        if not isinstance(other, PlacementState):
            return NotImplemented
        return (self.params == other.params and self.mode == other.mode
                and self.seed == other.seed and self.files == other.files
                and all(np.array_equal(self.masks[n], other.masks[n]) for n in self.masks))

    __hash__ = None


class CacheView:
    """What a user attached to one cache can read: subfiles W^n_S with cache ∈ S."""

    def __init__(self, placement: PlacementState, cache: int):
        self.placement = placement
        self.cache = cache

    def holds(self, label: Label | None) -> bool:
        return label is not None and self.cache in label

    def read(self, n: int, label: Label) -> np.ndarray:
        if not self.holds(label):
            raise PermissionError(f"cache {self.cache} does not hold W^{n}_{format_label(label)}")
        if n not in self.placement:
            return np.empty(0, dtype=np.uint8)
        return self.placement.library.bits(n)[self.placement.subfile(n, label)]


def _quota(params: SystemParams) -> int:
    quota = params.quota
    if quota.denominator != 1:
        raise NonIntegralCacheQuota(
            f"M*F/catalog = {quota} bits is not an integer (M={params.cache_size}, "
            f"F={params.file_size}, catalog={params.catalog_size})")
    return int(quota)


def exact_sizes(params: SystemParams) -> list[int]:
    """Subfile size for each |S| = 0..Λ, or FractionNotRealizable."""
    sizes = []
    for s in range(params.num_caches + 1):
        v = expected_subfile_size(params, s)
        if v.denominator != 1:
            raise FractionNotRealizable(
                f"|W_S| = {v} for |S|={s} is not whole; F must be a multiple of "
                f"{(expected_subfile_size(params.replace(file_size=1), s)).denominator}")
        sizes.append(int(v))
    return sizes


def _exact_masks(params: SystemParams) -> np.ndarray:
    sizes = exact_sizes(params)
    masks = np.empty(params.file_size, dtype=np.uint32)
    pos = 0
    for label in canonical_labels(params.num_caches):
        n = sizes[len(label)]
        masks[pos:pos + n] = label_mask(label)
        pos += n
    assert pos == params.file_size
    return masks


def _file_masks(params: SystemParams, mode: str, seed: int | None, n: int,
                slot: int | None = None) -> np.ndarray:
    if mode == EXACT:
        masks = _exact_masks(params)
    else:
        quota = _quota(params)
        masks = np.zeros(params.file_size, dtype=np.uint32)
        for cache in range(1, params.num_caches + 1):
            parts = (seed, cache, n) if slot is None else (seed, cache, n, slot)
            masks[prng.select(prng.derive_key(*parts), params.file_size, quota)] |= 1 << (cache - 1)
    masks.setflags(write=False)
    return masks


def _default_files(params: SystemParams, files) -> list[int]:
    files = list(range(1, params.catalog_size + 1)) if files is None else list(files)
    if len(files) != params.catalog_size or len(set(files)) != len(files):
        raise ParamsInvalid(f"need {params.catalog_size} distinct file ids, got {files}")
    return files


def place_random(params: SystemParams, seed: int, *, files: Iterable[int] | None = None,
                 library: Library | None = None) -> PlacementState:
    """Each cache keeps a keyed-random ``M F / catalog_size`` bits of every file.

    The selection for (cache, file) is ``prng.select(derive_key(seed, cache, file), F, quota)``.
    """
    _quota(params)
    files = _default_files(params, files)
    library = library or Library(params.file_size, seed)
    masks = {n: _file_masks(params, RANDOM, seed, n) for n in files}
    return PlacementState(params, RANDOM, int(seed), masks, library)


def place_exact(params: SystemParams, *, files: Iterable[int] | None = None,
                library: Library | None = None) -> PlacementState:
    """Deterministic placement where every subfile has exactly its expected size.

    Bits are laid out contiguously in canonical label order, the same for all files.
    """
    files = _default_files(params, files)
    template = _exact_masks(params)
    library = library or Library(params.file_size, 0)
    return PlacementState(params, EXACT, None, {n: template for n in files}, library)


def export_seed(state: PlacementState):
    """Seed the server needs to replay the placement (reserved token in exact mode)."""
    return EXACT_SEED_TOKEN if state.mode == EXACT else state.seed


def replay(params: SystemParams, token, *, files=None, library=None) -> PlacementState:
    if token == EXACT_SEED_TOKEN:
        return place_exact(params, files=files, library=library)
    return place_random(params, int(token), files=files, library=library)


def summary_table(state: PlacementState) -> str:
    """Tab-separated ``file  label  size`` rows in canonical label order."""
    lines = ["file\tlabel\tsize"]
    for n in state.files:
        for label in canonical_labels(state.params.num_caches):
            lines.append(f"{n}\t{format_label(label)}\t{state.subfile_size(n, label)}")
    return "\n".join(lines) + "\n"
