"""Rating data: containers, MovieLens ingestion, filtering, and splitting.

Datasets are stored in coordinate form (parallel user/item/value arrays,
canonically sorted by user then item) with cached per-user (CSR) and per-item
(CSC) index views. All operations are pure: they return new datasets and never
mutate their inputs, so values are safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError

Bounds = tuple[float, float]

DEFAULT_BOUNDS: Bounds = (0.0, 5.0)

RATINGS_CSV_HEADER = ["user_id", "item_id", "rating"]
GROUPS_CSV_HEADER = ["entity_id", "group_label"]


@contextmanager
def _open_text(source, mode: str = "r") -> Iterator[IO[str]]:
    """Accept a path or an already-open text stream."""
    if hasattr(source, "read") or hasattr(source, "write"):
        yield source
    else:
        with open(source, mode, encoding="utf-8", newline="") as handle:
            yield handle


@dataclass(frozen=True)
class RatingDataset:
    """A partially observed n x d rating matrix.

    ``user_idx``/``item_idx``/``values`` are aligned arrays over the known
    entries, sorted by (user, item). ``user_ids``/``item_ids`` map the dense
    0-based indices back to the external identifiers they were loaded from.
    """

    n: int
    d: int
    user_idx: np.ndarray
    item_idx: np.ndarray
    values: np.ndarray
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    bounds: Bounds = DEFAULT_BOUNDS

    @staticmethod
    def from_arrays(
        n: int,
        d: int,
        user_idx,
        item_idx,
        values,
        user_ids: Sequence[str] | None = None,
        item_ids: Sequence[str] | None = None,
        bounds: Bounds = DEFAULT_BOUNDS,
    ) -> "RatingDataset":
        """Validate, canonically sort, and build a dataset."""
        user_idx = np.asarray(user_idx, dtype=np.int64)
        item_idx = np.asarray(item_idx, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (user_idx.shape == item_idx.shape == values.shape):
            raise DataError("user/item/value arrays must be aligned")
        if n < 1 or d < 1:
            raise DataError(f"dataset must be non-empty, got n={n}, d={d}")
        if user_idx.size:
            if user_idx.min() < 0 or user_idx.max() >= n:
                raise DataError("user index out of range")
            if item_idx.min() < 0 or item_idx.max() >= d:
                raise DataError("item index out of range")
        lo, hi = bounds
        if not lo < hi:
            raise DataError(f"invalid rating bounds ({lo}, {hi})")
        if values.size and (values.min() < lo or values.max() > hi):
            bad = int(np.argmax((values < lo) | (values > hi)))
            raise DataError(
                f"rating {values[bad]} for (user={user_idx[bad]}, item={item_idx[bad]}) "
                f"outside bounds [{lo}, {hi}]"
            )
        order = np.lexsort((item_idx, user_idx))
        user_idx, item_idx, values = user_idx[order], item_idx[order], values[order]
        flat = user_idx * d + item_idx
        dup = np.nonzero(np.diff(flat) == 0)[0]
        if dup.size:
            i, j = int(user_idx[dup[0]]), int(item_idx[dup[0]])
            raise DataError(f"duplicate rating for (user={i}, item={j})")
        user_ids = tuple(str(u) for u in user_ids) if user_ids is not None else tuple(
            str(i) for i in range(n)
        )
        item_ids = tuple(str(i) for i in item_ids) if item_ids is not None else tuple(
            str(j) for j in range(d)
        )
        if len(user_ids) != n:
            raise DataError(f"expected {n} user ids, got {len(user_ids)}")
        if len(item_ids) != d:
            raise DataError(f"expected {d} item ids, got {len(item_ids)}")
        return RatingDataset(
            n=n,
            d=d,
            user_idx=user_idx,
            item_idx=item_idx,
            values=values,
            user_ids=user_ids,
            item_ids=item_ids,
            bounds=(float(lo), float(hi)),
        )

    # -- derived views -------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def density(self) -> float:
        return self.nnz / (self.n * self.d)

    @property
    def global_mean(self) -> float:
        return float(self.values.mean())

    @cached_property
    def user_counts(self) -> np.ndarray:
        return np.bincount(self.user_idx, minlength=self.n)

    @cached_property
    def item_counts(self) -> np.ndarray:
        return np.bincount(self.item_idx, minlength=self.d)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, item_idx, values) with observations grouped by user."""
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.user_counts, out=indptr[1:])
        return indptr, self.item_idx, self.values

    @cached_property
    def csc(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, user_idx, values) with observations grouped by item."""
        order = np.lexsort((self.user_idx, self.item_idx))
        indptr = np.zeros(self.d + 1, dtype=np.int64)
        np.cumsum(self.item_counts, out=indptr[1:])
        return indptr, self.user_idx[order], self.values[order]

    def items_of_user(self, i: int) -> np.ndarray:
        indptr, cols, _ = self.csr
        return cols[indptr[i] : indptr[i + 1]]

    def users_of_item(self, j: int) -> np.ndarray:
        indptr, rows, _ = self.csc
        return rows[indptr[j] : indptr[j + 1]]

    def dense_mask(self) -> np.ndarray:
        """Boolean n x d mask of known entries."""
        mask = np.zeros((self.n, self.d), dtype=bool)
        mask[self.user_idx, self.item_idx] = True
        return mask

    def entry_triples(self) -> set[tuple[str, str, float]]:
        """Entries keyed by external ids (order-independent comparisons)."""
        return {
            (self.user_ids[i], self.item_ids[j], float(v))
            for i, j, v in zip(self.user_idx, self.item_idx, self.values)
        }

    def same_entries(self, other: "RatingDataset") -> bool:
        return (
            self.n == other.n
            and self.d == other.d
            and self.nnz == other.nnz
            and np.array_equal(self.user_idx, other.user_idx)
            and np.array_equal(self.item_idx, other.item_idx)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of users or items into labeled groups."""

    axis: str  # "users" or "items"
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.axis not in ("users", "items"):
            raise ConfigError(f"axis must be 'users' or 'items', got {self.axis!r}")
        if not self.labels:
            raise DataError("group assignment must label at least one entity")
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))

    @cached_property
    def group_labels(self) -> tuple[str, ...]:
        """Distinct labels in deterministic (sorted) order."""
        return tuple(sorted(set(self.labels)))

    @property
    def g(self) -> int:
        return len(self.group_labels)

    @cached_property
    def codes(self) -> np.ndarray:
        """Integer group code per entity, aligned with ``group_labels``."""
        lookup = {lab: c for c, lab in enumerate(self.group_labels)}
        return np.array([lookup[lab] for lab in self.labels], dtype=np.int64)

    def check_matches(self, dataset: RatingDataset) -> None:
        expected = dataset.n if self.axis == "users" else dataset.d
        if len(self.labels) != expected:
            raise DataError(
                f"group assignment labels {len(self.labels)} entities but the "
                f"dataset has {expected} on the {self.axis} axis"
            )


@dataclass(frozen=True)
class SplitPair:
    """Disjoint train/test halves sharing the same (n, d) index space."""

    train: RatingDataset
    test: RatingDataset


# ---------------------------------------------------------------------------
# loaders / writers
# ---------------------------------------------------------------------------


def _index_entries(
    raw: Iterable[tuple[str, str, float]], bounds: Bounds
) -> tuple[int, int, list, list, list, list, list]:
    """Densely re-index external ids in first-appearance order."""
    user_of: dict[str, int] = {}
    item_of: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    users, items, vals = [], [], []
    lo, hi = bounds
    for uid, iid, rating in raw:
        i = user_of.setdefault(uid, len(user_of))
        j = item_of.setdefault(iid, len(item_of))
        if (i, j) in seen:
            raise DataError(f"duplicate rating for (user={uid}, item={iid})")
        seen.add((i, j))
        if rating < lo or rating > hi:
            raise DataError(
                f"rating {rating} for (user={uid}, item={iid}) outside bounds [{lo}, {hi}]"
            )
        users.append(i)
        items.append(j)
        vals.append(rating)
    return len(user_of), len(item_of), users, items, vals, list(user_of), list(item_of)


def load_movielens(
    ratings_source, separator: str = "::", bounds: Bounds = DEFAULT_BOUNDS
) -> RatingDataset:
    """Load a MovieLens-format ratings file.

    Each line is ``UserID<sep>MovieID<sep>Rating<sep>Timestamp``; timestamps
    are discarded and external ids are mapped to dense 0-based indices in
    first-appearance order.
    """

    def parse(stream) -> Iterator[tuple[str, str, float]]:
        for lineno, line in enumerate(stream, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(separator)
            if len(parts) != 4:
                raise ParseError(
                    f"expected 4 fields separated by {separator!r}, got {len(parts)}",
                    line=lineno,
                )
            uid, iid, rating_text, _timestamp = parts
            try:
                rating = float(rating_text)
            except ValueError:
                raise ParseError(f"bad rating value {rating_text!r}", line=lineno) from None
            yield uid, iid, rating

    with _open_text(ratings_source) as stream:
        n, d, users, items, vals, user_ids, item_ids = _index_entries(parse(stream), bounds)
    if n == 0:
        raise DataError("ratings source is empty")
    return RatingDataset.from_arrays(n, d, users, items, vals, user_ids, item_ids, bounds)


def load_ratings_csv(source, bounds: Bounds = DEFAULT_BOUNDS) -> RatingDataset:
    """Load the generic ``user_id,item_id,rating`` CSV format."""
    with _open_text(source) as stream:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("ratings CSV is empty") from None
        if [h.strip() for h in header] != RATINGS_CSV_HEADER:
            raise ParseError(
                f"expected header {','.join(RATINGS_CSV_HEADER)!r}, got {','.join(header)!r}",
                line=1,
            )

        def parse() -> Iterator[tuple[str, str, float]]:
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
                try:
                    rating = float(row[2])
                except ValueError:
                    raise ParseError(f"bad rating value {row[2]!r}", line=lineno) from None
                yield row[0], row[1], rating

        n, d, users, items, vals, user_ids, item_ids = _index_entries(parse(), bounds)
    if n == 0:
        raise DataError("ratings CSV has no data rows")
    return RatingDataset.from_arrays(n, d, users, items, vals, user_ids, item_ids, bounds)


def save_ratings_csv(dataset: RatingDataset, target) -> None:
    """Write ``user_id,item_id,rating`` rows (UTF-8, LF) sorted by index."""
    with _open_text(target, "w") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(RATINGS_CSV_HEADER)
        for i, j, v in zip(dataset.user_idx, dataset.item_idx, dataset.values):
            writer.writerow([dataset.user_ids[i], dataset.item_ids[j], repr(float(v))])


def load_genre_groups(
    movies_source, dataset: RatingDataset, policy: str = "first_listed"
) -> GroupAssignment:
    """Group the dataset's items by genre from a ``MovieID::Title::Genres`` file.

    ``first_listed`` labels each item with the first of its ``|``-separated
    genre tokens.
    """
    if policy != "first_listed":
        raise ConfigError(f"unknown genre policy {policy!r}")
    genre_of: dict[str, str] = {}
    with _open_text(movies_source) as stream:
        for lineno, line in enumerate(stream, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 3:
                raise ParseError(f"expected 'MovieID::Title::Genres', got {line!r}", line=lineno)
            movie_id, _title, genres = parts
            first = genres.split("|")[0].strip()
            if not first:
                raise ParseError(f"empty genre list for movie {movie_id}", line=lineno)
            genre_of[movie_id] = first
    labels = []
    for iid in dataset.item_ids:
        if iid not in genre_of:
            raise DataError(f"item id {iid!r} missing from the movies source")
        labels.append(genre_of[iid])
    return GroupAssignment(axis="items", labels=tuple(labels))


def load_groups_csv(source, dataset: RatingDataset, axis: str) -> GroupAssignment:
    """Load an ``entity_id,group_label`` CSV for the given axis."""
    label_of: dict[str, str] = {}
    with _open_text(source) as stream:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("groups CSV is empty") from None
        if [h.strip() for h in header] != GROUPS_CSV_HEADER:
            raise ParseError(
                f"expected header {','.join(GROUPS_CSV_HEADER)!r}, got {','.join(header)!r}",
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
            label_of[row[0]] = row[1]
    ids = dataset.user_ids if axis == "users" else dataset.item_ids
    labels = []
    for eid in ids:
        if eid not in label_of:
            raise DataError(f"entity id {eid!r} missing from the groups source")
        labels.append(label_of[eid])
    return GroupAssignment(axis=axis, labels=tuple(labels))


def save_groups_csv(groups: GroupAssignment, dataset: RatingDataset, target) -> None:
    groups.check_matches(dataset)
    ids = dataset.user_ids if groups.axis == "users" else dataset.item_ids
    with _open_text(target, "w") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(GROUPS_CSV_HEADER)
        for eid, label in zip(ids, groups.labels):
            writer.writerow([eid, label])


# ---------------------------------------------------------------------------
# filters / splits
# ---------------------------------------------------------------------------


def _subset(
    dataset: RatingDataset, keep_users: np.ndarray | None, keep_items: np.ndarray | None
) -> RatingDataset:
    """Restrict to the given (sorted, original-order) user/item index arrays."""
    keep_users = np.arange(dataset.n) if keep_users is None else keep_users
    keep_items = np.arange(dataset.d) if keep_items is None else keep_items
    user_map = np.full(dataset.n, -1, dtype=np.int64)
    user_map[keep_users] = np.arange(len(keep_users))
    item_map = np.full(dataset.d, -1, dtype=np.int64)
    item_map[keep_items] = np.arange(len(keep_items))
    mask = (user_map[dataset.user_idx] >= 0) & (item_map[dataset.item_idx] >= 0)
    return RatingDataset.from_arrays(
        n=len(keep_users),
        d=len(keep_items),
        user_idx=user_map[dataset.user_idx[mask]],
        item_idx=item_map[dataset.item_idx[mask]],
        values=dataset.values[mask],
        user_ids=[dataset.user_ids[i] for i in keep_users],
        item_ids=[dataset.item_ids[j] for j in keep_items],
        bounds=dataset.bounds,
    )


def _top_k_by_count(counts: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest counts, ties broken by smaller index; sorted."""
    order = np.lexsort((np.arange(len(counts)), -counts))
    return np.sort(order[:k])


def filter_top_items(dataset: RatingDataset, k: int) -> RatingDataset:
    """Keep the k most frequently rated items; drop users left empty."""
    if k == 0:
        raise ConfigError("k must be at least 1")
    if k > dataset.d:
        raise ConfigError(f"k={k} exceeds the item count {dataset.d}")
    keep_items = _top_k_by_count(dataset.item_counts, k)
    reduced = _subset(dataset, None, keep_items)
    nonempty = np.nonzero(reduced.user_counts > 0)[0]
    if len(nonempty) == reduced.n:
        return reduced
    return _subset(reduced, nonempty, None)


def filter_users(dataset: RatingDataset, mode: str, k: int, seed: int = 0) -> RatingDataset:
    """Keep k users (``most_active`` or ``random_subset``); drop empty items."""
    if k == 0:
        raise ConfigError("k must be at least 1")
    if k > dataset.n:
        raise ConfigError(f"k={k} exceeds the user count {dataset.n}")
    if mode == "most_active":
        keep_users = _top_k_by_count(dataset.user_counts, k)
    elif mode == "random_subset":
        rng = np.random.default_rng(seed)
        keep_users = np.sort(rng.choice(dataset.n, size=k, replace=False))
    else:
        raise ConfigError(f"unknown user filter mode {mode!r}")
    reduced = _subset(dataset, keep_users, None)
    nonempty = np.nonzero(reduced.item_counts > 0)[0]
    if len(nonempty) == reduced.d:
        return reduced
    return _subset(reduced, None, nonempty)


def holdout_split(dataset: RatingDataset, fraction: float, seed: int = 0) -> SplitPair:
    """Per user, move floor(fraction * count) ratings into the test half.

    Users with fewer than two ratings keep everything in train. Both halves
    share the dataset's (n, d) index space and identifiers.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    indptr, _, _ = dataset.csr
    test_mask = np.zeros(dataset.nnz, dtype=bool)
    for i in range(dataset.n):
        start, stop = indptr[i], indptr[i + 1]
        count = stop - start
        if count < 2:
            continue
        take = math.floor(fraction * count)
        if take == 0:
            continue
        picked = rng.choice(count, size=take, replace=False)
        test_mask[start + picked] = True

    def half(mask: np.ndarray) -> RatingDataset:
        return RatingDataset.from_arrays(
            n=dataset.n,
            d=dataset.d,
            user_idx=dataset.user_idx[mask],
            item_idx=dataset.item_idx[mask],
            values=dataset.values[mask],
            user_ids=dataset.user_ids,
            item_ids=dataset.item_ids,
            bounds=dataset.bounds,
        )

    return SplitPair(train=half(~test_mask), test=half(test_mask))
