"""Sparse user-item rating data: ingestion, validation, metadata, and splitting.

Datasets are immutable after construction and safe to share across threads.
Files are UTF-8 delimited text; the column layout is declared up front via
:class:`RatingsSchema` rather than guessed.
"""

import csv
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from ._rand import round_half_up, stream, TAG_SPLIT

DEFAULT_SCALE = (1, 2, 3, 4, 5)

Cell = tuple[str, str]


class DataError(ValueError):
    """Malformed input data (bad row, out-of-scale rating, duplicate cell)."""


@dataclass(frozen=True)
class RatingsSchema:
    """Column layout of a delimited ratings file.

    Columns are zero-based positions; extra columns (e.g. timestamps) are
    ignored. ``header`` skips/emits a single header line.
    """

    user_col: int = 0
    item_col: int = 1
    rating_col: int = 2
    delimiter: str = ","
    header: bool = False


class RatingDataset:
    """Immutable sparse user-item rating matrix with a fixed ordinal scale.

    The user and item sets are exactly the ids appearing in ``ratings``;
    every value must be a member of ``scale``.
    """

    __slots__ = ("_ratings", "_scale", "_users", "_items", "_arrays", "_by_user")

    def __init__(self, ratings: Mapping[Cell, object], scale: Sequence = DEFAULT_SCALE):
        scale = tuple(scale)
        if len(scale) < 1 or len(set(scale)) != len(scale):
            raise ValueError("rating scale must be a nonempty list of distinct values")
        allowed = set(scale)
        data = {}
        for cell, value in ratings.items():
            user, item = cell
            if value not in allowed:
                raise DataError(f"rating {value!r} for cell {cell!r} outside scale {scale}")
            data[(user, item)] = value
        self._ratings = data
        self._scale = scale
        self._users = tuple(sorted({u for u, _ in data}))
        self._items = tuple(sorted({i for _, i in data}))
        self._arrays = None
        self._by_user = None

    @property
    def scale(self) -> tuple:
        return self._scale

    @property
    def users(self) -> tuple:
        """All user ids, sorted."""
        return self._users

    @property
    def items(self) -> tuple:
        """All item ids, sorted."""
        return self._items

    @property
    def ratings(self) -> Mapping[Cell, object]:
        return MappingProxyType(self._ratings)

    @property
    def n_users(self) -> int:
        return len(self._users)

    @property
    def n_items(self) -> int:
        return len(self._items)

    def __len__(self) -> int:
        return len(self._ratings)

    def __contains__(self, cell: Cell) -> bool:
        return cell in self._ratings

    def __getitem__(self, cell: Cell):
        return self._ratings[cell]

    def get(self, cell: Cell, default=None):
        return self._ratings.get(cell, default)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatingDataset):
            return NotImplemented
        return self._scale == other._scale and self._ratings == other._ratings

    def __repr__(self) -> str:
        return (f"RatingDataset({self.n_users} users, {self.n_items} items, "
                f"{len(self)} ratings, scale={self._scale})")

    def sorted_cells(self) -> list[Cell]:
        """All (user, item) cells in canonical (user, item) order."""
        return sorted(self._ratings)

    def items_of(self, user: str) -> tuple:
        """Items rated by ``user``, sorted; empty for unknown users."""
        if self._by_user is None:
            by_user: dict[str, list] = {}
            for u, i in self._ratings:
                by_user.setdefault(u, []).append(i)
            self._by_user = {u: tuple(sorted(v)) for u, v in by_user.items()}
        return self._by_user.get(user, ())

    def arrays(self):
        """Index-aligned (user_idx, item_idx, value) arrays for numeric code.

        Indices refer to positions in the sorted ``users`` / ``items`` tuples;
        rows are in canonical cell order. Computed once and cached.
        """
        if self._arrays is None:
            upos = {u: k for k, u in enumerate(self._users)}
            ipos = {i: k for k, i in enumerate(self._items)}
            cells = self.sorted_cells()
            uidx = np.fromiter((upos[u] for u, _ in cells), dtype=np.int32, count=len(cells))
            iidx = np.fromiter((ipos[i] for _, i in cells), dtype=np.int32, count=len(cells))
            vals = np.fromiter((float(self._ratings[c]) for c in cells),
                               dtype=np.float64, count=len(cells))
            self._arrays = (uidx, iidx, vals)
        return self._arrays


class ItemMetadata:
    """Per-item person credits, keyed by role (director, actor, author, ...)."""

    __slots__ = ("_persons", "_roles")

    def __init__(self, persons: Mapping[str, Mapping[str, Sequence[str]]]):
        data = {}
        roles = set()
        for item, by_role in persons.items():
            entry = {}
            for role, names in by_role.items():
                names = tuple(names)
                if any(not n for n in names):
                    raise DataError(f"empty person name for item {item!r}, role {role!r}")
                entry[role] = names
                roles.add(role)
            data[item] = entry
        self._persons = data
        self._roles = frozenset(roles)

    @property
    def roles(self) -> frozenset:
        return self._roles

    def __len__(self) -> int:
        return len(self._persons)

    def persons_for(self, item: str, role: str) -> tuple:
        """Credited persons for (item, role); empty for unknown items/roles."""
        return self._persons.get(item, {}).get(role, ())

    def items(self) -> Iterator[str]:
        return iter(self._persons)


@dataclass(frozen=True)
class HoldoutSplit:
    """Disjoint train/test partition of a dataset's cells."""

    train: RatingDataset
    test: RatingDataset
    seed: int
    test_fraction: float


def load_ratings(path, schema: RatingsSchema = RatingsSchema(),
                 scale: Sequence = DEFAULT_SCALE) -> RatingDataset:
    """Read a delimited ratings file into a validated :class:`RatingDataset`.

    Raises :class:`FileNotFoundError` for a missing file and
    :class:`DataError` (with the 1-based line number) for short rows,
    unparsable or out-of-scale ratings, and duplicate (user, item) cells.
    """
    by_value = {float(s): s for s in scale}
    needed = max(schema.user_col, schema.item_col, schema.rating_col) + 1
    ratings: dict[Cell, object] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and schema.header:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < needed:
                raise DataError(f"{path}: line {lineno}: expected at least "
                                f"{needed} columns, got {len(row)}")
            user = row[schema.user_col].strip()
            item = row[schema.item_col].strip()
            text = row[schema.rating_col].strip()
            if not user or not item:
                raise DataError(f"{path}: line {lineno}: empty user or item id")
            try:
                value = by_value[float(text)]
            except (ValueError, KeyError):
                raise DataError(f"{path}: line {lineno}: rating {text!r} not in "
                                f"scale {tuple(scale)}") from None
            if (user, item) in ratings:
                raise DataError(f"{path}: line {lineno}: duplicate cell ({user!r}, {item!r})")
            ratings[(user, item)] = value
    return RatingDataset(ratings, scale)


def write_ratings(ds: RatingDataset, path, schema: RatingsSchema = RatingsSchema()) -> None:
    """Write ratings in the canonical form: rows sorted by (user, item)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        if schema.header:
            writer.writerow(["user", "item", "rating"])
        for user, item in ds.sorted_cells():
            writer.writerow([user, item, ds[(user, item)]])


def load_metadata(path, role: Optional[str] = None, delimiter: str = "|") -> ItemMetadata:
    """Read item-person credits from lines ``item<delim>role<delim>p1;p2;...``.

    ``role`` restricts loading to a single role; by default all roles in the
    file are kept. Person lists may be empty; empty names are an error.
    """
    persons: dict[str, dict[str, list[str]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(delimiter)
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
            item, line_role, names_text = (parts[0].strip(), parts[1].strip(), parts[2].strip())
            if not item or not line_role:
                raise DataError(f"{path}: line {lineno}: empty item or role")
            if role is not None and line_role != role:
                continue
            names = [] if not names_text else names_text.split(";")
            if any(not n.strip() for n in names):
                raise DataError(f"{path}: line {lineno}: empty person name")
            entry = persons.setdefault(item, {}).setdefault(line_role, [])
            entry.extend(n.strip() for n in names)
    return ItemMetadata(persons)


def write_mask(cells: Iterable[Cell], path, delimiter: str = ",") -> None:
    """Write retained cells, one ``user<delim>item`` per line, sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for user, item in sorted(cells):
            fh.write(f"{user}{delimiter}{item}\n")


def load_mask_cells(path, delimiter: str = ",") -> frozenset:
    """Read a retained-cell file written by :func:`write_mask`."""
    cells = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(delimiter)
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}: line {lineno}: expected 'user{delimiter}item'")
            cells.add((parts[0], parts[1]))
    return frozenset(cells)


def density(ds: RatingDataset) -> float:
    """Fraction of the user-item matrix that is filled: |ratings| / (|U| * |I|)."""
    if len(ds) == 0:
        raise ValueError("density is undefined for an empty dataset")
    return len(ds) / (ds.n_users * ds.n_items)


def split_holdout(ds: RatingDataset, test_fraction: float, seed: int) -> HoldoutSplit:
    """Uniform random cell-level train/test split, deterministic in ``seed``.

    Exactly ``round(test_fraction * |cells|)`` cells go to the test side;
    two datasets with the same cell set split identically under the same seed.
    """
    if not 0 <= test_fraction < 1:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")
    cells = ds.sorted_cells()
    n_test = round_half_up(test_fraction * len(cells))
    rng = stream(seed, TAG_SPLIT)
    picked = rng.choice(len(cells), size=n_test, replace=False) if n_test else []
    test_cells = {cells[k] for k in picked}
    train = {c: ds[c] for c in cells if c not in test_cells}
    test = {c: ds[c] for c in test_cells}
    return HoldoutSplit(train=RatingDataset(train, ds.scale),
                        test=RatingDataset(test, ds.scale),
                        seed=seed, test_fraction=test_fraction)
