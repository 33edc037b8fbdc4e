"""Partially synthetic rating data via CART trees and the Bayesian bootstrap.

A designated subset of original ratings is retained verbatim and used as
training data. For every item, a binary classification tree over the ratings
of co-rated predictor items is grown by greedy Gini-minimizing categorical
splits. Each cell that is not retained is classified into a leaf of its
item's tree and receives a value drawn from that leaf's rating multiset with
Bayesian-bootstrap weights.

Ratings are treated as unordered categories throughout; a missing predictor
rating is the explicit category :data:`UNRATED`. Predictor features read only
retained original values, never synthesized ones, so item trees are mutually
independent and the whole process is deterministic in the configured seed,
regardless of worker-thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse

from ._rand import id_digest, round_half_up, stream, TAG_DRAW, TAG_RETAIN
from .dataset import Cell, RatingDataset


class _UnratedType:
    """Singleton category for a predictor the user has no retained rating on."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNRATED"


UNRATED = _UnratedType()

Category = Union[object, _UnratedType]


class SynthesisError(ValueError):
    """Raised for invalid synthesis inputs (empty data, bad configuration)."""


@dataclass(frozen=True)
class StoppingRule:
    """Tree growth limits: nodes at or below ``min_node_size`` rows, at
    ``max_depth``, pure, or without a Gini-reducing split become leaves."""

    min_node_size: int = 5
    max_depth: int = 30

    def __post_init__(self):
        if self.min_node_size < 1:
            raise SynthesisError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.max_depth < 0:
            raise SynthesisError(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass(frozen=True)
class SynthesisConfig:
    """Knobs of one synthesis run; ``seed`` drives every random choice."""

    retain_fraction: float
    stopping: StoppingRule = StoppingRule()
    predictors_per_item: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.retain_fraction <= 1:
            raise SynthesisError(
                f"retain_fraction must be in (0, 1], got {self.retain_fraction}")
        if self.predictors_per_item < 1:
            raise SynthesisError(
                f"predictors_per_item must be >= 1, got {self.predictors_per_item}")


class RetentionMask:
    """The per-cell designation of retained vs. to-be-synthesized ratings."""

    __slots__ = ("_retained", "parent_cell_count")

    def __init__(self, retained, parent_cell_count: int):
        self._retained = frozenset(retained)
        self.parent_cell_count = int(parent_cell_count)
        if len(self._retained) > self.parent_cell_count:
            raise SynthesisError("more retained cells than parent cells")

    @property
    def retained(self) -> frozenset:
        return self._retained

    def is_retained(self, cell: Cell) -> bool:
        return cell in self._retained

    def __len__(self) -> int:
        return len(self._retained)

    def validate_against(self, ds: RatingDataset) -> None:
        """Check containment and the one-retained-cell-per-user invariant."""
        if len(ds) != self.parent_cell_count:
            raise SynthesisError(f"mask parent count {self.parent_cell_count} "
                                 f"!= dataset cell count {len(ds)}")
        missing = [c for c in self._retained if c not in ds]
        if missing:
            raise SynthesisError(f"retained cell {missing[0]!r} not in dataset")
        covered = {u for u, _ in self._retained}
        for user in ds.users:
            if user not in covered:
                raise SynthesisError(f"user {user!r} has no retained cells")


@dataclass(frozen=True)
class ClassCounts:
    """Multiset of rating values held by a tree node, as value -> count."""

    counts: Mapping[object, int]
    total: int = field(init=False)

    def __post_init__(self):
        counts = dict(self.counts)
        if any(c < 0 for c in counts.values()):
            raise SynthesisError("negative class count")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", sum(counts.values()))

    @classmethod
    def from_values(cls, values) -> "ClassCounts":
        counts: dict = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        return cls(counts)

    def support(self) -> tuple:
        """Distinct values with nonzero count, sorted."""
        return tuple(sorted(v for v, c in self.counts.items() if c > 0))

    def observations(self) -> np.ndarray:
        """The multiset as a canonical (value-sorted) observation vector."""
        obs = []
        for v in sorted(self.counts):
            obs.extend([v] * self.counts[v])
        return np.asarray(obs)


def gini_index(counts: ClassCounts) -> float:
    """Node impurity: the sum over classes of p_i * (1 - p_i)."""
    if counts.total < 1:
        raise SynthesisError("Gini index is undefined for an empty node")
    total = counts.total
    acc = 0.0
    for c in counts.counts.values():
        p = c / total
        acc += p * (1.0 - p)
    return acc


@dataclass(frozen=True)
class TreeLeaf:
    counts: ClassCounts


@dataclass(frozen=True)
class TreeSplit:
    """Binary test: descend left iff the observed category is in ``left_categories``."""

    predictor: str
    left_categories: frozenset
    left: object
    right: object


class CartTree:
    """A fitted classification tree for one target item.

    Internal nodes test the (retained) rating category of a predictor item;
    leaves hold the rating multiset of the training rows they absorbed.
    """

    __slots__ = ("root", "target_item", "predictors", "depth")

    def __init__(self, root, target_item: str, predictors: Sequence[str]):
        self.root = root
        self.target_item = target_item
        self.predictors = tuple(predictors)
        self.depth = self._max_depth(root)

    @staticmethod
    def _max_depth(node) -> int:
        if isinstance(node, TreeLeaf):
            return 0
        return 1 + max(CartTree._max_depth(node.left), CartTree._max_depth(node.right))

    def leaves(self) -> list[TreeLeaf]:
        out, todo = [], [self.root]
        while todo:
            node = todo.pop()
            if isinstance(node, TreeLeaf):
                out.append(node)
            else:
                todo.extend([node.left, node.right])
        return out


def classify(tree: CartTree, features: Mapping[str, Category]) -> ClassCounts:
    """Descend the tree on a user's predictor categories; missing entries
    route as :data:`UNRATED`. Returns the reached leaf's rating multiset."""
    node = tree.root
    while isinstance(node, TreeSplit):
        category = features.get(node.predictor, UNRATED)
        node = node.left if category in node.left_categories else node.right
    return node.counts


def bayesian_bootstrap_draw(leaf: ClassCounts, rng: np.random.Generator):
    """Draw one value from a leaf under flat-simplex observation weights.

    The n observation weights are the spacings of n-1 sorted uniforms, so the
    marginal probability of each observation is uniform; values with higher
    multiplicity are proportionally more likely.
    """
    n = leaf.total
    if n < 1:
        raise SynthesisError("cannot draw from an empty leaf")
    obs = leaf.observations()
    cuts = np.sort(rng.random(n - 1))
    weights = np.diff(cuts, prepend=0.0, append=1.0)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(weights), u, side="right"))
    return obs.item(min(idx, n - 1))


def designate_retained(ds: RatingDataset, retain_fraction: float, seed: int) -> RetentionMask:
    """Per-user stratified uniform choice of cells to keep verbatim.

    Each user keeps ``round(retain_fraction * n_user)`` of their cells, never
    fewer than one, so no profile collapses to all-UNRATED features.
    """
    if not 0 < retain_fraction <= 1:
        raise SynthesisError(f"retain_fraction must be in (0, 1], got {retain_fraction}")
    if len(ds) == 0:
        raise SynthesisError("cannot designate retention on an empty dataset")
    retained = []
    for user in ds.users:
        items = ds.items_of(user)
        n = len(items)
        k = max(1, round_half_up(retain_fraction * n))
        if k >= n:
            retained.extend((user, item) for item in items)
            continue
        rng = stream(seed, TAG_RETAIN, id_digest(user))
        for pos in rng.choice(n, size=k, replace=False):
            retained.append((user, items[pos]))
    return RetentionMask(retained, parent_cell_count=len(ds))


# --- predictor selection -------------------------------------------------

def _order_predictors(co_counts: Mapping[int, int], n_items: int, target_idx: int,
                      p: int) -> list[int]:
    """Item indices ordered by (-co_count, index); zero-count items fill the
    tail in index (lexicographic id) order when fewer than ``p`` co-raters exist."""
    nonzero = sorted((j for j in co_counts if j != target_idx and co_counts[j] > 0),
                     key=lambda j: (-co_counts[j], j))
    chosen = nonzero[:p]
    if len(chosen) < p:
        have = set(chosen)
        for j in range(n_items):
            if len(chosen) >= p:
                break
            if j != target_idx and j not in have:
                chosen.append(j)
    return chosen[: min(p, n_items - 1)]


def select_predictors(ds: RatingDataset, mask: RetentionMask, target_item: str,
                      p: int) -> list[str]:
    """The ``p`` items most co-rated with ``target_item`` among retained cells.

    Ties break lexicographically by item id; if fewer than ``p`` items have a
    positive co-rating count the remainder is filled lexicographically.
    """
    if target_item not in set(ds.items):
        raise SynthesisError(f"unknown target item {target_item!r}")
    ipos = {i: k for k, i in enumerate(ds.items)}
    target_idx = ipos[target_item]
    retained_by_user: dict[str, list[str]] = {}
    for u, i in mask.retained:
        retained_by_user.setdefault(u, []).append(i)
    co: dict[int, int] = {}
    for u, its in retained_by_user.items():
        if (u, target_item) in mask.retained:
            for j in its:
                co[ipos[j]] = co.get(ipos[j], 0) + 1
    order = _order_predictors(co, ds.n_items, target_idx, p)
    return [ds.items[j] for j in order]


# --- tree growing ---------------------------------------------------------

_SUBSET_MASKS: dict[int, np.ndarray] = {}


def _subset_masks(n_categories: int) -> np.ndarray:
    """All binary partitions of n categories, as left-membership rows.

    The first category is pinned to the right side so each partition appears
    once; rows are in ascending bitmask order, which fixes tie-breaking.
    """
    cached = _SUBSET_MASKS.get(n_categories)
    if cached is None:
        n_sub = (1 << (n_categories - 1)) - 1
        masks = np.zeros((n_sub, n_categories), dtype=np.float64)
        for m in range(1, n_sub + 1):
            for b in range(n_categories - 1):
                if m >> b & 1:
                    masks[m - 1, b + 1] = 1.0
        cached = _SUBSET_MASKS[n_categories] = masks
    return cached


def _gini_rows(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Gini impurity of each row of class counts (totals must be positive)."""
    p = counts / totals[:, None]
    return 1.0 - (p * p).sum(axis=1)


def _grow(x: np.ndarray, y: np.ndarray, idx: np.ndarray, depth: int,
          stopping: StoppingRule, n_classes: int):
    """Recursive greedy CART growth on encoded categories.

    ``x`` holds category codes (0 = UNRATED, 1..K = scale positions); ``y``
    holds class codes 0..K-1. Returns internal nodes with encoded split sets.
    """
    counts = np.bincount(y[idx], minlength=n_classes)
    n = idx.size
    parent_gini = 1.0 - ((counts / n) ** 2).sum()
    if (n <= stopping.min_node_size or depth >= stopping.max_depth
            or np.count_nonzero(counts) <= 1):
        return ("leaf", counts)

    best = None  # (weighted_gini, column, left_category_codes)
    y_node = y[idx]
    for col in range(x.shape[1]):
        column = x[idx, col]
        cats = np.unique(column)
        if cats.size < 2:
            continue
        pos = np.searchsorted(cats, column)
        cont = np.zeros((cats.size, n_classes), dtype=np.float64)
        np.add.at(cont, (pos, y_node), 1.0)
        masks = _subset_masks(cats.size)
        left_counts = masks @ cont
        left_n = left_counts.sum(axis=1)
        right_counts = cont.sum(axis=0)[None, :] - left_counts
        right_n = n - left_n
        weighted = (left_n * _gini_rows(left_counts, left_n)
                    + right_n * _gini_rows(right_counts, right_n)) / n
        s = int(np.argmin(weighted))
        if best is None or weighted[s] < best[0]:
            best = (float(weighted[s]), col, cats[masks[s] > 0], pos, masks[s])

    if best is None or best[0] >= parent_gini - 1e-12:
        return ("leaf", counts)

    _, col, left_cats, pos, mask_row = best
    go_left = mask_row[pos] > 0
    left = _grow(x, y, idx[go_left], depth + 1, stopping, n_classes)
    right = _grow(x, y, idx[~go_left], depth + 1, stopping, n_classes)
    return ("split", col, frozenset(int(c) for c in left_cats), left, right)


def _decode_node(node, predictors: Sequence[str], scale: Sequence):
    """Translate encoded nodes into the public value-level representation."""
    if node[0] == "leaf":
        counts = node[1]
        return TreeLeaf(ClassCounts({scale[k]: int(c) for k, c in enumerate(counts) if c}))
    _, col, left_codes, left, right = node
    cats = frozenset(UNRATED if code == 0 else scale[code - 1] for code in left_codes)
    return TreeSplit(predictor=predictors[col], left_categories=cats,
                     left=_decode_node(left, predictors, scale),
                     right=_decode_node(right, predictors, scale))


def _fit_tree_encoded(x: np.ndarray, y: np.ndarray, target_item: str,
                      predictors: Sequence[str], scale: Sequence,
                      stopping: StoppingRule) -> CartTree:
    node = _grow(x, y, np.arange(x.shape[0]), 0, stopping, n_classes=len(scale))
    return CartTree(_decode_node(node, predictors, scale), target_item, predictors)


def fit_item_tree(ds: RatingDataset, mask: RetentionMask, target_item: str,
                  predictors: Sequence[str], stopping: StoppingRule) -> CartTree:
    """Grow one item's tree on its retained ratings.

    Training rows are the users with a retained rating for ``target_item``;
    the feature of a row for predictor ``p`` is that user's retained rating
    on ``p``, or UNRATED. At every node the (predictor, category subset) pair
    minimizing the child-size-weighted Gini sum is chosen, by exhaustive
    search over the categories observed at the node.
    """
    scale = ds.scale
    scale_pos = {v: k for k, v in enumerate(scale)}
    rows = sorted(u for u, i in mask.retained if i == target_item)
    if not rows:
        raise SynthesisError(f"no retained ratings for target item {target_item!r}")
    retained_value = {c: ds[c] for c in mask.retained}
    predictors = list(predictors)
    x = np.zeros((len(rows), len(predictors)), dtype=np.int16)
    y = np.empty(len(rows), dtype=np.int16)
    for r, user in enumerate(rows):
        y[r] = scale_pos[retained_value[(user, target_item)]]
        for c, pred in enumerate(predictors):
            v = retained_value.get((user, pred))
            x[r, c] = 0 if v is None else scale_pos[v] + 1
    return _fit_tree_encoded(x, y, target_item, predictors, scale, stopping)


# --- whole-dataset synthesis ----------------------------------------------

@dataclass(frozen=True)
class SynthesisStats:
    """Shape summary of a fitted forest, for run logs."""

    tree_count: int
    cold_items: int
    mean_depth: float
    mean_leaf_size: float


class ItemForest:
    """One fitted tree per item with retained data, plus a global fallback
    leaf (the whole retained rating multiset) for items without any."""

    def __init__(self, trees: dict[str, CartTree], global_leaf: ClassCounts,
                 items: Sequence[str]):
        self._trees = trees
        self._fallback = CartTree(TreeLeaf(global_leaf), target_item="", predictors=())
        self._items = tuple(items)

    def tree_for(self, item: str) -> CartTree:
        return self._trees.get(item, self._fallback)

    def has_tree(self, item: str) -> bool:
        return item in self._trees

    def stats(self) -> SynthesisStats:
        depths, leaf_sizes = [], []
        for tree in self._trees.values():
            depths.append(tree.depth)
            leaf_sizes.extend(leaf.counts.total for leaf in tree.leaves())
        return SynthesisStats(
            tree_count=len(self._trees),
            cold_items=len(self._items) - len(self._trees),
            mean_depth=float(np.mean(depths)) if depths else 0.0,
            mean_leaf_size=float(np.mean(leaf_sizes)) if leaf_sizes else 0.0,
        )


def _encoded_retained_matrix(ds: RatingDataset, mask: RetentionMask) -> np.ndarray:
    """Dense users x items matrix of retained category codes (0 = not retained)."""
    upos = {u: k for k, u in enumerate(ds.users)}
    ipos = {i: k for k, i in enumerate(ds.items)}
    scale_pos = {v: k for k, v in enumerate(ds.scale)}
    codes = np.zeros((ds.n_users, ds.n_items), dtype=np.int16)
    for u, i in mask.retained:
        codes[upos[u], ipos[i]] = scale_pos[ds[(u, i)]] + 1
    return codes


def fit_forest(ds: RatingDataset, mask: RetentionMask, cfg: SynthesisConfig,
               threads: int = 1) -> ItemForest:
    """Fit every item's tree on the retained data (parallel across items)."""
    codes = _encoded_retained_matrix(ds, mask)
    indicator = sparse.csc_matrix(codes > 0, dtype=np.int32)
    co = (indicator.T @ indicator).tocsc()
    scale = ds.scale
    items = ds.items

    def fit_one(j: int) -> Optional[tuple[str, CartTree]]:
        col = indicator.getcol(j)
        rows = col.indices
        if rows.size == 0:
            return None
        cc = co.getcol(j)
        co_counts = dict(zip(cc.indices.tolist(), cc.data.tolist()))
        pred_idx = _order_predictors(co_counts, len(items), j, cfg.predictors_per_item)
        x = codes[np.ix_(np.sort(rows), pred_idx)]
        y = (codes[np.sort(rows), j] - 1).astype(np.int16)
        predictors = [items[k] for k in pred_idx]
        tree = _fit_tree_encoded(x, y, items[j], predictors, scale, cfg.stopping)
        return items[j], tree

    results: list = [None] * len(items)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for j, res in enumerate(pool.map(fit_one, range(len(items)))):
                results[j] = res
    else:
        for j in range(len(items)):
            results[j] = fit_one(j)

    trees = {name: tree for entry in results if entry for name, tree in [entry]}
    global_counts = ClassCounts.from_values(ds[c] for c in mask.retained)
    return ItemForest(trees, global_counts, items)


def _classify_encoded(tree: CartTree, feature_row: np.ndarray,
                      pred_pos: Mapping[str, int], scale: Sequence) -> ClassCounts:
    """Tree descent on a row of encoded retained categories."""
    node = tree.root
    while isinstance(node, TreeSplit):
        code = feature_row[pred_pos[node.predictor]]
        category = UNRATED if code == 0 else scale[code - 1]
        node = node.left if category in node.left_categories else node.right
    return node.counts


def draw_synthetic(ds: RatingDataset, mask: RetentionMask, forest: ItemForest,
                   seed: int, threads: int = 1) -> RatingDataset:
    """Replace every non-retained cell with a classified-leaf bootstrap draw.

    Each cell's draw uses its own RNG stream keyed by (seed, user, item), so
    the output is independent of iteration and thread order.
    """
    codes = _encoded_retained_matrix(ds, mask)
    upos = {u: k for k, u in enumerate(ds.users)}
    ipos = {i: k for k, i in enumerate(ds.items)}
    scale = ds.scale
    by_item: dict[str, list[str]] = {}
    for u, i in ds.sorted_cells():
        if not mask.is_retained((u, i)):
            by_item.setdefault(i, []).append(u)

    def synth_item(item: str) -> list[tuple[Cell, object]]:
        tree = forest.tree_for(item)
        pred_pos = {p: k for k, p in enumerate(tree.predictors)}
        cols = np.asarray([ipos[p] for p in tree.predictors], dtype=np.int64)
        out = []
        for user in by_item.get(item, ()):
            row = codes[upos[user], cols] if cols.size else np.empty(0, dtype=np.int16)
            leaf = _classify_encoded(tree, row, pred_pos, scale)
            rng = stream(seed, TAG_DRAW, id_digest(user, item))
            out.append(((user, item), bayesian_bootstrap_draw(leaf, rng)))
        return out

    items_todo = sorted(by_item)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(synth_item, items_todo))
    else:
        chunks = [synth_item(i) for i in items_todo]

    values: dict[Cell, object] = {c: ds[c] for c in mask.retained}
    for chunk in chunks:
        for cell, v in chunk:
            values[cell] = v
    return RatingDataset(values, scale)


def synthesize(ds: RatingDataset, cfg: SynthesisConfig,
               threads: int = 1) -> tuple[RatingDataset, RetentionMask]:
    """Produce a partially synthetic dataset over exactly the original cells.

    Retained cells keep their original values bit-exactly; all other cells
    get tree-classified Bayesian-bootstrap draws. Deterministic in
    ``cfg.seed`` at any thread count.
    """
    if len(ds) == 0:
        raise SynthesisError("cannot synthesize an empty dataset")
    mask = designate_retained(ds, cfg.retain_fraction, cfg.seed)
    forest = fit_forest(ds, mask, cfg, threads=threads)
    synthetic = draw_synthetic(ds, mask, forest, cfg.seed, threads=threads)
    return synthetic, mask
