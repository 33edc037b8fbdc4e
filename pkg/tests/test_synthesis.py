import itertools

import numpy as np
import pytest

from ratingsynth.dataset import RatingDataset
from ratingsynth.synthesis import (
    UNRATED,
    CartTree,
    ClassCounts,
    RetentionMask,
    StoppingRule,
    SynthesisConfig,
    SynthesisError,
    TreeLeaf,
    TreeSplit,
    bayesian_bootstrap_draw,
    classify,
    designate_retained,
    fit_forest,
    fit_item_tree,
    gini_index,
    select_predictors,
    synthesize,
)
from ratingsynth._rand import round_half_up

from conftest import random_dataset


# --- independent oracles ----------------------------------------------------

def oracle_gini(counts: dict) -> float:
    """Direct impurity summation, independent of the library implementation."""
    total = sum(counts.values())
    return sum((c / total) * (1 - c / total) for c in counts.values())


def oracle_best_split(rows, predictors):
    """Exhaustive search over every (predictor, category subset) partition.

    ``rows`` is a list of (feature dict, target value). Returns the minimum
    child-size-weighted Gini over all valid binary splits, or None if no
    predictor has two observed categories.
    """
    n = len(rows)
    best = None
    for p in predictors:
        cats = list({row[0].get(p, UNRATED) for row in rows})
        for r in range(1, len(cats)):
            for subset in itertools.combinations(cats, r):
                left = [t for f, t in rows if f.get(p, UNRATED) in set(subset)]
                right = [t for f, t in rows if f.get(p, UNRATED) not in set(subset)]
                if not left or not right:
                    continue
                wg = (len(left) * oracle_gini(_tally(left))
                      + len(right) * oracle_gini(_tally(right))) / n
                if best is None or wg < best:
                    best = wg
    return best


def _tally(values):
    out = {}
    for v in values:
        out[v] = out.get(v, 0) + 1
    return out


def weighted_gini_of_root(tree, rows):
    """Evaluate the fitted root split's weighted child Gini on the raw rows."""
    assert isinstance(tree.root, TreeSplit)
    split = tree.root
    left = [t for f, t in rows if f.get(split.predictor, UNRATED) in split.left_categories]
    right = [t for f, t in rows if f.get(split.predictor, UNRATED) not in split.left_categories]
    n = len(rows)
    return (len(left) * oracle_gini(_tally(left))
            + len(right) * oracle_gini(_tally(right))) / n


# --- gini_index ---------------------------------------------------------------

class TestGini:
    def test_pure_node(self):
        assert gini_index(ClassCounts({4: 7})) == 0.0

    def test_two_class_uniform(self):
        assert gini_index(ClassCounts({1: 1, 5: 1})) == pytest.approx(0.5, abs=1e-15)

    def test_three_one(self):
        assert gini_index(ClassCounts({3: 3, 4: 1})) == pytest.approx(0.375, abs=1e-15)

    def test_empty_raises(self):
        with pytest.raises(SynthesisError):
            gini_index(ClassCounts({}))

    def test_matches_oracle_on_random_vectors(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            counts = {v: int(c) for v, c in enumerate(rng.integers(0, 7, size=6)) if c}
            if not counts:
                continue
            assert gini_index(ClassCounts(counts)) == pytest.approx(
                oracle_gini(counts), abs=1e-12)


# --- retention ---------------------------------------------------------------

class TestDesignateRetained:
    def test_full_retention(self, mid_ds):
        mask = designate_retained(mid_ds, 1.0, seed=0)
        assert mask.retained == frozenset(mid_ds.ratings)

    def test_per_user_counts(self, mid_ds):
        frac = 0.42
        mask = designate_retained(mid_ds, frac, seed=3)
        by_user = {}
        for u, i in mask.retained:
            by_user[u] = by_user.get(u, 0) + 1
        for user in mid_ds.users:
            n = len(mid_ds.items_of(user))
            assert by_user[user] == max(1, round_half_up(frac * n))

    def test_minimum_one_rule(self):
        ds = RatingDataset({("solo", "i1"): 2, ("other", "i1"): 3, ("other", "i2"): 4})
        mask = designate_retained(ds, 0.1, seed=1)
        assert ("solo", "i1") in mask.retained

    def test_deterministic(self, mid_ds):
        a = designate_retained(mid_ds, 0.3, seed=9)
        b = designate_retained(mid_ds, 0.3, seed=9)
        assert a.retained == b.retained

    def test_mask_invariants(self, mid_ds):
        mask = designate_retained(mid_ds, 0.25, seed=2)
        mask.validate_against(mid_ds)

    def test_empty_dataset(self):
        with pytest.raises(SynthesisError):
            designate_retained(RatingDataset({}), 0.5, seed=0)


# --- predictor selection -------------------------------------------------------

class TestSelectPredictors:
    def make_co_rating_ds(self):
        # 10 users co-rate (i1, i2); the first 7 also rate i3 and i4
        ratings = {}
        for k in range(10):
            ratings[(f"u{k:02d}", "i1")] = 3
            ratings[(f"u{k:02d}", "i2")] = 4
        for k in range(7):
            ratings[(f"u{k:02d}", "i3")] = 2
            ratings[(f"u{k:02d}", "i4")] = 5
        return RatingDataset(ratings)

    def test_ordering_and_tie_break(self):
        ds = self.make_co_rating_ds()
        mask = designate_retained(ds, 1.0, seed=0)
        assert select_predictors(ds, mask, "i1", 2) == ["i2", "i3"]

    def test_only_target_item(self):
        ds = RatingDataset({("u1", "i1"): 4, ("u2", "i1"): 3})
        mask = designate_retained(ds, 1.0, seed=0)
        assert select_predictors(ds, mask, "i1", 5) == []

    def test_p_larger_than_item_count(self):
        ds = self.make_co_rating_ds()
        mask = designate_retained(ds, 1.0, seed=0)
        assert select_predictors(ds, mask, "i1", 99) == ["i2", "i3", "i4"]

    def test_unknown_target(self):
        ds = self.make_co_rating_ds()
        mask = designate_retained(ds, 1.0, seed=0)
        with pytest.raises(SynthesisError):
            select_predictors(ds, mask, "zz", 2)


# --- tree fitting ---------------------------------------------------------------

def toy_rows():
    """8 rows where target is 5 iff the i2 rating is 4 or 5, else 1."""
    i2 = [1, 2, 3, 4, 5, 4, 3, 2]
    i3 = [3, 1, 4, 1, 5, 2, 2, 3]
    rows = []
    for a, b in zip(i2, i3):
        target = 5 if a >= 4 else 1
        rows.append(({"i2": a, "i3": b}, target))
    return rows


def dataset_from_rows(rows):
    ratings = {}
    for k, (features, target) in enumerate(rows):
        user = f"u{k:02d}"
        ratings[(user, "t")] = target
        for item, v in features.items():
            if v is not UNRATED:
                ratings[(user, item)] = v
    return RatingDataset(ratings)


class TestFitItemTree:
    def test_small_node_is_single_leaf(self):
        ds = RatingDataset({("u1", "t"): 1, ("u2", "t"): 3, ("u3", "t"): 3,
                            ("u1", "i2"): 5, ("u2", "i2"): 1, ("u3", "i2"): 2})
        mask = designate_retained(ds, 1.0, seed=0)
        tree = fit_item_tree(ds, mask, "t", ["i2"], StoppingRule(min_node_size=5))
        assert isinstance(tree.root, TreeLeaf)
        assert tree.root.counts.counts == {1: 1, 3: 2}
        assert tree.depth == 0

    def test_pure_target_is_single_leaf(self):
        ds = RatingDataset({(f"u{k}", "t"): 4 for k in range(8)}
                           | {(f"u{k}", "i2"): (k % 5) + 1 for k in range(8)})
        mask = designate_retained(ds, 1.0, seed=0)
        tree = fit_item_tree(ds, mask, "t", ["i2"], StoppingRule(min_node_size=2))
        assert isinstance(tree.root, TreeLeaf)
        assert tree.root.counts.counts == {4: 8}

    def test_toy_reaches_zero_weighted_gini(self):
        rows = toy_rows()
        ds = dataset_from_rows(rows)
        mask = designate_retained(ds, 1.0, seed=0)
        tree = fit_item_tree(ds, mask, "t", ["i2", "i3"], StoppingRule(min_node_size=2))
        assert isinstance(tree.root, TreeSplit)
        assert tree.root.predictor == "i2"
        fitted = weighted_gini_of_root(tree, rows)
        assert fitted == pytest.approx(0.0, abs=1e-12)
        assert fitted == pytest.approx(oracle_best_split(rows, ["i2", "i3"]), abs=1e-12)
        # the winning subset separates {4, 5} from the rest
        side = tree.root.left_categories
        assert side == frozenset({4, 5}) or side == frozenset({1, 2, 3})

    def test_root_split_optimal_on_random_small_instances(self):
        rng = np.random.default_rng(77)
        for trial in range(60):
            n = int(rng.integers(4, 11))
            preds = ["p1", "p2", "p3"][: int(rng.integers(1, 4))]
            rows = []
            for _ in range(n):
                features = {}
                for p in preds:
                    if rng.random() < 0.75:
                        features[p] = int(rng.integers(1, 6))
                rows.append((features, int(rng.integers(1, 6))))
            ds = dataset_from_rows(rows)
            if "t" not in ds.items:
                continue
            mask = designate_retained(ds, 1.0, seed=0)
            present = [p for p in preds if p in ds.items]
            tree = fit_item_tree(ds, mask, "t", present, StoppingRule(min_node_size=1))
            best = oracle_best_split(rows, present)
            targets = [t for _, t in rows]
            parent = oracle_gini(_tally(targets))
            if isinstance(tree.root, TreeLeaf):
                assert best is None or best >= parent - 1e-12
            else:
                assert weighted_gini_of_root(tree, rows) == pytest.approx(best, abs=1e-12)

    def test_leaf_union_equals_training_multiset(self, mid_ds):
        mask = designate_retained(mid_ds, 0.6, seed=4)
        item = mid_ds.items[0]
        predictors = select_predictors(mid_ds, mask, item, 10)
        tree = fit_item_tree(mid_ds, mask, item, predictors, StoppingRule(min_node_size=3))
        merged = {}
        for leaf in tree.leaves():
            for v, c in leaf.counts.counts.items():
                merged[v] = merged.get(v, 0) + c
        training = _tally([mid_ds[(u, i)] for u, i in mask.retained if i == item])
        assert merged == training

    def test_no_retained_ratings_raises(self):
        ds = RatingDataset({("u1", "t"): 3, ("u1", "i2"): 4, ("u2", "i2"): 5})
        mask = RetentionMask({("u1", "i2"), ("u2", "i2")}, parent_cell_count=3)
        with pytest.raises(SynthesisError):
            fit_item_tree(ds, mask, "t", ["i2"], StoppingRule())

    def test_max_depth_zero(self):
        rows = toy_rows()
        ds = dataset_from_rows(rows)
        mask = designate_retained(ds, 1.0, seed=0)
        tree = fit_item_tree(ds, mask, "t", ["i2"], StoppingRule(min_node_size=1, max_depth=0))
        assert isinstance(tree.root, TreeLeaf) and tree.depth == 0


class TestClassify:
    def manual_tree(self):
        left = TreeLeaf(ClassCounts({5: 3}))
        right = TreeLeaf(ClassCounts({1: 4}))
        return CartTree(TreeSplit("i2", frozenset({4, 5}), left, right), "t", ["i2"])

    def test_depth_zero_ignores_features(self):
        tree = CartTree(TreeLeaf(ClassCounts({2: 2})), "t", [])
        assert classify(tree, {"i2": 5}).counts == {2: 2}

    def test_split_membership(self):
        tree = self.manual_tree()
        assert classify(tree, {"i2": 5}).counts == {5: 3}
        assert classify(tree, {"i2": 1}).counts == {1: 4}

    def test_missing_predictor_routes_as_unrated(self):
        tree = self.manual_tree()
        # UNRATED is not in {4, 5}, so the walk goes right
        assert classify(tree, {}).counts == {1: 4}
        unrated_left = CartTree(
            TreeSplit("i2", frozenset({UNRATED, 5}), TreeLeaf(ClassCounts({5: 1})),
                      TreeLeaf(ClassCounts({1: 1}))), "t", ["i2"])
        assert classify(unrated_left, {}).counts == {5: 1}


# --- bayesian bootstrap ----------------------------------------------------------

class TestBayesianBootstrap:
    def test_single_support_leaf(self):
        rng = np.random.default_rng(0)
        leaf = ClassCounts({4: 3})
        assert all(bayesian_bootstrap_draw(leaf, rng) == 4 for _ in range(50))

    def test_two_value_marginal(self):
        rng = np.random.default_rng(123)
        leaf = ClassCounts({1: 1, 5: 1})
        draws = np.array([bayesian_bootstrap_draw(leaf, rng) for _ in range(100_000)])
        assert abs((draws == 1).mean() - 0.5) < 0.01

    def test_weighted_marginal(self):
        rng = np.random.default_rng(321)
        leaf = ClassCounts({2: 2, 5: 1})
        draws = np.array([bayesian_bootstrap_draw(leaf, rng) for _ in range(100_000)])
        assert abs((draws == 2).mean() - 2 / 3) < 0.01

    def test_empty_leaf_raises(self):
        with pytest.raises(SynthesisError):
            bayesian_bootstrap_draw(ClassCounts({}), np.random.default_rng(0))


# --- synthesize -----------------------------------------------------------------

class TestSynthesize:
    def test_full_retention_is_identity(self, mid_ds):
        syn, mask = synthesize(mid_ds, SynthesisConfig(retain_fraction=1.0, seed=5))
        assert syn == mid_ds
        assert mask.retained == frozenset(mid_ds.ratings)

    def test_contract_on_mid_corpus(self, mid_ds):
        cfg = SynthesisConfig(retain_fraction=0.4, seed=17)
        syn, mask = synthesize(mid_ds, cfg)
        assert set(syn.ratings) == set(mid_ds.ratings)
        assert all(syn[c] == mid_ds[c] for c in mask.retained)
        scale = set(mid_ds.scale)
        assert all(v in scale for v in syn.ratings.values())

    def test_closed_leaf_support(self, mid_ds):
        cfg = SynthesisConfig(retain_fraction=0.4, seed=17)
        syn, mask = synthesize(mid_ds, cfg)
        forest = fit_forest(mid_ds, mask, cfg)
        codes_items = {i: k for k, i in enumerate(mid_ds.items)}
        for (u, i) in mid_ds.sorted_cells():
            if mask.is_retained((u, i)):
                continue
            tree = forest.tree_for(i)
            features = {p: mid_ds[(u, p)] for p in tree.predictors
                        if mask.is_retained((u, p))}
            leaf = classify(tree, features)
            assert syn[(u, i)] in leaf.counts

    def test_deterministic_and_thread_invariant(self, mid_ds):
        cfg = SynthesisConfig(retain_fraction=0.5, seed=23)
        a, mask_a = synthesize(mid_ds, cfg, threads=1)
        b, mask_b = synthesize(mid_ds, cfg, threads=3)
        c, _ = synthesize(mid_ds, cfg, threads=1)
        assert mask_a.retained == mask_b.retained
        assert a == b == c

    def test_cold_items_fall_back_to_global_leaf(self):
        # u2's only cell is forced-retained; i9 has ratings only from u1, and
        # with fraction 0.5 u1 retains one of its two cells
        ds = RatingDataset({("u1", "i1"): 5, ("u1", "i9"): 1, ("u2", "i1"): 3})
        for seed in range(10):
            cfg = SynthesisConfig(retain_fraction=0.5, seed=seed)
            syn, mask = synthesize(ds, cfg)
            assert set(syn.ratings) == set(ds.ratings)
            # whichever cells were synthesized must carry values from the
            # retained global multiset support
            retained_support = {ds[c] for c in mask.retained}
            for cell in ds.sorted_cells():
                if not mask.is_retained(cell):
                    assert syn[cell] in retained_support

    def test_empty_dataset(self):
        with pytest.raises(SynthesisError):
            synthesize(RatingDataset({}), SynthesisConfig(retain_fraction=0.5, seed=0))


class TestConfigValidation:
    def test_bad_retain_fraction(self):
        with pytest.raises(SynthesisError, match="retain_fraction"):
            SynthesisConfig(retain_fraction=1.3, seed=0)

    def test_bad_stopping(self):
        with pytest.raises(SynthesisError):
            StoppingRule(min_node_size=0)
        with pytest.raises(SynthesisError):
            StoppingRule(max_depth=-1)


def test_forest_leaf_union_across_items(mid_ds):
    cfg = SynthesisConfig(retain_fraction=0.5, seed=31)
    mask = designate_retained(mid_ds, cfg.retain_fraction, cfg.seed)
    forest = fit_forest(mid_ds, mask, cfg)
    for item in mid_ds.items:
        if not forest.has_tree(item):
            continue
        merged = {}
        for leaf in forest.tree_for(item).leaves():
            for v, c in leaf.counts.counts.items():
                merged[v] = merged.get(v, 0) + c
        training = _tally([mid_ds[(u, i)] for u, i in mask.retained if i == item])
        assert merged == training
