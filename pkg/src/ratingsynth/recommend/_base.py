"""Shared training state, fallbacks, and ranking for all model families."""

import numpy as np

from ..dataset import RatingDataset


class ModelError(ValueError):
    """Wrong model family for an operation, or unusable training data."""


class TrainedModel:
    """Base for fitted models: index mappings, means, fallbacks, top-n.

    Rating predictions are total functions: unseen users/items fall back
    along item mean -> user mean -> global mean, and every prediction is
    clipped into the rating scale. Trained models are immutable and safe to
    query from many threads.
    """

    def __init__(self, spec, train: RatingDataset):
        if len(train) == 0:
            raise ModelError("cannot train on an empty dataset")
        self.spec = spec
        self.scale = train.scale
        self.users = train.users
        self.items = train.items
        self._upos = {u: k for k, u in enumerate(self.users)}
        self._ipos = {i: k for k, i in enumerate(self.items)}
        uidx, iidx, vals = train.arrays()
        self._uidx, self._iidx, self._vals = uidx, iidx, vals
        self.global_mean = float(vals.mean())
        ucount = np.bincount(uidx, minlength=len(self.users))
        icount = np.bincount(iidx, minlength=len(self.items))
        self.user_means = np.bincount(uidx, weights=vals, minlength=len(self.users))
        self.user_means /= np.maximum(ucount, 1)
        self.item_means = np.bincount(iidx, weights=vals, minlength=len(self.items))
        self.item_means /= np.maximum(icount, 1)
        numeric = [float(v) for v in self.scale]
        self._lo, self._hi = min(numeric), max(numeric)

    def _dense(self):
        """(ratings, rated-mask) dense matrices; missing cells are 0/False."""
        r = np.zeros((len(self.users), len(self.items)))
        m = np.zeros_like(r, dtype=bool)
        r[self._uidx, self._iidx] = self._vals
        m[self._uidx, self._iidx] = True
        return r, m

    def clip(self, value: float) -> float:
        return float(min(max(value, self._lo), self._hi))

    def _fallback(self, uk, ik) -> float:
        """item mean -> user mean -> global mean, on index or None."""
        if ik is not None:
            return float(self.item_means[ik])
        if uk is not None:
            return float(self.user_means[uk])
        return self.global_mean

    # --- rating interface -------------------------------------------------

    def predict(self, user: str, item: str) -> float:
        uk = self._upos.get(user)
        ik = self._ipos.get(item)
        if uk is None or ik is None:
            return self.clip(self._fallback(uk, ik))
        return self.clip(self._predict_known(uk, ik))

    def _predict_known(self, uk: int, ik: int) -> float:
        raise NotImplementedError

    # --- ranking interface ------------------------------------------------

    def score_items(self, user: str) -> np.ndarray:
        """Ranking scores for every item, index-aligned with ``self.items``."""
        return np.array([self.predict(user, item) for item in self.items])

    def top_n(self, user: str, n: int, exclude=frozenset()) -> list[str]:
        """The n highest-scoring items outside ``exclude``; ties break
        lexicographically by item id."""
        if n < 1:
            raise ModelError(f"n must be >= 1, got {n}")
        scores = self.score_items(user)
        order = np.argsort(-scores, kind="stable")
        out = []
        for idx in order:
            item = self.items[idx]
            if item in exclude:
                continue
            out.append(item)
            if len(out) == n:
                break
        return out
