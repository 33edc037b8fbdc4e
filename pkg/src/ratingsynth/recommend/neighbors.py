"""Item-based k-nearest-neighbor rating predictors.

Similarities are computed over co-rating users only. Three prediction rules
share the machinery: raw weighted means, user-mean-centered deviations, and
deviations from ALS-fitted baseline estimates.
"""

import numpy as np

from ._base import ModelError, TrainedModel


def _co_rated_similarity(r: np.ndarray, m: np.ndarray, kind: str) -> np.ndarray:
    """Item-item similarity restricted to common raters; diagonal zeroed."""
    mf = m.astype(np.float64)
    raw = r * m
    num = raw.T @ raw
    sq = (raw * raw).T @ mf          # sq[i, j] = sum of r_ui^2 over raters of j
    co = mf.T @ mf
    if kind == "cosine":
        den = np.sqrt(sq * sq.T)
        num_c = num
    elif kind == "pearson":
        s = raw.T @ mf               # s[i, j] = sum of r_ui over raters of j
        with np.errstate(invalid="ignore", divide="ignore"):
            num_c = num - (s * s.T) / co
            var = sq - (s * s) / co
        var = np.where(var > 0, var, 0.0)
        den = np.sqrt(var * var.T)
    else:
        raise ModelError(f"unknown similarity {kind!r}")
    sim = np.divide(num_c, den, out=np.zeros_like(num), where=(den > 0) & (co > 0))
    np.fill_diagonal(sim, 0.0)
    return sim


def fit_baselines(uidx, iidx, vals, n_users, n_items, mu,
                  sweeps: int = 10, damping: float = 10.0):
    """Alternating least squares for b_ui = mu + b_u + b_i (items first)."""
    bu = np.zeros(n_users)
    bi = np.zeros(n_items)
    ucount = np.bincount(uidx, minlength=n_users)
    icount = np.bincount(iidx, minlength=n_items)
    for _ in range(sweeps):
        resid = vals - mu - bu[uidx]
        bi = np.bincount(iidx, weights=resid, minlength=n_items) / (damping + icount)
        resid = vals - mu - bi[iidx]
        bu = np.bincount(uidx, weights=resid, minlength=n_users) / (damping + ucount)
    return bu, bi


class KnnModel(TrainedModel):
    """knn_basic / knn_centered / knn_baseline, differing only in centering."""

    def __init__(self, spec, train):
        super().__init__(spec, train)
        r, m = self._dense()
        self._r = r
        self._rated = m
        self._sim = _co_rated_similarity(r, m, spec.similarity)
        self._k = spec.k_neighbors
        if spec.family == "knn_baseline":
            bu, bi = fit_baselines(self._uidx, self._iidx, self._vals,
                                   len(self.users), len(self.items), self.global_mean)
            self._bu, self._bi = bu, bi

    def _baseline(self, uk, ik) -> float:
        return self.global_mean + self._bu[uk] + self._bi[ik]

    def _predict_known(self, uk, ik):
        rated = np.flatnonzero(self._rated[uk])
        rated = rated[rated != ik]
        sims = self._sim[ik, rated]
        keep = sims > 0
        rated, sims = rated[keep], sims[keep]
        family = self.spec.family
        if rated.size == 0:
            if family == "knn_baseline":
                return self._baseline(uk, ik)
            return self._fallback(uk, ik)
        if rated.size > self._k:
            top = np.argpartition(-sims, self._k - 1)[: self._k]
            rated, sims = rated[top], sims[top]
        values = self._r[uk, rated]
        norm = sims.sum()
        if family == "knn_basic":
            return float((sims * values).sum() / norm)
        if family == "knn_centered":
            mean_u = self.user_means[uk]
            return float(mean_u + (sims * (values - mean_u)).sum() / norm)
        deviations = values - (self.global_mean + self._bu[uk] + self._bi[rated])
        return float(self._baseline(uk, ik) + (sims * deviations).sum() / norm)
