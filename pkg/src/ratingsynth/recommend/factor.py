"""Latent-factor models: SGD matrix factorization, its biased variant, and a
pairwise-ranking factorization machine over one-hot user/item indicators
(equivalently, BPR-trained MF with an item bias)."""

import numpy as np
from scipy import sparse

from .._rand import stream
from ._base import ModelError, TrainedModel
from ._kernels import bmf_epoch, bmf_sse, bpr_epoch, mf_epoch, mf_sse


class _FactorModel(TrainedModel):
    """Common initialization: factors ~ uniform(-0.05, 0.05) from the seed."""

    def __init__(self, spec, train):
        super().__init__(spec, train)
        rng = stream(spec.seed)
        f = spec.n_factors
        self._p = rng.uniform(-0.05, 0.05, (len(self.users), f))
        self._q = rng.uniform(-0.05, 0.05, (len(self.items), f))
        self._rng = rng
        self.epoch_sse: list[float] = []

    def _epoch_order(self, n: int) -> np.ndarray:
        return self._rng.permutation(n).astype(np.int64)


class MatrixFactorization(_FactorModel):
    """score(u, i) = p_u . q_i, trained by SGD on squared rating error."""

    def __init__(self, spec, train):
        super().__init__(spec, train)
        uidx = self._uidx.astype(np.int64)
        iidx = self._iidx.astype(np.int64)
        for _ in range(spec.n_iterations):
            mf_epoch(self._p, self._q, uidx, iidx, self._vals,
                     self._epoch_order(len(uidx)), spec.learning_rate,
                     spec.regularization)
            self.epoch_sse.append(float(mf_sse(self._p, self._q, uidx, iidx, self._vals)))

    def _predict_known(self, uk, ik):
        return float(self._p[uk] @ self._q[ik])

    def score_items(self, user):
        uk = self._upos.get(user)
        if uk is None:
            return np.zeros(len(self.items))
        return self._p[uk] @ self._q.T


class BiasedMatrixFactorization(_FactorModel):
    """score(u, i) = mu + b_u + b_i + p_u . q_i."""

    def __init__(self, spec, train):
        super().__init__(spec, train)
        uidx = self._uidx.astype(np.int64)
        iidx = self._iidx.astype(np.int64)
        self._bu = np.zeros(len(self.users))
        self._bi = np.zeros(len(self.items))
        mu = self.global_mean
        for _ in range(spec.n_iterations):
            bmf_epoch(self._p, self._q, self._bu, self._bi, mu, uidx, iidx,
                      self._vals, self._epoch_order(len(uidx)),
                      spec.learning_rate, spec.regularization)
            self.epoch_sse.append(float(bmf_sse(self._p, self._q, self._bu, self._bi,
                                                mu, uidx, iidx, self._vals)))

    def _predict_known(self, uk, ik):
        return float(self.global_mean + self._bu[uk] + self._bi[ik]
                     + self._p[uk] @ self._q[ik])

    def score_items(self, user):
        uk = self._upos.get(user)
        if uk is None:
            return self.global_mean + self._bi.copy()
        return self.global_mean + self._bu[uk] + self._bi + self._p[uk] @ self._q.T


class BprFactorizationMachine(_FactorModel):
    """score(u, i) = b_i + p_u . q_i, trained with the BPR pairwise logistic
    loss over (user, rated item, sampled unrated item) triples.

    Positives are all rated train cells; each epoch visits them once in a
    seeded shuffle with |train| uniformly sampled negatives. Scores are not
    rating predictions; use this family for ranking only.
    """

    def __init__(self, spec, train):
        super().__init__(spec, train)
        uidx = self._uidx.astype(np.int64)
        iidx = self._iidx.astype(np.int64)
        self._bias = np.zeros(len(self.items))
        csr = sparse.csr_matrix(
            (np.ones(len(uidx)), (uidx, iidx)),
            shape=(len(self.users), len(self.items)))
        csr.sort_indices()
        indptr = csr.indptr.astype(np.int64)
        indices = csr.indices.astype(np.int64)
        for _ in range(spec.n_iterations):
            order = self._epoch_order(len(uidx))
            neg_seed = np.uint64(self._rng.integers(0, 2 ** 63))
            bpr_epoch(self._p, self._q, self._bias, uidx, iidx, order, indptr,
                      indices, len(self.items), spec.learning_rate,
                      spec.regularization, neg_seed)

    def _predict_known(self, uk, ik):
        raise ModelError("bprfm scores are not rating predictions; "
                         "use it for ranking only")

    def predict(self, user, item):
        self._predict_known(0, 0)

    def score_items(self, user):
        uk = self._upos.get(user)
        if uk is None:
            return self._bias.copy()
        return self._bias + self._p[uk] @ self._q.T

    def score(self, user, item):
        ik = self._ipos.get(item)
        if ik is None:
            return 0.0
        uk = self._upos.get(user)
        base = float(self._bias[ik])
        return base if uk is None else base + float(self._p[uk] @ self._q[ik])
