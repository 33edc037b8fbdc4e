"""Co-clustering rating predictor.

Users and items are alternately reassigned to clusters to minimize the
squared reconstruction error of

    prediction = cocluster mean + (user mean - user-cluster mean)
               + (item mean - item-cluster mean)

in the style of k-means; assignment, like everything else, is deterministic
in the spec seed.
"""

import numpy as np

from .._rand import stream
from ._base import TrainedModel


class CoClustering(TrainedModel):
    def __init__(self, spec, train):
        super().__init__(spec, train)
        ku, ki = spec.n_user_clusters, spec.n_item_clusters
        uidx, iidx, vals = self._uidx, self._iidx, self._vals
        n_users, n_items = len(self.users), len(self.items)
        rng = stream(spec.seed)
        g = rng.integers(0, ku, n_users)
        h = rng.integers(0, ki, n_items)

        # residuals against the static user/item means
        e = vals - self.user_means[uidx] - self.item_means[iidx]

        for _ in range(spec.n_iterations):
            t = self._cocluster_offsets(g, h, ku, ki)
            g = self._reassign(uidx, iidx, e, h, t, n_users, ki)
            t = self._cocluster_offsets(g, h, ku, ki)
            h = self._reassign(iidx, uidx, e, g, t.T, n_items, ku)

        self._g, self._h = g, h
        self._a, self._ug, self._ih = self._cluster_stats(g, h, ku, ki)

    def _cluster_stats(self, g, h, ku, ki):
        uidx, iidx, vals = self._uidx, self._iidx, self._vals
        mu = self.global_mean
        a_sum = np.zeros((ku, ki))
        a_cnt = np.zeros((ku, ki))
        np.add.at(a_sum, (g[uidx], h[iidx]), vals)
        np.add.at(a_cnt, (g[uidx], h[iidx]), 1.0)
        a = np.divide(a_sum, a_cnt, out=np.full((ku, ki), mu), where=a_cnt > 0)
        gs = np.bincount(g[uidx], weights=vals, minlength=ku)
        gc = np.bincount(g[uidx], minlength=ku)
        ug = np.divide(gs, gc, out=np.full(ku, mu), where=gc > 0)
        hs = np.bincount(h[iidx], weights=vals, minlength=ki)
        hc = np.bincount(h[iidx], minlength=ki)
        ih = np.divide(hs, hc, out=np.full(ki, mu), where=hc > 0)
        return a, ug, ih

    def _cocluster_offsets(self, g, h, ku, ki):
        a, ug, ih = self._cluster_stats(g, h, ku, ki)
        return a - ug[:, None] - ih[None, :]

    def _reassign(self, own_idx, other_idx, e, other_assign, t, n_own, k_other):
        """Pick, per row entity, the cluster minimizing sum (e - t[g, h])^2.

        Quadratic expansion reduces the cost to per-entity aggregates over
        the other side's clusters; ties go to the lowest cluster id.
        """
        oc = other_assign[other_idx]
        s1 = np.zeros((n_own, k_other))
        cnt = np.zeros((n_own, k_other))
        np.add.at(s1, (own_idx, oc), e)
        np.add.at(cnt, (own_idx, oc), 1.0)
        cost = -2.0 * (s1 @ t.T) + cnt @ (t * t).T
        return np.argmin(cost, axis=1)

    def _predict_known(self, uk, ik):
        gu, hi = self._g[uk], self._h[ik]
        return float(self._a[gu, hi]
                     + (self.user_means[uk] - self._ug[gu])
                     + (self.item_means[ik] - self._ih[hi]))
