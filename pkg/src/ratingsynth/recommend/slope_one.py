"""Slope One: predictions from average pairwise item rating deviations."""

import numpy as np

from ._base import TrainedModel


class SlopeOne(TrainedModel):
    def __init__(self, spec, train):
        super().__init__(spec, train)
        r, m = self._dense()
        mf = m.astype(np.float64)
        raw = r * m
        co = mf.T @ mf                      # co-rating counts
        diff = raw.T @ mf - mf.T @ raw      # sum over co-raters of (r_ui - r_uj)
        self._dev = np.divide(diff, co, out=np.zeros_like(diff), where=co > 0)
        self._co = co
        self._r = raw
        self._rated = m

    def _predict_known(self, uk, ik):
        rated = np.flatnonzero(self._rated[uk])
        rated = rated[rated != ik]
        rated = rated[self._co[ik, rated] > 0]
        if rated.size == 0:
            return self._fallback(uk, ik)
        return float((self._dev[ik, rated] + self._r[uk, rated]).mean())
