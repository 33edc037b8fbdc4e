"""Numba SGD kernels for the factor models.

All kernels are sequential and mutate their parameter arrays in place; any
randomness comes in through explicit epoch seeds (splitmix64), so training is
bit-reproducible for a given spec seed.
"""

import numpy as np
from numba import njit

_U64 = np.uint64


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = state + _U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return state, z ^ (z >> _U64(31))


@njit(cache=True)
def mf_epoch(p, q, uidx, iidx, vals, order, lr, reg):
    for t in order:
        u = uidx[t]
        i = iidx[t]
        e = vals[t] - np.dot(p[u], q[i])
        for f in range(p.shape[1]):
            pu = p[u, f]
            qi = q[i, f]
            p[u, f] += lr * (e * qi - reg * pu)
            q[i, f] += lr * (e * pu - reg * qi)


@njit(cache=True)
def bmf_epoch(p, q, bu, bi, mu, uidx, iidx, vals, order, lr, reg):
    for t in order:
        u = uidx[t]
        i = iidx[t]
        e = vals[t] - (mu + bu[u] + bi[i] + np.dot(p[u], q[i]))
        bu[u] += lr * (e - reg * bu[u])
        bi[i] += lr * (e - reg * bi[i])
        for f in range(p.shape[1]):
            pu = p[u, f]
            qi = q[i, f]
            p[u, f] += lr * (e * qi - reg * pu)
            q[i, f] += lr * (e * pu - reg * qi)


@njit(cache=True)
def mf_sse(p, q, uidx, iidx, vals):
    sse = 0.0
    for t in range(uidx.shape[0]):
        e = vals[t] - np.dot(p[uidx[t]], q[iidx[t]])
        sse += e * e
    return sse


@njit(cache=True)
def bmf_sse(p, q, bu, bi, mu, uidx, iidx, vals):
    sse = 0.0
    for t in range(uidx.shape[0]):
        e = vals[t] - (mu + bu[uidx[t]] + bi[iidx[t]] + np.dot(p[uidx[t]], q[iidx[t]]))
        sse += e * e
    return sse


@njit(cache=True)
def bpr_epoch(p, q, bias, uidx, iidx, order, indptr, indices, n_items, lr, reg, seed):
    """One pass of pairwise updates over shuffled positives.

    The negative item for each (user, positive) pair is drawn uniformly from
    the user's unrated items by rejection against the sorted CSR row.
    """
    state = _U64(seed)
    for t in order:
        u = uidx[t]
        i = iidx[t]
        lo = indptr[u]
        hi = indptr[u + 1]
        if hi - lo >= n_items:
            continue
        while True:
            state, z = _splitmix64(state)
            j = np.int64(z % _U64(n_items))
            pos = np.searchsorted(indices[lo:hi], j)
            if pos >= hi - lo or indices[lo + pos] != j:
                break
        s = bias[i] - bias[j] + np.dot(p[u], q[i]) - np.dot(p[u], q[j])
        g = 1.0 / (1.0 + np.exp(s))
        bias[i] += lr * (g - reg * bias[i])
        bias[j] += lr * (-g - reg * bias[j])
        for f in range(p.shape[1]):
            pu = p[u, f]
            qi = q[i, f]
            qj = q[j, f]
            p[u, f] += lr * (g * (qi - qj) - reg * pu)
            q[i, f] += lr * (g * pu - reg * qi)
            q[j, f] += lr * (-g * pu - reg * qj)
