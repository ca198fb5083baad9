"""Compiled inner loops for tree boosting and rank distributions."""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def pair_gradient(scores, shift, winners, losers, temperature, out):
    """Write the negative gradient of the summed pairwise logistic loss into ``out``.

    ``shift`` holds each document's query-max score; exponentiating shifted
    scores once per document replaces one exp per pair.
    """
    n = scores.shape[0]
    inv_t = 1.0 / temperature
    e = np.empty(n)
    for i in range(n):
        e[i] = math.exp((scores[i] - shift[i]) * inv_t)
    out[:] = 0.0
    for p in range(winners.shape[0]):
        w = winners[p]
        l = losers[p]
        denom = e[w] + e[l]
        if denom > 0.0:
            c = e[l] / denom
        else:
            z = (scores[l] - scores[w]) * inv_t
            c = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
        c *= inv_t
        out[w] += c
        out[l] -= c


@numba.njit(cache=True, nogil=True)
def pair_loss(scores, winners, losers, temperature):
    """Mean of softplus(-(s_w - s_l) / T)."""
    total = 0.0
    inv_t = 1.0 / temperature
    for p in range(winners.shape[0]):
        x = -(scores[winners[p]] - scores[losers[p]]) * inv_t
        if x > 0:
            total += x + math.log1p(math.exp(-x))
        else:
            total += math.log1p(math.exp(x))
    return total / winners.shape[0]


@numba.njit(cache=True, nogil=True)
def node_histograms(codes, target, sample_node, node_slot, num_slots, num_bins):
    """Per (slot, feature, bin) sums of ``target`` and sample counts.

    A sample contributes to slot ``node_slot[sample_node[i]]``; samples whose
    node has slot -1 are skipped.
    """
    n, d = codes.shape
    sums = np.zeros((num_slots, d, num_bins))
    counts = np.zeros((num_slots, d, num_bins), dtype=np.int64)
    for i in range(n):
        s = node_slot[sample_node[i]]
        if s < 0:
            continue
        g = target[i]
        for f in range(d):
            b = codes[i, f]
            sums[s, f, b] += g
            counts[s, f, b] += 1
    return sums, counts


@numba.njit(cache=True, nogil=True)
def route_samples(codes, sample_node, split_feature, split_bin, left):
    """Move samples of freshly split nodes to their left or right child."""
    for i in range(sample_node.shape[0]):
        node = sample_node[i]
        f = split_feature[node]
        if f < 0:
            continue
        if codes[i, f] <= split_bin[node]:
            sample_node[i] = left[node]
        else:
            sample_node[i] = left[node] + 1


@numba.njit(cache=True, nogil=True)
def tree_predict(X, feature, threshold, left, right, value, out):
    """Add each row's leaf value to ``out``."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@numba.njit(cache=True, nogil=True)
def rank_pmfs(beats, stays, out):
    """Sequential Bernoulli convolution for every (member, document).

    ``beats[m, v, u]`` is the chance that ``u`` outranks ``v``; ``out`` must
    be zero-filled with shape (M, N, N).
    """
    m_count, n, _ = beats.shape
    for m in range(m_count):
        for v in range(n):
            p = out[m, v]
            p[0] = 1.0
            for u in range(n):
                up = beats[m, v, u]
                st = stays[m, v, u]
                for r in range(n - 1, 0, -1):
                    p[r] = p[r] * st + p[r - 1] * up
                p[0] *= st
