"""Shared scaffolding for end-to-end tests."""

import numpy as np

from adaptive_pir.framework import make_basis
from adaptive_pir.protocol import (
    AdaptiveDecoder,
    Dataset,
    encode_storage,
    make_queries,
    query_array_for,
    server_answer,
)


def instances(n_max=10, lam_max=4, x_min=1):
    """Every (N, K, X, T) with N <= n_max, 1 <= lambda <= lam_max, X >= x_min, T >= 1."""
    out = []
    for N in range(2, n_max + 1):
        for K in range(1, N):
            for X in range(x_min, N):
                for T in range(1, N):
                    if 1 <= N - (K + X + T - 1) <= lam_max:
                        out.append((N, K, X, T))
    return out


class Session:
    """Plaintext, shares, queries and every server's ordered answers."""

    def __init__(self, params, kind="lagrange", theta=0, file_seed=0, noise_seed=1, basis=None):
        self.params = params
        self.basis = basis or make_basis(kind, params)
        self.arr = query_array_for(params)
        self.theta = theta
        self.data = Dataset.random(params, self.basis.field, file_seed)
        shares = encode_storage(self.basis, self.data, noise_seed)
        self.queries = make_queries(self.basis, self.arr, theta, noise_seed)
        self.answers = [server_answer(shares[n], self.queries[n]) for n in range(params.N)]

    @property
    def truth(self):
        return self.data.files[self.theta]

    def decoder(self):
        return AdaptiveDecoder(self.basis, self.arr, self.theta)

    def feed_counts(self, counts):
        """Feed answers round-robin until server n has sent ``counts[n]``."""
        dec = self.decoder()
        out = dec.poll()
        for col in range(max(counts, default=0)):
            for n, c in enumerate(counts):
                if col < c:
                    out = dec.feed(n, self.answers[n][col])
        return dec, out


def straggler_counts(params, stragglers, S, short=None):
    """Fast servers send F_S answers; ``short`` (if given) sends one fewer."""
    F = params.thresholds[S]
    counts = [0 if n in stragglers else F for n in range(params.N)]
    if short is not None:
        counts[short] = F - 1
    return counts


def rng_for(*key):
    return np.random.default_rng(list(key))
