"""Independent brute-force oracles for CRF inference tests.

Everything here enumerates or re-sums directly from the parameter arrays,
sharing no code with the dynamic programs under test.
"""

import numpy as np

from causalspan.crf import CrfParams
from causalspan.features import FeatureVector


def oracle_emissions(params, feats):
    k = params.transition.shape[0]
    em = np.zeros((len(feats), k))
    for t, fv in enumerate(feats):
        for f in fv.indices:
            em[t] += params.emission[f]
        if fv.dense is not None:
            for d, value in enumerate(fv.dense):
                em[t] += value * params.dense_emission[d]
    return em


def oracle_sequence_score(params, feats, labels):
    em = oracle_emissions(params, feats)
    total = params.begin[labels[0]] + params.end[labels[-1]]
    for t, y in enumerate(labels):
        total += em[t, y]
    for a, b in zip(labels, labels[1:]):
        total += params.transition[a, b]
    return float(total)


def enumerate_scores(params, feats):
    """All K^L label sequences and their scores, by direct summation."""
    k = params.transition.shape[0]
    length = len(feats)
    em = oracle_emissions(params, feats)
    seqs = np.indices((k,) * length).reshape(length, -1)
    scores = params.begin[seqs[0]] + params.end[seqs[-1]]
    for t in range(length):
        scores = scores + em[t, seqs[t]]
    for t in range(length - 1):
        scores = scores + params.transition[seqs[t], seqs[t + 1]]
    return seqs, scores


def oracle_log_partition(scores):
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def oracle_marginals(params, feats):
    seqs, scores = enumerate_scores(params, feats)
    log_z = oracle_log_partition(scores)
    w = np.exp(scores - log_z)
    length = len(feats)
    k = params.transition.shape[0]
    unary = np.zeros((length, k))
    for t in range(length):
        np.add.at(unary[t], seqs[t], w)
    pairwise = np.zeros((max(length - 1, 0), k, k))
    for t in range(length - 1):
        np.add.at(pairwise[t], (seqs[t], seqs[t + 1]), w)
    return unary, pairwise, log_z


def random_instance(rng, max_len=6, max_labels=8, n_features=12,
                    dense_dim=0, scale=1.5):
    """A random CRF instance: parameters, features, and gold labels."""
    length = int(rng.integers(1, max_len + 1))
    k = int(rng.integers(2, max_labels + 1))
    params = CrfParams(
        emission=rng.normal(0, scale, (n_features, k)),
        dense_emission=rng.normal(0, scale, (dense_dim, k)),
        transition=rng.normal(0, scale, (k, k)),
        begin=rng.normal(0, scale, k),
        end=rng.normal(0, scale, k),
    )
    feats = []
    for _ in range(length):
        n_active = int(rng.integers(1, 4))
        idx = tuple(sorted(rng.choice(n_features, n_active, replace=False)))
        dense = rng.normal(0, 1.0, dense_dim) if dense_dim else None
        feats.append(FeatureVector(indices=idx, dense=dense))
    labels = [int(rng.integers(k)) for _ in range(length)]
    return params, feats, labels
