import numpy as np


def random_symmetric(rng, n, low=-1.0, high=1.0, zero_diag=False):
    A = rng.uniform(low, high, size=(n, n))
    Z = (A + A.T) / 2
    if zero_diag:
        np.fill_diagonal(Z, 0.0)
    return Z


def labeled_blobs(rng, n, p, k):
    """Features with class-dependent shifts so trees have something to find."""
    labels = rng.integers(0, k, size=n)
    X = rng.normal(size=(n, p)) + 0.8 * labels[:, None] * (np.arange(p) < 2)
    return X, labels
