"""Synthetic distance families, their Bayes-optimal distances, and an SBM generator.

The three 20-dimensional families (regression, bilinear, radial) have
distances in [0, 1] and carry the similarity ``Q = 1 - Z``. Only the first
two coordinates drive the distance; the rest are irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import InvalidProbability, UnknownFamily

__all__ = [
    "SimulatedSet",
    "FAMILIES",
    "REGRESSION_NOISE_CONSTANT",
    "THEORY_SIGMA2",
    "gen_regression_distance",
    "gen_bilinear_distance",
    "gen_radial_distance",
    "gen_additive_theory",
    "generate",
    "bayes_distance_oracle",
    "sbm_blocks",
    "gen_sbm_network",
]

FAMILIES = ("regression", "bilinear", "radial", "theory")

# Var(eps - eps') for eps ~ U(-0.1, 0.1)
REGRESSION_NOISE_CONSTANT = 2 * 0.2**2 / 12
THEORY_SIGMA2 = 0.01


@dataclass(frozen=True)
class SimulatedSet:
    X: np.ndarray
    Z: np.ndarray
    Q: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    family: str = ""

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "SimulatedSet":
        rows = np.asarray(rows)
        block = np.ix_(rows, rows)
        return SimulatedSet(
            self.X[rows],
            self.Z[block],
            None if self.Q is None else self.Q[block],
            None if self.y is None else self.y[rows],
            self.family,
        )


def _check_n(n: int):
    if n < 2:
        raise ValueError("pairwise data needs n >= 2")


def gen_regression_distance(n: int, seed: int, p: int = 20, noise: bool = True) -> SimulatedSet:
    """``y = (x1 + x2)/2 + eps``, ``eps ~ U(-0.1, 0.1)``, ``z_ij = (y_i - y_j)^2``."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.1, 0.9, size=(n, p))
    eps = rng.uniform(-0.1, 0.1, size=n)
    if not noise:
        eps[:] = 0.0
    y = 0.5 * (X[:, 0] + X[:, 1]) + eps
    Z = (y[:, None] - y[None, :]) ** 2
    return SimulatedSet(X, Z, 1.0 - Z, y, "regression")


def gen_bilinear_distance(n: int, seed: int, p: int = 20) -> SimulatedSet:
    """``q_ij = y_i y_j`` with noiseless ``y = (x1 + x2)/2``; ``Z = 1 - Q``.

    The diagonal is ``1 - y_i^2``, not zero: self-similarity is ``y_i^2``.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, p))
    y = 0.5 * (X[:, 0] + X[:, 1])
    Z = 1.0 - np.outer(y, y)
    return SimulatedSet(X, Z, 1.0 - Z, y, "bilinear")


def gen_radial_distance(n: int, seed: int, p: int = 20) -> SimulatedSet:
    """Uniform points in the unit ball; ``z_ij = (|x_i[:2]| - |x_j[:2]|)^2``."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(size=(n, p))
    directions = g / np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.uniform(size=n) ** (1.0 / p)
    X = directions * radius[:, None]
    r2 = np.linalg.norm(X[:, :2], axis=1)
    Z = (r2[:, None] - r2[None, :]) ** 2
    return SimulatedSet(X, Z, 1.0 - Z, r2, "radial")


def gen_additive_theory(n: int, seed: int, p: int = 2, sigma2: float = THEORY_SIGMA2) -> SimulatedSet:
    """``y = x1^2 + x2^2 + eps``, ``eps ~ N(0, sigma2)``, ``z_ij = (y_i - y_j)^2 / 2``.

    Columns beyond the first two are irrelevant uniforms.
    """
    _check_n(n)
    if p < 2:
        raise ValueError("the additive model uses two informative features")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    y = X[:, 0] ** 2 + X[:, 1] ** 2 + rng.normal(0.0, np.sqrt(sigma2), size=n)
    Z = 0.5 * (y[:, None] - y[None, :]) ** 2
    return SimulatedSet(X, Z, None, y, "theory")


_GENERATORS = {
    "regression": gen_regression_distance,
    "bilinear": gen_bilinear_distance,
    "radial": gen_radial_distance,
    "theory": gen_additive_theory,
}


def generate(family: str, n: int, seed: int) -> SimulatedSet:
    try:
        return _GENERATORS[family](n, seed)
    except KeyError:
        raise UnknownFamily(f"unknown family {family!r}") from None


def bayes_distance_oracle(family: str, x, x_prime) -> np.ndarray:
    """``E[z | x, x']`` for independent draws at ``x`` and ``x'``.

    Broadcasts over leading dimensions of ``x`` and ``x_prime``.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    if family == "regression":
        m, mp = 0.5 * (x[..., 0] + x[..., 1]), 0.5 * (xp[..., 0] + xp[..., 1])
        return (m - mp) ** 2 + REGRESSION_NOISE_CONSTANT
    if family == "bilinear":
        return 1.0 - 0.25 * (x[..., 0] + x[..., 1]) * (xp[..., 0] + xp[..., 1])
    if family == "radial":
        return (np.hypot(x[..., 0], x[..., 1]) - np.hypot(xp[..., 0], xp[..., 1])) ** 2
    if family == "theory":
        m = x[..., 0] ** 2 + x[..., 1] ** 2
        mp = xp[..., 0] ** 2 + xp[..., 1] ** 2
        return 0.5 * (m - mp) ** 2 + THEORY_SIGMA2
    raise UnknownFamily(f"no Bayes oracle for family {family!r}")


def sbm_blocks(n: int, blocks: int) -> np.ndarray:
    """Contiguous, balanced block labels ``0..blocks-1``."""
    return (np.arange(n) * blocks) // n


def gen_sbm_network(n: int, blocks: int, p_in: float, p_out: float, attr_noise: float,
                    seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stochastic block model with noisy one-hot block attributes.

    Returns ``(adjacency, attributes)``: a symmetric 0/1 matrix with zero
    diagonal, and an ``n x blocks`` one-hot membership matrix whose bits are
    each flipped independently with probability ``attr_noise``.
    """
    if not 2 <= blocks <= n:
        raise ValueError("need 2 <= blocks <= n")
    for name, v in (("p_in", p_in), ("p_out", p_out), ("attr_noise", attr_noise)):
        if not 0.0 <= v <= 1.0:
            raise InvalidProbability(f"{name}={v} is not a probability")
    rng = np.random.default_rng(seed)
    member = sbm_blocks(n, blocks)
    prob = np.where(member[:, None] == member[None, :], p_in, p_out)
    upper = np.triu(rng.uniform(size=(n, n)) < prob, 1)
    A = (upper | upper.T).astype(np.float64)
    onehot = np.eye(blocks)[member]
    flips = rng.uniform(size=onehot.shape) < attr_noise
    attributes = np.where(flips, 1.0 - onehot, onehot)
    return A, attributes
