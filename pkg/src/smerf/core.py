"""Shared types, validation and per-tree random streams.

Feature matrices and distance matrices are plain ``float64`` numpy arrays.
The validators below return read-only copies so that fitted trees and
forests can share them between threads without defensive copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "SmerfError",
    "NonSquare",
    "AsymmetryExceedsTolerance",
    "NonFiniteEntry",
    "IndexOutOfRange",
    "NotAPartition",
    "NoValidSplit",
    "DimensionMismatch",
    "UnknownLeaf",
    "ShapeMismatch",
    "NoCoveredPairs",
    "NotInReductionMode",
    "UnknownFamily",
    "InvalidProbability",
    "TooFewPoints",
    "SingleClass",
    "NoPositives",
    "DegenerateRanks",
    "SparseProjection",
    "SplitParams",
    "Hyperparams",
    "as_feature_matrix",
    "validate_distance_matrix",
    "derive_stream",
]


class SmerfError(ValueError):
    """Base class for all data and contract errors raised by the package."""


class NonSquare(SmerfError):
    pass


class AsymmetryExceedsTolerance(SmerfError):
    def __init__(self, i: int, j: int, diff: float):
        super().__init__(f"|z[{i},{j}] - z[{j},{i}]| = {diff:.3g} exceeds tolerance")
        self.i, self.j = i, j


class NonFiniteEntry(SmerfError):
    def __init__(self, i: int, j: int):
        super().__init__(f"non-finite entry at ({i}, {j})")
        self.i, self.j = i, j


class IndexOutOfRange(SmerfError):
    pass


class NotAPartition(SmerfError):
    pass


class NoValidSplit(SmerfError):
    pass


class DimensionMismatch(SmerfError):
    pass


class UnknownLeaf(SmerfError):
    pass


class ShapeMismatch(SmerfError):
    pass


class NoCoveredPairs(SmerfError):
    pass


class NotInReductionMode(SmerfError):
    pass


class UnknownFamily(SmerfError):
    pass


class InvalidProbability(SmerfError):
    pass


class TooFewPoints(SmerfError):
    pass


class SingleClass(SmerfError):
    pass


class NoPositives(SmerfError):
    pass


class DegenerateRanks(SmerfError):
    pass


AXIS = "axis"
BINARY = "binary"
BOOTSTRAP = "bootstrap"
SUBSAMPLE = "subsample"


@dataclass(frozen=True)
class SparseProjection:
    """A split direction: ``sum(w * x[f] for f, w in terms)``.

    ``mode`` is ``"axis"`` for a single +1 term or ``"binary"`` for a sparse
    projection with weights in {-1, +1}.
    """

    terms: Tuple[Tuple[int, int], ...]
    mode: str = AXIS

    def __post_init__(self):
        if not self.terms:
            raise ValueError("projection needs at least one term")
        feats = [f for f, _ in self.terms]
        if len(set(feats)) != len(feats):
            raise ValueError("projection features must be distinct")
        if any(w not in (-1, 1) for _, w in self.terms):
            raise ValueError("projection weights must be -1 or +1")
        if self.mode == AXIS and (len(self.terms) != 1 or self.terms[0][1] != 1):
            raise ValueError("axis-aligned projection must be a single +1 term")

    @property
    def features(self) -> Tuple[int, ...]:
        return tuple(f for f, _ in self.terms)

    @property
    def weights(self) -> Tuple[int, ...]:
        return tuple(w for _, w in self.terms)

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(X.shape[0])
        for f, w in self.terms:
            out += w * X[:, f]
        return out


@dataclass(frozen=True)
class SplitParams:
    projection: SparseProjection
    threshold: float

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


@dataclass(frozen=True)
class Hyperparams:
    """Forest hyperparameters.

    Parameters
    ----------
    num_trees : int
        Number of trees ``B``.
    d : int or None
        Candidate projections tried per split node. ``None`` resolves to
        ``round(sqrt(p))`` at training time. Capped at ``p`` in axis mode.
    min_parent : int
        Minimum number of bag entries a node needs before a split is tried.
    max_depth : int or None
        ``None`` grows until ``min_parent`` or purity stops the recursion.
    sampling : {"bootstrap", "subsample"}
        How each tree's bag is drawn.
    subsample_size : int, float or None
        Bag size ``a_n`` for ``"subsample"``: an absolute count, or a fraction
        of ``n`` when given as a float. ``None`` means ``0.632 * n``.
    projection : {"axis", "binary"}
        Axis-aligned feature subsampling or sparse {-1, +1} projections.
    lam : float
        Expected nonzeros per sparse projection (binary mode only).
    seed : int
        Master seed; tree ``b`` uses ``derive_stream(seed, b)``.
    """

    num_trees: int = 500
    d: Optional[int] = None
    min_parent: int = 2
    max_depth: Optional[int] = None
    sampling: str = BOOTSTRAP
    subsample_size: Union[int, float, None] = None
    projection: str = AXIS
    lam: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.d is not None and self.d < 1:
            raise ValueError("d must be >= 1")
        if self.min_parent < 2:
            raise ValueError("min_parent must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.sampling not in (BOOTSTRAP, SUBSAMPLE):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.projection not in (AXIS, BINARY):
            raise ValueError(f"unknown projection mode {self.projection!r}")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def resolve_d(self, p: int) -> int:
        d = self.d if self.d is not None else max(1, int(round(math.sqrt(p))))
        return min(d, p) if self.projection == AXIS else d

    def bag_size(self, n: int) -> int:
        if self.sampling == BOOTSTRAP:
            return n
        a = self.subsample_size
        if a is None:
            a = 0.632
        if isinstance(a, float):
            a = int(round(a * n))
        return int(min(max(a, 1), n))

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "d": self.d,
            "min_parent": self.min_parent,
            "max_depth": self.max_depth,
            "sampling": self.sampling,
            "subsample_size": self.subsample_size,
            "projection": self.projection,
            "lam": self.lam,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_feature_matrix(X) -> np.ndarray:
    """Validate an ``n x p`` feature matrix; returns a read-only float64 copy."""
    X = np.array(X, dtype=np.float64, order="C", copy=True)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeMismatch(f"feature matrix must be n x p with n, p >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        i, j = np.argwhere(~np.isfinite(X))[0]
        raise NonFiniteEntry(int(i), int(j))
    return _readonly(X)


def validate_distance_matrix(values, tolerance: float = 1e-9) -> np.ndarray:
    """Check and symmetrize an observed distance matrix.

    Entries with ``|z_ij - z_ji| <= tolerance * max|z|`` are replaced by their
    mean, so the result is exactly symmetric. Negative entries are allowed and
    the diagonal is passed through untouched.
    """
    Z = np.array(values, dtype=np.float64, order="C", copy=True)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise NonSquare(f"distance matrix must be square, got shape {Z.shape}")
    bad = ~np.isfinite(Z)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteEntry(int(i), int(j))
    scale = float(np.max(np.abs(Z))) if Z.size else 0.0
    diff = np.abs(Z - Z.T)
    over = np.triu(diff > tolerance * scale, 1)
    if over.any():
        i, j = np.argwhere(over)[0]
        raise AsymmetryExceedsTolerance(int(i), int(j), float(diff[i, j]))
    iu = np.triu_indices(Z.shape[0], 1)
    mean = 0.5 * (Z[iu] + Z.T[iu])
    Z[iu] = mean
    Z.T[iu] = mean
    return _readonly(Z)


def derive_stream(master_seed: int, tree_index: int) -> np.random.Generator:
    """Counter-based random stream for one tree.

    The stream is a pure function of ``(master_seed, tree_index)``: a Philox
    generator keyed through ``SeedSequence`` with ``tree_index`` as the spawn
    key, so tree ``b`` sees the same draws however the trees are scheduled.
    """
    if tree_index < 0:
        raise ValueError("tree_index must be >= 0")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(tree_index),))
    return np.random.Generator(np.random.Philox(ss))


def check_indices(indices: Sequence[int], n: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise IndexOutOfRange("node sample must be a non-empty 1-D index list")
    if idx.min() < 0 or idx.max() >= n:
        raise IndexOutOfRange(f"indices must lie in [0, {n})")
    return idx
