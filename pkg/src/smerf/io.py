"""CSV helpers and the binary model file.

Model file layout (version 1, all integers little-endian)::

    8 bytes   magic b"SMERFMDL"
    u32       format version
    u64       header length H
    H bytes   UTF-8 JSON header (sorted keys): n, p, num_trees,
              hyperparams, has_responses, z_sha256, and per-tree sizes
              {n_nodes, n_terms, n_leaves, n_members, n_bag, depth, mode}
    <f8[n*n]  training distance matrix, row-major
    <f8[n]    responses (only when has_responses)
    per tree, in tree order:
      <i8[n_nodes] left      <i8[n_nodes] right
      <f8[n_nodes] threshold <f8[n_nodes] gain
      <i8[n_nodes+1] proj_ptr  <i8[n_terms] proj_feat  <f8[n_terms] proj_weight
      <i8[n_nodes] node_leaf <i8[n_leaves+1] leaf_ptr
      <i8[n_members] leaf_members  <i8[n_bag] bag

The format stores raw float64 bits, so ``load_model(save_model(f))``
predicts bit-identically to ``f``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core import Hyperparams, SmerfError
from .forest import SmerfForest
from .tree import SmerfTree

MAGIC = b"SMERFMDL"
FORMAT_VERSION = 1

_TREE_ARRAYS = [
    ("left", "<i8", "n_nodes"),
    ("right", "<i8", "n_nodes"),
    ("threshold", "<f8", "n_nodes"),
    ("gain", "<f8", "n_nodes"),
    ("proj_ptr", "<i8", "n_ptr"),
    ("proj_feat", "<i8", "n_terms"),
    ("proj_weight", "<f8", "n_terms"),
    ("node_leaf", "<i8", "n_nodes"),
    ("leaf_ptr", "<i8", "n_lptr"),
    ("leaf_members", "<i8", "n_members"),
    ("bag", "<i8", "n_bag"),
]


class ModelFormatError(SmerfError):
    pass


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def read_matrix(path) -> np.ndarray:
    """Comma-separated numeric matrix with an optional single header row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise SmerfError(f"{path}: empty file")
    if not all(_is_number(t) for t in rows[0]):
        rows = rows[1:]
    try:
        M = np.array([[float(t) for t in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise SmerfError(f"{path}: {exc}") from None
    if M.ndim != 2:
        raise SmerfError(f"{path}: ragged rows")
    return M


def read_header(path) -> Optional[List[str]]:
    with open(path, newline="") as fh:
        first = next(csv.reader(fh), None)
    if first and not all(_is_number(t) for t in first):
        return first
    return None


def write_matrix(path, M, header: Optional[Sequence[str]] = None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_vector(path) -> np.ndarray:
    """One value per line (optional header); non-numeric values are kept as labels."""
    with open(path, newline="") as fh:
        vals = [r[0].strip() for r in csv.reader(fh) if r and r[0].strip()]
    if vals and not _is_number(vals[0]) and len(vals) > 1 and _is_number(vals[1]):
        vals = vals[1:]
    if all(_is_number(v) for v in vals):
        return np.array([float(v) for v in vals])
    return np.array(vals)


def read_edges(path, n: Optional[int] = None) -> np.ndarray:
    """Undirected adjacency from a ``source,target`` edge list of 0-based node ids."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and not all(_is_number(t) for t in rows[0][:2]):
        rows = rows[1:]
    edges = np.array([[int(float(r[0])), int(float(r[1]))] for r in rows], dtype=np.int64).reshape(-1, 2)
    size = int(edges.max()) + 1 if n is None and edges.size else (n or 0)
    if edges.size and (edges.min() < 0 or edges.max() >= size):
        raise SmerfError(f"{path}: node id outside [0, {size})")
    A = np.zeros((size, size))
    A[edges[:, 0], edges[:, 1]] = 1.0
    A[edges[:, 1], edges[:, 0]] = 1.0
    np.fill_diagonal(A, 0.0)
    return A


def write_edges(path, A) -> None:
    i, j = np.nonzero(np.triu(np.asarray(A), 1))
    with open(path, "w", newline="") as fh:
        fh.write("source,target\n")
        for a, b in zip(i, j):
            fh.write(f"{a},{b}\n")


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------


def _tree_sizes(t: SmerfTree) -> dict:
    return {
        "n_nodes": int(t.n_nodes),
        "n_terms": int(t.proj_feat.size),
        "n_leaves": int(t.n_leaves),
        "n_members": int(t.leaf_members.size),
        "n_bag": int(t.bag.size),
        "depth": int(t.depth),
        "mode": t.mode,
    }


def model_bytes(forest: SmerfForest) -> bytes:
    Z = np.ascontiguousarray(forest.train_Z, dtype="<f8")
    header = {
        "format_version": FORMAT_VERSION,
        "n": int(forest.n_train),
        "p": int(forest.n_features),
        "num_trees": forest.num_trees,
        "hyperparams": forest.hp.to_dict(),
        "has_responses": forest.responses is not None,
        "z_sha256": hashlib.sha256(Z.tobytes()).hexdigest(),
        "trees": [_tree_sizes(t) for t in forest.trees],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(head)), head, Z.tobytes()]
    if forest.responses is not None:
        parts.append(np.ascontiguousarray(forest.responses, dtype="<f8").tobytes())
    for t in forest.trees:
        for name, dt, _ in _TREE_ARRAYS:
            parts.append(np.ascontiguousarray(getattr(t, name), dtype=dt).tobytes())
    return b"".join(parts)


def save_model(forest: SmerfForest, path) -> None:
    Path(path).write_bytes(model_bytes(forest))


def load_model(path) -> SmerfForest:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ModelFormatError(f"{path}: not a SMERF model file")
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack_from("<Q", buf, 12)
    pos = 20
    header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    pos += hlen

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr.astype(dtype[1:], copy=True) if dtype[0] == "<" else arr

    n, p = header["n"], header["p"]
    Z = take("<f8", n * n).reshape(n, n)
    if hashlib.sha256(Z.astype("<f8").tobytes()).hexdigest() != header["z_sha256"]:
        raise ModelFormatError(f"{path}: distance matrix checksum mismatch")
    responses = take("<f8", n) if header["has_responses"] else None
    trees = []
    for sizes in header["trees"]:
        counts = dict(sizes, n_ptr=sizes["n_nodes"] + 1, n_lptr=sizes["n_leaves"] + 1)
        arrays = {name: take(dt, counts[key]) for name, dt, key in _TREE_ARRAYS}
        trees.append(SmerfTree(**arrays, depth=sizes["depth"], n_features=p, mode=sizes["mode"]))
    if pos != len(buf):
        raise ModelFormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return SmerfForest(trees, Hyperparams.from_dict(header["hyperparams"]), Z, p, responses)
