"""Dense tensor algebra used by the emulators.

Tensors are plain ndarrays. Unfoldings order columns with earlier modes
varying fastest (Fortran order over the remaining modes), so mode-``n``
fibers become columns in the same order the nested loops of a textbook
unfolding visit them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError, UndefinedStatisticError


def unfold(t, mode):
    t = np.asarray(t)
    if not 0 <= mode < t.ndim:
        raise InvalidArgumentError(f"mode {mode} out of range for order-{t.ndim} tensor")
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1, order="F")


def fold(mat, mode, shape):
    shape = tuple(shape)
    moved = (shape[mode],) + shape[:mode] + shape[mode + 1:]
    return np.moveaxis(np.asarray(mat).reshape(moved, order="F"), 0, mode)


def nmode_product(t, m, mode):
    """Premultiply every mode-``mode`` fiber of ``t`` by ``m``."""
    t = np.asarray(t)
    m = np.asarray(m)
    if not 0 <= mode < t.ndim:
        raise InvalidArgumentError(f"mode {mode} out of range for order-{t.ndim} tensor")
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise InvalidArgumentError(
            f"matrix with {m.shape[-1]} columns cannot multiply mode of size {t.shape[mode]}")
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode)), 0, mode)


def canonical_signs(vectors):
    """Flip columns so the first entry that is not ~0 is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
        if len(nz) and col[nz[0]] < 0:
            vectors[:, j] = -col
    return vectors


@dataclass
class HosvdResult:
    factors: list
    core: np.ndarray

    def reconstruct(self):
        out = self.core
        for mode, u in enumerate(self.factors):
            out = nmode_product(out, u, mode)
        return out


def hosvd(t, ranks=None) -> HosvdResult:
    """Truncated higher-order SVD: leading left singular vectors of each unfolding."""
    t = np.asarray(t, dtype=float)
    if ranks is None:
        ranks = t.shape
    if len(ranks) != t.ndim:
        raise InvalidArgumentError("need one rank per mode")
    factors = []
    for mode, r in enumerate(ranks):
        if not 1 <= r <= t.shape[mode]:
            raise InvalidArgumentError(f"rank {r} invalid for mode of size {t.shape[mode]}")
        u, _, _ = np.linalg.svd(unfold(t, mode), full_matrices=False)
        factors.append(canonical_signs(u[:, :r]))
    core = t
    for mode, u in enumerate(factors):
        core = nmode_product(core, u.T, mode)
    return HosvdResult(factors, core)


@dataclass
class GramAccumulator:
    """Running ``sum(slab @ slab.T)`` over streamed slabs."""

    dim: int
    matrix: np.ndarray = field(default=None)
    count: int = 0

    def __post_init__(self):
        if self.matrix is None:
            self.matrix = np.zeros((self.dim, self.dim))

    def add(self, slab):
        slab = np.asarray(slab, dtype=float)
        if slab.ndim == 1:
            slab = slab[:, None]
        if slab.shape[0] != self.dim:
            raise InvalidArgumentError(f"slab has {slab.shape[0]} rows, expected {self.dim}")
        self.matrix += slab @ slab.T
        self.count += 1
        return self

    def merge(self, other: "GramAccumulator"):
        if other.dim != self.dim:
            raise InvalidArgumentError("cannot merge accumulators of different size")
        return GramAccumulator(self.dim, self.matrix + other.matrix, self.count + other.count)


def accumulate_gram(acc: GramAccumulator, slab) -> GramAccumulator:
    return acc.add(slab)


def top_eigenvectors(gram, r):
    """Unit eigenvectors for the ``r`` largest eigenvalues, descending.

    Columns are sign-normalized (first non-negligible entry positive). Ties
    keep numpy's ascending-index order after reversal, so the subspace, not
    the individual vectors, is what is guaranteed for repeated eigenvalues.
    """
    mat = gram.matrix if isinstance(gram, GramAccumulator) else np.asarray(gram, dtype=float)
    d = mat.shape[0]
    if not 1 <= r <= d:
        raise InvalidArgumentError(f"cannot take {r} eigenvectors of a {d}x{d} matrix")
    mat = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(mat)
    order = np.argsort(-vals, kind="stable")[:r]
    return canonical_signs(vecs[:, order])


@dataclass
class SumStats:
    """Streaming centered sum of squares of a tensor.

    Values are shifted by the mean of the first block to limit cancellation.
    """

    shift: float | None = None
    total: float = 0.0
    sumsq: float = 0.0
    count: int = 0

    def add(self, block):
        block = np.asarray(block, dtype=float)
        if self.shift is None:
            self.shift = float(block.mean())
        z = block - self.shift
        self.total += float(z.sum())
        self.sumsq += float(np.sum(z * z))
        self.count += block.size
        return self

    @property
    def centered_ss(self):
        if not self.count:
            return 0.0
        return max(self.sumsq - self.total ** 2 / self.count, 0.0)


def variance_explained(stats: SumStats, residual_ss):
    """``1 - ||T - T_hat||^2 / ||T - mean(T)||^2`` from streamed statistics."""
    denom = stats.centered_ss
    scale = (abs(stats.shift or 0.0) ** 2) * max(stats.count, 1)
    if denom <= 1e-28 * scale or denom == 0.0:
        raise UndefinedStatisticError("tensor is constant; variance explained is undefined")
    return 1.0 - float(residual_ss) / denom
