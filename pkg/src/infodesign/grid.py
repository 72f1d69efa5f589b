"""Composition grid on the belief simplex with Freudenthal interpolation.

Grid points are the beliefs ``k / M`` for integer compositions ``k`` of ``M``
into ``n`` parts.  Linear interpolation uses the Freudenthal (Kuhn)
triangulation of the scaled simplex, which is carried out in the
cumulative coordinates ``z_i = M * sum_{j >= i} b_j``: the containing
sub-simplex and its barycentric weights follow from sorting the fractional
parts of ``z``.
"""
from __future__ import annotations

import enum
import itertools
from math import comb

import numpy as np


class Interp(str, enum.Enum):
    NEAREST = "nearest"
    LINEAR = "linear"


def compositions(total: int, parts: int):
    """Yield compositions of ``total`` into ``parts`` nonnegative integers,
    in lexicographic order of the cumulative tail sums."""
    for bars in itertools.combinations_with_replacement(range(total, -1, -1), parts - 1):
        # bars are z_2 >= ... >= z_n, with z_1 = total
        z = (total, *bars, 0)
        yield tuple(z[i] - z[i + 1] for i in range(parts))


class BeliefGrid:
    """Regular grid of resolution ``M`` on the simplex over ``n`` states."""

    def __init__(self, n_states: int, resolution: int, interp: Interp | str = Interp.LINEAR):
        if resolution < 1:
            raise ValueError("grid resolution must be >= 1")
        self.n = int(n_states)
        self.M = int(resolution)
        self.interp = Interp(interp)
        comps = np.array(list(compositions(self.M, self.n)), dtype=np.int64).reshape(-1, self.n)
        self.counts = comps
        self.points = comps / self.M
        assert len(self.points) == comb(self.M + self.n - 1, self.n - 1)
        # mixed-radix code over the tail sums z_2..z_n -> grid index
        self._radix = (self.M + 1) ** np.arange(self.n - 1)
        size = (self.M + 1) ** (self.n - 1)
        self._lookup = np.full(size, -1, dtype=np.int64)
        self._lookup[self._codes(self._tails(comps))] = np.arange(len(comps))

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"BeliefGrid(n_states={self.n}, resolution={self.M}, interp={self.interp.value!r})"

    # -- indexing ---------------------------------------------------------------

    @staticmethod
    def _tails(k: np.ndarray) -> np.ndarray:
        """Cumulative tail sums z_2..z_n of integer compositions (..., n)."""
        z = np.cumsum(k[..., ::-1], axis=-1)[..., ::-1]
        return z[..., 1:]

    def _codes(self, tails: np.ndarray) -> np.ndarray:
        if self.n == 1:
            return np.zeros(tails.shape[:-1], dtype=np.int64)
        return tails @ self._radix

    def index_of(self, counts) -> np.ndarray | int:
        """Grid index of integer composition(s) ``counts``."""
        k = np.asarray(counts, dtype=np.int64)
        idx = self._lookup[self._codes(self._tails(k))]
        if np.any(idx < 0):
            raise KeyError("not a grid composition")
        return int(idx) if idx.ndim == 0 else idx

    def find(self, b: np.ndarray, tol: float = 1e-12) -> int | None:
        """Index of the grid point equal to ``b`` (within ``tol``), else None."""
        b = np.asarray(b, dtype=float)
        k = np.rint(b * self.M)
        if np.max(np.abs(b * self.M - k)) > tol * self.M or k.sum() != self.M or np.any(k < 0):
            return None
        return self.index_of(k.astype(np.int64))

    # -- lookup -----------------------------------------------------------------

    def nearest(self, B: np.ndarray) -> np.ndarray:
        """Index of the L1-nearest grid point (largest-remainder rounding).

        Ties go to the lower state index.
        """
        B = np.atleast_2d(np.asarray(B, dtype=float))
        y = B * self.M
        k = np.floor(y)
        frac = y - k
        short = (self.M - k.sum(axis=1)).astype(np.int64)
        order = np.argsort(-frac, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(self.n)[None, :].repeat(len(B), 0), axis=1)
        k = k + (rank < short[:, None])
        return self.index_of(np.clip(k, 0, self.M).astype(np.int64))

    def simplex(self, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vertices and barycentric weights of the containing Freudenthal cell.

        Returns ``(idx, w)`` with shapes (m, n): grid indices and weights
        (nonnegative, summing to one) such that ``w @ points[idx] == b``.
        """
        B = np.atleast_2d(np.asarray(B, dtype=float))
        m, n = B.shape
        if n == 1:
            return np.zeros((m, 1), dtype=np.int64), np.ones((m, 1))
        z = np.cumsum(B[:, ::-1], axis=1)[:, ::-1] * self.M
        z[:, 0] = self.M
        near = np.rint(z)
        z = np.where(np.abs(z - near) <= 1e-12, near, z)
        z = np.minimum.accumulate(np.clip(z, 0.0, self.M), axis=1)
        v = np.floor(z)
        d = z - v
        tail = d[:, 1:]
        order = np.argsort(-tail, axis=1, kind="stable")  # ties: lower coordinate first
        ds = np.take_along_axis(tail, order, axis=1)
        w = np.empty((m, n))
        w[:, 0] = 1.0 - ds[:, 0]
        w[:, 1:-1] = ds[:, :-1] - ds[:, 1:]
        w[:, -1] = ds[:, -1]
        # vertex k = v + sum_{j<=k} e_{order_j} in tail coordinates
        steps = np.zeros((m, n, n - 1), dtype=np.int64)
        rows = np.arange(m)
        for k in range(1, n):
            steps[:, k] = steps[:, k - 1]
            steps[rows, k, order[:, k - 1]] += 1
        tails = v[:, None, 1:].astype(np.int64) + steps
        # vertices past the last positive fractional part carry zero weight and
        # may leave the grid on the boundary; collapse them onto the base vertex
        dead = np.concatenate([np.zeros((m, 1), dtype=bool), ds <= 0.0], axis=1)
        tails = np.where(dead[:, :, None], tails[:, :1, :], tails)
        idx = self._lookup[self._codes(tails)]
        if np.any(idx < 0):
            raise RuntimeError("Freudenthal vertex outside the grid; belief not on the simplex?")
        w = np.clip(w, 0.0, None)
        w /= w.sum(axis=1, keepdims=True)
        return idx, w

    def weights(self, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolation stencil under this grid's interpolation mode."""
        if self.interp is Interp.NEAREST:
            idx = self.nearest(B)
            return idx[:, None], np.ones((len(idx), 1))
        return self.simplex(B)

    def interpolate(self, values: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Interpolate grid ``values`` (G, ...) at beliefs ``B`` (m, n) -> (m, ...)."""
        idx, w = self.weights(B)
        vals = np.asarray(values)[idx]  # (m, k, ...)
        w = w.reshape(w.shape + (1,) * (vals.ndim - 2))
        return (vals * w).sum(axis=1)
