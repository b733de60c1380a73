"""Finite lattices with a graph metric and the polynomial-growth certificate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameterError

KINDS = ("chain", "ring", "grid", "custom")


@dataclass
class Lattice:
    kind: str
    extents: tuple
    wrap: bool = False
    _metric: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_sites(self) -> int:
        if self.kind == "custom":
            return self._metric.shape[0]
        return int(np.prod(self.extents))

    @property
    def geometric_dim(self) -> int:
        if self.kind in ("chain", "ring"):
            return 1
        if self.kind == "grid":
            return max(1, sum(1 for e in self.extents if e > 1))
        return 1

    def coords(self, idx) -> np.ndarray:
        """Row-major grid coordinates of site index/indices."""
        return np.stack(np.unravel_index(np.asarray(idx), self.extents), axis=-1)

    def distance(self, i, j):
        """Graph distance, vectorised over broadcastable index arrays."""
        if self.kind == "custom":
            return self._metric[np.asarray(i), np.asarray(j)]
        ci, cj = self.coords(i), self.coords(j)
        diff = np.abs(ci - cj)
        if self.wrap:
            ext = np.asarray(self.extents)
            diff = np.minimum(diff, ext - diff)
        return diff.sum(axis=-1)

    @property
    def metric(self) -> np.ndarray:
        if self._metric is None:
            idx = np.arange(self.n_sites)
            self._metric = self.distance(idx[:, None], idx[None, :]).astype(np.int64)
        return self._metric

    def set_distance(self, a: Iterable[int], b: Iterable[int]) -> int:
        a, b = np.fromiter(a, dtype=int), np.fromiter(b, dtype=int)
        if a.size == 0 or b.size == 0:
            raise InvalidParameterError("set distance of an empty set is undefined")
        return int(self.distance(a[:, None], b[None, :]).min())

    def ball(self, centre: Sequence[int], radius: float) -> np.ndarray:
        """Sites within `radius` of any site in `centre`."""
        centre = np.asarray(list(centre), dtype=int)
        if centre.size == 0:
            return np.zeros(0, dtype=int)
        idx = np.arange(self.n_sites)
        d = self.distance(idx[:, None], centre[None, :]).min(axis=1)
        return idx[d <= radius]


def build_lattice(kind: str, extents, wrap: bool = False, metric=None) -> Lattice:
    if kind not in KINDS:
        raise InvalidParameterError(f"unknown lattice kind {kind!r}")
    if kind == "custom":
        m = np.asarray(metric)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise InvalidParameterError("custom metric must be a non-empty square matrix")
        if np.any(np.diag(m) != 0) or np.any(m != m.T) or np.any(m[~np.eye(len(m), dtype=bool)] < 1):
            raise InvalidParameterError("custom metric must be symmetric, zero on the diagonal, >= 1 off it")
        if np.any(m != np.round(m)):
            raise InvalidParameterError("custom metric must be integer valued")
        return Lattice("custom", (m.shape[0],), False, m.astype(np.int64))
    if isinstance(extents, (int, np.integer)):
        extents = (int(extents),)
    extents = tuple(int(e) for e in extents)
    if not extents or any(e < 1 for e in extents):
        raise InvalidParameterError(f"extents must be positive integers, got {extents}")
    if kind in ("chain", "ring") and len(extents) != 1:
        raise InvalidParameterError(f"{kind} takes a single extent")
    if kind == "ring":
        wrap = True
    if kind == "chain":
        wrap = False
    return Lattice(kind, extents, bool(wrap))


@dataclass
class DimensionCertificate:
    D: int
    c_D: float
    n_sites: int
    max_ratio_by_D: dict

    def holds(self, shell_counts: np.ndarray) -> bool:
        ell = np.arange(1, shell_counts.shape[1])
        return bool(np.all(shell_counts[:, 1:] <= self.c_D * ell ** (self.D - 1) + 1e-12))


def shell_counts(lat: Lattice) -> np.ndarray:
    """counts[j, l] = number of sites at distance exactly l from j."""
    m = lat.metric
    top = int(m.max()) if m.size else 0
    counts = np.zeros((lat.n_sites, top + 1), dtype=np.int64)
    for j in range(lat.n_sites):
        counts[j] = np.bincount(m[j], minlength=top + 1)
    return counts


LARGE_CHAIN = 2048


def _chain_certificate(n: int) -> DimensionCertificate:
    """Closed form for chains and rings: every shell holds at most 2 sites, and the
    middle site has 2 at distance 1 whenever n >= 3."""
    c = 2.0 if n >= 3 else (1.0 if n == 2 else 0.0)
    return DimensionCertificate(1, c, n, {1: c, 2: c})


def dimension_certificate(lat: Lattice) -> DimensionCertificate:
    """Smallest c_D with |{i : d(i,j) = l}| <= c_D l^(D-1) for all j and l >= 1.

    For chains, rings and grids D is the geometric dimension of the family;
    for a custom metric any finite graph certifies D = 1, so that is returned.
    """
    if lat.kind in ("chain", "ring") and lat.n_sites > LARGE_CHAIN:
        return _chain_certificate(lat.n_sites)
    counts = shell_counts(lat)
    if counts.shape[1] < 2:
        # single site: no shells at l >= 1
        return DimensionCertificate(lat.geometric_dim, 0.0, lat.n_sites, {})
    ell = np.arange(1, counts.shape[1], dtype=float)
    ratios = {}
    for D in range(1, lat.geometric_dim + 2):
        ratios[D] = float((counts[:, 1:] / ell ** (D - 1)).max())
    D = lat.geometric_dim
    return DimensionCertificate(D, ratios[D], lat.n_sites, ratios)
