"""Pairwise edge features built from profile trees.

Four schemes are supported:

``phi1``  ``(1; -sigma(x, y))``               leaf-level differences between friends
``phi2``  ``(1; -|sigma(x, u) - sigma(y, u)|)`` leaf-level, relative to the ego ``u``
``psi1``  ``(1; -sigma'(x, y))``              per-category difference counts
``psi2``  ``(1; -|sigma'(x, u) - sigma'(y, u)|)``

Component 0 is always the constant feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EgoNetwork, ProfileStore, pair_index_arrays

SCHEMES = ("phi1", "phi2", "psi1", "psi2")


@dataclass(frozen=True)
class FeatureScheme:
    kind: str
    dimension: int

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown feature scheme {self.kind!r}; choose from {SCHEMES}")

    @classmethod
    def for_profiles(cls, kind: str, profiles: ProfileStore) -> "FeatureScheme":
        if kind in ("phi1", "phi2"):
            return cls(kind, profiles.n_leaves + 1)
        if kind in ("psi1", "psi2"):
            return cls(kind, len(profiles.categories()) + 1)
        raise ValueError(f"unknown feature scheme {kind!r}; choose from {SCHEMES}")

    @property
    def compressed(self) -> bool:
        return self.kind.startswith("psi")

    @property
    def ego_relative(self) -> bool:
        return self.kind.endswith("2")


def diff_vector(x, y, profiles: ProfileStore) -> np.ndarray:
    """Leaf indicator of where the two profiles disagree."""
    return (profiles.row(x) != profiles.row(y)).astype(np.int8)


def _compress(sigma: np.ndarray, cat_index: np.ndarray, n_cat: int) -> np.ndarray:
    out = np.zeros(sigma.shape[:-1] + (n_cat,), dtype=np.int64)
    np.add.at(out.T, cat_index, np.moveaxis(sigma, -1, 0))
    return out


def compressed_diff(x, y, profiles: ProfileStore) -> np.ndarray:
    """Number of disagreeing leaves under each category."""
    return _compress(diff_vector(x, y, profiles), profiles.category_index(), len(profiles.categories()))


def _ego_diffs(profiles: ProfileStore, rows: np.ndarray, compressed: bool) -> np.ndarray:
    d = (rows != profiles.ego_features).astype(np.int64)
    if compressed:
        d = _compress(d, profiles.category_index(), len(profiles.categories()))
    return d


def pair_features(scheme: FeatureScheme, x, y, profiles: ProfileStore) -> np.ndarray:
    if scheme.ego_relative:
        rows = np.stack([profiles.row(x), profiles.row(y)])
        d = _ego_diffs(profiles, rows, scheme.compressed)
        body = np.abs(d[0] - d[1])
    elif scheme.compressed:
        body = compressed_diff(x, y, profiles)
    else:
        body = diff_vector(x, y, profiles)
    out = np.empty(scheme.dimension, dtype=float)
    out[0] = 1.0
    out[1:] = -body
    return out


class EdgeFeatureCache:
    """Feature vectors for the whole pair domain of one network.

    With ``dense=True`` (default) the ``(n_pairs, D)`` matrix is built once;
    otherwise rows are computed when requested.  The per-node encoding used by
    every scheme is kept in ``node_codes`` so that a pair's features are a
    cheap function of the two codes.
    """

    def __init__(self, network: EgoNetwork, profiles: ProfileStore, scheme="phi1", dense=True):
        if isinstance(scheme, str):
            scheme = FeatureScheme.for_profiles(scheme, profiles)
        self.network = network
        self.profiles = profiles
        self.scheme = scheme
        rows = profiles.matrix(network.nodes).astype(np.int64)
        self.binary_rows = rows
        # sigma'(x, y) needs the per-leaf XOR first, so psi1 keeps raw leaves and compresses per pair
        if scheme.ego_relative:
            self.node_codes = _ego_diffs(profiles, rows, scheme.compressed)
        else:
            self.node_codes = rows
        if scheme.compressed and not scheme.ego_relative:
            self._cat_index = profiles.category_index()
            self._n_cat = len(profiles.categories())
        self.pair_i, self.pair_j = pair_index_arrays(network.n, network.directed)
        self._dense = None
        if dense:
            self._dense = self.rows_for(self.pair_i, self.pair_j)

    @property
    def dimension(self) -> int:
        return self.scheme.dimension

    @property
    def n_pairs(self) -> int:
        return self.pair_i.size

    def rows_for(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Feature rows for node-position arrays ``i`` and ``j``."""
        return self.rows_from_codes(self.node_codes[np.asarray(i)], self.node_codes[np.asarray(j)])

    def rows_from_codes(self, ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
        ci = np.atleast_2d(ci)
        cj = np.atleast_2d(cj)
        if self.scheme.ego_relative:
            body = np.abs(ci - cj)
        else:
            body = (ci != cj).astype(np.int64)
            if self.scheme.compressed:
                body = _compress(body, self._cat_index, self._n_cat)
        out = np.empty((body.shape[0], self.dimension), dtype=float)
        out[:, 0] = 1.0
        out[:, 1:] = -body
        return out

    def code_for(self, profile_row) -> np.ndarray:
        """Per-node code of a profile that is not (yet) part of the network."""
        row = np.asarray(profile_row, dtype=np.int64).reshape(1, -1)
        if row.shape[1] != self.profiles.n_leaves:
            raise ValueError(f"profile has {row.shape[1]} leaves, expected {self.profiles.n_leaves}")
        if self.scheme.ego_relative:
            return _ego_diffs(self.profiles, row, self.scheme.compressed)[0]
        return row[0]

    def matrix(self) -> np.ndarray:
        if self._dense is None:
            return self.rows_for(self.pair_i, self.pair_j)
        return self._dense

    def get(self, x, y) -> np.ndarray:
        idx = self.network.index
        return self.rows_for(np.array([idx[x]]), np.array([idx[y]]))[0]
