"""Ego-network containers and the SNAP-style file family reader/writer.

One ego-network lives in a directory as ``<ego>.edges``, ``<ego>.feat``,
``<ego>.egofeat``, ``<ego>.featnames`` and ``<ego>.circles``.  Only the
first two are required.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed."""

    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class EgoNetwork:
    """Alters of one ego and the edges among them.

    ``nodes`` fixes the node order used by every dense array in the package;
    ``index`` maps node id to that position.  Undirected edges are stored with
    the smaller id first.
    """

    nodes: tuple
    edges: frozenset
    directed: bool = False
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        index = {v: i for i, v in enumerate(nodes)}
        if len(index) != len(nodes):
            raise ValueError("duplicate node ids")
        object.__setattr__(self, "index", index)
        canon = set()
        for x, y in self.edges:
            if x == y:
                raise ValueError(f"self-loop on node {x!r}")
            if x not in index or y not in index:
                raise ValueError(f"edge ({x!r}, {y!r}) has an endpoint outside the node set")
            if not self.directed and y < x:
                x, y = y, x
            canon.add((x, y))
        object.__setattr__(self, "edges", frozenset(canon))

    @property
    def n(self) -> int:
        return len(self.nodes)

    def has_edge(self, x, y) -> bool:
        if self.directed:
            return (x, y) in self.edges
        if y < x:
            x, y = y, x
        return (x, y) in self.edges

    def edge_index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges as two position arrays (sorted, so the order is reproducible)."""
        pos = sorted((self.index[x], self.index[y]) for x, y in self.edges)
        if not pos:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.asarray(pos, dtype=np.int64)
        return arr[:, 0], arr[:, 1]


def pair_iterator(network: EgoNetwork) -> Iterator[tuple]:
    """Yield every node pair of the likelihood's summation domain.

    Unordered pairs (in node order) for undirected networks, ordered pairs
    otherwise.  Self-pairs are never produced.
    """
    if network.directed:
        return itertools.permutations(network.nodes, 2)
    return itertools.combinations(network.nodes, 2)


def pair_index_arrays(n: int, directed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Position arrays ``(i, j)`` enumerating the same domain as :func:`pair_iterator`."""
    if directed:
        i, j = np.nonzero(~np.eye(n, dtype=bool))
    else:
        i, j = np.triu_indices(n, k=1)
    return i.astype(np.int64), j.astype(np.int64)


@dataclass(frozen=True)
class ProfileStore:
    """Binary leaf indicators for every alter and for the ego.

    ``feat_names[l]`` is the tree path of leaf ``l``; its parent category is the
    path minus the final segment.
    """

    feat_names: tuple
    node_features: dict
    ego_features: np.ndarray

    def __post_init__(self):
        names = tuple(tuple(p) for p in self.feat_names)
        object.__setattr__(self, "feat_names", names)
        L = len(names)
        for p in names:
            if len(p) < 2:
                raise ValueError(f"feature path {';'.join(p)!r} has no parent category")
        ego = np.asarray(self.ego_features, dtype=np.int8)
        if ego.shape != (L,):
            raise ValueError(f"ego feature vector has length {ego.size}, expected {L}")
        object.__setattr__(self, "ego_features", ego)
        feats = {}
        for v, row in self.node_features.items():
            row = np.asarray(row, dtype=np.int8)
            if row.shape != (L,):
                raise ValueError(f"node {v!r} has {row.size} features, expected {L}")
            feats[v] = row
        object.__setattr__(self, "node_features", feats)

    @property
    def n_leaves(self) -> int:
        return len(self.feat_names)

    def row(self, v) -> np.ndarray:
        r = self.node_features.get(v)
        if r is None:
            return np.zeros(self.n_leaves, dtype=np.int8)
        return r

    def matrix(self, nodes: Sequence) -> np.ndarray:
        """Stack rows for ``nodes``; missing nodes get all-zero rows."""
        if not len(nodes):
            return np.zeros((0, self.n_leaves), dtype=np.int8)
        return np.stack([self.row(v) for v in nodes])

    def categories(self) -> list[tuple]:
        """Leaf parents, ordered by first appearance."""
        seen = {}
        for p in self.feat_names:
            seen.setdefault(p[:-1], len(seen))
        return list(seen)

    def category_index(self) -> np.ndarray:
        """``category_index()[l]`` is the position of leaf ``l``'s parent."""
        cats = {c: i for i, c in enumerate(self.categories())}
        return np.asarray([cats[p[:-1]] for p in self.feat_names], dtype=np.int64)


@dataclass
class CircleAssignment:
    circles: list
    names: list | None = None

    def __post_init__(self):
        self.circles = [set(c) for c in self.circles]
        if self.names is None:
            self.names = [f"circle{k}" for k in range(len(self.circles))]
        if len(self.names) != len(self.circles):
            raise ValueError("one name per circle required")

    @property
    def k(self) -> int:
        return len(self.circles)

    def validate(self, network: EgoNetwork) -> None:
        for name, c in zip(self.names, self.circles):
            bad = [v for v in c if v not in network.index]
            if bad:
                raise ValueError(f"{name} contains unknown node id {bad[0]!r}")

    def to_matrix(self, network: EgoNetwork) -> np.ndarray:
        """Boolean membership matrix of shape ``(K, N)`` in network node order."""
        m = np.zeros((self.k, network.n), dtype=bool)
        for k, c in enumerate(self.circles):
            for v in c:
                m[k, network.index[v]] = True
        return m

    @classmethod
    def from_matrix(cls, network: EgoNetwork, m: np.ndarray, names=None) -> "CircleAssignment":
        nodes = network.nodes
        return cls([{nodes[i] for i in np.flatnonzero(row)} for row in np.asarray(m)], names)

    def nonempty(self) -> "CircleAssignment":
        keep = [i for i, c in enumerate(self.circles) if c]
        return CircleAssignment([self.circles[i] for i in keep], [self.names[i] for i in keep])


@dataclass
class ModelParams:
    """Per-circle weights ``thetas`` (K x D, column 0 = constant feature) and trade-offs ``alphas``."""

    thetas: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.alphas = np.asarray(self.alphas, dtype=float).reshape(-1)
        if self.thetas.ndim != 2:
            self.thetas = self.thetas.reshape(len(self.alphas), -1)
        if self.thetas.shape[0] != self.alphas.shape[0]:
            raise ValueError("thetas and alphas disagree on K")

    @property
    def k(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    @classmethod
    def initial(cls, k: int, dim: int, rng: np.random.Generator) -> "ModelParams":
        return cls(rng.integers(0, 2, size=(k, dim)).astype(float), np.ones(k))

    @classmethod
    def empty(cls, dim: int) -> "ModelParams":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def copy(self) -> "ModelParams":
        return ModelParams(self.thetas.copy(), self.alphas.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.thetas.ravel(), self.alphas])

    @classmethod
    def from_flat(cls, vec: np.ndarray, k: int, dim: int) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[: k * dim].reshape(k, dim).copy(), vec[k * dim :].copy())


# --------------------------------------------------------------------------
# file family


def _parse_id(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line.rstrip("\n")


def _parse_bits(path, lineno, toks):
    try:
        bits = [int(t) for t in toks]
    except ValueError:
        raise DataFormatError(path, lineno, "feature values must be integers") from None
    if any(b not in (0, 1) for b in bits):
        raise DataFormatError(path, lineno, "feature values must be 0 or 1")
    return bits


def read_edges(path) -> list[tuple]:
    edges = []
    for lineno, line in _read_lines(path):
        toks = line.split()
        if len(toks) != 2:
            raise DataFormatError(path, lineno, f"expected 'src dst', got {line!r}")
        x, y = _parse_id(toks[0]), _parse_id(toks[1])
        if x == y:
            raise DataFormatError(path, lineno, f"self-loop on node {x!r}")
        edges.append((x, y))
    return edges


def read_feat(path) -> dict:
    feats = {}
    width = None
    for lineno, line in _read_lines(path):
        toks = line.split()
        if len(toks) < 1:
            raise DataFormatError(path, lineno, "empty feature row")
        bits = _parse_bits(path, lineno, toks[1:])
        if width is None:
            width = len(bits)
        elif len(bits) != width:
            raise DataFormatError(
                path, lineno, f"feature vector length {len(bits)} does not match {width}"
            )
        feats[_parse_id(toks[0])] = np.asarray(bits, dtype=np.int8)
    return feats


def read_egofeat(path) -> np.ndarray:
    rows = list(_read_lines(path))
    if len(rows) != 1:
        raise DataFormatError(path, None, f"expected one line, found {len(rows)}")
    lineno, line = rows[0]
    return np.asarray(_parse_bits(path, lineno, line.split()), dtype=np.int8)


def read_featnames(path) -> list[tuple]:
    names = []
    for lineno, line in _read_lines(path):
        head, _, rest = line.strip().partition(" ")
        try:
            idx = int(head)
        except ValueError:
            raise DataFormatError(path, lineno, "feature name line must start with an index") from None
        if idx != len(names):
            raise DataFormatError(path, lineno, f"expected index {len(names)}, got {idx}")
        segs = tuple(s for s in rest.strip().split(";"))
        if len(segs) < 2 or not all(segs):
            raise DataFormatError(path, lineno, f"path {rest!r} needs a category and a value")
        names.append(segs)
    return names


def read_circles(path) -> CircleAssignment:
    circles, names = [], []
    for lineno, line in _read_lines(path):
        toks = line.split("\t")
        if len(toks) == 1:
            toks = line.split()
        names.append(toks[0].strip())
        circles.append({_parse_id(t.strip()) for t in toks[1:] if t.strip()})
    return CircleAssignment(circles, names)


def load_ego_network(directory, ego, directed: bool = False):
    """Read one ego-network's file family.

    Returns ``(network, profiles, circles)``; ``circles`` is ``None`` when no
    ``.circles`` file exists.  Nodes appearing only in ``.edges`` receive
    all-zero profiles.
    """
    base = os.path.join(os.fspath(directory), str(ego))
    edges = read_edges(base + ".edges")
    feats = read_feat(base + ".feat")
    width = len(next(iter(feats.values()))) if feats else 0

    nodes = list(feats)
    seen = set(nodes)
    for x, y in edges:
        for v in (x, y):
            if v not in seen:
                seen.add(v)
                nodes.append(v)
    try:
        nodes.sort()
    except TypeError:
        nodes.sort(key=str)
    network = EgoNetwork(tuple(nodes), frozenset(edges), directed)

    if os.path.exists(base + ".featnames"):
        names = read_featnames(base + ".featnames")
        if len(names) != width:
            raise DataFormatError(
                base + ".featnames", None, f"{len(names)} names for {width} features"
            )
    else:
        names = [("feature", str(i)) for i in range(width)]

    if os.path.exists(base + ".egofeat"):
        ego_row = read_egofeat(base + ".egofeat")
        if ego_row.size != width:
            raise DataFormatError(
                base + ".egofeat", 1, f"feature vector length {ego_row.size} does not match {width}"
            )
    else:
        ego_row = np.zeros(width, dtype=np.int8)

    profiles = ProfileStore(tuple(names), feats, ego_row)

    circles = None
    if os.path.exists(base + ".circles"):
        circles = read_circles(base + ".circles")
        for name, c in zip(circles.names, circles.circles):
            for v in c:
                if v not in network.index:
                    raise DataFormatError(base + ".circles", None, f"{name}: unknown node id {v!r}")
    return network, profiles, circles


def write_ego_network(directory, ego, network, profiles=None, circles=None) -> None:
    os.makedirs(directory, exist_ok=True)
    base = os.path.join(os.fspath(directory), str(ego))
    with open(base + ".edges", "w", encoding="utf-8") as fh:
        for x, y in sorted(network.edges):
            fh.write(f"{x} {y}\n")
    if profiles is not None:
        with open(base + ".feat", "w", encoding="utf-8") as fh:
            for v in network.nodes:
                fh.write(" ".join([str(v)] + [str(int(b)) for b in profiles.row(v)]) + "\n")
        with open(base + ".egofeat", "w", encoding="utf-8") as fh:
            fh.write(" ".join(str(int(b)) for b in profiles.ego_features) + "\n")
        with open(base + ".featnames", "w", encoding="utf-8") as fh:
            for i, p in enumerate(profiles.feat_names):
                fh.write(f"{i} {';'.join(p)}\n")
    if circles is not None:
        write_circles(base + ".circles", circles)


def write_circles(path, circles: CircleAssignment) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, c in zip(circles.names, circles.circles):
            try:
                members = sorted(c)
            except TypeError:
                members = sorted(c, key=str)
            fh.write("\t".join([name] + [str(v) for v in members]) + "\n")
