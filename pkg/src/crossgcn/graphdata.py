"""Citation-graph datasets in a neutral on-disk layout.

A dataset directory holds::

    edges.tsv            src<TAB>dst per line, 0-based, each undirected edge once
    features.mtx         MatrixMarket coordinate real N x D (sparse features)
      or features.dense.csv   N lines of D comma-separated reals
    labels.csv           header ``node,label`` then ``node_id,class_id``
    splits.json          {"v": 1, "val": [...], "test": [...], "train": [...]?}
    meta.json            {"n_nodes": N, "n_features": D, "n_classes": L, "v": 1}

Sparse (bag-of-words) features are row-normalized when a dataset is turned
into model inputs; dense features are used as stored.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .numerics import DTYPE, check_csr, row_normalize_sparse, to_csr

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CROSS_PAIRS = 6


class DatasetError(ValueError):
    """Malformed or inconsistent dataset files."""


@dataclass
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)

    def validate(self, n_nodes: int) -> None:
        sets = {"train": self.train, "val": self.val, "test": self.test}
        for name, ids in sets.items():
            if ids.size and (ids.min() < 0 or ids.max() >= n_nodes):
                raise DatasetError(f"{name} ids out of range [0, {n_nodes})")
            if np.unique(ids).size != ids.size:
                raise DatasetError(f"{name} ids contain duplicates")
        if (np.intersect1d(self.train, self.val).size or np.intersect1d(self.train, self.test).size
                or np.intersect1d(self.val, self.test).size):
            raise DatasetError("split index sets overlap")


@dataclass
class GraphDataset:
    adjacency: sp.csr_matrix
    features: object  # csr_matrix (bag of words) or dense ndarray
    labels: np.ndarray
    n_classes: int
    splits: SplitSpec
    name: str = ""
    _inputs: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def label_rate(self) -> float:
        n_train = self.splits.train.size or 20 * self.n_classes
        return n_train / self.n_nodes

    def validate(self) -> None:
        a = self.adjacency
        check_csr(a)
        n = a.shape[0]
        if a.shape != (n, n):
            raise DatasetError("adjacency must be square")
        if np.any(a.diagonal() != 0):
            raise DatasetError("adjacency must have a zero diagonal")
        if np.any(a.data != 1):
            raise DatasetError("adjacency must be binary")
        if (a != a.T).nnz:
            raise DatasetError("adjacency must be symmetric")
        if self.features.shape[0] != n:
            raise DatasetError("feature rows must equal node count")
        if self.labels.shape != (n,):
            raise DatasetError("need exactly one label per node")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DatasetError(f"label ids must lie in [0, {self.n_classes})")
        self.splits.validate(n)

    def model_inputs(self):
        """``(A_hat, X)`` ready for the model; computed once and cached."""
        if self._inputs is None:
            a_hat = normalize_adjacency(self.adjacency)
            if sp.issparse(self.features):
                x = row_normalize_sparse(self.features)
            else:
                x = np.asarray(self.features, dtype=DTYPE)
            self._inputs = (a_hat, x)
        return self._inputs

    def one_hot(self) -> np.ndarray:
        return np.eye(self.n_classes)[self.labels]


# --------------------------------------------------------------------------
# graph operations


def adjacency_from_edges(edges, n_nodes: int) -> sp.csr_matrix:
    """Symmetric binary adjacency from an edge array; duplicates and loops dropped."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n_nodes).any(axis=1)][0]
        raise DatasetError(f"edge {tuple(bad)} references a node outside [0, {n_nodes})")
    loops = edges[:, 0] == edges[:, 1]
    if loops.any():
        warnings.warn(f"dropping {int(loops.sum())} self-loop(s)")
        edges = edges[~loops]
    lo, hi = np.minimum(edges[:, 0], edges[:, 1]), np.maximum(edges[:, 0], edges[:, 1])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(edges) else edges
    if len(pairs) < len(edges):
        warnings.warn(f"deduplicated {len(edges) - len(pairs)} repeated edge(s)")
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n_nodes, n_nodes))
    return to_csr(a)


def normalize_adjacency(a) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``."""
    a = to_csr(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    a_tilde = a + sp.identity(a.shape[0], dtype=DTYPE, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    return to_csr(d @ a_tilde @ d)


# --------------------------------------------------------------------------
# Citeseer-Cross


def repair_signs(x: np.ndarray, labels) -> np.ndarray:
    """Force ``x[2i] * x[2i+1] > 0`` for the node's own class pair and ``< 0`` elsewhere.

    Violating pairs get the sign of their second element flipped.
    """
    x = np.array(x, dtype=DTYPE)
    labels = np.asarray(labels)
    want = np.where(np.arange(CROSS_PAIRS)[None, :] == labels[:, None], 1.0, -1.0)
    prod = x[:, 0::2] * x[:, 1::2]
    flip = np.sign(prod) != want
    x[:, 1::2] = np.where(flip, -x[:, 1::2], x[:, 1::2])
    return x


def synthesize_cross_features(labels, rng: np.random.Generator) -> np.ndarray:
    """12-dim Gaussian features whose pairwise product signs encode a 6-way label."""
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    if n_classes != CROSS_PAIRS or labels.min() < 0:
        raise ValueError(f"cross features need exactly {CROSS_PAIRS} classes, got {n_classes}")
    x = rng.standard_normal((labels.size, 2 * CROSS_PAIRS))
    zeros = x == 0
    while zeros.any():
        x[zeros] = rng.standard_normal(int(zeros.sum()))
        zeros = x == 0
    return repair_signs(x, labels)


def check_cross_rule(x: np.ndarray, labels) -> np.ndarray:
    """Boolean per node: does its feature row satisfy the sign rule strictly?"""
    prod = np.asarray(x)[:, 0::2] * np.asarray(x)[:, 1::2]
    own = np.arange(CROSS_PAIRS)[None, :] == np.asarray(labels)[:, None]
    return np.all(np.where(own, prod > 0, prod < 0), axis=1)


def make_cross_dataset(base: GraphDataset, seed: int) -> GraphDataset:
    """Citeseer-Cross: same graph, labels and splits as ``base``, synthetic features."""
    from .numerics import make_rng

    x = synthesize_cross_features(base.labels, make_rng(seed, "cross-features"))
    return GraphDataset(base.adjacency.copy(), x, base.labels.copy(), base.n_classes,
                        SplitSpec(base.splits.train, base.splits.val, base.splits.test),
                        name=(base.name + "-cross") if base.name else "cross")


# --------------------------------------------------------------------------
# splits


def make_random_split(labels, rng: np.random.Generator, per_class: int = 20, n_val: int = 500,
                      n_test: int = 1000, fixed: SplitSpec | None = None) -> SplitSpec:
    """Stratified training split: ``per_class`` nodes of every class.

    Validation and test ids come from ``fixed`` when given (the usual case);
    otherwise they are drawn from ``rng`` first.  Training nodes are always
    drawn from outside validation and test.
    """
    labels = np.asarray(labels)
    n = labels.size
    n_classes = int(labels.max()) + 1
    if fixed is not None:
        val, test = np.asarray(fixed.val), np.asarray(fixed.test)
    else:
        if n < per_class * n_classes + n_val + n_test:
            raise DatasetError(f"{n} nodes cannot hold {per_class}x{n_classes} train + "
                               f"{n_val} val + {n_test} test")
        perm = rng.permutation(n)
        val, test = np.sort(perm[:n_val]), np.sort(perm[n_val:n_val + n_test])
    reserved = np.zeros(n, dtype=bool)
    reserved[val] = True
    reserved[test] = True
    train = []
    for c in range(n_classes):
        pool = np.flatnonzero((labels == c) & ~reserved)
        if pool.size < per_class:
            raise DatasetError(f"class {c} has only {pool.size} nodes outside val/test, "
                               f"{per_class} needed")
        train.append(rng.choice(pool, size=per_class, replace=False))
    return SplitSpec(np.sort(np.concatenate(train)), val, test)


# --------------------------------------------------------------------------
# I/O


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid JSON ({e})") from None


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    return path


def _read_edges(path: Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'src<TAB>dst'")
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: node ids must be integers") from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def _read_labels(path: Path, n_nodes: int, n_classes: int) -> np.ndarray:
    labels = np.full(n_nodes, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "node,label":
            raise DatasetError(f"{path}:1: expected header 'node,label'")
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            try:
                node, label = (int(v) for v in line.split(","))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected 'node_id,class_id'") from None
            if not 0 <= node < n_nodes:
                raise DatasetError(f"{path}:{lineno}: node id {node} out of range")
            if not 0 <= label < n_classes:
                raise DatasetError(f"{path}:{lineno}: class id {label} >= declared {n_classes} classes")
            labels[node] = label
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise DatasetError(f"{path}: {missing.size} node(s) without a label, first is {missing[0]}")
    return labels


def load_dataset(path) -> GraphDataset:
    path = Path(path)
    meta = _read_json(_require(path / "meta.json"))
    if meta.get("v") != FORMAT_VERSION:
        raise DatasetError(f"{path / 'meta.json'}: unsupported format version {meta.get('v')}")
    n, d, n_classes = meta["n_nodes"], meta["n_features"], meta["n_classes"]

    adjacency = adjacency_from_edges(_read_edges(_require(path / "edges.tsv")), n)

    if (path / "features.mtx").exists():
        features = to_csr(scipy.io.mmread(path / "features.mtx"))
    elif (path / "features.dense.csv").exists():
        features = np.loadtxt(path / "features.dense.csv", delimiter=",", dtype=DTYPE, ndmin=2)
    else:
        raise FileNotFoundError(f"missing dataset file: {path / 'features.mtx'} (or features.dense.csv)")
    if features.shape != (n, d):
        raise DatasetError(f"features are {features.shape}, meta.json declares {(n, d)}")

    labels = _read_labels(_require(path / "labels.csv"), n, n_classes)

    raw = _read_json(_require(path / "splits.json"))
    if raw.get("v") != FORMAT_VERSION:
        raise DatasetError(f"{path / 'splits.json'}: unsupported version {raw.get('v')}")
    splits = SplitSpec(raw.get("train", []), raw["val"], raw["test"])

    ds = GraphDataset(adjacency, features, labels, n_classes, splits, name=path.name)
    ds.validate()
    log.info("loaded %s: %d nodes, %d edges, %d features, %d classes",
             ds.name, n, ds.n_edges, d, n_classes)
    return ds


def save_dataset(ds: GraphDataset, path) -> Path:
    """Write ``ds`` in the neutral layout; output is a deterministic function of ``ds``."""
    ds.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(ds.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(path / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{r}\t{c}\n" for r, c in zip(upper.row[order], upper.col[order]))

    for stale in ("features.mtx", "features.dense.csv"):
        (path / stale).unlink(missing_ok=True)
    if sp.issparse(ds.features):
        write_matrix_market(path / "features.mtx", ds.features)
    else:
        np.savetxt(path / "features.dense.csv", ds.features, fmt="%.17g", delimiter=",")

    with open(path / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node,label\n")
        fh.writelines(f"{i},{int(c)}\n" for i, c in enumerate(ds.labels))

    splits = {"v": FORMAT_VERSION, "val": ds.splits.val.tolist(), "test": ds.splits.test.tolist()}
    if ds.splits.train.size:
        splits["train"] = ds.splits.train.tolist()
    (path / "splits.json").write_text(json.dumps(splits) + "\n", encoding="utf-8")
    meta = {"n_nodes": ds.n_nodes, "n_features": ds.n_features, "n_classes": ds.n_classes,
            "v": FORMAT_VERSION}
    (path / "meta.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")
    return path


def write_matrix_market(path, s) -> None:
    """Coordinate/real/general MatrixMarket writer with round-trip float formatting."""
    coo = to_csr(s).tocoo()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        fh.writelines(f"{r + 1} {c + 1} {v!r}\n" for r, c, v in zip(coo.row, coo.col, coo.data.tolist()))


# --------------------------------------------------------------------------
# synthetic graphs


def random_edges(n_nodes: int, n_edges: int, rng: np.random.Generator) -> np.ndarray:
    """``n_edges`` distinct undirected edges drawn uniformly (Erdos-Renyi G(n, m))."""
    max_edges = n_nodes * (n_nodes - 1) // 2
    if n_edges > max_edges:
        raise ValueError(f"{n_edges} edges do not fit in a simple graph on {n_nodes} nodes")
    found = np.empty((0, 2), dtype=np.int64)
    while len(found) < n_edges:
        need = int((n_edges - len(found)) * 1.1) + 16
        e = rng.integers(0, n_nodes, size=(need, 2))
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        found = np.unique(np.concatenate([found, e]), axis=0)
    keep = rng.choice(len(found), size=n_edges, replace=False)
    return found[np.sort(keep)]


def make_synthetic_dataset(n_nodes: int = 200, n_classes: int = 4, n_features: int = 16,
                           avg_degree: float = 4.0, homophily: float = 0.8, seed: int = 0,
                           n_val: int | None = None, n_test: int | None = None,
                           sparse_features: bool = False, name: str = "synthetic") -> GraphDataset:
    """Planted-partition graph with class-dependent Gaussian features.

    Each edge joins two same-class nodes with probability ``homophily``.
    """
    from .numerics import make_rng

    rng = make_rng(seed, "synthetic")
    labels = np.arange(n_nodes) % n_classes
    rng.shuffle(labels)
    n_edges = int(n_nodes * avg_degree / 2)
    src = rng.integers(0, n_nodes, size=n_edges)
    same = rng.random(n_edges) < homophily
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    dst = np.where(same, -1, rng.integers(0, n_nodes, size=n_edges))
    for i in np.flatnonzero(same):
        dst[i] = rng.choice(by_class[labels[src[i]]])
    edges = np.stack([src, dst], axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        adjacency = adjacency_from_edges(edges, n_nodes)
    centers = rng.normal(size=(n_classes, n_features))
    features = centers[labels] + rng.normal(size=(n_nodes, n_features))
    if sparse_features:
        features = to_csr(np.where(features > 0.5, 1.0, 0.0))
    n_val = n_nodes // 4 if n_val is None else n_val
    n_test = n_nodes // 2 if n_test is None else n_test
    perm = rng.permutation(n_nodes)
    splits = SplitSpec([], np.sort(perm[:n_val]), np.sort(perm[n_val:n_val + n_test]))
    ds = GraphDataset(adjacency, features, labels, n_classes, splits, name=name)
    ds.validate()
    return ds
