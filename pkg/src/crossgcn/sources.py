"""Converters from the common public releases of the citation graphs.

Three raw layouts are understood:

* Planetoid pickles (``ind.<name>.x`` ... ``ind.<name>.test.index``), which
  carry the public train/val/test split.
* LINQS text files (``<name>.content`` and ``<name>.cites``).
* Parquet node/relationship tables (``<name>_nodes.parquet*`` and
  ``<name>_rels.parquet*``) as bundled with some graph database clients.

The last two have no public split, so fixed validation and test sets are
drawn once from a seeded stream and written alongside the data.
"""

from __future__ import annotations

import logging
import pickle
import warnings
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graphdata import DatasetError, GraphDataset, SplitSpec, adjacency_from_edges, make_random_split
from .numerics import make_rng, to_csr

log = logging.getLogger(__name__)

PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def detect_format(raw_dir, name: str) -> str:
    raw = Path(raw_dir)
    if (raw / f"ind.{name}.x").exists():
        return "planetoid"
    if (raw / f"{name}.content").exists():
        return "linqs"
    if list(raw.glob(f"{name}_nodes.parquet*")):
        return "parquet"
    raise FileNotFoundError(
        f"no source files for {name!r} in {raw}: expected ind.{name}.* (Planetoid), "
        f"{name}.content + {name}.cites (LINQS) or {name}_nodes.parquet + {name}_rels.parquet")


def read_source(raw_dir, name: str, fmt: str = "auto", seed: int = 0, **sizes) -> GraphDataset:
    """Convert whichever layout is present.  ``sizes`` (``n_val``, ``n_test``)
    apply only to layouts without a public split."""
    fmt = detect_format(raw_dir, name) if fmt == "auto" else fmt
    if fmt == "planetoid":
        return read_planetoid(raw_dir, name)
    if fmt == "linqs":
        return read_linqs(raw_dir, name, seed=seed, **sizes)
    if fmt == "parquet":
        return read_parquet(raw_dir, name, seed=seed, **sizes)
    raise ValueError(f"unknown source format {fmt!r}")


def fixed_eval_split(labels, seed: int, n_val: int = 500, n_test: int = 1000,
                     per_class: int = 20) -> SplitSpec:
    """Validation/test sets for releases without a public split.

    The draw is rejected (by raising) unless every class keeps ``per_class``
    nodes outside validation and test, so later random training splits work.
    """
    return make_random_split(labels, make_rng(seed, "eval-split"), per_class=per_class,
                             n_val=n_val, n_test=n_test)


def _build(name, edges, n, features, labels, splits) -> GraphDataset:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        adjacency = adjacency_from_edges(edges, n)
    for w in caught:
        log.info("%s: %s", name, w.message)
    ds = GraphDataset(adjacency, features, np.asarray(labels, dtype=np.int64),
                      int(np.max(labels)) + 1, splits, name=name)
    ds.validate()
    return ds


# --------------------------------------------------------------------------
# Planetoid


def _load_pickle(path: Path):
    with open(path, "rb") as fh:
        try:
            return pickle.load(fh, encoding="latin1")
        except (pickle.UnpicklingError, EOFError, ValueError) as e:
            raise DatasetError(f"{path}: cannot unpickle ({e})") from None


def read_planetoid(raw_dir, name: str) -> GraphDataset:
    """Planetoid release with its public split.

    Test rows are put back at their graph positions.  Graph nodes that have
    neither features nor a label (gaps in the Citeseer test range) are
    removed together with their edges.
    """
    raw = Path(raw_dir)
    parts = {}
    for key in PLANETOID_PARTS:
        path = raw / f"ind.{name}.{key}"
        if not path.exists():
            raise FileNotFoundError(f"missing source file: {path}")
        parts[key] = _load_pickle(path)
    index_path = raw / f"ind.{name}.test.index"
    if not index_path.exists():
        raise FileNotFoundError(f"missing source file: {index_path}")
    test_order = []
    for lineno, line in enumerate(index_path.read_text().splitlines(), 1):
        if line.strip():
            try:
                test_order.append(int(line))
            except ValueError:
                raise DatasetError(f"{index_path}:{lineno}: expected an integer node id") from None
    test_order = np.asarray(test_order, dtype=np.int64)

    allx, tx = to_csr(parts["allx"]), to_csr(parts["tx"])
    ally, ty = np.asarray(parts["ally"]), np.asarray(parts["ty"])
    n_train = np.asarray(parts["y"]).shape[0]
    graph = parts["graph"]
    n_graph = max(len(graph), int(max(max(v, default=-1) for v in graph.values())) + 1)
    n = max(n_graph, int(test_order.max()) + 1)
    if tx.shape[0] != test_order.size or ty.shape[0] != test_order.size:
        raise DatasetError(f"{index_path}: {test_order.size} test ids for {tx.shape[0]} test rows")

    position = np.concatenate([np.arange(allx.shape[0]), test_order])
    if np.unique(position).size != position.size or position.max() >= n:
        raise DatasetError(f"{raw}: test ids collide with the allx rows")
    stacked = sp.vstack([allx, tx]).tocoo()
    features = sp.csr_matrix((stacked.data, (position[stacked.row], stacked.col)),
                             shape=(n, allx.shape[1]))
    labels_1h = np.zeros((n, ally.shape[1]))
    labels_1h[:ally.shape[0]] = ally
    labels_1h[test_order] = ty

    edges = np.array([(s, d) for s, nbrs in sorted(graph.items()) for d in nbrs], dtype=np.int64)
    edges = edges.reshape(-1, 2)
    keep = labels_1h.sum(axis=1) > 0
    if not keep.all():
        log.info("%s: dropping %d node(s) without features or label", name, int((~keep).sum()))
    new_id = np.cumsum(keep) - 1
    edges = edges[keep[edges[:, 0]] & keep[edges[:, 1]]]
    edges = new_id[edges]

    def remap(ids):
        ids = np.asarray(ids, dtype=np.int64)
        return new_id[ids[keep[ids]]]

    val = np.setdiff1d(np.arange(n_train, min(n_train + 500, n)), test_order)
    splits = SplitSpec(remap(np.arange(n_train)), remap(val), np.sort(remap(test_order)))
    labels = np.argmax(labels_1h[keep], axis=1)
    return _build(name, edges, int(keep.sum()), to_csr(features[keep]), labels, splits)


# --------------------------------------------------------------------------
# LINQS and parquet


def _from_tables(name, node_ids, features, class_names, cites, seed, source, n_val, n_test) -> GraphDataset:
    index = {nid: i for i, nid in enumerate(node_ids)}
    if len(index) != len(node_ids):
        raise DatasetError(f"{source}: duplicate node ids")
    classes = sorted(set(class_names))
    class_id = {c: i for i, c in enumerate(classes)}
    labels = np.array([class_id[c] for c in class_names], dtype=np.int64)
    edges, dangling = [], 0
    for a, b in cites:
        if a in index and b in index:
            edges.append((index[a], index[b]))
        else:
            dangling += 1
    if dangling:
        log.info("%s: ignoring %d citation(s) to unknown nodes", name, dangling)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    splits = fixed_eval_split(labels, seed, n_val=n_val, n_test=n_test)
    return _build(name, edges, len(node_ids), to_csr(features), labels, splits)


def read_linqs(raw_dir, name: str, seed: int = 0, n_val: int = 500, n_test: int = 1000) -> GraphDataset:
    raw = Path(raw_dir)
    content, cites_path = raw / f"{name}.content", raw / f"{name}.cites"
    for p in (content, cites_path):
        if not p.exists():
            raise FileNotFoundError(f"missing source file: {p}")
    node_ids, rows, class_names = [], [], []
    width = None
    with open(content, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if width is None:
                width = len(parts)
            if len(parts) != width or width < 3:
                raise DatasetError(f"{content}:{lineno}: expected {width} fields, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts[1:-1]])
            except ValueError:
                raise DatasetError(f"{content}:{lineno}: non-numeric feature value") from None
            node_ids.append(parts[0])
            class_names.append(parts[-1])
    cites = []
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetError(f"{cites_path}:{lineno}: expected 'cited citing'")
            cites.append((parts[0], parts[1]))
    return _from_tables(name, node_ids, np.asarray(rows), class_names, cites, seed, content, n_val, n_test)


def read_parquet(raw_dir, name: str, seed: int = 0, n_val: int = 500, n_test: int = 1000) -> GraphDataset:
    """Tables with ``nodeId, subject, features`` and ``sourceNodeId, targetNodeId``."""
    try:
        import pandas as pd
    except ImportError:
        raise ImportError("reading parquet sources needs pandas with a parquet engine") from None
    raw = Path(raw_dir)
    nodes_path = sorted(raw.glob(f"{name}_nodes.parquet*"))
    rels_path = sorted(raw.glob(f"{name}_rels.parquet*"))
    if not nodes_path or not rels_path:
        raise FileNotFoundError(f"missing source file: {raw / (name + '_nodes.parquet')} "
                                f"and {raw / (name + '_rels.parquet')}")
    nodes = pd.read_parquet(nodes_path[0])
    rels = pd.read_parquet(rels_path[0])
    for col in ("nodeId", "subject", "features"):
        if col not in nodes.columns:
            raise DatasetError(f"{nodes_path[0]}: missing column {col!r}")
    for col in ("sourceNodeId", "targetNodeId"):
        if col not in rels.columns:
            raise DatasetError(f"{rels_path[0]}: missing column {col!r}")
    features = np.stack([np.asarray(f, dtype=float) for f in nodes["features"]])
    cites = zip(rels["sourceNodeId"].tolist(), rels["targetNodeId"].tolist())
    return _from_tables(name, nodes["nodeId"].tolist(), features, nodes["subject"].tolist(),
                        cites, seed, nodes_path[0], n_val, n_test)
