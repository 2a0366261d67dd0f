"""Per-epoch training time on random graphs.

Graphs are uniform random (G(n, m)) with dense Gaussian features and
uniform labels; only the cost of an epoch matters here, not accuracy.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .graphdata import adjacency_from_edges, normalize_adjacency, random_edges
from .model import init_params, param_count
from .numerics import make_rng
from .training import AdamState, ExperimentConfig, adam_step, build_model_config, full_gradient

log = logging.getLogger(__name__)

# sized like the 30k-node Reddit subset
DEFAULT_NODES = 30_000
DEFAULT_EDGES = 386_742
DEFAULT_FEATURES = 602
DEFAULT_CLASSES = 41
DEFAULT_HIDDEN = (32, 64, 128, 256, 512, 1024)


@dataclass
class BenchRow:
    variant: str
    hidden: int
    epochs: int
    mean_seconds: float
    std_seconds: float
    params: int

    def csv(self) -> str:
        return (f"{self.variant},{self.hidden},{self.epochs},{self.mean_seconds:.6f},"
                f"{self.std_seconds:.6f},{self.params}")


CSV_HEADER = "variant,hidden,epochs,mean_seconds,std_seconds,params"


def random_problem(n_nodes: int, n_edges: int, n_features: int, n_classes: int, seed: int = 0,
                   train_fraction: float = 0.6):
    """``(A_hat, X, labels, train_ids)`` for a random graph of the given size."""
    rng = make_rng(seed, "bench")
    adj = normalize_adjacency(adjacency_from_edges(random_edges(n_nodes, n_edges, rng), n_nodes))
    x = rng.standard_normal((n_nodes, n_features))
    labels = rng.integers(0, n_classes, size=n_nodes)
    train = np.sort(rng.permutation(n_nodes)[:int(train_fraction * n_nodes)])
    return adj, x, labels, train


def time_epochs(problem, config: ExperimentConfig, epochs: int, warmup: int = 2, seed: int = 0) -> BenchRow:
    """Average wall time of one full-batch step (forward, backward, Adam) after ``warmup`` steps."""
    adj, x, labels, train = problem
    mcfg = build_model_config(config, x.shape[1], int(labels.max()) + 1)
    params = init_params(mcfg, seed)
    state = AdamState(lr=config.lr)
    times = []
    for epoch in range(warmup + epochs):
        t0 = time.perf_counter()
        _, grads, _ = full_gradient(mcfg, params, adj, x, labels, train,
                                    rng=make_rng(seed, "dropout", epoch), training=True)
        params, state = adam_step(params, grads, state)
        if epoch >= warmup:
            times.append(time.perf_counter() - t0)
    times = np.asarray(times)
    std = float(times.std(ddof=1)) if times.size > 1 else 0.0
    return BenchRow(config.variant, config.hidden, epochs, float(times.mean()), std, param_count(mcfg))


def run_bench(n_nodes: int = DEFAULT_NODES, n_edges: int = DEFAULT_EDGES, n_features: int = DEFAULT_FEATURES,
              n_classes: int = DEFAULT_CLASSES, hidden=DEFAULT_HIDDEN, variants=("gcn", "gin", "cross"),
              epochs: int = 50, warmup: int = 2, seed: int = 0, layers: int = 2, on_row=None) -> list:
    """Time every (variant, hidden) pair on one shared random graph.

    GIN's inner perceptron width is set to the layer width, so all variants
    are compared at matched ``hidden``.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    problem = random_problem(n_nodes, n_edges, n_features, n_classes, seed)
    rows = []
    for e in hidden:
        for v in variants:
            cfg = ExperimentConfig(variant=v, hidden=int(e), gin_hidden=int(e), layers=layers)
            row = time_epochs(problem, cfg, epochs, warmup, seed)
            log.info("%s", asdict(row))
            rows.append(row)
            if on_row:
                on_row(row)
    return rows
