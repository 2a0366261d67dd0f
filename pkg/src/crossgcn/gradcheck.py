"""Verification suite comparing the layers against the brute-force oracle.

Two families of checks:

* rank-1 equivalence: the factorized product equals explicit summation over
  the materialized rank-1 weight tensor;
* finite differences: every analytic gradient (layers, loss, whole model)
  against central differences.

``corrupt`` scales every analytic gradient by ``1 + corrupt`` before the
comparison.  It exists so the failure path can be exercised.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphdata import adjacency_from_edges, normalize_adjacency, random_edges
from .model import (CrossConvLayer, GinLayer, cross_transform_forward,
                    graph_conv_backward, graph_conv_forward, init_params, softmax_rows)
from .numerics import make_rng, to_csr
from .oracle import (MAX_ENTRIES, TensorTooLarge, brute_force_cross_transform, finite_difference_gradients,
                     rank1_tensor_from_factors, relative_error)
from .training import ExperimentConfig, build_model_config, full_gradient, loss_gradient, masked_loss

LAYER_TOL = 1e-5
MODEL_TOL = 1e-4
RANK1_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    instances: int
    max_error: float
    threshold: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.threshold)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}  {self.name:<34} n={self.instances:<4} max_rel_err={self.max_error:.3e}"
                f"  (< {self.threshold:g})")


def _pack(arrays: dict) -> np.ndarray:
    return np.concatenate([np.ravel(arrays[k]) for k in sorted(arrays)]) if arrays else np.zeros(0)


def _unpack(theta: np.ndarray, like: dict) -> dict:
    out, pos = {}, 0
    for k in sorted(like):
        shape = np.shape(like[k])
        size = int(np.prod(shape, dtype=np.int64))
        out[k] = theta[pos:pos + size].reshape(shape)
        pos += size
    return out


def _compare(objective, analytic: dict, at: dict, corrupt: float) -> float:
    numeric = finite_difference_gradients(lambda t: objective(_unpack(t, at)), _pack(at))
    return relative_error(_pack(analytic) * (1.0 + corrupt), numeric)


def _toy_graph(n: int, rng) -> sp.csr_matrix:
    m = min(n * (n - 1) // 2, 2 * n)
    return normalize_adjacency(adjacency_from_edges(random_edges(n, m, rng), n))


# --------------------------------------------------------------------------
# rank-1 equivalence


def check_rank1(order: int, dim: int, trials: int, rng) -> float:
    """Largest relative gap between the factorized and brute-force outputs."""
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, dim + 1))
        x = rng.normal(size=d)
        factors = [rng.normal(size=d) for _ in range(order)]  # w^1 .. w^order
        tensor = rank1_tensor_from_factors(*factors[::-1])
        brute = brute_force_cross_transform(x, [tensor])[0]
        alpha = np.eye(order)[order - 1]
        layer = CrossConvLayer([f[None, :] for f in factors], [0.0], alpha, activation="identity")
        fact = cross_transform_forward(x[None, :], layer)[0][0, 0]
        worst = max(worst, abs(fact - brute) / max(abs(brute), 1e-12))
    return worst


# --------------------------------------------------------------------------
# layer gradients


def _layer_objective(kind: str, adj, x, r, extras: dict):
    def build(p):
        if kind == "gin":
            return GinLayer(p["w1"], p["b1"], p["w2"], p["b2"], activation=extras["activation"])
        k = extras["order"]
        alpha = p["alpha"] if extras["learn_alpha"] else extras["alpha"]
        return CrossConvLayer([p[f"W{j}"] for j in range(k)], p["b"], alpha,
                              learn_alpha=extras["learn_alpha"], activation=extras["activation"],
                              bias_outside=extras.get("bias_outside", False))

    def objective(p):
        xin = p.get("x", x)
        h, _ = graph_conv_forward(xin, adj, build(p))
        return float(np.sum(h * r))

    return build, objective


def check_layer(kind: str, rng, dim: int, hidden: int, nodes: int, corrupt: float, order: int = 1,
                learn_alpha: bool = True, activation: str = "relu", bias_outside: bool = False,
                sparse_input: bool = False) -> float:
    d = int(rng.integers(2, dim + 1))
    e = int(rng.integers(1, hidden + 1))
    adj = _toy_graph(nodes, rng)
    x = rng.normal(size=(nodes, d))
    if sparse_input:
        x = to_csr(np.where(rng.random((nodes, d)) < 0.5, x, 0.0))
    r = rng.normal(size=(nodes, e))
    if kind == "gin":
        m = int(rng.integers(1, hidden + 2))
        params = {"w1": rng.normal(size=(m, d)), "b1": rng.normal(size=m),
                  "w2": rng.normal(size=(e, m)), "b2": rng.normal(size=e)}
        extras = {"activation": activation}
    else:
        params = {f"W{j}": rng.normal(size=(e, d)) for j in range(order)}
        params["b"] = rng.normal(size=e)
        alpha = rng.uniform(0.5, 1.5, size=order)
        if learn_alpha:
            params["alpha"] = alpha
        extras = {"order": order, "learn_alpha": learn_alpha, "alpha": alpha, "activation": activation,
                  "bias_outside": bias_outside}
    build, objective = _layer_objective(kind, adj, x, r, extras)
    h, cache = graph_conv_forward(x, adj, build(params))
    g = graph_conv_backward(cache, r, need_input_grad=not sparse_input)
    if kind == "gin":
        analytic = {k: g[k] for k in ("w1", "b1", "w2", "b2")}
    else:
        analytic = {f"W{j}": g["W"][j] for j in range(order)}
        analytic["b"] = g["b"]
        if learn_alpha:
            analytic["alpha"] = g["alpha"]
    at = dict(params)
    if not sparse_input:
        at["x"] = x
        analytic["x"] = g["x"]
    return _compare(objective, analytic, at, corrupt)


def check_loss(rng, hidden: int, nodes: int, corrupt: float) -> float:
    n_classes = int(rng.integers(2, hidden + 2))
    labels = rng.integers(0, n_classes, size=nodes)
    mask = np.flatnonzero(rng.random(nodes) < 0.6)
    if mask.size == 0:
        mask = np.array([0])
    params = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=3)}
    lam = float(rng.uniform(0.01, 1.0))
    z = rng.normal(size=(nodes, n_classes))

    def objective(p):
        probs = softmax_rows(p["z"])
        rest = {k: v for k, v in p.items() if k != "z"}
        return masked_loss(probs, labels, mask, rest, lam)

    grad_z, l2 = loss_gradient(softmax_rows(z), labels, mask, params, lam, None)
    analytic = dict(l2, z=grad_z)
    return _compare(objective, analytic, dict(params, z=z), corrupt)


def check_model(variant: str, rng, dim: int, hidden: int, nodes: int, corrupt: float, order: int = 2,
                cross_layers=None, layers: int = 2, seed: int = 0) -> float:
    d = int(rng.integers(2, dim + 1))
    n_classes = 3
    adj = _toy_graph(nodes, rng)
    x = rng.normal(size=(nodes, d))
    labels = rng.integers(0, n_classes, size=nodes)
    mask = np.arange(nodes // 2)
    alpha = tuple(rng.uniform(0.5, 1.5, size=order))
    cfg = ExperimentConfig(variant=variant, layers=layers, hidden=hidden, order=order, alpha=alpha,
                           cross_layers=cross_layers, dropout=0.3, weight_decay=0.01)
    mcfg = build_model_config(cfg, d, n_classes)
    params = init_params(mcfg, int(rng.integers(1 << 31)))
    params = {k: v + 0.1 * rng.normal(size=np.shape(v)) for k, v in params.items()}

    def objective(p):
        return full_gradient(mcfg, p, adj, x, labels, mask, rng=make_rng(seed, "gc"), training=True)[0]

    _, analytic, _ = full_gradient(mcfg, params, adj, x, labels, mask, rng=make_rng(seed, "gc"),
                                   training=True)
    return _compare(objective, analytic, params, corrupt)


# --------------------------------------------------------------------------
# suite


def run_checks(order: int = 2, dim: int = 4, hidden: int = 3, nodes: int = 8, seed: int = 0,
               instances: int = 20, trials: int = 100, corrupt: float = 0.0) -> list:
    """Run every check and return a list of :class:`CheckResult`."""
    if order < 1 or dim < 2 or hidden < 1 or nodes < 2 or instances < 1 or trials < 1:
        raise ValueError("order >= 1, dim >= 2, hidden >= 1, nodes >= 2 and counts >= 1 are required")
    if dim**order > MAX_ENTRIES:
        raise TensorTooLarge(f"{dim}^{order} tensor entries exceed the oracle cap of {MAX_ENTRIES}")
    results = []

    def run(name, threshold, fn, count):
        rng = make_rng(seed, "gradcheck", name)
        t0 = time.perf_counter()
        worst = max(fn(rng) for _ in range(count))
        results.append(CheckResult(name, count, worst, threshold, time.perf_counter() - t0))

    common = dict(dim=dim, hidden=hidden, nodes=nodes, corrupt=corrupt)
    for k in range(1, order + 1):
        run(f"rank1 equivalence k={k}", RANK1_TOL, lambda r, k=k: check_rank1(k, dim, 1, r), trials)
    for k in range(1, order + 1):
        run(f"cross layer K={k}", LAYER_TOL, lambda r, k=k: check_layer("cross", r, order=k, **common),
            instances)
    run(f"cross layer K={order} fixed alpha", LAYER_TOL,
        lambda r: check_layer("cross", r, order=order, learn_alpha=False, **common), instances)
    run(f"cross layer K={order} softmax", LAYER_TOL,
        lambda r: check_layer("cross", r, order=order, activation="softmax", **common), instances)
    run(f"cross layer K={order} bias outside", LAYER_TOL,
        lambda r: check_layer("cross", r, order=order, bias_outside=True, **common), instances)
    run(f"cross layer K={order} sparse input", LAYER_TOL,
        lambda r: check_layer("cross", r, order=order, sparse_input=True, **common), instances)
    run("vanilla layer", LAYER_TOL,
        lambda r: check_layer("cross", r, order=1, learn_alpha=False, **common), instances)
    run("gin layer", LAYER_TOL, lambda r: check_layer("gin", r, **common), instances)
    run("loss", LAYER_TOL, lambda r: check_loss(r, hidden, nodes, corrupt), instances)
    for variant in ("cross", "cross-fix", "gcn", "gin"):
        run(f"model {variant}", MODEL_TOL,
            lambda r, v=variant: check_model(v, r, order=order, seed=seed, **common), instances)
    run("model cross layer-1 only", MODEL_TOL,
        lambda r: check_model("cross", r, order=order, cross_layers=(1, 0), seed=seed, **common), instances)
    run("model cross single layer", MODEL_TOL,
        lambda r: check_model("cross", r, order=order, layers=1, seed=seed, **common), instances)
    return results
