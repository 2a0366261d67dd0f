"""Cross-feature graph convolution layers and the stacked node classifier.

Row convention: a feature matrix ``X`` is ``N x D`` (one node per row) and
every transform weight is ``E x D``, so the per-order linear maps are
``P^k = X W^k.T``.  The cross layer computes the recursion

    f^1 = P^1,   f^k = P^k * f^(k-1)   (elementwise)

and aggregates the orders as ``act(sum_k alpha_k f^k + b)``.  With
``bias_outside=True`` the bias is added after the activation instead.

Graph layers aggregate with a normalized adjacency ``A_hat``.  Because the
per-order maps are linear, ``(A_hat X) W^T == A_hat (X W^T)``; each layer
picks whichever side multiplies fewer columns by ``A_hat`` (see
``_aggregate_first``).  The elementwise crossing always happens after
aggregation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .numerics import DTYPE, ShapeError, glorot_init, make_rng, spmm, to_csr

VARIANTS = ("cross", "vanilla", "gin")
ACTIVATIONS = ("relu", "identity", "softmax")


# --------------------------------------------------------------------------
# activations


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "softmax":
        return softmax_rows(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_backward(name: str, z: np.ndarray, h: np.ndarray, grad_h: np.ndarray) -> np.ndarray:
    if name == "relu":
        return grad_h * (z > 0)
    if name == "identity":
        return grad_h
    if name == "softmax":
        return h * (grad_h - np.sum(grad_h * h, axis=1, keepdims=True))
    raise ValueError(f"unknown activation {name!r}")


# --------------------------------------------------------------------------
# layer parameter containers


@dataclass
class CrossConvLayer:
    """``K`` order weights (each ``E x D``), bias ``b`` and order weights ``alpha``.

    A vanilla layer is a cross layer with ``K == 1`` and fixed ``alpha == [1]``.
    """

    weights: list
    bias: np.ndarray
    alpha: np.ndarray
    learn_alpha: bool = True
    activation: str = "relu"
    bias_outside: bool = False

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=DTYPE) for w in self.weights]
        self.bias = np.asarray(self.bias, dtype=DTYPE).ravel()
        self.alpha = np.asarray(self.alpha, dtype=DTYPE).ravel()
        if not self.weights:
            raise ValueError("a cross layer needs at least one order")
        shape = self.weights[0].shape
        if any(w.shape != shape for w in self.weights):
            raise ShapeError("all order weights must share one shape")
        if self.bias.shape != (shape[0],):
            raise ShapeError(f"bias must have length {shape[0]}")
        if self.alpha.shape != (len(self.weights),):
            raise ShapeError("alpha must have one entry per order")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def order(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[0].shape[0]

    def param_count(self) -> int:
        e, d = self.weights[0].shape
        return self.order * e * d + e + (self.order if self.learn_alpha else 0)


@dataclass
class GinLayer:
    """Two-level perceptron transform ``act(W2 relu(W1 x + b1) + b2)``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.w1, self.w2 = np.asarray(self.w1, dtype=DTYPE), np.asarray(self.w2, dtype=DTYPE)
        self.b1 = np.asarray(self.b1, dtype=DTYPE).ravel()
        self.b2 = np.asarray(self.b2, dtype=DTYPE).ravel()
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ShapeError(f"MLP widths do not chain: {self.w1.shape} then {self.w2.shape}")
        if self.b1.shape != (self.w1.shape[0],) or self.b2.shape != (self.w2.shape[0],):
            raise ShapeError("bias lengths must match MLP widths")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


@dataclass
class ForwardCache:
    layer: object
    x: object  # layer input (dense array or CSR), after dropout
    adj: object  # normalized adjacency or None for a bare transform
    products: list = field(default_factory=list)  # P^k (cross) or hidden pre-activation (gin)
    prefix: list = field(default_factory=list)  # f^k (cross) or hidden activation (gin)
    z: np.ndarray = None
    h: np.ndarray = None
    xa: np.ndarray = None  # aggregated input when aggregation ran first


# --------------------------------------------------------------------------
# shared linear stage


def _linear(x, w: np.ndarray) -> np.ndarray:
    """``x @ w.T`` for dense or CSR ``x``."""
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} features, weights expect {w.shape[1]}")
    out = x @ w.T
    return np.asarray(out, dtype=DTYPE)


def _aggregate(adj, m: np.ndarray) -> np.ndarray:
    if adj is None:
        return m
    if adj.shape[0] != adj.shape[1] or adj.shape[1] != m.shape[0]:
        raise ShapeError(f"adjacency {adj.shape} incompatible with {m.shape[0]} nodes")
    return spmm(adj, m)


def _aggregate_t(adj, g: np.ndarray) -> np.ndarray:
    if adj is None:
        return g
    return np.asarray(adj.T @ g)


def _aggregate_first(x, adj, width: int, input_grad: bool) -> bool:
    """Whether ``(A_hat X) W^T`` is cheaper than ``A_hat (X W^T)``.

    Sparse products cost about one pass per aggregated column.  Aggregating
    the input costs ``D`` columns forward (and again backward if the input
    gradient is needed); aggregating the product costs ``width`` columns
    both ways.  Sparse inputs always take the product route.
    """
    if adj is None or sp.issparse(x):
        return False
    return x.shape[1] * (2 if input_grad else 1) < 2 * width


def _stage_forward(x, adj, w: np.ndarray, input_grad: bool):
    """``A_hat X W^T`` and the aggregated input (or ``None`` on the product route)."""
    if _aggregate_first(x, adj, w.shape[0], input_grad):
        xa = _aggregate(adj, x)
        return _linear(xa, w), xa
    return _aggregate(adj, _linear(x, w)), None


def _stage_backward(cache_x, xa, adj, g: np.ndarray, w: np.ndarray, need_input_grad: bool):
    """Gradients of ``A_hat X W^T`` w.r.t. ``W`` and (optionally) ``X``."""
    if xa is not None:
        grad_w = g.T @ xa
        grad_x = _aggregate_t(adj, g @ w) if need_input_grad else None
        return grad_w, grad_x
    grad_xw = _aggregate_t(adj, g)
    if sp.issparse(cache_x):
        grad_w = np.asarray((cache_x.T @ grad_xw).T)
    else:
        grad_w = grad_xw.T @ cache_x
    return grad_w, (grad_xw @ w if need_input_grad else None)


# --------------------------------------------------------------------------
# cross layer


def _cross_forward(x, adj, layer: CrossConvLayer, input_grad: bool = True):
    k, e = layer.order, layer.out_dim
    stacked = np.vstack(layer.weights) if k > 1 else layer.weights[0]
    p_all, xa = _stage_forward(x, adj, stacked, input_grad)
    products = [p_all[:, i * e:(i + 1) * e] for i in range(k)]
    prefix = [products[0]]
    for i in range(1, k):
        prefix.append(products[i] * prefix[i - 1])
    z = layer.alpha[0] * prefix[0]
    for i in range(1, k):
        z += layer.alpha[i] * prefix[i]
    if layer.bias_outside:
        h = _act(layer.activation, z) + layer.bias
    else:
        z += layer.bias
        h = _act(layer.activation, z)
    return h, ForwardCache(layer, x, adj, products, prefix, z, h, xa)


def _cross_backward(cache: ForwardCache, grad_h, need_input_grad, through_activation=True):
    layer: CrossConvLayer = cache.layer
    k, e = layer.order, layer.out_dim
    if layer.bias_outside:
        grad_b = grad_h.sum(axis=0)
        act_out = cache.h - layer.bias
        grad_z = _act_backward(layer.activation, cache.z, act_out, grad_h) if through_activation else grad_h
    else:
        grad_z = _act_backward(layer.activation, cache.z, cache.h, grad_h) if through_activation else grad_h
        grad_b = grad_z.sum(axis=0)
    grad_alpha = np.array([np.sum(grad_z * f) for f in cache.prefix])
    grad_p = np.empty((grad_z.shape[0], k * e), dtype=DTYPE)
    carry = None
    for i in range(k - 1, -1, -1):
        g = layer.alpha[i] * grad_z if carry is None else layer.alpha[i] * grad_z + carry
        if i > 0:
            np.multiply(g, cache.prefix[i - 1], out=grad_p[:, i * e:(i + 1) * e])
            carry = g * cache.products[i]
        else:
            grad_p[:, :e] = g
    stacked = np.vstack(layer.weights) if k > 1 else layer.weights[0]
    grad_stack, grad_x = _stage_backward(cache.x, cache.xa, cache.adj, grad_p, stacked, need_input_grad)
    grads = {
        "W": [grad_stack[i * e:(i + 1) * e] for i in range(k)],
        "b": grad_b,
        "alpha": grad_alpha,
    }
    if need_input_grad:
        grads["x"] = grad_x
    return grads


# --------------------------------------------------------------------------
# gin layer


def _gin_forward(x, adj, layer: GinLayer, input_grad: bool = True):
    z1, xa = _stage_forward(x, adj, layer.w1, input_grad)
    z1 += layer.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ layer.w2.T + layer.b2
    h = _act(layer.activation, z2)
    return h, ForwardCache(layer, x, adj, [z1], [a1], z2, h, xa)


def _gin_backward(cache: ForwardCache, grad_h, need_input_grad, through_activation=True):
    layer: GinLayer = cache.layer
    z1, a1 = cache.products[0], cache.prefix[0]
    grad_z2 = _act_backward(layer.activation, cache.z, cache.h, grad_h) if through_activation else grad_h
    grads = {"w2": grad_z2.T @ a1, "b2": grad_z2.sum(axis=0)}
    grad_z1 = (grad_z2 @ layer.w2) * (z1 > 0)
    grads["b1"] = grad_z1.sum(axis=0)
    grads["w1"], grad_x = _stage_backward(cache.x, cache.xa, cache.adj, grad_z1, layer.w1, need_input_grad)
    if need_input_grad:
        grads["x"] = grad_x
    return grads


# --------------------------------------------------------------------------
# public layer operations


def cross_transform_forward(x, layer: CrossConvLayer):
    """Apply the factorized cross-feature transform to each row of ``x``."""
    return _cross_forward(x, None, layer)


def cross_transform_backward(cache: ForwardCache, grad_h):
    """Gradients w.r.t. input, order weights, bias and alpha.

    Returns a dict with keys ``x``, ``W`` (list, one per order), ``b`` and
    ``alpha``.
    """
    _check_grad(cache, grad_h)
    return _cross_backward(cache, np.asarray(grad_h, dtype=DTYPE), True)


def gin_transform_forward(x, layer: GinLayer):
    return _gin_forward(x, None, layer)


def gin_transform_backward(cache: ForwardCache, grad_h):
    _check_grad(cache, grad_h)
    return _gin_backward(cache, np.asarray(grad_h, dtype=DTYPE), True)


def graph_conv_forward(x, adj, layer, input_grad: bool = True):
    """Aggregate neighbours with ``adj`` and apply the layer's transform.

    ``input_grad=False`` declares that no gradient w.r.t. ``x`` will be
    requested, which only affects the evaluation order chosen.
    """
    if isinstance(layer, GinLayer):
        return _gin_forward(x, adj, layer, input_grad)
    return _cross_forward(x, adj, layer, input_grad)


def graph_conv_backward(cache: ForwardCache, grad_h, need_input_grad=True, through_activation=True):
    _check_grad(cache, grad_h)
    grad_h = np.asarray(grad_h, dtype=DTYPE)
    if isinstance(cache.layer, GinLayer):
        return _gin_backward(cache, grad_h, need_input_grad, through_activation)
    return _cross_backward(cache, grad_h, need_input_grad, through_activation)


def _check_grad(cache: ForwardCache, grad_h) -> None:
    if cache is None or cache.h is None:
        raise ValueError("backward called without a forward cache")
    if np.shape(grad_h) != cache.h.shape:
        raise ShapeError(f"gradient shape {np.shape(grad_h)} does not match cached output {cache.h.shape}")


def dropout_apply(x, rate: float, rng: np.random.Generator | None, training: bool = True):
    """Inverted dropout.  Returns ``(y, mask)`` where ``mask`` marks kept entries.

    For CSR input only stored entries are candidates for dropping and the
    mask is aligned with ``x.data``.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    is_sparse = sp.issparse(x)
    n = x.nnz if is_sparse else np.size(x)
    if not training or rate == 0.0:
        return x, np.ones(n if is_sparse else np.shape(x), dtype=bool)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    if is_sparse:
        x = to_csr(x)
        mask = rng.random(x.nnz) >= rate
        y = x.copy()
        y.data = y.data * mask / (1.0 - rate)
        y.eliminate_zeros()
        return y, mask
    x = np.asarray(x, dtype=DTYPE)
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


# --------------------------------------------------------------------------
# model configuration


@dataclass(frozen=True)
class LayerSpec:
    out_dim: int
    variant: str = "cross"
    order: int = 2
    activation: str = "relu"
    learn_alpha: bool = True
    alpha: tuple | None = None
    gin_hidden: int | None = None
    bias_outside: bool = False

    def resolved_alpha(self) -> np.ndarray:
        k = self.effective_order
        if self.alpha is None:
            return np.ones(k)
        a = np.asarray(self.alpha, dtype=DTYPE)
        if a.shape != (k,):
            raise ValueError(f"alpha needs {k} values, got {len(a)}")
        return a

    @property
    def effective_order(self) -> int:
        return 1 if self.variant == "vanilla" else self.order

    @property
    def has_alpha_param(self) -> bool:
        return self.variant == "cross" and self.learn_alpha


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int
    layers: tuple
    dropout: float = 0.5
    weight_decay: float = 5e-4

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers))
        self.validate()

    def validate(self) -> None:
        if len(self.layers) not in (1, 2):
            raise ValueError("layers must be 1 or 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        for i, spec in enumerate(self.layers):
            if spec.variant not in VARIANTS:
                raise ValueError(f"layer {i}: unknown variant {spec.variant!r}")
            if spec.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {spec.activation!r}")
            if spec.order < 1:
                raise ValueError(f"layer {i}: order must be >= 1")
            if spec.out_dim < 1:
                raise ValueError(f"layer {i}: out_dim must be >= 1")
            spec.resolved_alpha()
        if self.layers[-1].activation != "softmax":
            raise ValueError("the final layer must use the softmax activation")

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    def in_dims(self) -> list:
        dims = [self.in_dim]
        for spec in self.layers[:-1]:
            dims.append(spec.out_dim)
        return dims

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(l) for l in self.layers]
        for l in d["layers"]:
            if l["alpha"] is not None:
                l["alpha"] = list(l["alpha"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        layers = []
        for l in d["layers"]:
            l = dict(l)
            if l.get("alpha") is not None:
                l["alpha"] = tuple(l["alpha"])
            layers.append(LayerSpec(**l))
        return cls(in_dim=d["in_dim"], layers=tuple(layers),
                   dropout=d.get("dropout", 0.5), weight_decay=d.get("weight_decay", 5e-4))


def param_names(config: ModelConfig) -> list:
    names = []
    for i, (spec, d) in enumerate(zip(config.layers, config.in_dims())):
        p = f"layer{i}."
        if spec.variant == "gin":
            names += [p + "mlp1.W", p + "mlp1.b", p + "mlp2.W", p + "mlp2.b"]
        else:
            names += [p + f"W{k + 1}" for k in range(spec.effective_order)] + [p + "b"]
            if spec.has_alpha_param:
                names.append(p + "alpha")
    return names


def param_count(config: ModelConfig) -> int:
    """Exact number of trainable scalars."""
    total = 0
    for spec, d in zip(config.layers, config.in_dims()):
        e = spec.out_dim
        if spec.variant == "gin":
            hdim = spec.gin_hidden or e
            total += hdim * d + hdim + e * hdim + e
        else:
            k = spec.effective_order
            total += k * e * d + e + (k if spec.has_alpha_param else 0)
    return total


def init_params(config: ModelConfig, seed: int) -> dict:
    """Glorot-uniform weights, zero biases, alpha at its configured start value."""
    params = {}
    for i, (spec, d) in enumerate(zip(config.layers, config.in_dims())):
        p = f"layer{i}."
        e = spec.out_dim
        if spec.variant == "gin":
            hdim = spec.gin_hidden or e
            params[p + "mlp1.W"] = glorot_init(hdim, d, make_rng(seed, "init", i, "mlp1"))
            params[p + "mlp1.b"] = np.zeros(hdim)
            params[p + "mlp2.W"] = glorot_init(e, hdim, make_rng(seed, "init", i, "mlp2"))
            params[p + "mlp2.b"] = np.zeros(e)
            continue
        for k in range(spec.effective_order):
            params[p + f"W{k + 1}"] = glorot_init(e, d, make_rng(seed, "init", i, k + 1))
        params[p + "b"] = np.zeros(e)
        if spec.has_alpha_param:
            params[p + "alpha"] = spec.resolved_alpha().copy()
    return params


def build_layer(config: ModelConfig, params: dict, i: int):
    spec = config.layers[i]
    p = f"layer{i}."
    if spec.variant == "gin":
        return GinLayer(params[p + "mlp1.W"], params[p + "mlp1.b"], params[p + "mlp2.W"],
                        params[p + "mlp2.b"], activation=spec.activation)
    k = spec.effective_order
    alpha = params[p + "alpha"] if spec.has_alpha_param else spec.resolved_alpha()
    return CrossConvLayer([params[p + f"W{j + 1}"] for j in range(k)], params[p + "b"], alpha,
                          learn_alpha=spec.has_alpha_param, activation=spec.activation,
                          bias_outside=spec.bias_outside)


def _layer_grads_to_params(spec: LayerSpec, i: int, g: dict) -> dict:
    p = f"layer{i}."
    if spec.variant == "gin":
        return {p + "mlp1.W": g["w1"], p + "mlp1.b": g["b1"], p + "mlp2.W": g["w2"], p + "mlp2.b": g["b2"]}
    out = {p + f"W{k + 1}": w for k, w in enumerate(g["W"])}
    out[p + "b"] = g["b"]
    if spec.has_alpha_param:
        out[p + "alpha"] = g["alpha"]
    return out


# --------------------------------------------------------------------------
# full model


def model_forward(config: ModelConfig, params: dict, adj, x, rng=None, training=False):
    """Stacked graph convolutions with dropout on each layer's input.

    Returns ``(probabilities, caches)``; rows of ``probabilities`` sum to one.
    """
    n_layers = len(config.layers)
    rngs = rng.spawn(n_layers) if (training and config.dropout > 0) else [None] * n_layers
    caches = []
    h = x
    for i in range(n_layers):
        h, mask = dropout_apply(h, config.dropout, rngs[i], training)
        layer = build_layer(config, params, i)
        h, cache = graph_conv_forward(h, adj, layer, input_grad=i > 0)
        caches.append((mask if rngs[i] is not None else None, cache))
    return h, caches


def model_backward(config: ModelConfig, caches: list, grad_out, wrt_logits: bool = True) -> dict:
    """Parameter gradients of the stacked model.

    With ``wrt_logits`` the incoming gradient is taken with respect to the
    final pre-activation (the fused softmax + cross-entropy case).
    """
    grads = {}
    g = np.asarray(grad_out, dtype=DTYPE)
    for i in range(len(caches) - 1, -1, -1):
        mask, cache = caches[i]
        last = i == len(caches) - 1
        lg = graph_conv_backward(cache, g, need_input_grad=i > 0,
                                 through_activation=not (last and wrt_logits))
        grads.update(_layer_grads_to_params(config.layers[i], i, lg))
        if i > 0:
            g = lg["x"]
            if mask is not None:
                g = g * mask / (1.0 - config.dropout)
    return grads


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, config: ModelConfig, params: dict) -> None:
    doc = {
        "v": 1,
        "config": config.to_dict(),
        "tensors": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("v") != 1:
        raise ValueError("unsupported checkpoint version")
    config = ModelConfig.from_dict(doc["config"])
    params = {k: np.asarray(t["data"], dtype=DTYPE).reshape(t["shape"]) for k, t in doc["tensors"].items()}
    return config, params
