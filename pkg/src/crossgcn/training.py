"""Loss, Adam, single training runs and the multi-split experiment runner."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .graphdata import GraphDataset, SplitSpec, make_random_split
from .model import LayerSpec, ModelConfig, init_params, model_backward, model_forward
from .numerics import make_rng

log = logging.getLogger(__name__)

MODEL_VARIANTS = ("cross", "cross-fix", "gcn", "gin")


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"training diverged at epoch {epoch}: non-finite {what}")
        self.epoch = epoch


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to train one model family on one dataset.

    ``cross_layers`` switches explicit crossing per layer (1 = use ``order``,
    0 = plain first-order layer); ``None`` means crossing in every layer.
    ``alpha`` gives the fixed (``cross-fix``) or starting (``cross``) order
    weights.
    """

    dataset: str = ""
    variant: str = "cross"
    layers: int = 2
    hidden: int = 16
    order: int = 2
    cross_layers: tuple | None = None
    alpha: tuple | None = None
    gin_hidden: int | None = None
    bias_outside: bool = False
    dropout: float = 0.5
    weight_decay: float = 5e-4
    lr: float = 0.01
    epochs: int = 200
    n_splits: int = 20
    seed: int = 0
    split: str = "random"

    def __post_init__(self):
        for name in ("cross_layers", "alpha"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, tuple):
                object.__setattr__(self, name, tuple(v))
        self.validate()

    def validate(self) -> None:
        if self.variant not in MODEL_VARIANTS:
            raise ValueError(f"variant must be one of {', '.join(MODEL_VARIANTS)}")
        if self.layers not in (1, 2):
            raise ValueError("layers must be 1 or 2")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.cross_layers is not None:
            if len(self.cross_layers) != self.layers:
                raise ValueError("cross_layers needs one toggle per layer")
            if any(t not in (0, 1) for t in self.cross_layers):
                raise ValueError("cross_layers toggles must be 0 or 1")
        if self.alpha is not None and len(self.alpha) != self.order:
            raise ValueError(f"alpha needs {self.order} values")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.n_splits < 1:
            raise ValueError("n_splits must be >= 1")
        if self.split not in ("random", "fixed"):
            raise ValueError("split must be 'random' or 'fixed'")
        if self.gin_hidden is not None and self.gin_hidden < 1:
            raise ValueError("gin_hidden must be >= 1")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("cross_layers", "alpha"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in fields(cls)]


def build_model_config(cfg: ExperimentConfig, in_dim: int, n_classes: int) -> ModelConfig:
    toggles = cfg.cross_layers or (1,) * cfg.layers
    specs = []
    for i in range(cfg.layers):
        last = i == cfg.layers - 1
        out = n_classes if last else cfg.hidden
        act = "softmax" if last else "relu"
        if cfg.variant == "gcn":
            spec = LayerSpec(out, variant="vanilla", order=1, activation=act)
        elif cfg.variant == "gin":
            spec = LayerSpec(out, variant="gin", order=1, activation=act,
                             gin_hidden=cfg.gin_hidden if (cfg.gin_hidden and not last) else None)
        else:
            k = cfg.order if toggles[i] else 1
            alpha = tuple(cfg.alpha[:k]) if cfg.alpha is not None else None
            spec = LayerSpec(out, variant="cross", order=k, activation=act,
                             learn_alpha=cfg.variant == "cross", alpha=alpha,
                             bias_outside=cfg.bias_outside)
        specs.append(spec)
    return ModelConfig(in_dim, tuple(specs), dropout=cfg.dropout, weight_decay=cfg.weight_decay)


# --------------------------------------------------------------------------
# loss and metrics


def l2_penalty(params: dict) -> float:
    return float(sum(np.sum(v * v) for v in params.values()))


def masked_loss(probabilities, labels, mask, params: dict | None = None, weight_decay: float = 0.0) -> float:
    """Summed cross-entropy over ``mask`` plus ``weight_decay * ||params||^2``."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("loss mask is empty")
    p = np.asarray(probabilities)[mask, np.asarray(labels)[mask]]
    with np.errstate(divide="ignore"):
        loss = float(-np.sum(np.log(p)))
    if params and weight_decay:
        loss += weight_decay * l2_penalty(params)
    return loss


def loss_gradient(probabilities, labels, mask, params: dict, weight_decay: float, config: ModelConfig):
    """Gradient of :func:`masked_loss` w.r.t. the final logits and the L2 term.

    Returns ``(grad_logits, l2_grads)``.
    """
    grad = np.zeros_like(probabilities)
    mask = np.asarray(mask)
    grad[mask] = probabilities[mask]
    grad[mask, np.asarray(labels)[mask]] -= 1.0
    l2 = {k: 2.0 * weight_decay * v for k, v in params.items()} if weight_decay else {}
    return grad, l2


def full_gradient(config: ModelConfig, params: dict, adj, x, labels, mask, rng=None, training=False):
    """Loss and its gradient w.r.t. every parameter (one forward + backward)."""
    probs, caches = model_forward(config, params, adj, x, rng=rng, training=training)
    loss = masked_loss(probs, labels, mask, params, config.weight_decay)
    grad_logits, l2 = loss_gradient(probs, labels, mask, params, config.weight_decay, config)
    grads = model_backward(config, caches, grad_logits, wrt_logits=True)
    for k, g in l2.items():
        grads[k] = grads[k] + g
    return loss, grads, probs


def evaluate_accuracy(probabilities, labels, ids) -> float:
    """Fraction of ``ids`` whose row argmax (lowest index on ties) equals the label."""
    ids = np.asarray(ids)
    if ids.size == 0:
        raise ValueError("no ids to evaluate")
    pred = np.argmax(np.asarray(probabilities)[ids], axis=1)
    return float(np.mean(pred == np.asarray(labels)[ids]))


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update.  Inputs are not modified.

    Parameters without a gradient entry are left unchanged.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
        if np.shape(g) != np.shape(params[k]):
            raise ValueError(f"gradient shape {np.shape(g)} does not match {k} {np.shape(params[k])}")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = dict(params), {}, {}
    for k, g in grads.items():
        m = b1 * state.m.get(k, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params[k] = params[k] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)


# --------------------------------------------------------------------------
# runs


@dataclass
class RunResult:
    seed: int
    curve: list  # [epoch, train loss, train acc, val acc]
    best_val_epoch: int
    test_acc: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "best_val_epoch": self.best_val_epoch, "test_acc": self.test_acc,
                "curve": self.curve}


def train_run(dataset: GraphDataset, split: SplitSpec, config: ExperimentConfig, seed: int,
              return_params: bool = False):
    """Full-batch training with test accuracy read at the best-validation epoch."""
    adj, x = dataset.model_inputs()
    labels = dataset.labels
    if split.train.size == 0 or split.val.size == 0 or split.test.size == 0:
        raise ValueError("split needs non-empty train, val and test sets")
    split.validate(dataset.n_nodes)
    mcfg = build_model_config(config, dataset.n_features, dataset.n_classes)
    params = init_params(mcfg, seed)
    state = AdamState(lr=config.lr)
    curve, test_accs = [], []
    best_val, best_epoch, best_params = -1.0, -1, params
    for epoch in range(config.epochs):
        rng = make_rng(seed, "dropout", epoch)
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                loss, grads, _ = full_gradient(mcfg, params, adj, x, labels, split.train, rng=rng, training=True)
            except FloatingPointError:
                raise DivergenceError(epoch, "activations") from None
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            try:
                params, state = adam_step(params, grads, state)
                probs, _ = model_forward(mcfg, params, adj, x)
            except FloatingPointError:
                raise DivergenceError(epoch, "gradient or parameters") from None
        train_acc = evaluate_accuracy(probs, labels, split.train)
        val_acc = evaluate_accuracy(probs, labels, split.val)
        test_accs.append(evaluate_accuracy(probs, labels, split.test))
        curve.append([epoch, loss, train_acc, val_acc])
        if val_acc > best_val:
            best_val, best_epoch, best_params = val_acc, epoch, params
    result = RunResult(seed, curve, best_epoch, test_accs[best_epoch], config.to_dict())
    return (result, best_params) if return_params else result


def derive_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint32)[0])


@dataclass
class ExperimentSummary:
    dataset: str
    variant: str
    config: dict
    runs: list
    params: list = field(default=None, repr=False)  # best-validation parameters per run, if kept

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_acc for r in self.runs])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self):
        """Sample standard deviation; ``None`` for a single run."""
        if len(self.runs) < 2:
            return None
        return float(self.accuracies.std(ddof=1))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "variant": self.variant,
            "config": self.config,
            "splits": len(self.runs),
            "mean_test_acc": self.mean,
            "std_test_acc": self.std,
            "std_defined": self.std is not None,
            "runs": [r.to_dict() for r in self.runs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def __str__(self) -> str:
        std = f"{100 * self.std:.1f}" if self.std is not None else "n/a"
        return f"{self.variant} on {self.dataset}: {100 * self.mean:.1f} +- {std} ({len(self.runs)} runs)"


def _split_for(dataset: GraphDataset, config: ExperimentConfig, index: int, base_seed: int) -> SplitSpec:
    if config.split == "fixed":
        if dataset.splits.train.size == 0:
            raise ValueError(f"dataset {dataset.name!r} has no fixed training split")
        return dataset.splits
    rng = make_rng(base_seed, "split", index)
    return make_random_split(dataset.labels, rng, fixed=dataset.splits)


def _one_run(args):
    dataset, config, index, base_seed, keep_params = args
    split = _split_for(dataset, config, index, base_seed)
    return train_run(dataset, split, config, derive_seed(base_seed, index), return_params=keep_params)


def run_experiment(dataset: GraphDataset, config: ExperimentConfig, n_splits: int | None = None,
                   base_seed: int | None = None, jobs: int = 1, keep_params: bool = False) -> ExperimentSummary:
    """Train one run per random training split and aggregate test accuracy.

    Run ``i`` uses split stream ``i`` and seed ``derive_seed(base_seed, i)``,
    so the result does not depend on ``jobs``.
    """
    n_splits = config.n_splits if n_splits is None else n_splits
    base_seed = config.seed if base_seed is None else base_seed
    if n_splits < 1:
        raise ValueError("n_splits must be >= 1")
    tasks = [(dataset, config, i, base_seed, keep_params) for i in range(n_splits)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_one_run, tasks))
    else:
        outs = [_one_run(t) for t in tasks]
    params = None
    if keep_params:
        outs, params = [o[0] for o in outs], [o[1] for o in outs]
    summary = ExperimentSummary(dataset.name, config.variant, config.to_dict(), outs, params)
    log.info("%s", summary)
    return summary
