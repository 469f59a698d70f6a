"""Dense backbone with two classifier heads and hand-derived reverse-mode gradients.

The architecture is fixed by construction: `depth` weight matrices per
head path, ReLU hidden layers of equal width, and one residual skip
block spanning two middle hidden layers (h_out = relu(W2 relu(W1 h) + b2 + h)).
Two heads share the backbone; `backward` routes each head's upstream
gradient only to that head, and the backbone accumulates the sum of
whatever flows from unmasked heads. Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import NormStats
from .errors import NumericalError, ValidationError

CHECKPOINT_VERSION = "denshift-checkpoint-1"
_NORM_EPS = 1e-12  # guards division when a hidden row or weight column is exactly zero


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray


@dataclass
class ModelParams:
    """Backbone layers + two heads. Mutable: the training loop updates arrays in place."""

    backbone: list[DenseLayer]
    head_regular: DenseLayer
    head_balanced: DenseLayer
    resid_span: tuple[int, int] | None
    normalize_balanced: bool = False
    trained_heads: tuple[str, ...] | None = None

    def flat(self) -> list[np.ndarray]:
        """Live parameter arrays in fixed order: backbone (W,b)*, regular head, balanced head."""
        arrays: list[np.ndarray] = []
        for layer in self.backbone:
            arrays.extend((layer.W, layer.b))
        arrays.extend((self.head_regular.W, self.head_regular.b))
        arrays.extend((self.head_balanced.W, self.head_balanced.b))
        return arrays

    @property
    def input_dim(self) -> int:
        return self.backbone[0].W.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.backbone[-1].W.shape[1]

    @property
    def n_classes(self) -> int:
        return self.head_regular.W.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            backbone=[DenseLayer(l.W.copy(), l.b.copy()) for l in self.backbone],
            head_regular=DenseLayer(self.head_regular.W.copy(), self.head_regular.b.copy()),
            head_balanced=DenseLayer(self.head_balanced.W.copy(), self.head_balanced.b.copy()),
            resid_span=self.resid_span,
            normalize_balanced=self.normalize_balanced,
            trained_heads=self.trained_heads,
        )


@dataclass
class ForwardTrace:
    """Cached activations from one forward pass, enough for an exact backward pass."""

    x: np.ndarray
    pre: list[np.ndarray]
    act: list[np.ndarray]
    hidden: np.ndarray
    logits_regular: np.ndarray
    logits_balanced: np.ndarray
    # populated only when the balanced head normalizes hidden/weight vectors
    hidden_norms: np.ndarray | None = None
    hidden_unit: np.ndarray | None = None
    bal_w_norms: np.ndarray | None = None
    bal_w_unit: np.ndarray | None = None


@dataclass
class Gradients:
    backbone: list[DenseLayer]
    head_regular: DenseLayer
    head_balanced: DenseLayer

    def flat(self) -> list[np.ndarray]:
        arrays: list[np.ndarray] = []
        for layer in self.backbone:
            arrays.extend((layer.W, layer.b))
        arrays.extend((self.head_regular.W, self.head_regular.b))
        arrays.extend((self.head_balanced.W, self.head_balanced.b))
        return arrays


def init_mlp(
    input_dim: int,
    hidden: int = 28,
    depth: int = 4,
    n_classes: int = 2,
    seed: int = 0,
    normalize_balanced: bool = False,
) -> ModelParams:
    """Seeded model: depth weight matrices per head path, uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    if min(input_dim, hidden, n_classes) < 1 or depth < 2:
        raise ValidationError("dims must be positive and depth >= 2")
    rng = np.random.default_rng(seed)
    n_backbone = depth - 1

    def dense(d_in, d_out):
        bound = 1.0 / np.sqrt(d_in)
        return DenseLayer(rng.uniform(-bound, bound, size=(d_in, d_out)), np.zeros(d_out))

    backbone = [dense(input_dim, hidden)]
    backbone += [dense(hidden, hidden) for _ in range(n_backbone - 1)]
    span = None
    if n_backbone >= 3:
        m = (n_backbone - 1) // 2
        span = (m, m + 1)
    head_regular = dense(hidden, n_classes)
    head_balanced = dense(hidden, n_classes)
    return ModelParams(backbone, head_regular, head_balanced, span, normalize_balanced)


def forward(params: ModelParams, x: np.ndarray) -> ForwardTrace:
    """Run a batch through the backbone and both heads, caching activations."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValidationError(f"input shape {x.shape} does not match input_dim {params.input_dim}")
    span = params.resid_span
    pre, act = [], []
    a = x
    for l, layer in enumerate(params.backbone):
        z = a @ layer.W + layer.b
        if span is not None and l == span[1]:
            z = z + act[span[0] - 1]
        a = np.maximum(z, 0.0)
        pre.append(z)
        act.append(a)
    hidden = act[-1]
    logits_regular = hidden @ params.head_regular.W + params.head_regular.b

    if params.normalize_balanced:
        r = np.sqrt((hidden**2).sum(axis=1, keepdims=True))
        r_safe = np.maximum(r, _NORM_EPS)
        h_unit = hidden / r_safe
        s = np.sqrt((params.head_balanced.W**2).sum(axis=0, keepdims=True))
        s_safe = np.maximum(s, _NORM_EPS)
        w_unit = params.head_balanced.W / s_safe
        logits_balanced = h_unit @ w_unit + params.head_balanced.b
        return ForwardTrace(
            x, pre, act, hidden, logits_regular, logits_balanced,
            hidden_norms=r_safe, hidden_unit=h_unit, bal_w_norms=s_safe, bal_w_unit=w_unit,
        )
    logits_balanced = hidden @ params.head_balanced.W + params.head_balanced.b
    return ForwardTrace(x, pre, act, hidden, logits_regular, logits_balanced)


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    d_logits_regular: np.ndarray | None = None,
    d_logits_balanced: np.ndarray | None = None,
) -> Gradients:
    """Exact parameter gradients; pass None to mask a head (its gradients stay zero)."""
    hidden = trace.hidden
    gr_regular = DenseLayer(
        np.zeros_like(params.head_regular.W), np.zeros_like(params.head_regular.b)
    )
    gr_balanced = DenseLayer(
        np.zeros_like(params.head_balanced.W), np.zeros_like(params.head_balanced.b)
    )
    d_hidden = np.zeros_like(hidden)

    if d_logits_regular is not None:
        gr_regular.W[:] = hidden.T @ d_logits_regular
        gr_regular.b[:] = d_logits_regular.sum(axis=0)
        d_hidden += d_logits_regular @ params.head_regular.W.T

    if d_logits_balanced is not None:
        if params.normalize_balanced:
            h_unit, w_unit = trace.hidden_unit, trace.bal_w_unit
            d_w_unit = h_unit.T @ d_logits_balanced
            # project out the radial component of each unit vector's gradient
            gr_balanced.W[:] = (
                d_w_unit - w_unit * (w_unit * d_w_unit).sum(axis=0, keepdims=True)
            ) / trace.bal_w_norms
            gr_balanced.b[:] = d_logits_balanced.sum(axis=0)
            d_h_unit = d_logits_balanced @ w_unit.T
            d_hidden += (
                d_h_unit - h_unit * (h_unit * d_h_unit).sum(axis=1, keepdims=True)
            ) / trace.hidden_norms
        else:
            gr_balanced.W[:] = hidden.T @ d_logits_balanced
            gr_balanced.b[:] = d_logits_balanced.sum(axis=0)
            d_hidden += d_logits_balanced @ params.head_balanced.W.T

    n_backbone = len(params.backbone)
    gr_backbone = [DenseLayer(np.zeros_like(l.W), np.zeros_like(l.b)) for l in params.backbone]
    skip_extra: list[np.ndarray | None] = [None] * n_backbone
    span = params.resid_span
    da = d_hidden
    for l in range(n_backbone - 1, -1, -1):
        if skip_extra[l] is not None:
            da = da + skip_extra[l]
        dz = da * (trace.pre[l] > 0)
        a_in = trace.act[l - 1] if l > 0 else trace.x
        gr_backbone[l].W[:] = a_in.T @ dz
        gr_backbone[l].b[:] = dz.sum(axis=0)
        da = dz @ params.backbone[l].W.T
        if span is not None and l == span[1]:
            skip_extra[span[0] - 1] = dz
    return Gradients(gr_backbone, gr_regular, gr_balanced)


@dataclass
class OptState:
    """SGD or bias-corrected Adam over a flat list of parameter arrays."""

    kind: str
    lr: float
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays: list[np.ndarray], kind: str = "adam", lr: float = 1e-3) -> "OptState":
        if kind not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {kind!r}")
        state = cls(kind=kind, lr=lr)
        if kind == "adam":
            state.m = [np.zeros_like(a) for a in arrays]
            state.v = [np.zeros_like(a) for a in arrays]
        return state


def opt_step(arrays: list[np.ndarray], grads: list[np.ndarray], opt: OptState) -> list[np.ndarray]:
    """Update parameters in place and return them."""
    if len(arrays) != len(grads):
        raise ValidationError("parameter/gradient count mismatch")
    if opt.kind == "sgd":
        for p, g in zip(arrays, grads):
            p -= opt.lr * g
        return arrays
    opt.step += 1
    bc1 = 1.0 - opt.beta1**opt.step
    bc2 = 1.0 - opt.beta2**opt.step
    for p, g, m, v in zip(arrays, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
    return arrays


def grad_check(loss_fn, arrays: list[np.ndarray], batch, eps: float = 1e-5,
               n_samples: int = 200, seed: int = 0) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    loss_fn(arrays, batch) must return (scalar loss, flat gradient list).
    Probes a random subsample of at least n_samples scalar parameters
    (all of them if fewer exist); error is |g - g_fd| / max(|g_fd|, 1e-8).
    """
    loss, grads = loss_fn(arrays, batch)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss} in gradient check")
    sizes = [a.size for a in arrays]
    total = int(np.sum(sizes))
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_samples else rng.choice(total, size=n_samples, replace=False)

    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat_idx in picks:
        ai = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[ai])
        view = arrays[ai].reshape(-1)
        orig = view[local]
        view[local] = orig + eps
        lp, _ = loss_fn(arrays, batch)
        view[local] = orig - eps
        lm, _ = loss_fn(arrays, batch)
        view[local] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise NumericalError("non-finite loss while probing finite differences")
        g_fd = (lp - lm) / (2.0 * eps)
        g_an = grads[ai].reshape(-1)[local]
        worst = max(worst, abs(g_an - g_fd) / max(abs(g_fd), 1e-8))
    return float(worst)


def export_embeddings(params: ModelParams, x: np.ndarray, labels, path=None) -> np.ndarray:
    """Last hidden representation (the classifier input), optionally written as CSV with labels."""
    hidden = forward(params, x).hidden
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (hidden.shape[0],):
        raise ValidationError("need one label per row")
    if path is not None:
        cols = [f"e{j}" for j in range(hidden.shape[1])] + ["label"]
        lines = [",".join(cols)]
        for i in range(hidden.shape[0]):
            lines.append(",".join(repr(float(v)) for v in hidden[i]) + f",{labels[i]}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return hidden


def save_checkpoint(path, params: ModelParams, norm_stats: NormStats,
                    class_names: tuple[str, ...], feature_names: tuple[str, ...],
                    label_column: str = "label", extra: dict | None = None) -> None:
    """Bit-exact model checkpoint: parameter arrays + preprocessing stats + label mapping."""
    arrays = {}
    for i, layer in enumerate(params.backbone):
        arrays[f"backbone_{i}_W"] = layer.W
        arrays[f"backbone_{i}_b"] = layer.b
    arrays["head_regular_W"] = params.head_regular.W
    arrays["head_regular_b"] = params.head_regular.b
    arrays["head_balanced_W"] = params.head_balanced.W
    arrays["head_balanced_b"] = params.head_balanced.b
    arrays["norm_mean"] = norm_stats.mean
    arrays["norm_std"] = norm_stats.std
    arrays["norm_impute"] = norm_stats.impute
    arrays["norm_constant"] = norm_stats.constant_mask
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_backbone": len(params.backbone),
        "resid_span": list(params.resid_span) if params.resid_span else None,
        "normalize_balanced": params.normalize_balanced,
        "trained_heads": list(params.trained_heads) if params.trained_heads else None,
        "class_names": list(class_names),
        "feature_names": list(feature_names),
        "label_column": label_column,
        "extra": extra or {},
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[ModelParams, NormStats, dict]:
    """Inverse of save_checkpoint; logits reproduce bit-exactly on the same platform."""
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {meta.get('version')!r}")
        backbone = [
            DenseLayer(blob[f"backbone_{i}_W"].copy(), blob[f"backbone_{i}_b"].copy())
            for i in range(meta["n_backbone"])
        ]
        params = ModelParams(
            backbone=backbone,
            head_regular=DenseLayer(blob["head_regular_W"].copy(), blob["head_regular_b"].copy()),
            head_balanced=DenseLayer(blob["head_balanced_W"].copy(), blob["head_balanced_b"].copy()),
            resid_span=tuple(meta["resid_span"]) if meta["resid_span"] else None,
            normalize_balanced=meta["normalize_balanced"],
            trained_heads=tuple(meta["trained_heads"]) if meta["trained_heads"] else None,
        )
        stats = NormStats(
            mean=blob["norm_mean"].copy(),
            std=blob["norm_std"].copy(),
            impute=blob["norm_impute"].copy(),
            constant_mask=blob["norm_constant"].copy(),
        )
    return params, stats, meta
