"""Decoupled dual-batch training, the ablation variant grid, and the theta sweep.

Each step draws a regular batch and a class-balanced batch. Both pass
through the shared backbone; the regular head is optimized only on the
regular batch and the balanced head only on the balanced batch, with the
backbone accumulating the sum of both gradients. Model selection is by
validation AUC-ROC of the inference head (the balanced one when it is
trained), with early stopping after `early_stop_patience` epochs without
improvement.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import NumericalError, UnsupportedTaskError, ValidationError
from .losses import CostParams, DahConfig, ce, cost_loss, current_costs, dah_softmax, focal, softmax
from .metrics import ScoredSet, auc_prc, auc_roc, bss, brier, macro_micro_auc
from .nn import ModelParams, OptState, backward, forward, init_mlp, opt_step
from .sampling import SamplerState, epoch_batches

VARIANTS = ("base", "decoupling", "dah", "focal", "cost", "full")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "full"
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    early_stop_patience: int = 5
    hidden: int = 28
    depth: int = 4
    margin_scale: float | None = None  # None: scale so the rarest class gets margin 0.5
    gamma: float = 2.0
    theta: float = 5.0
    offset: float = 0.01
    lambda_cost: float = 1.0
    q_regular: float = 1.0
    q_balanced: float = 0.0
    normalize_balanced: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.early_stop_patience < 0:
            raise ValidationError("patience must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


@dataclass(frozen=True)
class VariantSpec:
    """Which streams run and which loss terms feed each head."""

    dual_stream: bool
    regular_terms: tuple[str, ...]
    balanced_terms: tuple[str, ...] | None

    @property
    def uses_cost(self) -> bool:
        return "cost" in self.regular_terms or ("cost" in (self.balanced_terms or ()))

    @property
    def uses_dah(self) -> bool:
        return "dah" in self.regular_terms or ("dah" in (self.balanced_terms or ()))

    @property
    def inference_head(self) -> str:
        return "balanced" if self.dual_stream else "regular"


_VARIANT_SPECS = {
    "base": VariantSpec(False, ("ce",), None),
    "focal": VariantSpec(False, ("focal",), None),
    "dah": VariantSpec(False, ("dah",), None),
    "cost": VariantSpec(False, ("ce", "cost"), None),
    "decoupling": VariantSpec(True, ("ce",), ("ce",)),
    "full": VariantSpec(True, ("dah",), ("dah", "cost")),
}


def variant_losses(variant: str) -> VariantSpec:
    """Loss/stream wiring for one ablation variant."""
    try:
        return _VARIANT_SPECS[variant]
    except KeyError:
        raise ValidationError(f"unknown variant {variant!r}") from None


@dataclass
class TrainHistory:
    """Per-epoch trajectory; wall time is kept here and never written to report files."""

    loss_regular: list[float] = field(default_factory=list)
    loss_balanced: list[float] = field(default_factory=list)
    val_auc_roc: list[float] = field(default_factory=list)
    val_auc_prc: list[float] = field(default_factory=list)
    cost_fp: list[float] = field(default_factory=list)
    cost_fn: list[float] = field(default_factory=list)
    best_epoch: int = -1
    wall_time_s: float = 0.0
    best_cost: tuple[float, float] | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.val_auc_roc)


def _head_loss(terms, logits, y, dah_cfg, cost_params, gamma, lambda_cost):
    """Sum the named loss terms; returns (loss, d/dlogits, d/dlog_cfp)."""
    total, grad, d_log_cfp = 0.0, np.zeros_like(logits), 0.0
    for term in terms:
        if term == "ce":
            l, g = ce(logits, y)
        elif term == "focal":
            l, g = focal(logits, y, gamma)
        elif term == "dah":
            l, g = dah_softmax(logits, y, dah_cfg.deltas)
        elif term == "cost":
            l, g, dc = cost_loss(logits, y, cost_params)
            l, g = lambda_cost * l, lambda_cost * g
            d_log_cfp += lambda_cost * dc
        else:
            raise ValidationError(f"unknown loss term {term!r}")
        total += l
        grad += g
    return total, grad, d_log_cfp


def _val_metrics(params: ModelParams, val: Dataset, head: str) -> tuple[float, float]:
    probs = predict(params, val.features, head=head)
    if val.n_classes == 2:
        scored = ScoredSet(probs[:, 1], val.labels)
        return auc_roc(scored), auc_prc(scored)
    onehot = np.eye(val.n_classes)[val.labels]
    macro, _ = macro_micro_auc(probs, onehot)
    return macro, float("nan")


def train(cfg: TrainConfig, splits: tuple[Dataset, Dataset]) -> tuple[ModelParams, TrainHistory]:
    """Run one training job; returns parameters from the best validation epoch."""
    train_ds, val_ds = splits
    if train_ds.has_missing or val_ds.has_missing:
        raise ValidationError("splits must be preprocessed (no missing values)")
    spec = variant_losses(cfg.variant)
    if spec.uses_cost and train_ds.n_classes != 2:
        raise UnsupportedTaskError("cost-matrix variants support binary tasks only")

    t0 = time.perf_counter()
    params = init_mlp(
        train_ds.dim, cfg.hidden, cfg.depth, train_ds.n_classes,
        seed=cfg.seed, normalize_balanced=cfg.normalize_balanced,
    )
    sampler = SamplerState(
        train_ds, cfg.batch_size, seed=cfg.seed,
        q_regular=cfg.q_regular, q_balanced=cfg.q_balanced,
    )
    dah_cfg = DahConfig.from_counts(train_ds.class_counts, cfg.margin_scale) if spec.uses_dah else None
    cost_params = CostParams(0.0, cfg.theta, cfg.offset) if spec.uses_cost else None
    cost_arr = np.zeros(1) if spec.uses_cost else None

    arrays = params.flat()
    if cost_arr is not None:
        arrays = arrays + [cost_arr]
    opt = OptState.for_arrays(arrays, cfg.optimizer, cfg.learning_rate)

    history = TrainHistory()
    best_auc = -np.inf
    best_params = None
    streak = 0
    val_head = spec.inference_head

    for epoch in range(cfg.epochs):
        sums = {"regular": 0.0, "balanced": 0.0}
        n_steps = 0
        for step, pair in enumerate(epoch_batches(sampler, train_ds)):
            xr, yr = pair.regular
            trace_r = forward(params, xr)
            loss_r, d_r, dcost_r = _head_loss(
                spec.regular_terms, trace_r.logits_regular, yr,
                dah_cfg, cost_params, cfg.gamma, cfg.lambda_cost,
            )
            grads = backward(params, trace_r, d_logits_regular=d_r)
            flat = grads.flat()
            d_cost = dcost_r
            loss_b = float("nan")
            if spec.dual_stream:
                xb, yb = pair.balanced
                trace_b = forward(params, xb)
                loss_b, d_b, dcost_b = _head_loss(
                    spec.balanced_terms, trace_b.logits_balanced, yb,
                    dah_cfg, cost_params, cfg.gamma, cfg.lambda_cost,
                )
                flat = [a + b for a, b in zip(flat, backward(params, trace_b, d_logits_balanced=d_b).flat())]
                d_cost += dcost_b
            if not np.isfinite(loss_r) or (spec.dual_stream and not np.isfinite(loss_b)):
                costs = current_costs(cost_params) if cost_params else None
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} step {step}: "
                    f"regular={loss_r} balanced={loss_b} costs={costs}"
                )
            if cost_arr is not None:
                flat = flat + [np.array([d_cost])]
            opt_step(arrays, flat, opt)
            if cost_arr is not None:
                cost_params.log_cfp = float(cost_arr[0])
            sums["regular"] += loss_r
            if spec.dual_stream:
                sums["balanced"] += loss_b
            n_steps += 1

        val_auc, val_ap = _val_metrics(params, val_ds, val_head)
        history.loss_regular.append(sums["regular"] / n_steps)
        history.loss_balanced.append(sums["balanced"] / n_steps if spec.dual_stream else float("nan"))
        history.val_auc_roc.append(val_auc)
        history.val_auc_prc.append(val_ap)
        if cost_params is not None:
            c_fp, c_fn = current_costs(cost_params)
            history.cost_fp.append(c_fp)
            history.cost_fn.append(c_fn)
        else:
            history.cost_fp.append(float("nan"))
            history.cost_fn.append(float("nan"))

        if val_auc > best_auc:
            best_auc = val_auc
            history.best_epoch = epoch
            best_params = params.copy()
            history.best_cost = current_costs(cost_params) if cost_params else None
            streak = 0
        else:
            streak += 1
            if streak > cfg.early_stop_patience:
                break

    best_params.trained_heads = ("regular", "balanced") if spec.dual_stream else ("regular",)
    history.wall_time_s = time.perf_counter() - t0
    return best_params, history


def predict(params: ModelParams, x: np.ndarray, head: str | None = None) -> np.ndarray:
    """Class probabilities from the chosen head (default: balanced when trained, else regular)."""
    available = params.trained_heads if params.trained_heads is not None else ("regular", "balanced")
    if head is None:
        head = "balanced" if "balanced" in available else "regular"
    if head not in ("regular", "balanced"):
        raise ValidationError(f"unknown head {head!r}")
    if head not in available:
        raise ValidationError(f"head {head!r} was not trained for this variant")
    trace = forward(params, x)
    logits = trace.logits_balanced if head == "balanced" else trace.logits_regular
    return softmax(logits)


def _mean_ci(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return float(arr.mean()), float("nan")
    stderr = arr.std(ddof=1) / np.sqrt(arr.size)
    return float(arr.mean()), float(1.96 * stderr)


def _test_scores(params: ModelParams, test: Dataset) -> ScoredSet:
    probs = predict(params, test.features)
    return ScoredSet(probs[:, 1], test.labels)


def _run_single(job) -> dict:
    cfg, train_ds, val_ds, test_ds = job
    params, history = train(cfg, (train_ds, val_ds))
    out = {"variant": cfg.variant, "seed": cfg.seed, "theta": cfg.theta,
           "best_epoch": history.best_epoch, "epochs_run": history.epochs_run}
    if test_ds.n_classes == 2:
        scored = _test_scores(params, test_ds)
        out.update(auc_roc=auc_roc(scored), auc_prc=auc_prc(scored),
                   brier=brier(scored), bss=bss(scored))
    else:
        probs = predict(params, test_ds.features)
        macro, micro = macro_micro_auc(probs, np.eye(test_ds.n_classes)[test_ds.labels])
        out.update(macro_auc=macro, micro_auc=micro)
    return out


def _run_jobs(jobs, max_workers: int = 1) -> list[dict]:
    if max_workers <= 1 or len(jobs) <= 1:
        return [_run_single(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(max_workers, len(jobs))) as pool:
        return list(pool.map(_run_single, jobs))


def sweep_theta(
    cfg: TrainConfig,
    splits: tuple[Dataset, Dataset, Dataset],
    theta_grid=(1.0, 5.0, 10.0, 25.0, 50.0, 100.0),
    seeds=(0, 1, 2),
    max_workers: int = 1,
) -> list[dict]:
    """Train/eval over the theta grid; one table row per theta with mean +- 95% CI."""
    if not variant_losses(cfg.variant).uses_cost:
        raise ValidationError("theta sweep requires a cost-matrix variant")
    if len(seeds) < 3:
        raise ValidationError("theta sweep needs at least 3 seeds for confidence intervals")
    train_ds, val_ds, test_ds = splits
    grid = sorted(float(t) for t in theta_grid)
    jobs = [
        (replace(cfg, theta=t, seed=s), train_ds, val_ds, test_ds)
        for t in grid for s in seeds
    ]
    results = _run_jobs(jobs, max_workers)
    rows = []
    for t in grid:
        runs = [r for r in results if r["theta"] == t]
        roc_mean, roc_ci = _mean_ci([r["auc_roc"] for r in runs])
        prc_mean, prc_ci = _mean_ci([r["auc_prc"] for r in runs])
        rows.append({
            "theta": t, "n_runs": len(runs),
            "auc_roc_mean": roc_mean, "auc_roc_ci95": roc_ci,
            "auc_prc_mean": prc_mean, "auc_prc_ci95": prc_ci,
        })
    return rows


def run_ablation(
    cfg: TrainConfig,
    splits: tuple[Dataset, Dataset, Dataset],
    variants=VARIANTS,
    seeds=(0, 1, 2, 3, 4),
    max_workers: int = 1,
) -> dict:
    """Train every variant on identical splits with shared seeds; consolidated metric table."""
    train_ds, val_ds, test_ds = splits
    jobs = [
        (replace(cfg, variant=v, seed=s), train_ds, val_ds, test_ds)
        for v in variants for s in seeds
    ]
    results = _run_jobs(jobs, max_workers)
    table = {}
    for v in variants:
        runs = [r for r in results if r["variant"] == v]
        row = {"n_runs": len(runs)}
        for metric in ("auc_roc", "auc_prc", "bss"):
            mean, ci = _mean_ci([r[metric] for r in runs])
            row[f"{metric}_mean"] = mean
            row[f"{metric}_ci95"] = ci
            row[f"{metric}_per_seed"] = [r[metric] for r in runs]
        table[v] = row
    return table
