"""Training protocol, step-level accuracy metric, and ablation harness.

The loop samples trajectory batches in shuffled order, feeds frames from
the start, and applies one optimizer update after every 100 steps (or at
trajectory end) using the window-summed loss averaged over the batch.
Hidden states carry across window boundaries numerically and reset only
at trajectory starts; gradients stop at window edges (truncated BPTT).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import neuralcore as nc
from .errors import NonFinite, TooSmall
from .sensekit import ModalityMask, apply_mask_array
from .synthgen import (
    Dataset, LabeledTrajectory, TORQUE_CLASSES, subset_dataset,
)

N_CLASSES = nc.N_CLASSES


@dataclass(frozen=True)
class TrainConfig:
    split_ratio: float = 0.8
    batch_size: int = 128
    update_window: int = 100
    epochs: int = 40
    hyper: nc.TrainHyper = field(default_factory=nc.TrainHyper)
    mask: ModalityMask = field(default_factory=ModalityMask)
    arch: nc.ArchConfig = field(default_factory=nc.ArchConfig)

    def __post_init__(self):
        if not (0.0 < self.split_ratio < 1.0):
            raise ValueError("split_ratio must be in (0, 1)")
        if self.update_window < 1:
            raise ValueError("update_window must be >= 1")


@dataclass
class Metrics:
    acc: float
    per_class_acc: np.ndarray      # (17,)
    confusion: np.ndarray          # (17, 17) rows = label, cols = argmax
    loss_curve: list               # mean per-step training loss per epoch
    n_valid: int
    curves: list = field(default_factory=list)  # per-epoch row dicts

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "per_class_acc": [round(float(x), 6) for x in self.per_class_acc],
            "confusion": self.confusion.tolist(),
            "loss_curve": [round(float(x), 6) for x in self.loss_curve],
            "n_valid": self.n_valid,
            "curves": self.curves,
        }


def split_dataset(d: Dataset, ratio: float = 0.8, seed: int = 0):
    """Deterministic stratified split; |valid| = round((1-ratio) * N)."""
    n = len(d)
    if n < 5:
        raise TooSmall(f"need at least 5 trajectories, have {n}")
    labels = d.labels_array()
    n_valid = int(round((1.0 - ratio) * n))
    rng = np.random.default_rng([seed, 11])
    per_class = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        per_class[int(c)] = rng.permutation(idx)
    # largest-remainder allocation of validation slots across classes
    quota = {c: (1.0 - ratio) * len(idx) for c, idx in per_class.items()}
    take = {c: int(np.floor(q)) for c, q in quota.items()}
    short = n_valid - sum(take.values())
    order = sorted(quota, key=lambda c: (-(quota[c] - take[c]), c))
    for c in order[:short]:
        take[c] += 1
    valid_idx, train_idx = [], []
    for c, idx in per_class.items():
        valid_idx.extend(idx[:take[c]])
        train_idx.extend(idx[take[c]:])
    valid_idx.sort()
    train_idx.sort()

    def pick(ids, tag):
        manifest = dict(d.manifest)
        manifest["split"] = {"part": tag, "ratio": ratio, "seed": seed}
        manifest["n_trajectories"] = len(ids)
        manifest["counts"] = None
        return Dataset([d.trajectories[i] for i in ids], manifest)

    return pick(train_idx, "train"), pick(valid_idx, "valid")


def _windows(total: int, width: int):
    return [(s, min(s + width, total)) for s in range(0, total, width)]


def _forward_eval(params, obs, window: int = 100):
    """Memory-bounded forward pass: (B, T, 301) -> log-probs (B, T, C)."""
    B, T, _ = obs.shape
    out = np.empty((B, T, params.arch.n_classes), dtype=params.dtype)
    state = nc.zero_state(params.arch.hidden, B, params.dtype)
    for s, e in _windows(T, window):
        lp, _, _, state, _ = nc.forward_window(obs[:, s:e], state, params)
        out[:, s:e] = lp
    return out


def _predict_log_probs(classifier, obs):
    if isinstance(classifier, nc.ModelParams):
        return _forward_eval(classifier, obs.astype(classifier.dtype))
    return np.asarray(classifier(obs))


def accuracy(classifier, dataset: Dataset, mask: ModalityMask | None = None,
             batch_size: int = 128) -> Metrics:
    """Step-level accuracy: fraction of (trajectory, step) pairs whose
    argmax class equals the label, prefix steps included.  Ties break to
    the lowest class index.

    classifier is either ModelParams or a callable mapping observations
    (B, T, 301) to (log-)probabilities (B, T, 17).
    """
    obs_all = dataset.obs_array()
    labels = dataset.labels_array()
    n, T = obs_all.shape[:2]
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for s in range(0, n, batch_size):
        obs = obs_all[s:s + batch_size]
        if mask is not None:
            obs = apply_mask_array(obs, mask)
        scores = _predict_log_probs(classifier, obs)
        pred = scores.argmax(axis=2)  # argmax takes the first (lowest) max
        for b, label in enumerate(labels[s:s + batch_size]):
            confusion[label] += np.bincount(pred[b], minlength=N_CLASSES)
    totals = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(totals > 0, np.diag(confusion) / totals, 0.0)
    acc = float(np.diag(confusion).sum() / confusion.sum())
    return Metrics(acc=acc, per_class_acc=per_class, confusion=confusion,
                   loss_curve=[], n_valid=n)


def _batch_update(params, opt, obs, labels, hyper, update_window):
    """One batch: windowed forward/backward with state carry-over.

    Returns (params, opt, loss_sum, step_count, correct_count).
    """
    B, T, D = obs.shape
    state = nc.zero_state(params.arch.hidden, B, params.dtype)
    loss_sum = 0.0
    correct = 0
    for s, e in _windows(T, update_window):
        win = obs[:, s:e]
        log_probs, mean, scale, new_state, tape = nc.forward_window(
            win, state, params, want_tape=True)
        W = e - s
        next_obs = np.zeros_like(win)
        has_next = np.zeros((B, W), dtype=params.dtype)
        upto = min(e + 1, T) - (s + 1)
        if upto > 0:
            next_obs[:, :upto] = obs[:, s + 1:s + 1 + upto]
            has_next[:, :upto] = 1.0
        ce, pred = nc._window_losses(log_probs, mean, scale, labels,
                                     next_obs, has_next, hyper.gamma)
        batch_loss = float((ce + pred).mean())
        if not np.isfinite(batch_loss):
            raise NonFinite("training loss overflowed")
        grads = nc.backward_window(tape, params, labels, next_obs, has_next,
                                   hyper.gamma, loss_scale=1.0 / B)
        params, opt = nc.optimizer_step(params, grads, opt, hyper)
        # state carries over numerically; it came from the pre-update params
        state = new_state
        loss_sum += batch_loss
        correct += int((log_probs.argmax(axis=2) == labels[:, None]).sum())
    return params, opt, loss_sum, B * T, correct


def _valid_pass(params, valid_set, mask, hyper, batch_size):
    """Validation accuracy and mean per-step loss."""
    obs_all = valid_set.obs_array()
    labels = valid_set.labels_array()
    n, T = obs_all.shape[:2]
    correct, loss_total = 0, 0.0
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for s in range(0, n, batch_size):
        obs = apply_mask_array(obs_all[s:s + batch_size], mask).astype(params.dtype)
        lab = labels[s:s + batch_size]
        B = obs.shape[0]
        state = nc.zero_state(params.arch.hidden, B, params.dtype)
        for ws, we in _windows(T, 100):
            lp, mean, scale, state, _ = nc.forward_window(obs[:, ws:we], state, params)
            W = we - ws
            next_obs = np.zeros_like(obs[:, ws:we])
            has_next = np.zeros((B, W), dtype=params.dtype)
            upto = min(we + 1, T) - (ws + 1)
            if upto > 0:
                next_obs[:, :upto] = obs[:, ws + 1:ws + 1 + upto]
                has_next[:, :upto] = 1.0
            ce, pr = nc._window_losses(lp, mean, scale, lab, next_obs,
                                       has_next, hyper.gamma)
            loss_total += float((ce + pr).sum())
            pred = lp.argmax(axis=2)
            correct += int((pred == lab[:, None]).sum())
            for b, label in enumerate(lab):
                confusion[label] += np.bincount(pred[b], minlength=N_CLASSES)
    steps = n * T
    return correct / steps, loss_total / steps, confusion


def train(train_set: Dataset, valid_set: Dataset, cfg: TrainConfig,
          params: nc.ModelParams | None = None, log=None):
    """Run the full protocol; returns (params, Metrics).

    log, when given, is called with each per-epoch row dict (also
    collected in Metrics.curves).
    """
    if len(train_set) == 0 or len(valid_set) == 0:
        raise TooSmall("train and valid sets must be non-empty")
    if params is None:
        params = nc.init_params(cfg.arch, cfg.hyper.seed)
    hyper = cfg.hyper
    mask = cfg.mask.validate()
    obs_all = train_set.obs_array()
    labels_all = train_set.labels_array()
    n = len(train_set)
    rng = np.random.default_rng([hyper.seed, 13])
    opt = nc.AdamState()
    curves, loss_curve = [], []
    confusion = None

    def record(epoch, split, acc_val, loss_val):
        row = {"epoch": epoch, "split": split,
               "acc": round(float(acc_val), 6), "loss": round(float(loss_val), 6)}
        curves.append(row)
        if log:
            log(row)

    val_acc, val_loss, confusion = _valid_pass(
        params, valid_set, mask, hyper, cfg.batch_size)
    if cfg.epochs == 0:
        record(0, "valid", val_acc, val_loss)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss, epoch_steps, epoch_correct = 0.0, 0, 0
        for bs in range(0, n, cfg.batch_size):
            take = order[bs:bs + cfg.batch_size]
            obs = apply_mask_array(obs_all[take], mask).astype(np.float32)
            labels = labels_all[take]
            params, opt, lsum, steps, correct = _batch_update(
                params, opt, obs, labels, hyper, cfg.update_window)
            epoch_loss += lsum * len(take)
            epoch_steps += steps
            epoch_correct += correct
        train_loss = epoch_loss / epoch_steps
        record(epoch, "train", epoch_correct / epoch_steps, train_loss)
        loss_curve.append(train_loss)
        val_acc, val_loss, confusion = _valid_pass(
            params, valid_set, mask, hyper, cfg.batch_size)
        record(epoch, "valid", val_acc, val_loss)

    totals = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(totals > 0, np.diag(confusion) / totals, 0.0)
    metrics = Metrics(acc=float(val_acc), per_class_acc=per_class,
                      confusion=confusion, loss_curve=loss_curve,
                      n_valid=len(valid_set), curves=curves)
    return params, metrics


# --- ablation harness -------------------------------------------------------

ABLATION_CONDITIONS = ("full", "no-force", "no-prox", "no-accel", "rigid")


@dataclass
class AblationReport:
    conditions: dict               # condition -> list of run dicts (one per seed)
    support_reference: list        # soft-subset runs paired with "rigid"
    seeds: list

    def summary(self) -> dict:
        out = {}
        for cond, runs in self.conditions.items():
            accs = [r["final_acc"] for r in runs]
            out[cond] = {"mean_acc": float(np.mean(accs)),
                         "sd_acc": float(np.std(accs)),
                         "accs": accs}
        accs = [r["final_acc"] for r in self.support_reference]
        out["soft-subset"] = {"mean_acc": float(np.mean(accs)),
                              "sd_acc": float(np.std(accs)), "accs": accs}
        return out

    def to_dict(self) -> dict:
        return {"conditions": self.conditions,
                "support_reference": self.support_reference,
                "seeds": self.seeds, "summary": self.summary()}


def _run_condition(dataset, cfg: TrainConfig, mask, seed, condition, log=None):
    run_cfg = replace(cfg, mask=mask, hyper=replace(cfg.hyper, seed=seed))
    tr, va = split_dataset(dataset, cfg.split_ratio, seed)
    t0 = time.perf_counter()
    params, metrics = train(tr, va, run_cfg, log=log)
    rows = [dict(r, condition=condition, seed=seed) for r in metrics.curves]
    return params, {
        "condition": condition,
        "seed": seed,
        "final_acc": metrics.acc,
        "wall_seconds": round(time.perf_counter() - t0, 2),
        "curve": rows,
    }


def support_experiment(dataset_soft: Dataset, dataset_rigid: Dataset,
                       cfg: TrainConfig, seeds, per_class: int = 25, log=None):
    """Twist-motion 6-class subsets, soft vs. rigid support."""
    soft_sub = subset_dataset(dataset_soft, TORQUE_CLASSES, per_class)
    rigid_sub = subset_dataset(dataset_rigid, TORQUE_CLASSES, per_class)
    full = ModalityMask()
    soft_runs, rigid_runs = [], []
    for seed in seeds:
        _, run = _run_condition(soft_sub, cfg, full, seed, "soft-subset", log)
        soft_runs.append(run)
        _, run = _run_condition(rigid_sub, cfg, full, seed, "rigid", log)
        rigid_runs.append(run)
    return soft_runs, rigid_runs


def ablation_suite(base_cfg: TrainConfig, dataset_soft: Dataset,
                   dataset_rigid: Dataset, seeds,
                   subset_per_class: int = 25, log=None) -> AblationReport:
    """Modality exclusions on the soft set plus the support comparison.

    Five primary conditions (full / no-force / no-prox / no-accel on the
    17-class soft set, full-modality on the rigid twist subset); the
    matching soft twist subset is reported alongside as the support
    reference.
    """
    seeds = list(seeds)
    if len(seeds) < 3:
        raise TooSmall("ablation needs at least 3 seeds")
    masks = {
        "full": ModalityMask(),
        "no-force": ModalityMask(include_force=False),
        "no-prox": ModalityMask(include_proximity=False),
        "no-accel": ModalityMask(include_accel=False),
    }
    conditions = {c: [] for c in ABLATION_CONDITIONS}
    for seed in seeds:
        for cond, mask in masks.items():
            _, run = _run_condition(dataset_soft, base_cfg, mask, seed,
                                    cond, log)
            conditions[cond].append(run)
    soft_runs, rigid_runs = support_experiment(
        dataset_soft, dataset_rigid, base_cfg, seeds, subset_per_class, log)
    conditions["rigid"] = rigid_runs
    return AblationReport(conditions=conditions,
                          support_reference=soft_runs, seeds=seeds)


def gamma_stability_report(dataset: Dataset, cfg: TrainConfig, seeds) -> dict:
    """Final ACC spread with and without the predictive term; reported,
    not asserted (the regularizer's claim is about run-to-run variance)."""
    out = {}
    for gamma in (cfg.hyper.gamma, 0.0):
        accs = []
        for seed in seeds:
            run_cfg = replace(cfg, hyper=replace(cfg.hyper, gamma=gamma,
                                                 seed=seed))
            tr, va = split_dataset(dataset, cfg.split_ratio, seed)
            _, metrics = train(tr, va, run_cfg)
            accs.append(metrics.acc)
        out[f"gamma={gamma}"] = {
            "accs": accs,
            "mean": float(np.mean(accs)),
            "variance": float(np.var(accs)),
        }
    return out


def curves_to_csv(rows) -> str:
    """Flatten per-epoch rows into the metrics CSV layout."""
    lines = ["epoch,split,condition,seed,acc,loss"]
    for r in rows:
        lines.append("{epoch},{split},{condition},{seed},{acc},{loss}".format(
            epoch=r["epoch"], split=r["split"],
            condition=r.get("condition", "default"), seed=r.get("seed", ""),
            acc=r["acc"], loss=r["loss"]))
    return "\n".join(lines) + "\n"
