"""Single-task, block multi-task and hierarchical multi-task models.

The shared encoder lifts each pixel's vertical neighborhood to feature
channels, max-pools over height, halves the time axis, stacks frame
context and runs two bidirectional recurrent layers. Task branches are
either parallel (single/bmt: per-task recurrence + head off the encoder)
or cumulative (hmt: head i reads recurrent depth i, unigram shallowest).
Training is seeded minibatch RMSProp on the summed per-task CTC losses.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .ctc import PosteriorGrid, ctc_feasible, ctc_loss, ctc_loss_grad
from .decomp import target_for
from .errors import ConfigError, InputError
from .synth import LineSample, augment_image
from .vocab import LabelSeq

KINDS = ("single", "bmt", "hmt")


@dataclass
class ModelDims:
    img_h: int = 16
    feat_window: int = 9  # odd vertical window feeding the pixel-column feature lift
    feat_dim: int = 32
    frame_window: int = 3
    hidden: int = 64
    branch_hidden: int = 64


@dataclass
class TaskSpec:
    n: int
    vocab: object  # Alphabet or NgramVocab


@dataclass
class Model:
    kind: str
    tasks: list[TaskSpec]
    dims: ModelDims
    params: dict[str, np.ndarray]

    def vocabs(self) -> dict[int, object]:
        return {t.n: t.vocab for t in self.tasks}


def _sub(params: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in params.items() if k.startswith(prefix + "/")}


def build_model(kind: str, tasks: list[TaskSpec], dims: ModelDims, seed: int) -> Model:
    """Initialize the parameter tree; wiring is fixed by `kind`."""
    if kind not in KINDS:
        raise ConfigError(f"model kind must be one of {KINDS}, got {kind!r}")
    ns = [t.n for t in tasks]
    if ns != sorted(ns) or len(set(ns)) != len(ns):
        raise ConfigError(f"tasks must be sorted by n without duplicates, got {ns}")
    if not ns or ns[0] != 1:
        raise ConfigError("a unigram task is required (decoding depends on it)")
    if kind == "single" and len(tasks) != 1:
        raise ConfigError("single-task models take exactly the unigram task")
    if dims.feat_window % 2 == 0 or dims.frame_window % 2 == 0:
        raise ConfigError("feat_window and frame_window must be odd")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0))))
    params: dict[str, np.ndarray] = {}
    params["enc/feat/w"] = nn.uniform_init(rng, (dims.feat_window, dims.feat_dim), dims.feat_window)
    params["enc/feat/b"] = np.zeros(dims.feat_dim)
    rnn_in = dims.frame_window * dims.feat_dim
    for name, in_dim in (("rnn0", rnn_in), ("rnn1", 2 * dims.hidden)):
        for k, v in nn.birnn_init(rng, in_dim, dims.hidden).items():
            params[f"enc/{name}/{k}"] = v
    branch_in = 2 * dims.hidden
    for i, task in enumerate(tasks):
        in_dim = branch_in if (kind != "hmt" or i == 0) else 2 * dims.branch_hidden
        for k, v in nn.birnn_init(rng, in_dim, dims.branch_hidden).items():
            params[f"task{task.n}/rnn/{k}"] = v
        head_in = 2 * dims.branch_hidden
        params[f"task{task.n}/head/w"] = nn.uniform_init(
            rng, (head_in, task.vocab.size + 1), head_in
        )
        params[f"task{task.n}/head/b"] = np.zeros(task.vocab.size + 1)
    return Model(kind=kind, tasks=list(tasks), dims=dims, params=params)


# ---------------------------------------------------------------------------
# forward / backward


def _encoder_forward(params, dims: ModelDims, img: np.ndarray):
    h, w = img.shape
    if h != dims.img_h:
        raise InputError(f"image height {h} != configured {dims.img_h}")
    if w // 2 < 1:
        raise InputError(f"image width {w} yields no frames")
    # vertical windows: win[t, j] = the feat_window pixels around row j of column t
    stacked = nn.frame_stack(img, dims.feat_window)
    win = stacked.reshape(h, dims.feat_window, w).transpose(2, 0, 1)
    pre = nn.dense_apply(win, params["enc/feat/w"], params["enc/feat/b"])
    act = nn.relu(pre)
    fmap = act.transpose(2, 1, 0)  # (d, h, w)
    pooled = nn.column_max_pool(fmap)  # (w, d)
    halved = nn.time_max_pool2(pooled)  # (T, d)
    ctx = nn.frame_stack(halved, dims.frame_window)
    r0 = nn.birnn_apply(ctx, _sub(params, "enc/rnn0"))
    r1 = nn.birnn_apply(r0, _sub(params, "enc/rnn1"))
    cache = {"img": img, "win": win, "pre": pre, "fmap": fmap, "pooled": pooled,
             "halved": halved, "ctx": ctx, "r0": r0, "r1": r1}
    return r1, cache


def _encoder_backward(params, dims: ModelDims, cache, grad_out, grads):
    gx, g1 = nn.birnn_backward(cache["r0"], _sub(params, "enc/rnn1"), grad_out, out=cache["r1"])
    for k, v in g1.items():
        grads[f"enc/rnn1/{k}"] += v
    gx, g0 = nn.birnn_backward(cache["ctx"], _sub(params, "enc/rnn0"), gx, out=cache["r0"])
    for k, v in g0.items():
        grads[f"enc/rnn0/{k}"] += v
    T, d = cache["halved"].shape
    gx = nn.frame_stack_backward(gx, dims.frame_window, T, d)
    gx = nn.time_max_pool2_backward(cache["pooled"], gx)
    gx = nn.column_max_pool_backward(cache["fmap"], gx)
    gx = gx.transpose(2, 1, 0)  # back to (w, h, d)
    gx = nn.relu_backward(cache["pre"], gx)
    _, gw, gb = nn.dense_backward(cache["win"], params["enc/feat/w"], gx)
    grads["enc/feat/w"] += gw
    grads["enc/feat/b"] += gb


def _forward_full(model: Model, img: np.ndarray):
    """Per-task pre-softmax logits plus every activation needed for backprop."""
    enc_out, enc_cache = _encoder_forward(model.params, model.dims, img)
    branch_caches = []
    logits: dict[int, np.ndarray] = {}
    x = enc_out
    for i, task in enumerate(model.tasks):
        src = enc_out if (model.kind != "hmt" or i == 0) else x
        rnn_p = _sub(model.params, f"task{task.n}/rnn")
        out = nn.birnn_apply(src, rnn_p)
        z = nn.dense_apply(out, model.params[f"task{task.n}/head/w"],
                           model.params[f"task{task.n}/head/b"])
        logits[task.n] = z
        branch_caches.append({"src": src, "out": out})
        x = out
    return logits, {"enc": enc_cache, "branches": branch_caches}


def _backward_full(model: Model, caches, grad_logits: dict[int, np.ndarray]):
    """Accumulate parameter gradients for the given per-task logit gradients."""
    grads = nn.zeros_like_tree(model.params)
    enc_grad = np.zeros_like(caches["enc"]["r1"])
    carry = None  # hmt: gradient flowing into the previous level's output
    for i in range(len(model.tasks) - 1, -1, -1):
        task = model.tasks[i]
        bc = caches["branches"][i]
        g_out = np.zeros_like(bc["out"])
        gz = grad_logits.get(task.n)
        if gz is not None:
            gx, gw, gb = nn.dense_backward(bc["out"], model.params[f"task{task.n}/head/w"], gz)
            grads[f"task{task.n}/head/w"] += gw
            grads[f"task{task.n}/head/b"] += gb
            g_out += gx
        if model.kind == "hmt" and carry is not None:
            g_out += carry
        if np.any(g_out):
            g_src, g_rnn = nn.birnn_backward(
                bc["src"], _sub(model.params, f"task{task.n}/rnn"), g_out, out=bc["out"]
            )
            for k, v in g_rnn.items():
                grads[f"task{task.n}/rnn/{k}"] += v
        else:
            g_src = np.zeros_like(bc["src"])
        if model.kind == "hmt" and i > 0:
            carry = g_src
        else:
            enc_grad += g_src
    _encoder_backward(model.params, model.dims, caches["enc"], enc_grad, grads)
    return grads


def model_forward(model: Model, img: np.ndarray) -> dict[int, PosteriorGrid]:
    """Log-form posterior grids per task; T = floor(width / 2)."""
    logits, _ = _forward_full(model, img)
    return {n: PosteriorGrid(nn.log_softmax_rows(z)) for n, z in logits.items()}


# ---------------------------------------------------------------------------
# losses


@dataclass
class TaskLoss:
    loss: float
    weight: float
    skipped: bool


def multitask_loss(
    posts: dict[int, PosteriorGrid],
    text: str,
    vocabs: dict[int, object],
    weights: dict[int, float] | None = None,
) -> tuple[float, dict[int, TaskLoss]]:
    """Weighted sum of per-task CTC losses against the text's decompositions.

    Tasks whose target is empty or infeasible contribute 0 and are flagged
    skipped; degenerate targets never poison the total.
    """
    weights = weights or {}
    total = 0.0
    per_task: dict[int, TaskLoss] = {}
    for n, grid in sorted(posts.items()):
        w = float(weights.get(n, 1.0))
        target = target_for(text, vocabs[n])
        if len(target) == 0 or not ctc_feasible(grid.T, target.ids):
            per_task[n] = TaskLoss(loss=0.0, weight=w, skipped=True)
            continue
        loss = ctc_loss(grid.logp, target.ids)
        per_task[n] = TaskLoss(loss=loss, weight=w, skipped=False)
        total += w * loss
    return total, per_task


def _loss_and_grads(model: Model, img: np.ndarray, text: str, weights: dict[int, float]):
    logits, caches = _forward_full(model, img)
    vocabs = model.vocabs()
    total = 0.0
    per_task: dict[int, TaskLoss] = {}
    grad_logits: dict[int, np.ndarray] = {}
    for n, z in sorted(logits.items()):
        w = float(weights.get(n, 1.0))
        target: LabelSeq = target_for(text, vocabs[n])
        T = z.shape[0]
        if len(target) == 0 or not ctc_feasible(T, target.ids):
            per_task[n] = TaskLoss(loss=0.0, weight=w, skipped=True)
            continue
        loss, grad = ctc_loss_grad(z, target.ids)
        per_task[n] = TaskLoss(loss=loss, weight=w, skipped=False)
        total += w * loss
        if w != 0.0:
            grad_logits[n] = w * grad
    if not grad_logits:
        return total, per_task, None
    grads = _backward_full(model, caches, grad_logits)
    return total, per_task, grads


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 30
    lr_initial: float = 1e-3
    lr_reduced: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    augment: bool = True
    task_weights: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr_initial <= 0 or self.lr_reduced <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    task_loss: dict[int, float]
    skipped: dict[int, int]
    val_cer: float
    val_wer: float


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr_initial if epoch <= math.ceil(cfg.epochs / 2) else cfg.lr_reduced


def train(
    model: Model,
    train_set: list[LineSample],
    val_set: list[LineSample],
    cfg: TrainConfig,
) -> tuple[Model, list[EpochStats]]:
    """Seeded shuffled minibatch RMSProp; returns the best-val-CER parameters.

    Gradients inside a batch are reduced in batch order and averaged over
    the samples that contributed, so identical config+seed reproduces the
    parameter trajectory bit for bit.
    """
    from .decode import greedy_decode
    from .metrics import compute_cer, compute_wer

    if not train_set or not val_set:
        raise ConfigError("train and validation sets must be non-empty")
    weights = cfg.task_weights
    accum = nn.zeros_like_tree(model.params)
    history: list[EpochStats] = []
    best_cer = math.inf
    best_params = copy.deepcopy(model.params)
    alphabet = model.vocabs()[1]

    for epoch in range(1, cfg.epochs + 1):
        lr = _epoch_lr(cfg, epoch)
        order_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, epoch))))
        order = order_rng.permutation(len(train_set))
        loss_sum = 0.0
        loss_count = 0
        task_sums: dict[int, float] = {t.n: 0.0 for t in model.tasks}
        task_counts: dict[int, int] = {t.n: 0 for t in model.tasks}
        skipped: dict[int, int] = {t.n: 0 for t in model.tasks}
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            batch_grads = nn.zeros_like_tree(model.params)
            contributed = 0
            for idx in batch:
                sample = train_set[int(idx)]
                img = sample.image
                if cfg.augment:
                    aug_rng = np.random.Generator(
                        np.random.PCG64(np.random.SeedSequence((cfg.seed, epoch, int(idx))))
                    )
                    img = augment_image(img, aug_rng)
                total, per_task, grads = _loss_and_grads(model, img, sample.transcript, weights)
                if not math.isfinite(total):
                    raise InputError(f"non-finite loss on sample {sample.id!r} (epoch {epoch})")
                for n, tl in per_task.items():
                    if tl.skipped:
                        skipped[n] += 1
                    else:
                        task_sums[n] += tl.loss
                        task_counts[n] += 1
                if grads is None:
                    continue
                nn.add_into_tree(batch_grads, grads)
                contributed += 1
                loss_sum += total
                loss_count += 1
            if contributed == 0:
                continue
            for k in batch_grads:
                batch_grads[k] /= contributed
            nn.rmsprop_step(model.params, batch_grads, accum, lr)

        refs = [s.transcript for s in val_set]
        hyps = [greedy_decode(model_forward(model, s.image)[1], alphabet) for s in val_set]
        val_cer = compute_cer(refs, hyps)
        val_wer = compute_wer(refs, hyps)
        history.append(
            EpochStats(
                epoch=epoch,
                lr=lr,
                train_loss=loss_sum / loss_count if loss_count else 0.0,
                task_loss={
                    n: (task_sums[n] / task_counts[n] if task_counts[n] else 0.0)
                    for n in task_sums
                },
                skipped=skipped,
                val_cer=val_cer,
                val_wer=val_wer,
            )
        )
        if val_cer < best_cer:
            best_cer = val_cer
            best_params = copy.deepcopy(model.params)
    model.params = best_params
    return model, history


def save_model(model: Model, path, extra_meta: dict[str, str] | None = None) -> None:
    """Checkpoint = nn parameter dump plus a model-manifest meta section."""
    meta = {
        "kind": model.kind,
        "tasks": ",".join(str(t.n) for t in model.tasks),
        "img_h": str(model.dims.img_h),
        "feat_window": str(model.dims.feat_window),
        "feat_dim": str(model.dims.feat_dim),
        "frame_window": str(model.dims.frame_window),
        "hidden": str(model.dims.hidden),
        "branch_hidden": str(model.dims.branch_hidden),
    }
    if extra_meta:
        meta.update(extra_meta)
    nn.save_checkpoint(path, model.params, meta)


def load_model(path, vocabs: dict[int, object]) -> Model:
    """Rebuild a Model from a checkpoint; vocabularies come from their dumps."""
    params, meta = nn.load_checkpoint(path)
    dims = ModelDims(
        img_h=int(meta["img_h"]),
        feat_window=int(meta["feat_window"]),
        feat_dim=int(meta["feat_dim"]),
        frame_window=int(meta["frame_window"]),
        hidden=int(meta["hidden"]),
        branch_hidden=int(meta["branch_hidden"]),
    )
    ns = [int(x) for x in meta["tasks"].split(",")]
    tasks = []
    for n in ns:
        if n not in vocabs:
            raise ConfigError(f"checkpoint task {n} has no vocabulary")
        head_b = params.get(f"task{n}/head/b")
        if head_b is None or head_b.size != vocabs[n].size + 1:
            raise ConfigError(
                f"task {n} head width {None if head_b is None else head_b.size} "
                f"does not match vocabulary size {vocabs[n].size}+1"
            )
        tasks.append(TaskSpec(n=n, vocab=vocabs[n]))
    return Model(kind=meta["kind"], tasks=tasks, dims=dims, params=params)


def write_history(history: list[EpochStats], path) -> None:
    """One structured-text record per epoch."""
    tasks = sorted(history[0].task_loss) if history else []
    with open(path, "w", encoding="utf-8") as f:
        cols = ["epoch", "lr", "train_loss"]
        cols += [f"loss_{n}" for n in tasks] + [f"skipped_{n}" for n in tasks]
        cols += ["val_cer", "val_wer"]
        f.write("\t".join(cols) + "\n")
        for st in history:
            row = [str(st.epoch), repr(st.lr), repr(st.train_loss)]
            row += [repr(st.task_loss[n]) for n in tasks]
            row += [str(st.skipped[n]) for n in tasks]
            row += [repr(st.val_cer), repr(st.val_wer)]
            f.write("\t".join(row) + "\n")
