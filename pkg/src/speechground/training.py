"""Contrastive training: bidirectional margin loss over within-batch
negatives, Adam, a triangular cyclic learning rate, per-epoch validation
with checkpointing, and post-hoc best-epoch selection.

All shuffling derives from (seed, epoch), so a run can be resumed from an
epoch checkpoint and continue bit-identically to an uninterrupted run.
"""

from __future__ import annotations

import csv
import logging
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import retrieval
from .autograd import Tensor, apply_op
from .encoder import SpeechEncoder, save_checkpoint, load_checkpoint

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = (
    "epoch,mean_loss,lr_end,val_recall1,val_recall5,val_recall10,val_median_rank"
)


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    margin: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_min: float = 1e-6
    lr_max: float = 2e-4
    cycle_epochs: int = 4
    seed: int = 1
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be below lr_max")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


def margin_loss(similarities: Tensor, margin: float) -> Tensor:
    """Bidirectional hinge loss over a B x B cosine-similarity matrix whose
    diagonal holds the true pairs; every off-diagonal entry serves as a
    negative in both retrieval directions. Normalized by batch size."""
    s = similarities.values
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ag.ShapeMismatchError(f"margin_loss: need a square matrix, got {s.shape}")
    b = s.shape[0]
    if b < 2:
        raise ValueError("margin_loss: batch must contain at least 2 items")
    diag = np.diag(s)
    off = ~np.eye(b, dtype=bool)
    # speech->target direction: margin - S_ii + S_ij; target->speech: margin - S_jj + S_ij
    row_hinge = np.maximum(0.0, margin - diag[:, None] + s) * off
    col_hinge = np.maximum(0.0, margin - diag[None, :] + s) * off
    loss = (row_hinge.sum() + col_hinge.sum()) / b

    def backward(g):
        gs = ((row_hinge > 0).astype(s.dtype) + (col_hinge > 0).astype(s.dtype)) * off
        gs_diag = -(row_hinge > 0).sum(axis=1) - (col_hinge > 0).sum(axis=0)
        gs[np.arange(b), np.arange(b)] = gs_diag.astype(s.dtype)
        return (g * gs / b,)

    return apply_op("margin_loss", np.asarray(loss, dtype=s.dtype), (similarities,), backward)


def lr_at_step(step: int, cfg: TrainConfig, steps_per_epoch: int) -> float:
    """Triangular cyclic schedule: lr_min at cycle start, lr_max at the
    midpoint, back to lr_min at the end of the cycle."""
    cycle_len = max(1, cfg.cycle_epochs * steps_per_epoch)
    phase = (step % cycle_len) / (cycle_len / 2.0)
    frac = phase if phase <= 1.0 else 2.0 - phase
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * frac


class AdamState:
    """First/second moment estimates per parameter plus the shared step count."""

    def __init__(self):
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def serialize(self) -> bytes:
        names = sorted(self.m)
        parts = [struct.pack("<QI", self.t, len(names))]
        for name in names:
            nb = name.encode("utf-8")
            parts.append(struct.pack("<H", len(nb)) + nb)
            parts.append(struct.pack("<I", self.m[name].size))
            parts.append(np.ascontiguousarray(self.m[name], dtype="<f4").tobytes())
            parts.append(np.ascontiguousarray(self.v[name], dtype="<f4").tobytes())
        return b"".join(parts)

    @classmethod
    def deserialize(cls, blob: bytes, params: dict[str, Tensor]) -> "AdamState":
        state = cls()
        if not blob:
            return state
        state.t, count = struct.unpack_from("<QI", blob, 0)
        offset = 12
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (size,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = params[name].values.shape
            dtype = params[name].dtype
            state.m[name] = (
                np.frombuffer(blob, "<f4", size, offset).reshape(shape).astype(dtype)
            )
            offset += 4 * size
            state.v[name] = (
                np.frombuffer(blob, "<f4", size, offset).reshape(shape).astype(dtype)
            )
            offset += 4 * size
        return state


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float, cfg: TrainConfig):
    """One Adam update with bias correction over all parameters with grads."""
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise OptimizerError(f"non-finite gradient for parameter {name!r}; step aborted")
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.values)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


@dataclass
class EpochSummary:
    epoch: int
    mean_loss: float
    lr_end: float
    report: retrieval.RankingReport = None

    def csv_row(self) -> str:
        r = self.report
        return (
            f"{self.epoch},{self.mean_loss!r},{self.lr_end!r},"
            f"{r.recall1!r},{r.recall5!r},{r.recall10!r},{r.median_rank!r}"
        )


def _batches(ids, cfg: TrainConfig, epoch: int):
    rng = np.random.default_rng([cfg.seed, epoch])
    order = [ids[i] for i in rng.permutation(len(ids))]
    batches = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
    if batches and len(batches[-1]) < 2:
        log.debug("skipping trailing batch of size %d", len(batches[-1]))
        batches.pop()
    return batches


def steps_per_epoch(n_utterances: int, cfg: TrainConfig) -> int:
    full, rem = divmod(n_utterances, cfg.batch_size)
    return full + (1 if rem >= 2 else 0)


def _unit_rows(matrix):
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.maximum(norms, 1e-12)


def train_epoch(encoder: SpeechEncoder, targets, features, ids, state, cfg, epoch):
    """Run one epoch of seeded shuffled batches; returns an EpochSummary
    (validation report filled in by ``fit``)."""
    missing_f = [i for i in ids if i not in features]
    missing_t = [i for i in ids if i not in targets]
    if missing_f or missing_t:
        raise KeyError(
            f"missing features for {missing_f[:5]} / embeddings for {missing_t[:5]}"
        )
    spe = steps_per_epoch(len(ids), cfg)
    losses = []
    lr = lr_at_step(state.t, cfg, spe)
    for batch in _batches(ids, cfg, epoch):
        encodings = ag.concat(
            [ag.reshape(encoder.encode(features[i]), (1, -1)) for i in batch], axis=0
        )
        target_mat = _unit_rows(
            np.stack([targets[i] for i in batch]).astype(encoder.dtype)
        )
        sims = ag.matmul(encodings, Tensor(target_mat.T))
        loss = margin_loss(sims, cfg.margin)
        encoder.zero_grad()
        ag.backward(loss)
        lr = lr_at_step(state.t, cfg, spe)
        adam_step(encoder.params, state, lr, cfg)
        losses.append(float(loss.values))
    return EpochSummary(epoch=epoch, mean_loss=float(np.mean(losses)), lr_end=lr)


@dataclass
class FitResult:
    best_epoch: int
    best_val_recall1: float
    best_checkpoint: str
    trajectory_csv: str
    summaries: list = field(default_factory=list)


def fit(
    encoder: SpeechEncoder,
    train_ids,
    val_ids,
    features,
    targets,
    cfg: TrainConfig,
    run_dir,
    resume_from=None,
) -> FitResult:
    """Train for cfg.epochs, evaluating recall on the validation set after
    each epoch; the epoch with the highest validation recall@1 (ties ->
    earliest) is marked best. Checkpoints land in run_dir."""
    if set(train_ids) & set(val_ids):
        raise ValueError("train and validation sets overlap")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    csv_path = run_dir / "trajectory.csv"

    state = AdamState()
    start_epoch = 0
    rows = []
    if resume_from is not None:
        loaded, step, blob = load_checkpoint(resume_from, dtype=encoder.dtype)
        if loaded.config != encoder.config:
            raise ValueError("resume checkpoint config does not match encoder config")
        encoder.params = loaded.params
        state = AdamState.deserialize(blob, encoder.params)
        spe = steps_per_epoch(len(train_ids), cfg)
        start_epoch = step // spe
        if csv_path.exists():
            rows = csv_path.read_text().splitlines()[1 : 1 + start_epoch]

    summaries = []
    with open(csv_path, "w") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
        fh.flush()
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            summary = train_epoch(encoder, targets, features, train_ids, state, cfg, epoch)
            summary.report = retrieval.evaluate(
                encoder, val_ids, features, targets, test_set="validation"
            )
            summaries.append(summary)
            rows.append(summary.csv_row())
            fh.write(summary.csv_row() + "\n")
            fh.flush()
            save_checkpoint(
                encoder,
                run_dir / f"epoch_{epoch}.sgck",
                step=state.t,
                optimizer_blob=state.serialize(),
            )

    best_epoch, best_r1 = select_best_epoch(
        [float(r.split(",")[3]) for r in rows]
    )
    best_path = run_dir / "best.sgck"
    shutil.copyfile(run_dir / f"epoch_{best_epoch}.sgck", best_path)
    return FitResult(
        best_epoch=best_epoch,
        best_val_recall1=best_r1,
        best_checkpoint=str(best_path),
        trajectory_csv=str(csv_path),
        summaries=summaries,
    )


def select_best_epoch(val_recall1_by_epoch) -> tuple[int, float]:
    """Earliest epoch achieving the maximum validation recall@1 (1-based)."""
    if not val_recall1_by_epoch:
        raise ValueError("no epochs recorded")
    best = max(val_recall1_by_epoch)
    return val_recall1_by_epoch.index(best) + 1, best


def read_trajectory(path):
    """Parse a trajectory CSV into a dict of metric -> list of floats."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns = {k: [] for k in TRAJECTORY_HEADER.split(",")}
        for row in reader:
            for k in columns:
                columns[k].append(float(row[k]))
    return columns
