"""Training orchestration: batches, sampling, top-k filtering, Adam steps.

One optimizer step per batch. Every random decision (shuffling, dropout,
each negative source) draws from its own counter-based stream keyed by
(seed, purpose, epoch, batch index), so a run is fully determined by
(seed, config, dataset) and resume-from-checkpoint is bit-exact.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import config as C
from . import model as M
from .data import PreparedDataset, make_batches
from .errors import DivergenceError
from .loss import get_loss
from .model import ModelConfig, ModelState
from .sampler import (
    AliasTable,
    CountingGenerator,
    concat_negatives,
    rng_stream,
    sample_frequency,
    sample_inbatch,
    sample_uniform,
    topk_filter,
)
from .tensor import Tensor


def clip_gradient_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most `max_norm`."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Adam:
    """Adam with bias correction over a named parameter table."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.98,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise DivergenceError(f"non-finite gradient in {name}")
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1**t)
            v_hat = self.v[name] / (1.0 - self.beta2**t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"opt.step": np.array([self.step_count], dtype=np.int64)}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["opt.step"][0])
        for name in self.params:
            self.m[name] = arrays[f"opt.m.{name}"].copy()
            self.v[name] = arrays[f"opt.v.{name}"].copy()


@dataclass
class EpochStats:
    epoch: int
    loss_mean: float
    wall_seconds: float
    draws: dict
    eval: dict | None = None

    @property
    def epochs_per_hour(self) -> float:
        return 3600.0 / self.wall_seconds if self.wall_seconds > 0 else float("inf")

    def to_dict(self) -> dict:
        out = {
            "epoch": self.epoch,
            "loss_mean": self.loss_mean,
            "wall_seconds": self.wall_seconds,
            "epochs_per_hour": self.epochs_per_hour,
            "draws": self.draws,
        }
        if self.eval is not None:
            out["eval"] = self.eval
        return out


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epochs": [e.to_dict() for e in self.epochs]}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def model_config_from(config: dict, n_items: int) -> ModelConfig:
    return ModelConfig(
        n_items=n_items,
        hidden_dim=config["model.hidden_dim"],
        num_layers=config["model.num_layers"],
        num_heads=config["model.num_heads"],
        max_len=config["data.max_len"],
        dropout=config["model.dropout"],
        prenorm=config["model.prenorm"],
    )


def _inbatch_capacity(batch) -> int:
    rows = [set(batch.row_items(i).tolist()) for i in range(batch.size)]
    distinct = set().union(*rows)
    return len(distinct) - max(len(r) for r in rows)


def train_step(
    state: ModelState,
    batch,
    config: dict,
    optimizer: Adam,
    seed: int,
    epoch: int,
    index: int,
    draw_totals: dict,
    frequency_table: AliasTable | None = None,
) -> tuple[float, int]:
    """One forward/sample/score/filter/loss/update cycle; returns (loss, positions)."""
    dropout_rng = rng_stream(seed, "dropout", epoch, index)
    hidden = M.forward(state, batch, mode="train", rng=dropout_rng)
    pos_scores = M.score(state, hidden, batch.targets)

    parts = []
    if config["negs.frequency.count"] > 0:
        rng = CountingGenerator(rng_stream(seed, "frequency", epoch, index))
        parts.append(
            sample_frequency(
                frequency_table,
                config["negs.frequency.granularity"],
                config["negs.frequency.count"],
                rng,
                batch_size=batch.size,
                seq_len=batch.width,
            )
        )
        draw_totals["frequency"] += rng.draws
    if config["negs.inbatch.count"] > 0:
        want = min(config["negs.inbatch.count"], _inbatch_capacity(batch))
        if want > 0:
            rng = CountingGenerator(rng_stream(seed, "inbatch", epoch, index))
            parts.append(sample_inbatch(batch, want, rng, pool=config["negs.inbatch.pool"]))
            draw_totals["inbatch"] += rng.draws
    if config["negs.uniform.count"] > 0:
        rng = CountingGenerator(rng_stream(seed, "uniform", epoch, index))
        parts.append(
            sample_uniform(
                state.config.n_items,
                config["negs.uniform.granularity"],
                config["negs.uniform.count"],
                rng,
                batch_size=batch.size,
                seq_len=batch.width,
            )
        )
        draw_totals["uniform"] += rng.draws

    negatives = parts[0]
    for extra in parts[1:]:
        negatives = concat_negatives(negatives, extra)
    neg_scores = M.score(state, hidden, negatives)

    k = config["negs.topk"]
    if 0 < k < negatives.count:
        neg_scores = topk_filter(neg_scores, k).scores

    loss_name = config["loss"]
    if loss_name == "bpr-max":
        loss = get_loss(loss_name)(
            pos_scores, neg_scores, config["loss.bpr_max.lambda"], mask=batch.mask
        )
    else:
        loss = get_loss(loss_name)(pos_scores, neg_scores, mask=batch.mask)
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError(
            f"loss diverged at epoch {epoch + 1}, batch {index}",
            snapshot={"epoch": epoch + 1, "batch": index, "loss": value},
        )

    state.zero_grad()
    loss.backward()
    if config["train.clip_norm"] > 0.0:
        clip_gradient_norm(state.params, config["train.clip_norm"])
    optimizer.step()
    return value, int(batch.mask.sum())


def train(
    config: dict,
    dataset: PreparedDataset,
    eval_hook: Callable[[ModelState, int], dict] | None = None,
    out_dir=None,
    resume_from=None,
) -> tuple[ModelState, TrainReport]:
    """Run the configured number of epochs; deterministic for a fixed seed."""
    config = C.validate(config)
    seed = config["train.seed"]
    n_items = dataset.catalog.n_items

    start_epoch = 0
    if resume_from is not None:
        state, extra = M.load_checkpoint(resume_from)
        optimizer = Adam(
            state.params, config["train.lr"], config["train.beta1"],
            config["train.beta2"], config["train.eps"],
        )
        optimizer.load_state_arrays(extra)
        start_epoch = int(extra["trainer.epoch"][0])
    else:
        state = ModelState.initialize(model_config_from(config, n_items), seed=seed)
        optimizer = Adam(
            state.params, config["train.lr"], config["train.beta1"],
            config["train.beta2"], config["train.eps"],
        )

    frequency_table = None
    if config["negs.frequency.count"] > 0:
        frequency_table = AliasTable(dataset.catalog.frequencies)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "ckpt").mkdir(parents=True, exist_ok=True)

    report = TrainReport()
    for epoch in range(start_epoch, config["train.epochs"]):
        draw_totals = {"uniform": 0, "frequency": 0, "inbatch": 0}
        loss_sum = 0.0
        position_count = 0
        started = time.perf_counter()
        batches = make_batches(
            dataset.train,
            batch_size=config["train.batch_size"],
            max_len=config["data.max_len"],
            pad_id=n_items,
            shuffle_rng=rng_stream(seed, "shuffle", epoch),
            trim=config["train.trim_batches"],
        )
        for index, batch in enumerate(batches):
            try:
                value, positions = train_step(
                    state, batch, config, optimizer, seed, epoch, index, draw_totals,
                    frequency_table=frequency_table,
                )
            except DivergenceError as err:
                if out is not None:
                    with open(out / "divergence.json", "w", encoding="utf-8") as fh:
                        json.dump(err.snapshot, fh, indent=2)
                raise
            loss_sum += value * positions
            position_count += positions
        wall = time.perf_counter() - started

        stats = EpochStats(
            epoch=epoch + 1,
            loss_mean=loss_sum / max(position_count, 1),
            wall_seconds=wall,
            draws=dict(draw_totals),
        )
        if eval_hook is not None:
            stats.eval = eval_hook(state, epoch + 1)
        report.epochs.append(stats)

        if out is not None:
            extra = optimizer.state_arrays()
            extra["trainer.epoch"] = np.array([epoch + 1], dtype=np.int64)
            M.save_checkpoint(state, out / "ckpt" / f"epoch-{epoch + 1}.bin", extra)
            report.save(out / "report.json")

    return state, report
