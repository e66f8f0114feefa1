"""Exhaustive full-catalog next-item evaluation (Recall@k and MRR@k).

Every position of every test session is an evaluation point: the prefix up to
position t must rank the item at t+1 against the entire catalog. Candidate
sampling is never used. Ties are resolved pessimistically: items scoring
exactly the target's score are ranked ahead of it, so a constant-score model
earns zero recall rather than an inflated one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model as M
from .data import Session, make_batches
from .errors import EmptyDatasetError
from .model import ModelState
from .tensor import no_grad


@dataclass
class EvalResult:
    recall_at_k: float
    mrr_at_k: float
    k: int
    n_transitions: int

    def to_dict(self) -> dict:
        return {
            "recall_at_k": self.recall_at_k,
            "mrr_at_k": self.mrr_at_k,
            "k": self.k,
            "n_transitions": self.n_transitions,
        }


def rank_contributions(rank: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Recall and reciprocal-rank contributions of 1-based ranks at cutoff k."""
    hit = rank <= k
    rr = np.where(hit, 1.0 / np.maximum(rank, 1), 0.0)
    return hit.astype(np.float64), rr


def batch_target_ranks(state: ModelState, batch, chunk_size: int | None = None) -> np.ndarray:
    """Pessimistic 1-based rank of each target over the full catalog, [b, W].

    Entries at mask-false positions are meaningless. The target loses ties:
    its rank counts every item scoring greater than or equal to it.
    """
    cfg = state.config
    n = cfg.n_items
    emb = state.params["item_emb"].data[:n]  # pad row is never a candidate
    if chunk_size is None or chunk_size <= 0 or chunk_size > n:
        chunk_size = n
    with no_grad():
        hidden = M.forward(state, batch, mode="eval").data
    safe_targets = np.where(batch.mask, batch.targets, 0)
    target_scores = np.einsum("bwd,bwd->bw", hidden, emb[safe_targets], optimize=False)
    count_ge = np.zeros(target_scores.shape, dtype=np.int64)
    for lo in range(0, n, chunk_size):
        block = np.einsum("bwd,vd->bwv", hidden, emb[lo : lo + chunk_size], optimize=False)
        count_ge += (block >= target_scores[..., None]).sum(axis=-1)
    # the target's own catalog column scores exactly target_scores, so
    # count_ge already equals the pessimistic 1-based rank
    return count_ge


def iter_transition_ranks(
    state: ModelState,
    sessions: Sequence[Session],
    batch_size: int = 256,
    chunk_size: int | None = None,
):
    """Yield (session_id, position, rank) for every evaluation transition."""
    batches = make_batches(
        sessions, batch_size=batch_size, max_len=state.config.max_len,
        pad_id=state.config.pad_id, trim=True,
    )
    for batch in batches:
        ranks = batch_target_ranks(state, batch, chunk_size)
        for i in range(batch.size):
            for t in np.nonzero(batch.mask[i])[0]:
                yield batch.session_refs[i].session_id, int(t), int(ranks[i, t])


def evaluate(
    state: ModelState,
    sessions: Sequence[Session],
    k: int = 20,
    batch_size: int = 256,
    chunk_size: int | None = None,
    average: str = "transition",
) -> EvalResult:
    """Rank the full catalog at every session position; no sampling.

    `chunk_size` bounds the width of the materialized score block without
    changing any result bit. `average="session"` averages per session first
    instead of over all transitions.
    """
    if average not in ("transition", "session"):
        raise ValueError(f"average must be 'transition' or 'session', got {average!r}")
    sessions = list(sessions)
    if not sessions:
        raise EmptyDatasetError("cannot evaluate an empty test set")
    cfg = state.config

    hit_sum = 0.0
    rr_sum = 0.0
    n_transitions = 0
    per_session: list[tuple[float, float, int]] = []

    batches = make_batches(
        sessions, batch_size=batch_size, max_len=cfg.max_len, pad_id=cfg.pad_id, trim=True
    )
    for batch in batches:
        ranks = batch_target_ranks(state, batch, chunk_size)
        hit, rr = rank_contributions(ranks, k)
        hits = np.where(batch.mask, hit, 0.0)
        rr = np.where(batch.mask, rr, 0.0)

        hit_sum += float(hits.sum())
        rr_sum += float(rr.sum())
        n_transitions += int(batch.mask.sum())
        if average == "session":
            for i in range(batch.size):
                valid = int(batch.mask[i].sum())
                if valid:
                    per_session.append(
                        (float(hits[i].sum()), float(rr[i].sum()), valid)
                    )

    if average == "session":
        recalls = [h / c for h, _, c in per_session]
        mrrs = [r / c for _, r, c in per_session]
        return EvalResult(
            float(np.mean(recalls)), float(np.mean(mrrs)), k, n_transitions
        )
    return EvalResult(hit_sum / n_transitions, rr_sum / n_transitions, k, n_transitions)


# ---------------------------------------------------------------------------
# metric-curve export

METRIC_COLUMNS = ("epoch", "recall_at_{k}", "mrr_at_{k}", "wall_seconds")


def export_metrics(series: Sequence[dict], path, k: int = 20) -> None:
    """Write per-epoch metrics as CSV: epoch, recall@k, mrr@k, wall seconds.

    Floats are written with full round-trip precision so parsing the file
    back reproduces the in-memory series exactly.
    """
    if not series:
        raise ValueError("metric series is empty")
    columns = [c.format(k=k) for c in METRIC_COLUMNS]
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for entry in series:
            writer.writerow(
                [
                    int(entry["epoch"]),
                    repr(float(entry[columns[1]])),
                    repr(float(entry[columns[2]])),
                    repr(float(entry["wall_seconds"])),
                ]
            )


def parse_metrics(path, k: int = 20) -> list[dict]:
    columns = [c.format(k=k) for c in METRIC_COLUMNS]
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != columns:
            raise ValueError(f"unexpected metrics header {header}, want {columns}")
        for row in reader:
            out.append(
                {
                    "epoch": int(row[0]),
                    columns[1]: float(row[1]),
                    columns[2]: float(row[2]),
                    "wall_seconds": float(row[3]),
                }
            )
    return out
