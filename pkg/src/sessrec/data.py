"""Clickstream ingestion, preprocessing, temporal splitting, and batching.

Input formats:

* session JSON lines, one session per line:
  ``{"session": 42, "events": [{"aid": 5, "ts": 100, "type": "clicks"}, ...]}``
* event CSV with header ``session_id,item_id,timestamp`` (all rows are clicks)

Preprocessing alternately removes items below a minimum support and sessions
below a minimum length until a fixpoint, then assigns dense item ids. The
temporal split keeps the trailing holdout window for testing and rebuilds the
catalog (ids and empirical frequencies) from the training portion only.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import EmptyDatasetError, ItemIdError, ParseError

CLICK, CART, ORDER = "click", "cart", "order"
_EVENT_TYPES = {"clicks": CLICK, "carts": CART, "orders": ORDER, CLICK: CLICK, CART: CART, ORDER: ORDER}


@dataclass(frozen=True)
class Event:
    session_id: object
    item_id: object
    timestamp: int
    event_type: str = CLICK


@dataclass
class Session:
    """Ordered item interactions of one user visit."""

    session_id: object
    items: list
    timestamps: list

    def __len__(self) -> int:
        return len(self.items)

    @property
    def last_timestamp(self) -> int:
        return self.timestamps[-1]

    def positives(self) -> set:
        return set(self.items)


class Catalog:
    """Dense item-id space plus empirical interaction frequencies."""

    def __init__(self, id_map: dict, frequencies: np.ndarray):
        self.id_map = id_map
        self.frequencies = np.asarray(frequencies, dtype=np.int64)
        if len(id_map) != len(self.frequencies):
            raise ValueError("id_map and frequencies disagree on catalog size")

    @property
    def n_items(self) -> int:
        return len(self.frequencies)

    @classmethod
    def from_sessions(cls, sessions: Sequence[Session]) -> "Catalog":
        counts = Counter()
        for s in sessions:
            counts.update(s.items)
        keys = sorted(counts)
        id_map = {k: i for i, k in enumerate(keys)}
        freqs = np.array([counts[k] for k in keys], dtype=np.int64)
        return cls(id_map, freqs)

    def encode(self, items: Iterable) -> list:
        try:
            return [self.id_map[i] for i in items]
        except KeyError as exc:
            raise ItemIdError(f"item {exc.args[0]!r} not in catalog") from None


@dataclass
class ParseStats:
    events: int = 0
    skipped: int = 0
    skipped_lines: list = field(default_factory=list)


def parse_events(
    path,
    format: str = "session-json-lines",
    strict: bool = True,
    stats: ParseStats | None = None,
) -> Iterator[Event]:
    """Stream events from a raw log file.

    In strict mode a malformed record raises ParseError with its line number;
    in lenient mode it is skipped and counted in `stats`.
    """
    if format == "session-json-lines":
        yield from _parse_jsonl(Path(path), strict, stats)
    elif format == "event-csv":
        yield from _parse_csv(Path(path), strict, stats)
    else:
        raise ValueError(f"unknown format {format!r}")


def _reject(message: str, line_no: int, strict: bool, stats: ParseStats | None) -> None:
    if strict:
        raise ParseError(f"line {line_no}: {message}", line_number=line_no)
    if stats is not None:
        stats.skipped += 1
        stats.skipped_lines.append(line_no)


def _parse_jsonl(path: Path, strict: bool, stats: ParseStats | None) -> Iterator[Event]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                session = record["session"]
                events = [
                    Event(session, ev["aid"], int(ev["ts"]), _EVENT_TYPES[ev["type"]])
                    for ev in record["events"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                _reject(f"bad session record ({exc})", line_no, strict, stats)
                continue
            for ev in events:
                if stats is not None:
                    stats.events += 1
                yield ev


def _parse_csv(path: Path, strict: bool, stats: ParseStats | None) -> Iterator[Event]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        expected = ["session_id", "item_id", "timestamp"]
        if [h.strip() for h in header] != expected:
            raise ParseError(f"line 1: expected header {','.join(expected)}", line_number=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ev = Event(int(row[0]), int(row[1]), int(row[2]), CLICK)
            except (IndexError, ValueError) as exc:
                _reject(f"bad event row ({exc})", line_no, strict, stats)
                continue
            if stats is not None:
                stats.events += 1
            yield ev


# ---------------------------------------------------------------------------
# preprocessing


def sessions_from_events(events: Iterable[Event], keep_types: set = frozenset({CLICK})) -> list[Session]:
    """Group events by session (first-appearance order), sorted by timestamp."""
    grouped: dict = {}
    for ev in events:
        if ev.event_type not in keep_types:
            continue
        grouped.setdefault(ev.session_id, []).append((ev.timestamp, ev.item_id))
    sessions = []
    for sid, pairs in grouped.items():
        pairs.sort(key=lambda p: p[0])
        sessions.append(Session(sid, [it for _, it in pairs], [ts for ts, _ in pairs]))
    return sessions


def filter_support_length(
    sessions: Sequence[Session], min_support: int = 5, min_len: int = 2
) -> list[Session]:
    """Alternate item-support and session-length filters until a fixpoint."""
    current = list(sessions)
    while True:
        support = Counter()
        for s in current:
            support.update(s.items)
        keep_items = {i for i, c in support.items() if c >= min_support}
        changed = False
        pruned = []
        for s in current:
            if all(i in keep_items for i in s.items):
                items, ts = s.items, s.timestamps
            else:
                changed = True
                kept = [(i, t) for i, t in zip(s.items, s.timestamps) if i in keep_items]
                items = [i for i, _ in kept]
                ts = [t for _, t in kept]
            if len(items) >= min_len:
                pruned.append(Session(s.session_id, items, ts))
            else:
                changed = True
        current = pruned
        if not changed:
            return current


def preprocess(
    events: Iterable[Event],
    min_support: int = 5,
    min_len: int = 2,
    keep_types: set = frozenset({CLICK}),
) -> tuple[list[Session], Catalog]:
    """Filter raw events to a stable session set with dense item ids."""
    sessions = sessions_from_events(events, keep_types)
    sessions = filter_support_length(sessions, min_support, min_len)
    if not sessions:
        raise EmptyDatasetError("dataset empty after support/length filtering")
    catalog = Catalog.from_sessions(sessions)
    encoded = [
        Session(s.session_id, catalog.encode(s.items), list(s.timestamps)) for s in sessions
    ]
    return encoded, catalog


# ---------------------------------------------------------------------------
# temporal split


@dataclass
class SplitResult:
    train: list[Session]
    test: list[Session]
    catalog: Catalog


def temporal_split(
    sessions: Sequence[Session],
    holdout: int,
    min_len: int = 2,
    item_keys: dict | None = None,
) -> SplitResult:
    """Assign sessions ending in the trailing `holdout` window to the test set.

    The catalog is rebuilt from the training portion only; test items unknown
    to it are dropped and the length floor is re-applied. `item_keys` maps the
    incoming item representation back to raw keys so the rebuilt catalog can
    keep raw-key lookups (identity if omitted).
    """
    if not sessions:
        raise EmptyDatasetError("no sessions to split")
    max_ts = max(s.last_timestamp for s in sessions)
    span = max_ts - min(s.timestamps[0] for s in sessions)
    if holdout >= span:
        raise ValueError(f"holdout {holdout} must be shorter than the data span {span}")
    cutoff = max_ts - holdout

    train_raw = [s for s in sessions if s.last_timestamp <= cutoff]
    test_raw = [s for s in sessions if s.last_timestamp > cutoff]
    if not train_raw:
        raise EmptyDatasetError("temporal split produced an empty train set")
    if not test_raw:
        raise EmptyDatasetError("temporal split produced an empty test set")

    counts = Counter()
    for s in train_raw:
        counts.update(s.items)
    old_ids = sorted(counts)
    remap = {old: new for new, old in enumerate(old_ids)}
    if item_keys is None:
        id_map = dict(remap)
    else:
        id_map = {item_keys[old]: new for old, new in remap.items()}
    catalog = Catalog(id_map, np.array([counts[o] for o in old_ids], dtype=np.int64))

    train = [
        Session(s.session_id, [remap[i] for i in s.items], list(s.timestamps)) for s in train_raw
    ]
    test = []
    for s in test_raw:
        kept = [(remap[i], t) for i, t in zip(s.items, s.timestamps) if i in remap]
        if len(kept) >= min_len:
            test.append(Session(s.session_id, [i for i, _ in kept], [t for _, t in kept]))
    if not test:
        raise EmptyDatasetError("test set empty after restricting to train catalog")
    return SplitResult(train, test, catalog)


# ---------------------------------------------------------------------------
# batching


@dataclass
class SessionBatch:
    """Padded [b, T] ids with shifted next-item targets and a validity mask.

    Rows are left-aligned whole sessions (truncated to their most recent
    `T` events); `mask[i, t]` is true iff `targets[i, t]` is a real item.
    """

    item_ids: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    pad_id: int
    session_refs: list[Session]

    @property
    def size(self) -> int:
        return self.item_ids.shape[0]

    @property
    def width(self) -> int:
        return self.item_ids.shape[1]

    def row_items(self, i: int) -> np.ndarray:
        n = int(self.mask[i].sum()) + 1
        return self.item_ids[i, :n]


def make_batches(
    sessions: Sequence[Session],
    batch_size: int = 128,
    max_len: int = 50,
    pad_id: int | None = None,
    shuffle_seed: int | None = None,
    shuffle_rng: np.random.Generator | None = None,
    trim: bool = False,
) -> Iterator[SessionBatch]:
    """Yield whole-session batches with next-item targets.

    Sessions are truncated to their most recent `max_len` events. With `trim`,
    rows are padded only to the longest session in the batch instead of
    `max_len`. Order is deterministic for a fixed seed.
    """
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    if not sessions:
        return
    if pad_id is None:
        pad_id = max(max(s.items) for s in sessions) + 1

    order = np.arange(len(sessions))
    if shuffle_rng is not None:
        order = shuffle_rng.permutation(len(sessions))
    elif shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(sessions))

    for start in range(0, len(sessions), batch_size):
        members = [sessions[i] for i in order[start : start + batch_size]]
        truncated = [s.items[-max_len:] for s in members]
        width = max(len(t) for t in truncated) if trim else max_len
        b = len(members)
        ids = np.full((b, width), pad_id, dtype=np.int64)
        targets = np.full((b, width), pad_id, dtype=np.int64)
        mask = np.zeros((b, width), dtype=bool)
        for i, items in enumerate(truncated):
            n = len(items)
            ids[i, :n] = items
            targets[i, : n - 1] = items[1:]
            mask[i, : n - 1] = True
        yield SessionBatch(ids, targets, mask, pad_id, members)


# ---------------------------------------------------------------------------
# prepared-dataset cache


@dataclass
class PreparedDataset:
    train: list[Session]
    test: list[Session]
    catalog: Catalog

    def manifest(self) -> dict:
        return {
            "train_sessions": len(self.train),
            "train_events": int(sum(len(s) for s in self.train)),
            "test_sessions": len(self.test),
            "test_events": int(sum(len(s) for s in self.test)),
            "n_items": self.catalog.n_items,
        }


def prepare_dataset(
    events: Iterable[Event],
    min_support: int = 5,
    min_len: int = 2,
    holdout: int = 7 * 24 * 3600 * 1000,
    keep_types: set = frozenset({CLICK}),
    support_scope: str = "all",
    fraction: float = 1.0,
    fraction_seed: int = 0,
) -> PreparedDataset:
    """Full pipeline: group, filter, split, and (optionally) subsample.

    `support_scope` selects whether item support is counted on all data
    before splitting ("all") or on the training portion only ("train").
    `fraction` keeps a random subset of train sessions after splitting.
    """
    if support_scope not in ("all", "train"):
        raise ValueError(f"support_scope must be 'all' or 'train', got {support_scope!r}")
    sessions = sessions_from_events(events, keep_types)
    if support_scope == "all":
        sessions = filter_support_length(sessions, min_support, min_len)
        if not sessions:
            raise EmptyDatasetError("dataset empty after support/length filtering")
        split = temporal_split(sessions, holdout, min_len=min_len)
    else:
        if not sessions:
            raise EmptyDatasetError("no sessions parsed")
        max_ts = max(s.last_timestamp for s in sessions)
        cutoff = max_ts - holdout
        train = filter_support_length(
            [s for s in sessions if s.last_timestamp <= cutoff], min_support, min_len
        )
        if not train:
            raise EmptyDatasetError("train split empty after filtering")
        test = [s for s in sessions if s.last_timestamp > cutoff]
        split = _restrict_to_train(train, test, min_len)

    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if fraction < 1.0:
        rng = np.random.default_rng(fraction_seed)
        keep = rng.permutation(len(split.train))[: max(1, int(round(fraction * len(split.train))))]
        kept_train = [split.train[i] for i in sorted(keep)]
        # catalog must reflect the kept portion; re-split is unnecessary
        restricted = _restrict_to_train(
            [Session(s.session_id, list(s.items), list(s.timestamps)) for s in kept_train],
            [Session(s.session_id, list(s.items), list(s.timestamps)) for s in split.test],
            min_len,
        )
        inverse = {v: k for k, v in split.catalog.id_map.items()}
        restricted.catalog.id_map = {
            inverse[old]: new for old, new in restricted.catalog.id_map.items()
        }
        split = restricted

    return PreparedDataset(split.train, split.test, split.catalog)


def _restrict_to_train(train: list[Session], test: list[Session], min_len: int) -> SplitResult:
    counts = Counter()
    for s in train:
        counts.update(s.items)
    keys = sorted(counts)
    remap = {k: i for i, k in enumerate(keys)}
    catalog = Catalog(dict(remap), np.array([counts[k] for k in keys], dtype=np.int64))
    new_train = [
        Session(s.session_id, [remap[i] for i in s.items], list(s.timestamps)) for s in train
    ]
    new_test = []
    for s in test:
        kept = [(remap[i], t) for i, t in zip(s.items, s.timestamps) if i in remap]
        if len(kept) >= min_len:
            new_test.append(Session(s.session_id, [i for i, _ in kept], [t for _, t in kept]))
    if not new_test:
        raise EmptyDatasetError("test set empty after restricting to train catalog")
    return SplitResult(new_train, new_test, catalog)


def save_prepared(dataset: PreparedDataset, out_dir) -> None:
    """Columnar cache (.npz) plus a plain-text manifest with the count summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def pack(sessions: list[Session]):
        items = np.concatenate([np.asarray(s.items, dtype=np.int64) for s in sessions])
        ts = np.concatenate([np.asarray(s.timestamps, dtype=np.int64) for s in sessions])
        offsets = np.cumsum([0] + [len(s) for s in sessions]).astype(np.int64)
        sids = np.array([str(s.session_id) for s in sessions])
        return items, ts, offsets, sids

    tr = pack(dataset.train)
    te = pack(dataset.test)
    with open(out / "data.npz", "wb") as fh:
        np.savez(
            fh,
            train_items=tr[0], train_ts=tr[1], train_offsets=tr[2], train_sids=tr[3],
            test_items=te[0], test_ts=te[1], test_offsets=te[2], test_sids=te[3],
            frequencies=dataset.catalog.frequencies,
        )
    with open(out / "catalog.json", "w", encoding="utf-8") as fh:
        json.dump({str(k): v for k, v in dataset.catalog.id_map.items()}, fh)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(dataset.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_prepared(in_dir) -> PreparedDataset:
    path = Path(in_dir)
    with np.load(path / "data.npz", allow_pickle=False) as blob:
        def unpack(prefix: str) -> list[Session]:
            items, ts = blob[f"{prefix}_items"], blob[f"{prefix}_ts"]
            offsets, sids = blob[f"{prefix}_offsets"], blob[f"{prefix}_sids"]
            return [
                Session(str(sids[i]), items[offsets[i] : offsets[i + 1]].tolist(),
                        ts[offsets[i] : offsets[i + 1]].tolist())
                for i in range(len(sids))
            ]

        train, test = unpack("train"), unpack("test")
        frequencies = blob["frequencies"]
    with open(path / "catalog.json", "r", encoding="utf-8") as fh:
        id_map = {k: int(v) for k, v in json.load(fh).items()}
    return PreparedDataset(train, test, Catalog(id_map, frequencies))
