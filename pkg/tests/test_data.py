"""Parsing, fixpoint preprocessing, temporal split, and batching tests."""

import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sessrec import data as D
from sessrec.errors import EmptyDatasetError, ParseError


def events_of(*session_items, start_ts=0, step=1):
    """Click events for the given sessions, timestamps increasing globally."""
    out = []
    ts = start_ts
    for sid, items in enumerate(session_items):
        for item in items:
            out.append(D.Event(sid, item, ts))
            ts += step
    return out


def brute_force_fixpoint(session_items, min_support, min_len, session_filter_first=False):
    """Independent reference: iterate plain-list filters until nothing changes."""
    current = [list(s) for s in session_items]
    while True:
        if session_filter_first:
            current = [s for s in current if len(s) >= min_len]
        counts = Counter(i for s in current for i in s)
        pruned = [[i for i in s if counts[i] >= min_support] for s in current]
        pruned = [s for s in pruned if len(s) >= min_len]
        if pruned == current:
            return current
        current = pruned


class TestParsing:
    def test_single_json_record(self, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text(json.dumps({"session": 1, "events": [{"aid": 5, "ts": 100, "type": "clicks"}]}) + "\n")
        events = list(D.parse_events(path))
        assert events == [D.Event(1, 5, 100, D.CLICK)]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        stats = D.ParseStats()
        assert list(D.parse_events(path, stats=stats)) == []
        assert stats.skipped == 0

    def test_lenient_mode_counts_skips(self, tmp_path):
        path = tmp_path / "three.jsonl"
        good = json.dumps({"session": 1, "events": [{"aid": 2, "ts": 10, "type": "clicks"}]})
        good2 = json.dumps({"session": 2, "events": [{"aid": 3, "ts": 20, "type": "carts"}]})
        path.write_text(good + "\n" + "{not json}\n" + good2 + "\n")
        stats = D.ParseStats()
        events = list(D.parse_events(path, strict=False, stats=stats))
        assert len(events) == 2
        assert stats.skipped == 1 and stats.skipped_lines == [2]

    def test_strict_mode_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"session": 1, "events": []}\nnope\n')
        with pytest.raises(ParseError, match="line 2"):
            list(D.parse_events(path))

    def test_csv_format(self, tmp_path):
        path = tmp_path / "clicks.csv"
        path.write_text("session_id,item_id,timestamp\n1,10,100\n1,11,200\n2,10,300\n")
        events = list(D.parse_events(path, format="event-csv"))
        assert [e.item_id for e in events] == [10, 11, 10]
        assert all(e.event_type == D.CLICK for e in events)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            list(D.parse_events(tmp_path / "absent.jsonl"))

    def test_event_type_filter(self):
        evs = [D.Event(1, 1, 0, D.CLICK), D.Event(1, 2, 1, D.CART), D.Event(1, 3, 2, D.CLICK)]
        sessions = D.sessions_from_events(evs)
        assert sessions[0].items == [1, 3]

    def test_out_of_order_timestamps_are_sorted(self):
        evs = [D.Event(1, "b", 5, D.CLICK), D.Event(1, "a", 1, D.CLICK)]
        sessions = D.sessions_from_events(evs)
        assert sessions[0].items == ["a", "b"]


class TestPreprocess:
    def test_hand_traceable_fixpoint(self):
        # c is dropped for low support, [c,a] then dies of short length,
        # and the recount keeps a=3, b=2
        events = events_of(["a", "b", "a"], ["a", "b"], ["c", "a"])
        sessions, catalog = D.preprocess(events, min_support=2, min_len=2)
        decoded = [[k for i in s.items for k in [_raw(catalog, i)]] for s in sessions]
        assert decoded == [["a", "b", "a"], ["a", "b"]]
        assert {k: int(catalog.frequencies[v]) for k, v in catalog.id_map.items()} == {"a": 3, "b": 2}

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(20)
        for trial in range(50):
            n_sessions = int(rng.integers(1, 12))
            raw = [
                [int(x) for x in rng.integers(0, 8, size=rng.integers(1, 7))]
                for _ in range(n_sessions)
            ]
            ours = D.filter_support_length(
                [D.Session(i, list(s), list(range(len(s)))) for i, s in enumerate(raw)],
                min_support=3,
                min_len=2,
            )
            expected = brute_force_fixpoint(raw, 3, 2)
            assert [s.items for s in ours] == expected
            # order of elimination must not matter
            assert expected == brute_force_fixpoint(raw, 3, 2, session_filter_first=True)

    def test_already_stable_input_unchanged(self):
        events = events_of(["a", "b"], ["b", "a"])
        sessions, _ = D.preprocess(events, min_support=2, min_len=2)
        assert len(sessions) == 2 and all(len(s) == 2 for s in sessions)

    def test_fixpoint_property(self):
        rng = np.random.default_rng(21)
        for trial in range(20):
            raw = [
                [int(x) for x in rng.integers(0, 6, size=rng.integers(1, 6))]
                for _ in range(int(rng.integers(2, 10)))
            ]
            once = D.filter_support_length(
                [D.Session(i, list(s), list(range(len(s)))) for i, s in enumerate(raw)], 2, 2
            )
            twice = D.filter_support_length(once, 2, 2)
            assert [s.items for s in once] == [s.items for s in twice]

    def test_empty_result_is_an_error(self):
        with pytest.raises(EmptyDatasetError):
            D.preprocess(events_of(["a"], ["b"]), min_support=5, min_len=2)


def _raw(catalog, dense_id):
    for key, value in catalog.id_map.items():
        if value == dense_id:
            return key
    raise KeyError(dense_id)


DAY = 24 * 3600 * 1000


class TestTemporalSplit:
    def test_last_week_boundary(self):
        early = D.Session("early", [0, 1], [1 * DAY, 1 * DAY + 1])
        late = D.Session("late", [0, 1], [9 * DAY, 9 * DAY + 1])
        split = D.temporal_split([early, late], holdout=7 * DAY)
        assert [s.session_id for s in split.train] == ["early"]
        assert [s.session_id for s in split.test] == ["late"]

    def test_zero_holdout_raises(self):
        a = D.Session("a", [0, 1], [0, 10])
        b = D.Session("b", [0, 1], [20, 30])
        with pytest.raises(EmptyDatasetError):
            D.temporal_split([a, b], holdout=0)

    def test_catalog_rebuilt_from_train_only(self):
        train_s = D.Session("tr", [5, 6, 5], [0, 1, 2])
        test_s = D.Session("te", [5, 7, 6], [100, 101, 102])
        split = D.temporal_split([train_s, test_s], holdout=50)
        assert split.catalog.n_items == 2  # item 7 unknown to train
        assert sorted(split.catalog.id_map) == [5, 6]
        np.testing.assert_array_equal(split.catalog.frequencies, [2, 1])
        # test session keeps only train-known items, re-encoded
        assert [s.items for s in split.test] == [[0, 1]]

    def test_split_soundness_property(self):
        rng = np.random.default_rng(22)
        sessions = []
        for i in range(60):
            n = int(rng.integers(2, 6))
            start = int(rng.integers(0, 80))
            sessions.append(
                D.Session(i, [int(x) for x in rng.integers(0, 12, n)], list(range(start, start + n)))
            )
        split = D.temporal_split(sessions, holdout=20)
        max_ts = max(s.last_timestamp for s in sessions)
        assert all(s.last_timestamp <= max_ts - 20 for s in split.train)
        n_items = split.catalog.n_items
        assert all(0 <= i < n_items for s in split.test for i in s.items)

    def test_holdout_longer_than_span_rejected(self):
        a = D.Session("a", [0, 1], [0, 10])
        with pytest.raises(ValueError):
            D.temporal_split([a], holdout=100)


class TestBatches:
    def test_shift_construction(self):
        s = D.Session("s", [7, 8, 9], [0, 1, 2])
        batch = next(D.make_batches([s], batch_size=4, max_len=5, pad_id=99))
        np.testing.assert_array_equal(batch.item_ids[0], [7, 8, 9, 99, 99])
        np.testing.assert_array_equal(batch.targets[0], [8, 9, 99, 99, 99])
        np.testing.assert_array_equal(batch.mask[0], [True, True, False, False, False])

    def test_truncation_keeps_most_recent(self):
        s = D.Session("s", list(range(10)), list(range(10)))
        batch = next(D.make_batches([s], batch_size=1, max_len=4, pad_id=99))
        np.testing.assert_array_equal(batch.item_ids[0], [6, 7, 8, 9])

    def test_batch_size_arithmetic(self):
        sessions = [D.Session(i, [0, 1], [0, 1]) for i in range(300)]
        sizes = [b.size for b in D.make_batches(sessions, batch_size=128, max_len=4, pad_id=2)]
        assert sizes == [128, 128, 44]

    def test_deterministic_shuffle(self):
        sessions = [D.Session(i, [i % 3, (i + 1) % 3], [0, 1]) for i in range(20)]
        a = [b.item_ids.copy() for b in D.make_batches(sessions, 8, 4, pad_id=3, shuffle_seed=5)]
        b = [b.item_ids.copy() for b in D.make_batches(sessions, 8, 4, pad_id=3, shuffle_seed=5)]
        c = [b.item_ids.copy() for b in D.make_batches(sessions, 8, 4, pad_id=3, shuffle_seed=6)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert any(not np.array_equal(x, y) for x, y in zip(a, c))

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.lists(st.integers(0, 9), min_size=2, max_size=12), min_size=1, max_size=10),
        st.integers(2, 8),
        st.booleans(),
    )
    def test_round_trip_reproduces_truncated_multiset(self, raw, max_len, trim):
        sessions = [D.Session(i, list(s), list(range(len(s)))) for i, s in enumerate(raw)]
        batches = D.make_batches(sessions, batch_size=3, max_len=max_len, pad_id=10,
                                 shuffle_seed=1, trim=trim)
        rebuilt = sorted(
            tuple(b.row_items(i).tolist()) for b in batches for i in range(b.size)
        )
        expected = sorted(tuple(s[-max_len:]) for s in raw)
        assert rebuilt == expected


class TestPreparedCache:
    def _dataset(self):
        rng = np.random.default_rng(23)
        sessions = []
        ts = 0
        for i in range(40):
            n = int(rng.integers(2, 6))
            items = [int(x) for x in rng.integers(0, 10, n)]
            sessions.append([D.Event(i, f"item{x}", ts + j) for j, x in enumerate(items)])
            ts += 100
        return [e for s in sessions for e in s]

    def test_save_load_round_trip(self, tmp_path):
        ds = D.prepare_dataset(self._dataset(), min_support=2, min_len=2, holdout=500)
        D.save_prepared(ds, tmp_path)
        loaded = D.load_prepared(tmp_path)
        assert loaded.manifest() == ds.manifest()
        assert [s.items for s in loaded.train] == [s.items for s in ds.train]
        assert [s.items for s in loaded.test] == [s.items for s in ds.test]
        np.testing.assert_array_equal(loaded.catalog.frequencies, ds.catalog.frequencies)
        assert loaded.catalog.id_map == {str(k): v for k, v in ds.catalog.id_map.items()}

    def test_manifest_counts(self, tmp_path):
        ds = D.prepare_dataset(self._dataset(), min_support=2, min_len=2, holdout=500)
        D.save_prepared(ds, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["train_sessions"] == len(ds.train)
        assert manifest["train_events"] == sum(len(s) for s in ds.train)
        assert manifest["n_items"] == ds.catalog.n_items
        assert sum(int(f) for f in ds.catalog.frequencies) == manifest["train_events"]

    def test_support_scope_train_counts_on_train_only(self):
        # item Z has support 2 overall but only 1 inside the train window
        events = [
            D.Event(0, "x", 0), D.Event(0, "z", 1),
            D.Event(1, "x", 10), D.Event(1, "y", 11),
            D.Event(2, "x", 20), D.Event(2, "y", 21),
            D.Event(3, "z", 1000), D.Event(3, "x", 1001), D.Event(3, "y", 1002),
        ]
        scoped_all = D.prepare_dataset(events, min_support=2, min_len=2, holdout=500,
                                       support_scope="all")
        scoped_train = D.prepare_dataset(events, min_support=2, min_len=2, holdout=500,
                                         support_scope="train")
        assert "z" in scoped_all.catalog.id_map
        assert "z" not in scoped_train.catalog.id_map

    def test_fraction_subsamples_train(self):
        ds_full = D.prepare_dataset(self._dataset(), min_support=2, min_len=2, holdout=500)
        ds_frac = D.prepare_dataset(self._dataset(), min_support=2, min_len=2, holdout=500,
                                    fraction=0.5)
        assert len(ds_frac.train) == max(1, round(0.5 * len(ds_full.train)))
        assert ds_frac.catalog.n_items <= ds_full.catalog.n_items
