import io

import numpy as np
import pytest

from antidote_rec.data import (
    GroupAssignment,
    RatingDataset,
    filter_top_items,
    filter_users,
    holdout_split,
    load_genre_groups,
    load_groups_csv,
    load_movielens,
    load_ratings_csv,
    save_groups_csv,
    save_ratings_csv,
)
from antidote_rec.errors import ConfigError, DataError, ParseError

from helpers import random_observed


def build(n, d, triples, bounds=(0.0, 5.0)):
    users, items, vals = zip(*triples)
    return RatingDataset.from_arrays(n, d, users, items, vals, bounds=bounds)


class TestLoadMovielens:
    def test_two_line_parse(self):
        ds = load_movielens(io.StringIO("1::10::5::978300760\n2::10::3::978300761"))
        assert (ds.n, ds.d) == (2, 1)
        assert ds.entry_triples() == {("1", "10", 5.0), ("2", "10", 3.0)}
        assert ds.bounds == (0.0, 5.0)

    def test_rating_above_bound_rejected(self):
        with pytest.raises(DataError, match="7"):
            load_movielens(io.StringIO("1::10::7::0"))

    def test_malformed_line_carries_line_number(self):
        with pytest.raises(ParseError) as err:
            load_movielens(io.StringIO("1::10::5::0\nbroken-line\n"))
        assert err.value.line == 2

    def test_bad_rating_value(self):
        with pytest.raises(ParseError) as err:
            load_movielens(io.StringIO("1::10::abc::0"))
        assert err.value.line == 1

    def test_duplicate_pair_named(self):
        with pytest.raises(DataError, match="user=1.*item=10"):
            load_movielens(io.StringIO("1::10::5::0\n1::10::4::1"))

    def test_first_appearance_indexing(self):
        ds = load_movielens(io.StringIO("7::30::1::0\n3::20::2::0\n7::20::3::0"))
        assert ds.user_ids == ("7", "3")
        assert ds.item_ids == ("30", "20")

    def test_custom_separator(self):
        ds = load_movielens(io.StringIO("1|10|5|0"), separator="|")
        assert ds.nnz == 1

    def test_timestamps_discarded(self):
        ds = load_movielens(io.StringIO("1::10::5::999999"))
        assert ds.values[0] == 5.0


class TestGenreGroups:
    MOVIES = (
        "10::GoldenEye (1995)::Action|Adventure|Thriller\n"
        "20::Toy Story (1995)::Animation|Children's|Comedy\n"
        "30::Heat (1995)::Action|Crime\n"
    )

    def test_first_listed_policy(self):
        ds = load_movielens(io.StringIO("1::10::5::0\n2::20::3::0\n1::30::1::0"))
        groups = load_genre_groups(io.StringIO(self.MOVIES), ds)
        assert groups.axis == "items"
        assert groups.labels == ("Action", "Animation", "Action")
        assert groups.g == 2

    def test_partition_covers_every_item(self):
        ds = load_movielens(io.StringIO("1::10::5::0\n2::20::3::0\n1::30::1::0"))
        groups = load_genre_groups(io.StringIO(self.MOVIES), ds)
        # distinct first-listed genres of the covered items, counted by hand
        assert set(groups.labels) == {"Action", "Animation"}
        assert all(groups.labels.count(g) >= 1 for g in groups.group_labels)
        assert len(groups.labels) == ds.d

    def test_missing_item_named(self):
        ds = load_movielens(io.StringIO("1::10::5::0\n1::99::2::0"))
        with pytest.raises(DataError, match="99"):
            load_genre_groups(io.StringIO(self.MOVIES), ds)

    def test_unknown_policy(self):
        ds = load_movielens(io.StringIO("1::10::5::0"))
        with pytest.raises(ConfigError):
            load_genre_groups(io.StringIO(self.MOVIES), ds, policy="alphabetical")


class TestFilterTopItems:
    def test_counts_with_tie_rule(self):
        # item rating counts [5, 9, 2] -> top-2 keeps items 1 and 0
        triples = []
        for u in range(5):
            triples.append((u, 0, 1.0))
        for u in range(9):
            triples.append((u, 1, 2.0))
        for u in range(2):
            triples.append((u, 2, 3.0))
        ds = build(9, 3, triples)
        out = filter_top_items(ds, 2)
        assert out.item_ids == ("0", "1")
        assert out.d == 2

    def test_zero_k_rejected(self):
        ds = build(1, 1, [(0, 0, 1.0)])
        with pytest.raises(ConfigError):
            filter_top_items(ds, 0)

    def test_identity_when_k_equals_d(self):
        ds = random_observed(np.random.default_rng(0), 8, 6, 0.4)
        out = filter_top_items(ds, ds.d)
        assert out.same_entries(ds)

    def test_emptied_users_dropped(self):
        # user 0 rated only item 0; item 1 wins the top-1 filter
        ds = build(3, 2, [(0, 0, 5.0), (1, 1, 2.0), (2, 1, 1.0)])
        out = filter_top_items(ds, 1)
        assert out.item_ids == ("1",)
        assert out.n == 2 and out.user_ids == ("1", "2")

    def test_users_kept_when_still_rated(self):
        ds = build(2, 2, [(0, 0, 1.0), (0, 1, 3.0), (1, 1, 2.0)])
        out = filter_top_items(ds, 1)  # item 1 has two ratings
        assert out.item_ids == ("1",)
        assert out.n == 2


class TestFilterUsers:
    def test_most_active_tie_rule(self):
        # user rating counts [3, 7, 7, 1] -> top-2 keeps users 1 and 2
        triples = []
        for j in range(3):
            triples.append((0, j, 1.0))
        for j in range(7):
            triples.append((1, j, 1.0))
        for j in range(7):
            triples.append((2, j, 1.0))
        triples.append((3, 0, 1.0))
        ds = build(4, 7, triples)
        out = filter_users(ds, "most_active", 2)
        assert out.user_ids == ("1", "2")

    def test_random_subset_deterministic(self):
        ds = random_observed(np.random.default_rng(1), 20, 10, 0.3)
        a = filter_users(ds, "random_subset", 5, seed=42)
        b = filter_users(ds, "random_subset", 5, seed=42)
        assert a.same_entries(b) and a.user_ids == b.user_ids
        c = filter_users(ds, "random_subset", 5, seed=43)
        assert c.user_ids != a.user_ids or not c.same_entries(a)

    def test_identity_when_k_equals_n(self):
        ds = random_observed(np.random.default_rng(2), 9, 5, 0.5)
        assert filter_users(ds, "most_active", ds.n).same_entries(ds)

    def test_zero_k_rejected(self):
        ds = build(1, 1, [(0, 0, 1.0)])
        with pytest.raises(ConfigError):
            filter_users(ds, "most_active", 0)

    def test_unknown_mode(self):
        ds = build(1, 1, [(0, 0, 1.0)])
        with pytest.raises(ConfigError):
            filter_users(ds, "least_active", 1)

    def test_emptied_items_dropped(self):
        # item 2 is rated only by user 1, who loses the most-active filter
        ds = build(2, 3, [(0, 0, 1.0), (0, 1, 2.0), (1, 2, 3.0)])
        out = filter_users(ds, "most_active", 1)
        assert out.user_ids == ("0",)
        assert out.item_ids == ("0", "1")


class TestHoldoutSplit:
    def test_floor_count(self):
        triples = [(0, j, 1.0) for j in range(10)]
        ds = build(1, 10, triples)
        pair = holdout_split(ds, 0.2, seed=0)
        assert pair.test.nnz == 2
        assert pair.train.nnz == 8

    def test_single_rating_user_kept_in_train(self):
        ds = build(1, 1, [(0, 0, 4.0)])
        pair = holdout_split(ds, 0.2, seed=0)
        assert pair.train.nnz == 1 and pair.test.nnz == 0

    def test_determinism(self):
        ds = random_observed(np.random.default_rng(3), 15, 12, 0.4)
        a = holdout_split(ds, 0.3, seed=7)
        b = holdout_split(ds, 0.3, seed=7)
        assert a.train.same_entries(b.train) and a.test.same_entries(b.test)

    def test_exact_partition_per_user(self):
        for seed in range(5):
            ds = random_observed(np.random.default_rng(seed), 12, 9, 0.5)
            pair = holdout_split(ds, 0.25, seed=seed)
            whole = set(zip(ds.user_idx, ds.item_idx, ds.values))
            train = set(zip(pair.train.user_idx, pair.train.item_idx, pair.train.values))
            test = set(zip(pair.test.user_idx, pair.test.item_idx, pair.test.values))
            assert train | test == whole
            assert train.isdisjoint(test)
            assert (pair.train.n, pair.train.d) == (ds.n, ds.d) == (pair.test.n, pair.test.d)
            for i in range(ds.n):
                count = ds.user_counts[i]
                expected = int(0.25 * count) if count >= 2 else 0
                assert pair.test.user_counts[i] == expected

    def test_fraction_bounds(self):
        ds = build(1, 1, [(0, 0, 1.0)])
        with pytest.raises(ConfigError):
            holdout_split(ds, 0.0)
        with pytest.raises(ConfigError):
            holdout_split(ds, 1.0)


class TestCsvRoundTrip:
    def test_external_id_round_trip(self, tmp_path):
        ds = load_movielens(io.StringIO("9::30::5::0\n2::10::3::0\n9::10::1::0"))
        path = tmp_path / "out.csv"
        save_ratings_csv(ds, path)
        back = load_ratings_csv(path)
        assert (back.n, back.d, back.nnz) == (ds.n, ds.d, ds.nnz)
        assert back.entry_triples() == ds.entry_triples()
        assert back.bounds == ds.bounds

    def test_round_trip_random(self, tmp_path):
        ds = random_observed(np.random.default_rng(5), 14, 11, 0.35)
        path = tmp_path / "r.csv"
        save_ratings_csv(ds, path)
        back = load_ratings_csv(path, bounds=ds.bounds)
        assert back.entry_triples() == ds.entry_triples()

    def test_header_required(self):
        with pytest.raises(ParseError):
            load_ratings_csv(io.StringIO("a,b,c\n1,2,3\n"))

    def test_lf_line_endings(self, tmp_path):
        ds = build(2, 2, [(0, 0, 1.0), (1, 1, 2.5)])
        path = tmp_path / "x.csv"
        save_ratings_csv(ds, path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.startswith(b"user_id,item_id,rating\n")


class TestGroupsCsv:
    def test_round_trip(self, tmp_path):
        ds = build(2, 3, [(0, 0, 1.0), (0, 1, 2.0), (1, 2, 3.0)])
        groups = GroupAssignment(axis="items", labels=("a", "b", "a"))
        path = tmp_path / "g.csv"
        save_groups_csv(groups, ds, path)
        back = load_groups_csv(path, ds, axis="items")
        assert back.labels == groups.labels

    def test_missing_entity_named(self, tmp_path):
        ds = build(1, 2, [(0, 0, 1.0), (0, 1, 2.0)])
        path = tmp_path / "g.csv"
        path.write_text("entity_id,group_label\n0,x\n", encoding="utf-8")
        with pytest.raises(DataError, match="'1'"):
            load_groups_csv(path, ds, axis="items")


class TestDatasetValidation:
    def test_duplicate_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            build(2, 2, [(0, 0, 1.0), (0, 0, 2.0)])

    def test_out_of_range_index(self):
        with pytest.raises(DataError):
            build(1, 1, [(1, 0, 1.0)])

    def test_out_of_bounds_value(self):
        with pytest.raises(DataError):
            build(1, 1, [(0, 0, 9.0)])

    def test_views_consistent(self):
        ds = random_observed(np.random.default_rng(8), 10, 7, 0.4)
        indptr, cols, _ = ds.csr
        for i in range(ds.n):
            for j in ds.items_of_user(i):
                assert i in ds.users_of_item(j)
        total = sum(len(ds.items_of_user(i)) for i in range(ds.n))
        assert total == ds.nnz == sum(len(ds.users_of_item(j)) for j in range(ds.d))
