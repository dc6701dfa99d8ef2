import numpy as np
import pytest

from antidote_rec.data import RatingDataset
from antidote_rec.errors import ConfigError, DataError, NumericalError
from antidote_rec.factorization import (
    AlsOptions,
    FactorModel,
    als_factorize,
    als_factorize_joint,
    factorization_objective,
    load_factors,
    predict,
    rmse_of_entries,
    save_factors,
    validation_rmse_grid,
)

from helpers import dataset_from_dense, random_observed


def rank_one_dataset(seed=1):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 2.0, size=5)
    b = rng.uniform(0.5, 2.0, size=4)
    dense = np.outer(a, b)
    return dataset_from_dense(dense, bounds=(0.0, float(dense.max()) + 1.0)), dense


class TestAlsFactorize:
    def test_rank_one_recovery(self):
        ds, dense = rank_one_dataset()
        model = als_factorize(ds, rank=1, reg=1e-6)
        assert rmse_of_entries(ds, predict(model)) < 1e-3
        assert np.abs(predict(model) - dense).max() < 1e-3

    def test_monotone_objective_per_half_sweep(self):
        ds = random_observed(np.random.default_rng(2), 20, 12, 0.5)
        model = als_factorize(ds, rank=3, reg=0.5)
        trace = model.objective_trace
        assert len(trace) >= 3
        for earlier, later in zip(trace, trace[1:]):
            assert later <= earlier + 1e-9

    def test_stationarity_closed_form(self):
        # after the closing item half-sweep every v_j satisfies its
        # normal-equation closed form
        ds = random_observed(np.random.default_rng(3), 25, 14, 0.4)
        reg = 0.7
        model = als_factorize(ds, rank=4, reg=reg)
        csc_indptr, csc_rows, csc_vals = ds.csc
        worst = 0.0
        for j in range(ds.d):
            rows = csc_rows[csc_indptr[j] : csc_indptr[j + 1]]
            vals = csc_vals[csc_indptr[j] : csc_indptr[j + 1]]
            sub = model.U[:, rows]
            closed = np.linalg.solve(
                sub @ sub.T + reg * np.eye(model.rank), sub @ vals
            )
            denom = max(np.linalg.norm(closed), 1e-12)
            worst = max(worst, np.linalg.norm(model.V[:, j] - closed) / denom)
        assert worst < 1e-6

    def test_regularizer_shrinks_factor_norms(self):
        ds = random_observed(np.random.default_rng(4), 15, 10, 0.5)
        small = als_factorize(ds, rank=3, reg=0.1)
        large = als_factorize(ds, rank=3, reg=50.0)
        norm = lambda m: float(np.sum(m.U**2) + np.sum(m.V**2))
        assert norm(large) < norm(small)

    def test_empty_user_rejected(self):
        ds = RatingDataset.from_arrays(2, 2, [0, 0], [0, 1], [1.0, 2.0])
        with pytest.raises(DataError, match="user 1"):
            als_factorize(ds, rank=1, reg=1.0)

    def test_zero_reg_rank_deficient_raises(self):
        # a single observation cannot determine a rank-2 user vector
        ds = RatingDataset.from_arrays(2, 2, [0, 0, 1], [0, 1, 0], [1.0, 2.0, 3.0])
        with pytest.raises(NumericalError):
            als_factorize(ds, rank=2, reg=0.0)

    def test_bad_options(self):
        ds = rank_one_dataset()[0]
        with pytest.raises(ConfigError):
            als_factorize(ds, rank=0, reg=1.0)
        with pytest.raises(ConfigError):
            als_factorize(ds, rank=1, reg=-1.0)
        with pytest.raises(ConfigError):
            AlsOptions(max_sweeps=0)


class TestJointFactorization:
    def test_empty_antidote_matches_plain_bitwise(self):
        ds = random_observed(np.random.default_rng(5), 18, 11, 0.4)
        opts = AlsOptions(seed=9, max_sweeps=7)
        plain = als_factorize(ds, rank=3, reg=0.4, opts=opts)
        joint = als_factorize_joint(ds, np.zeros((0, ds.d)), rank=3, reg=0.4, opts=opts)
        assert np.array_equal(plain.U, joint.U)
        assert np.array_equal(plain.V, joint.V)
        assert joint.U_tilde.shape == (3, 0)

    def test_monotone_objective_with_antidote(self):
        ds = random_observed(np.random.default_rng(6), 20, 12, 0.5)
        antidote = np.random.default_rng(7).uniform(0, 5, size=(3, ds.d))
        model = als_factorize_joint(ds, antidote, rank=3, reg=0.5)
        trace = model.objective_trace
        for earlier, later in zip(trace, trace[1:]):
            assert later <= earlier + 1e-9

    def test_item_stationarity_includes_antidote_terms(self):
        ds = random_observed(np.random.default_rng(8), 22, 13, 0.45)
        reg = 0.6
        antidote = np.random.default_rng(9).uniform(0, 5, size=(2, ds.d))
        model = als_factorize_joint(ds, antidote, rank=3, reg=reg)
        csc_indptr, csc_rows, csc_vals = ds.csc
        gram_a = model.U_tilde @ model.U_tilde.T
        for j in range(ds.d):
            rows = csc_rows[csc_indptr[j] : csc_indptr[j + 1]]
            vals = csc_vals[csc_indptr[j] : csc_indptr[j + 1]]
            sub = model.U[:, rows]
            s_mat = sub @ sub.T + gram_a + reg * np.eye(model.rank)
            rhs = sub @ vals + model.U_tilde @ antidote[:, j]
            closed = np.linalg.solve(s_mat, rhs)
            assert np.linalg.norm(model.V[:, j] - closed) <= 1e-6 * max(
                np.linalg.norm(closed), 1e-12
            )

    def test_duplicate_row_no_worse_than_transplanted_plain_solution(self):
        # antidote row equal to a fully observed user's ratings: warm-starting
        # the joint solve from the plain solution can only descend
        rng = np.random.default_rng(10)
        dense = rng.uniform(1.0, 4.0, size=(8, 6))
        ds = dataset_from_dense(dense)
        rank, reg = 2, 0.3
        plain = als_factorize(ds, rank, reg, AlsOptions(seed=0))
        antidote = dense[[2], :]
        u_tilde = np.linalg.solve(
            plain.V @ plain.V.T + reg * np.eye(rank), plain.V @ antidote.T
        )
        transplanted = FactorModel(
            U=plain.U, V=plain.V, U_tilde=u_tilde, rank=rank, reg=reg
        )
        transplant_objective = factorization_objective(ds, transplanted, antidote)
        joint = als_factorize_joint(
            ds, antidote, rank, reg, AlsOptions(seed=0, warm_start=plain)
        )
        assert joint.objective_trace[-1] <= transplant_objective + 1e-9

    def test_prediction_excludes_antidote(self):
        ds = random_observed(np.random.default_rng(11), 10, 8, 0.5)
        model = als_factorize_joint(ds, np.full((2, ds.d), 2.5), rank=2, reg=0.5)
        assert predict(model).shape == (ds.n, ds.d)


class TestPredict:
    def test_identity_factor(self):
        rng = np.random.default_rng(12)
        v = rng.normal(size=(4, 6))
        model = FactorModel(U=np.eye(4), V=v, U_tilde=None, rank=4, reg=0.0)
        assert np.array_equal(predict(model), v)

    def test_zero_factor(self):
        model = FactorModel(
            U=np.zeros((3, 5)), V=np.ones((3, 4)), U_tilde=None, rank=3, reg=0.0
        )
        assert np.all(predict(model) == 0.0)

    def test_entries_match_scalar_loop(self):
        rng = np.random.default_rng(13)
        model = FactorModel(
            U=rng.normal(size=(3, 6)), V=rng.normal(size=(3, 5)), U_tilde=None, rank=3, reg=0.0
        )
        pred = predict(model)
        for _ in range(10):
            i, j = rng.integers(6), rng.integers(5)
            scalar = sum(model.U[k, i] * model.V[k, j] for k in range(3))
            assert abs(pred[i, j] - scalar) < 1e-12


class TestValidationGrid:
    def test_deterministic(self):
        ds = random_observed(np.random.default_rng(14), 30, 15, 0.5)
        a = validation_rmse_grid(ds, [2, 3], [0.1, 1.0], splits=2, fraction=0.2, seed=3)
        b = validation_rmse_grid(ds, [2, 3], [0.1, 1.0], splits=2, fraction=0.2, seed=3)
        assert a == b
        assert len(a) == 4

    def test_generalization_gap_sign(self):
        # overfit-capable rank on a small split: held-out error >= training error
        rng = np.random.default_rng(15)
        ds = random_observed(rng, 25, 12, 0.6)
        cells = validation_rmse_grid(ds, [6], [1e-3], splits=1, fraction=0.2, seed=1)
        from antidote_rec.data import holdout_split

        pair = holdout_split(ds, 0.2, seed=1)
        model = als_factorize(pair.train, 6, 1e-3, AlsOptions(seed=0))
        train_rmse = rmse_of_entries(pair.train, predict(model))
        assert cells[0].mean_rmse >= train_rmse

    def test_splits_validated(self):
        ds = rank_one_dataset()[0]
        with pytest.raises(ConfigError):
            validation_rmse_grid(ds, [1], [1.0], splits=0)


class TestFactorContainer:
    def test_round_trip(self, tmp_path):
        ds = random_observed(np.random.default_rng(16), 12, 9, 0.5)
        antidote = np.full((2, ds.d), 3.0)
        model = als_factorize_joint(ds, antidote, rank=3, reg=0.8)
        path = tmp_path / "factors.npz"
        save_factors(model, path)
        back = load_factors(path)
        assert np.array_equal(back.U, model.U)
        assert np.array_equal(back.V, model.V)
        assert np.array_equal(back.U_tilde, model.U_tilde)
        assert back.rank == model.rank and back.reg == model.reg

    def test_round_trip_without_antidote(self, tmp_path):
        ds = random_observed(np.random.default_rng(17), 10, 8, 0.5)
        model = als_factorize(ds, rank=2, reg=0.5)
        path = tmp_path / "f.npz"
        save_factors(model, path)
        back = load_factors(path)
        assert back.U_tilde is None
        assert np.array_equal(back.V, model.V)
