import numpy as np
import pytest
from sklearn.base import clone

from psfnet.estimators import PsfPreprocessor, PsfRegressor
from psfnet.exceptions import DimensionMismatchError
from psfnet.grid import FieldPoint, PsfGrid
from psfnet.network import TrainConfig, train


class TestPreprocessor:
    def test_pipeline_shape_and_volume(self):
        rng = np.random.default_rng(0)
        scans = np.zeros((2, 300, 340))
        scans[:, 140:160, 150:175] = rng.random((2, 20, 25))
        out = PsfPreprocessor(source_pitch_um=0.307).fit_transform(scans)
        assert out.shape == (2, 13, 13)
        np.testing.assert_allclose(out.sum(axis=(1, 2)), 1.0, rtol=0, atol=1e-12)

    def test_grid_inputs_keep_their_pitch(self):
        g = PsfGrid(np.ones((8, 8)), 1.0)
        pre = PsfPreprocessor(crop_size=8, target_pitch_um=2.0, target_size=4, normalize=False)
        out = pre.fit([g]).transform([g])
        np.testing.assert_array_equal(out[0], np.full((4, 4), 4.0))

    def test_not_fitted(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            PsfPreprocessor().transform(np.ones((1, 4, 4)))

    def test_params(self):
        pre = PsfPreprocessor(target_size=9)
        assert pre.get_params()["target_size"] == 9
        assert clone(pre).set_params(crop_size=64).crop_size == 64

    def test_bad_shape(self):
        with pytest.raises(DimensionMismatchError):
            PsfPreprocessor().fit(np.ones((1, 2, 3, 4)))


class TestRegressor:
    def test_matches_train(self, small_dataset):
        est = PsfRegressor(hidden_size=6, max_epochs=30, random_state=4)
        est.fit(small_dataset.fields, small_dataset.grids)
        model, _ = train(small_dataset, est.train_config())
        assert est.model_ == model
        assert est.n_features_in_ == 3
        pred = est.predict(small_dataset.fields[:5])
        np.testing.assert_array_equal(pred, model.predict_kernels(small_dataset.fields[:5]))
        assert est.predict_grid(FieldPoint(0, 0, 0)).width == 9

    def test_score_and_clone(self, small_dataset):
        est = PsfRegressor(hidden_size=6, max_epochs=30).fit_dataset(small_dataset)
        assert est.score(small_dataset.fields, small_dataset.targets()) > 0.5
        fresh = clone(est)
        assert not hasattr(fresh, "model_")
        assert fresh.get_params() == est.get_params()

    def test_rejects_bad_inputs(self):
        X = np.zeros((4, 3))
        with pytest.raises(DimensionMismatchError):
            PsfRegressor().fit(X, np.ones((4, 8)))
        with pytest.raises(DimensionMismatchError):
            PsfRegressor().fit(np.zeros((4, 2)), np.ones((4, 9)))

    def test_from_model(self, small_model):
        est = PsfRegressor.from_model(small_model)
        assert est.predict(np.zeros((1, 3))).shape == (1, 81)
        assert est.pitch_um == 6.5 and est.hidden_size == small_model.hidden_size

    def test_config_mirrors_params(self):
        cfg = PsfRegressor(hidden_size=12, optimizer="adam", random_state=7).train_config()
        assert isinstance(cfg, TrainConfig)
        assert (cfg.hidden_size, cfg.optimizer, cfg.seed) == (12, "adam", 7)
