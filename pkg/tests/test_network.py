import math

import numpy as np
import pytest

from psfnet.exceptions import (
    BadMagicError,
    BadVersionError,
    DimensionMismatchError,
    InsufficientDataError,
    NonFiniteLossError,
    TruncatedFileError,
)
from psfnet.grid import FieldPoint, PsfDataset
from psfnet.network import (
    MlpModel,
    TrainConfig,
    deserialize,
    envelope_norm,
    forward,
    gradient,
    init_model,
    load_model,
    loss,
    normalize_inputs,
    save_model,
    serialize,
    split_indices,
    train,
)

ENVELOPE = envelope_norm([[-50.0, -3.0, 0.0], [50.0, 3.0, 360.0]])


def random_model(rng, hidden=5, k=3, act="tanh", out="linear", inputs=3):
    norm = ENVELOPE if inputs == 3 else envelope_norm([[-50, -3, 0], [50, 3, 360]], "sincos")
    cfg = TrainConfig(hidden_activation=act, output_activation=out, optimizer="momentum")
    model = init_model(inputs, hidden, k * k, norm, (k, k, 6.5), cfg, int(rng.integers(2 ** 31)))
    # push weights beyond the init range so every activation regime is exercised
    model.weights = [w * rng.uniform(0.5, 3.0) for w in model.weights]
    model.biases = [b + rng.normal(0, 0.5, b.shape) for b in model.biases]
    return model


def random_field(rng):
    return FieldPoint(rng.uniform(-50, 50), rng.uniform(-3, 3), rng.uniform(0, 360))


def objective(model, fp, target):
    return float(np.sum((model.predict_raw([fp.as_tuple()])[0] - target) ** 2))


def finite_difference(model, fp, target, h=1e-6):
    out = []
    for params in zip(model.weights, model.biases):
        pair = []
        for p in params:
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + h
                up = objective(model, fp, target)
                p[idx] = orig - h
                down = objective(model, fp, target)
                p[idx] = orig
                g[idx] = (up - down) / (2 * h)
            pair.append(g)
        out.append(tuple(pair))
    return out


class TestInputs:
    def test_envelope_endpoints(self):
        x = normalize_inputs(FieldPoint(50.0, 1.5, 0.0), ENVELOPE)
        assert x[0] == 1.0 and x[1] == 0.5 and x[2] == -1.0
        assert normalize_inputs(FieldPoint(0.0, 0.0, 180.0), ENVELOPE).tolist() == [0, 0, 0]

    def test_degenerate_axis_gets_unit_scale(self):
        norm = envelope_norm([[0.0, 1.0, 10.0], [0.0, 2.0, 20.0]])
        assert norm[0].tolist() == [0.0, 1.0]

    def test_sincos(self):
        norm = envelope_norm([[-50, 0, 0], [50, 3, 350]], "sincos")
        assert norm.shape == (4, 2)
        x = normalize_inputs(FieldPoint(0.0, 1.5, 90.0), norm)
        np.testing.assert_allclose(x, [0.0, 0.0, 1.0, 0.0], atol=1e-15)

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            normalize_inputs(FieldPoint(0, 0, 0), [[0, 1], [0, 0], [0, 1]])


class TestModel:
    def test_shape_validation(self):
        rng = np.random.default_rng(0)
        m = random_model(rng)
        with pytest.raises(DimensionMismatchError):
            MlpModel(m.layer_sizes, "tanh", "linear", [m.weights[1], m.weights[0]], m.biases,
                     m.input_norm, m.output_grid)
        with pytest.raises(DimensionMismatchError):
            MlpModel(m.layer_sizes, "tanh", "linear", m.weights, m.biases, m.input_norm,
                     (4, 4, 6.5))
        with pytest.raises(ValueError):
            MlpModel(m.layer_sizes, "tanh", "linear", m.weights, m.biases,
                     np.array([[0, 1], [0, -1], [0, 1]]), m.output_grid)
        with pytest.raises(ValueError):
            MlpModel(m.layer_sizes, "softplus", "linear", m.weights, m.biases, m.input_norm,
                     m.output_grid)


class TestForward:
    def zero_model(self, bias):
        return MlpModel((3, 4, 9), "tanh", "linear", [np.zeros((4, 3)), np.zeros((9, 4))],
                        [np.zeros(4), np.asarray(bias, dtype=float)], ENVELOPE, (3, 3, 6.5))

    def test_equal_biases_give_uniform_kernel(self):
        g = forward(self.zero_model(np.full(9, 0.7)), FieldPoint(3, 1, 20))
        np.testing.assert_allclose(g.values, 1 / 9, rtol=1e-15)
        assert g.pitch_um == 6.5

    def test_negative_biases_clamped(self):
        b = np.array([-1.0, 2.0, 0, 0, 2.0, 0, 0, 0, -3.0])
        g = forward(self.zero_model(b), FieldPoint(0, 0, 0))
        np.testing.assert_allclose(g.values.ravel(), np.clip(b, 0, None) / 4.0)

    def test_all_negative_falls_back_to_uniform(self):
        g = forward(self.zero_model(np.full(9, -1.0)), FieldPoint(0, 0, 0))
        np.testing.assert_allclose(g.values, 1 / 9)

    @pytest.mark.parametrize("act,out", [("tanh", "linear"), ("sigmoid", "sigmoid"),
                                         ("relu", "linear")])
    def test_kernel_contract_and_purity(self, act, out):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = random_model(rng, k=5, act=act, out=out)
            before = serialize(m)
            fp = random_field(rng)
            a, b = forward(m, fp), forward(m, fp)
            assert a == b
            assert abs(a.values.sum() - 1) <= 1e-9 and a.values.min() >= 0
            assert serialize(m) == before


class TestLoss:
    def test_examples(self):
        assert loss([1, 2, 3], [1, 2, 3]) == 0
        assert loss([0, 0.1, 0], [0, 0, 0]) == pytest.approx(0.1)
        assert loss([1, 2, 3], [0, 0, 0]) == pytest.approx(math.sqrt(14))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            loss([1, 2], [1, 2, 3])


class TestGradient:
    def test_zero_error_is_stationary(self):
        rng = np.random.default_rng(2)
        m = random_model(rng)
        fp = random_field(rng)
        target = m.predict_raw([fp.as_tuple()])[0]
        for dw, db in gradient(m, fp, target):
            assert not dw.any() and not db.any()

    def test_single_linear_neuron(self):
        # identity hidden path: relu of a positive input passes straight through
        m = MlpModel((3, 1, 1), "relu", "linear", [np.array([[1.0, 0, 0]]), np.array([[0.8]])],
                     [np.zeros(1), np.zeros(1)], [[0, 1], [0, 1], [0, 1]], (1, 1, 1.0))
        x, t = 2.5, 1.0
        (_, _), (dw, _) = gradient(m, FieldPoint(x, 0, 0), [t])
        assert dw[0, 0] == pytest.approx(2 * x * (0.8 * x - t))

    def test_mismatch(self):
        m = random_model(np.random.default_rng(3))
        with pytest.raises(DimensionMismatchError):
            gradient(m, FieldPoint(0, 0, 0), np.zeros(4))

    @pytest.mark.parametrize("act,out,inputs", [("tanh", "linear", 3), ("sigmoid", "sigmoid", 3),
                                                ("tanh", "linear", 4)])
    def test_matches_finite_differences(self, act, out, inputs):
        rng = np.random.default_rng(4)
        for _ in range(10):
            m = random_model(rng, hidden=4, k=2, act=act, out=out, inputs=inputs)
            fp, target = random_field(rng), rng.random(4)
            for (aw, ab), (nw, nb) in zip(gradient(m, fp, target), finite_difference(m, fp, target)):
                np.testing.assert_allclose(aw, nw, rtol=1e-4, atol=1e-8)
                np.testing.assert_allclose(ab, nb, rtol=1e-4, atol=1e-8)


class TestSplit:
    def test_fractions_and_disjoint(self):
        tr, va, te = split_indices(100, 0.15, 0.15, 0)
        assert (len(tr), len(va), len(te)) == (70, 15, 15)
        assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(100))

    def test_tiny(self):
        tr, va, te = split_indices(2, 0.15, 0.15, 0)
        assert len(tr) == 2 and len(va) == len(te) == 0


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [dict(hidden_size=0), dict(learning_rate=0),
                                    dict(momentum=1.0), dict(validation_fraction=0),
                                    dict(validation_fraction=0.6, test_fraction=0.4),
                                    dict(optimizer="sgd"), dict(batch_size=0),
                                    dict(optimizer="projected", output_activation="sigmoid")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def singleton(lens_fp=FieldPoint(10.0, 1.0, 30.0)):
    from psfnet.grid import normalize_volume
    from psfnet.synth import SynthLensSpec, synth_psf

    # training kernels are unit volume, like everything forward() returns
    g = normalize_volume(synth_psf(SynthLensSpec(), lens_fp, 7, 7, 6.5))
    return PsfDataset([lens_fp.as_tuple()] * 2, np.stack([g.values] * 2), 6.5), g


class TestTrain:
    @pytest.mark.parametrize("optimizer", ["projected", "momentum", "adam"])
    def test_memorizes_one_sample(self, optimizer):
        ds, g = singleton()
        cfg = TrainConfig(hidden_size=8, max_epochs=5000, optimizer=optimizer,
                          learning_rate=0.05, seed=1)
        model, report = train(ds, cfg)
        assert report.final_train_perf < 1e-3
        pred = forward(model, ds[0][0])
        assert np.sqrt(((pred.values - g.values) ** 2).sum()) < 1e-3

    def test_needs_two_samples(self):
        ds, _ = singleton()
        with pytest.raises(InsufficientDataError):
            train(ds.subset([0]), TrainConfig(hidden_size=4))

    def test_square_grids_only(self):
        ds = PsfDataset(np.zeros((3, 3)), np.ones((3, 2, 3)), 6.5)
        with pytest.raises(DimensionMismatchError):
            train(ds, TrainConfig(hidden_size=4))

    def test_divergence(self, small_dataset):
        cfg = TrainConfig(hidden_size=8, optimizer="momentum", learning_rate=1e6, momentum=0.9,
                          max_epochs=200)
        with pytest.raises(NonFiniteLossError):
            train(small_dataset, cfg)

    @pytest.mark.parametrize("optimizer", ["projected", "momentum", "adam"])
    def test_deterministic(self, small_dataset, optimizer):
        cfg = TrainConfig(hidden_size=6, max_epochs=60, optimizer=optimizer, seed=9)
        m1, r1 = train(small_dataset, cfg)
        m2, r2 = train(small_dataset, cfg)
        assert serialize(m1) == serialize(m2)
        assert r1.history == r2.history and r1.history_csv() == r2.history_csv()

    def test_report(self, small_dataset):
        cfg = TrainConfig(hidden_size=6, max_epochs=40, optimizer="adam", batch_size=16,
                          early_stop_patience=1000, seed=2)
        model, report = train(small_dataset, cfg)
        assert report.epochs_run == len(report.history) == 40
        assert all(t >= 0 and v >= 0 for t, v in report.history)
        assert report.seed == 2
        assert len(report.train_indices) + len(report.val_indices) + len(report.test_indices) \
            == len(small_dataset)
        best = report.history[report.best_epoch - 1][1]
        assert best == min(v for _, v in report.history)
        assert report.final_val_perf == pytest.approx(best, rel=1e-12)
        assert report.history_csv().startswith("epoch,train_perf,val_perf\n1,")

    def test_seed_changes_init(self, small_dataset):
        a, _ = train(small_dataset, TrainConfig(hidden_size=6, max_epochs=5, seed=0))
        b, _ = train(small_dataset, TrainConfig(hidden_size=6, max_epochs=5, seed=1))
        assert not np.array_equal(a.biases[0], b.biases[0])

    def test_sincos_model(self, small_dataset):
        model, _ = train(small_dataset, TrainConfig(hidden_size=6, max_epochs=30,
                                                    azimuth_encoding="sincos"))
        assert model.layer_sizes[0] == 4 and model.azimuth_encoding == "sincos"
        assert forward(model, FieldPoint(0, 1, 45)).values.sum() == pytest.approx(1.0)


class TestSerialization:
    def test_layout(self):
        m = random_model(np.random.default_rng(5), hidden=2, k=1)
        data = serialize(m)
        assert data[:4] == b"PSFN"
        assert np.frombuffer(data[4:24], "<u4").tolist() == [1, 3, 3, 2, 1]
        assert data[24:26] == b"\x00\x00"
        expected = 4 + 4 + 4 + 12 + 2 + 16 + 48 + 8 * (2 * 3 + 2 + 1 * 2 + 1)
        assert len(data) == expected

    @pytest.mark.parametrize("act,out,inputs", [("tanh", "linear", 3), ("relu", "sigmoid", 3),
                                                ("sigmoid", "linear", 4)])
    def test_round_trip(self, tmp_path, act, out, inputs):
        m = random_model(np.random.default_rng(6), act=act, out=out, inputs=inputs)
        save_model(tmp_path / "m.psfn", m)
        back = load_model(tmp_path / "m.psfn")
        assert back == m and serialize(back) == serialize(m)

    def test_bad_magic(self):
        data = bytearray(serialize(random_model(np.random.default_rng(7))))
        data[0:1] = b"X"
        with pytest.raises(BadMagicError):
            deserialize(bytes(data))

    def test_bad_version(self):
        data = bytearray(serialize(random_model(np.random.default_rng(7))))
        data[4] = 9
        with pytest.raises(BadVersionError):
            deserialize(bytes(data))

    @pytest.mark.parametrize("keep", [6, 20, 40, 100, -8, -1])
    def test_truncated(self, keep):
        data = serialize(random_model(np.random.default_rng(8)))
        with pytest.raises(TruncatedFileError):
            deserialize(data[:keep])
