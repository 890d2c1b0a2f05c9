import numpy as np
import pytest

from pllkit import kernel as K
from pllkit.backbone import (
    Backbone,
    BackboneConfig,
    QueryKeyPair,
    load_checkpoint,
    save_checkpoint,
    update_parameters,
)


def make_model(seed=0, **kwargs):
    config = BackboneConfig(**kwargs)
    return Backbone(config, rng=np.random.default_rng(seed))


class TestShapes:
    def test_table_chain_s310_k5(self):
        model = make_model().eval()
        x = np.random.default_rng(0).random((1, 310))
        p = model.params
        h1 = K.conv1d(K.constant(x[None]), p["conv1.weight"], p["conv1.bias"])
        assert h1.shape == (1, 5, 308)
        h2 = K.conv1d(h1, p["conv2.weight"], p["conv2.bias"])
        assert h2.shape == (1, 10, 306)
        emb = model.encode(x)
        assert emb.shape == (3060,)
        logits = model.classify(emb)
        assert logits.shape == (5,)

    def test_minimum_length(self):
        model = make_model(feature_len=5).eval()
        emb = model.encode(np.zeros(5))
        assert emb.shape == (10,)

    def test_zero_input_zero_embedding(self):
        # zero biases and initial running stats keep the whole chain at zero
        model = make_model().eval()
        emb = model.encode(np.zeros(310))
        np.testing.assert_allclose(emb.value, 0.0, atol=1e-12)

    def test_wrong_length_rejected(self):
        model = make_model()
        with pytest.raises(K.KernelError):
            model.encode(np.zeros(311))
        with pytest.raises(K.KernelError):
            model.classify(K.Tensor(np.zeros(100)))


class TestClassifier:
    def test_eval_deterministic(self):
        model = make_model(seed=3).eval()
        x = np.random.default_rng(1).random((4, 310))
        a = model.logits_values(x)
        b = model.logits_values(x)
        np.testing.assert_array_equal(a, b)

    def test_train_dropout_replays_with_fixed_seed(self):
        x = np.random.default_rng(2).random((4, 310))
        outs = []
        for _ in range(2):
            model = make_model(seed=3).train()
            emb = model.encode(x)
            logits = model.classify(emb, rng=np.random.default_rng(7))
            outs.append(logits.value)
        np.testing.assert_array_equal(outs[0], outs[1])


class TestProjection:
    def test_unit_norm(self):
        model = make_model(seed=4).eval()
        x = np.random.default_rng(3).random((6, 310))
        q = model.project(model.encode(x)).value
        np.testing.assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-6)

    def test_scale_invariance_with_zero_bias(self):
        model = make_model(seed=5).eval()
        model.params["proj.bias"].value = np.zeros(64)
        emb = np.random.default_rng(4).normal(size=3060)
        a = model.project(K.Tensor(emb)).value
        b = model.project(K.Tensor(emb * 3.7)).value
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_matches_divide_by_norm_oracle(self):
        model = make_model(seed=6).eval()
        emb = np.random.default_rng(5).normal(size=3060)
        raw = model.params["proj.weight"].value @ emb + model.params["proj.bias"].value
        expected = raw / (np.linalg.norm(raw) + 1e-7)
        np.testing.assert_allclose(model.project(K.Tensor(emb)).value, expected, atol=1e-9)


class TestMomentumUpdate:
    def test_m_one_keeps_key(self):
        a, b = make_model(seed=1).params, make_model(seed=2).params
        before = a.state_dict()
        update_parameters(a, b, 1.0)
        for name, arr in a.items():
            np.testing.assert_array_equal(arr.value, before[name])

    def test_m_zero_copies_query(self):
        a, b = make_model(seed=1).params, make_model(seed=2).params
        update_parameters(a, b, 0.0)
        for name, arr in a.items():
            np.testing.assert_array_equal(arr.value, b[name].value)

    def test_three_updates_match_recurrence(self):
        key = K.ParameterSet()
        key.add("w", np.array([1.0]))
        query = K.ParameterSet()
        query.add("w", np.array([3.0]))
        expected = 1.0
        for _ in range(3):
            update_parameters(key, query, 0.999)
            expected = 0.999 * expected + 0.001 * 3.0
            assert abs(float(key["w"].value[0]) - expected) <= 1e-15

    def test_pair_key_tracks_query(self):
        pair = QueryKeyPair(make_model(seed=7), m_key=0.9)
        np.testing.assert_array_equal(pair.key.params["fc1.weight"].value,
                                      pair.query.params["fc1.weight"].value)
        pair.query.params["fc1.weight"].value += 1.0
        pair.momentum_update()
        diff = pair.query.params["fc1.weight"].value - pair.key.params["fc1.weight"].value
        np.testing.assert_allclose(diff, 0.9, atol=1e-12)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = make_model(seed=8)
        model.params["bn1.running_mean"].value = np.random.default_rng(6).normal(size=5)
        path = tmp_path / "model.npz"
        save_checkpoint(path, model, extra={"seed": 8})
        loaded, extra = load_checkpoint(path)
        assert extra == {"seed": 8}
        assert loaded.config == model.config
        for name, t in model.params.items():
            assert np.array_equal(loaded.params[name].value, t.value)
