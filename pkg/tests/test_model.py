import numpy as np
import pytest

from _gradcheck import max_relative_error
from gcnse import model, nn, synthgen
from gcnse.graph import DynamicGraph, split_nodes
from gcnse.model import TrainConfig, WeightingScheme


def tiny_graph(seed=0, n=12, t=3, c=3, static=True):
    tp = (0.0,) * t if static else None
    return synthgen.generate(synthgen.GenParams(n, c, t, p_intra=0.5, p_inter=0.05, transition_prob=tp, seed=seed))


class TestBuildingBlocks:
    def test_gcn_layer_identity(self):
        t = nn.Tape()
        z = np.random.default_rng(0).normal(size=(3, 2))
        out = model.gcn_layer(np.eye(3), t.leaf(z), t.leaf(np.eye(2)), activation=None)
        np.testing.assert_allclose(out.value, z)

    def test_gcn_layer_two_nodes(self):
        from gcnse.graph import normalize

        t = nn.Tape()
        out = model.gcn_layer(normalize([(0, 1)], 2), t.leaf(np.eye(2)), t.leaf(np.eye(2)))
        np.testing.assert_allclose(out.value, [[0.5, 0.5], [0.5, 0.5]])

    def test_gcn_layer_zero_weights(self):
        t = nn.Tape()
        out = model.gcn_layer(np.eye(3), t.leaf(np.ones((3, 2))), t.leaf(np.zeros((2, 2))))
        assert not out.value.any()

    def test_squeeze(self):
        t = nn.Tape()
        zs = [t.leaf(np.zeros((2, 2))), t.leaf(np.full((2, 2), 3.0)), t.leaf([[1.0, 2.0], [3.0, 4.0]])]
        np.testing.assert_allclose(model.squeeze(zs).value.ravel(), [0.0, 3.0, 2.5])

    def test_squeeze_empty(self):
        with pytest.raises(ValueError):
            model.squeeze([])

    def test_excitation_examples(self):
        t = nn.Tape()
        c = t.leaf([[1.0], [1.0]])
        w = model.excitation(c, t.leaf([[1.0, 1.0]]), t.leaf([[1.0], [0.0]])).value.ravel()
        np.testing.assert_allclose(w, [0.8807970779778823, 0.5])
        zero = model.excitation(c, t.leaf(np.zeros((1, 2))), t.leaf(np.zeros((2, 1)))).value
        np.testing.assert_array_equal(zero, 0.5)
        neg = model.excitation(c, t.leaf([[-1.0, -1.0]]), t.leaf([[5.0], [-3.0]])).value
        np.testing.assert_array_equal(neg, 0.5)

    def test_excitation_shape_mismatch(self):
        t = nn.Tape()
        with pytest.raises(ValueError):
            model.excitation(t.leaf(np.ones((3, 1))), t.leaf(np.ones((1, 2))), t.leaf(np.ones((2, 1))))

    def test_combine(self):
        t = nn.Tape()
        rng = np.random.default_rng(1)
        zs = [t.leaf(rng.normal(size=(3, 2))) for _ in range(3)]
        np.testing.assert_array_equal(model.combine(zs, [0, 1, 0]).value, zs[1].value)
        assert not model.combine(zs, [0, 0, 0]).value.any()
        same = [zs[0], zs[0]]
        np.testing.assert_allclose(model.combine(same, [0.5, 0.5]).value, zs[0].value)

    def test_combine_length_mismatch(self):
        t = nn.Tape()
        with pytest.raises(ValueError):
            model.combine(t.leaf(np.ones((6, 2))), [1.0, 1.0, 1.0, 1.0])


class TestWeights:
    def test_exp_decay(self):
        np.testing.assert_array_equal(model.exp_decay_weights(4, 1.0), np.ones(4))
        np.testing.assert_allclose(model.exp_decay_weights(3, 0.5), [0.25, 0.5, 1.0])
        with pytest.raises(ValueError):
            model.exp_decay_weights(3, 0.0)

    def test_uniform(self):
        np.testing.assert_array_equal(model.uniform_weights(4), [0.25] * 4)

    def test_frozen_validation(self):
        with pytest.raises(ValueError):
            WeightingScheme.frozen([0.5, -0.1])
        with pytest.raises(ValueError):
            WeightingScheme("nope")

    def test_se_hidden_size(self):
        assert model.se_hidden_size(1) == 1
        assert model.se_hidden_size(10) == 5
        assert model.se_hidden_size(3) == 2


class TestForward:
    def _params(self, g, scheme=WeightingScheme(), seed=0):
        prepared = model.prepare(g)
        p = model.init_params(prepared, scheme, np.random.default_rng(seed))
        rng = np.random.default_rng(seed + 1)
        return prepared, p.with_arrays({k: rng.normal(size=v.shape) for k, v in p.arrays.items()})

    def test_rows_sum_to_one_and_attention_range(self):
        for seed in range(5):
            prepared, p = self._params(tiny_graph(seed), seed=seed)
            res = model.forward(prepared, p)
            np.testing.assert_allclose(res.probs.value.sum(axis=1), 1.0, atol=1e-6)
            att = res.attention[0]
            assert att.shape == (3,) and np.all((att > 0) & (att < 1))

    def test_init_gates_are_half(self):
        prepared = model.prepare(tiny_graph())
        p = model.init_params(prepared, WeightingScheme(), np.random.default_rng(0))
        np.testing.assert_array_equal(model.forward(prepared, p).attention[0], 0.5)

    def test_uniform_equals_frozen_on_identical_snapshots(self):
        g = tiny_graph()
        g = g.replace(snapshots=(g.snapshots[0],) * 3, labels=(g.labels[0],) * 3)
        prepared, p = self._params(g, WeightingScheme("uniform"))
        a = model.forward(prepared, p, scheme=WeightingScheme("uniform")).probs.value
        b = model.forward(prepared, p, scheme=WeightingScheme.frozen([1 / 3] * 3)).probs.value
        assert a.tobytes() == b.tobytes()

    def test_permutation_equivariance(self):
        g = tiny_graph(2, n=10)
        prepared, p = self._params(g)
        perm = np.random.default_rng(0).permutation(10)
        inv = np.argsort(perm)
        pg = DynamicGraph(
            10, g.num_classes,
            tuple(inv[e] for e in g.snapshots),
            tuple(lab[perm] for lab in g.labels),
        )
        arrays = dict(p.arrays)
        arrays["topo.conv1"] = p.arrays["topo.conv1"][perm]  # one-hot inputs follow the node order
        out = model.forward(prepared, p).probs.value
        out_p = model.forward(model.prepare(pg), p.with_arrays(arrays)).probs.value
        np.testing.assert_allclose(out_p, out[perm], atol=1e-12)

    def test_frozen_one_hot_ignores_other_snapshots(self):
        g = tiny_graph(3)
        prepared, p = self._params(g, WeightingScheme.frozen([0, 1, 0]))
        base = model.forward(prepared, p).probs.value
        changed = g.replace(snapshots=(np.array([[0, 1], [2, 5]]), g.snapshots[1], np.zeros((0, 2), int)))
        other = model.forward(model.prepare(changed), p).probs.value
        assert base.tobytes() == other.tobytes()

    def test_scaling_keeps_argmax(self):
        g = tiny_graph(4)
        prepared, p = self._params(g, WeightingScheme.frozen([0.2, 0.3, 0.5]))
        arrays = dict(p.arrays)
        arrays["fc.b"] = np.zeros_like(arrays["fc.b"])
        base = model.predict(p.with_arrays(arrays), prepared)
        scaled = model.predict(p.with_arrays(arrays), prepared, WeightingScheme.frozen([0.6, 0.9, 1.5]))
        np.testing.assert_array_equal(base, scaled)

    def test_dual_needs_attributes(self):
        prepared = model.prepare(tiny_graph())
        with pytest.raises(ValueError):
            model.init_params(prepared, WeightingScheme("se-dual"), np.random.default_rng(0))

    def test_dual_returns_two_attention_vectors(self):
        g = tiny_graph()
        g = g.replace(attributes=tuple(np.random.default_rng(t).normal(size=(12, 2)) for t in range(3)))
        prepared = model.prepare(g)
        p = model.init_params(prepared, WeightingScheme("se-dual"), np.random.default_rng(0), num_attributes=2)
        res = model.forward(prepared, p)
        assert len(res.attention) == 2

    def test_predict_tie_goes_to_lowest(self):
        assert int(np.argmax([0.5, 0.5])) == 0  # documented tie rule of predict
        assert int(np.argmax([0.1, 0.7, 0.2])) == 1


@pytest.mark.parametrize("dual", [False, True])
@pytest.mark.parametrize("seed", range(3))
def test_full_model_gradient(seed, dual):
    err, _ = max_relative_error(seed, dual)
    assert err < 1e-4


class TestTraining:
    def test_deterministic(self):
        g = tiny_graph(5)
        cfg = TrainConfig(iterations=30)
        a = model.train(g, cfg, seed=3)
        b = model.train(g, cfg, seed=3)
        for k in a.params.arrays:
            assert a.params.arrays[k].tobytes() == b.params.arrays[k].tobytes()
        np.testing.assert_array_equal(a.attention, b.attention)

    def test_loss_decreases(self):
        res = model.train(tiny_graph(6), TrainConfig(iterations=150), seed=0)
        assert res.train_loss[-1] < res.train_loss[0]

    def test_overfits_four_nodes(self):
        g = DynamicGraph(4, 2, (np.array([[0, 1], [2, 3]]),) * 2, (np.array([0, 0, 1, 1]),) * 2)
        split = split_nodes(4, (0.7, 0.2, 0.1), seed=0)
        everyone = type(split)(np.arange(4), np.arange(4), np.arange(0), 0)
        # hidden width equals C=2 here, so some inits leave a community with only dead ReLUs
        res = model.train(g, TrainConfig(iterations=500, dropout=0.0), split=everyone, seed=1)
        np.testing.assert_array_equal(model.predict(res.params, g), [0, 0, 1, 1])

    def test_empty_train_set(self):
        g = tiny_graph()
        split = split_nodes(12, seed=0)
        empty = type(split)(np.arange(0), split.val, np.concatenate([split.train, split.test]), 0)
        with pytest.raises(ValueError):
            model.train(g, TrainConfig(iterations=2), split=empty)

    def test_best_validation_is_selected(self):
        res = model.train(tiny_graph(7), TrainConfig(iterations=40), seed=1)
        assert res.val_accuracy[res.best_iteration] == max(res.val_accuracy)

    @pytest.mark.parametrize("kind", ["uniform", "exp-decay", "static"])
    def test_fixed_schemes_train(self, kind):
        res = model.train(tiny_graph(8), TrainConfig(iterations=20), seed=0, scheme=WeightingScheme(kind))
        expected = 1 if kind == "static" else 3
        assert len(res.attention) == expected


def test_save_load_round_trip(tmp_path):
    res = model.train(tiny_graph(9), TrainConfig(iterations=10), seed=0)
    path = tmp_path / "m.npz"
    model.save_model(res.params, path, TrainConfig(iterations=10))
    params, cfg = model.load_model(path)
    assert cfg == TrainConfig(iterations=10)
    assert params.scheme == res.params.scheme
    for k, v in res.params.arrays.items():
        assert params.arrays[k].tobytes() == v.tobytes()
