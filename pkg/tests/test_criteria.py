import numpy as np
import pytest

from pwtprune.criteria import (
    ActivationAccumulator,
    Criterion,
    FilterRef,
    MaskError,
    PruningError,
    accumulate_mean_activation,
    apply_mask,
    l1_norm_per_filter,
    mean_activation_scores,
    select_victims,
    zero_filters_percentage,
)
from pwtprune.layers import LayerState

from conftest import tiny_net


def _masks(*sizes):
    return [np.zeros(n, dtype=bool) for n in sizes]


def test_l1_norm_examples(rng):
    s = LayerState.create(1, 2, 1, rng)
    s.weights = np.array([1.0, -2.0, 3.0, 0.0, 0.0, 0.0]).reshape(2, 3, 1, 1)
    assert l1_norm_per_filter(s).tolist() == [6.0, 0.0]


def test_l1_norm_matches_abs_sum_oracle(rng):
    s = LayerState.create(2, 4, 3, rng)
    expected = [sum(abs(float(v)) for v in s.weights[o].ravel()) for o in range(4)]
    np.testing.assert_allclose(l1_norm_per_filter(s), expected, rtol=1e-14)


def test_l1_selects_global_lowest():
    scores = [np.array([3.0, 1.0]), np.array([2.0, 5.0])]
    v = select_victims("L1", _masks(2, 2), 2, scores=scores, min_filters_per_layer=0)
    assert v == [FilterRef(0, 1), FilterRef(1, 0)]


def test_l1_tie_break_lowest_index():
    v = select_victims("L1", _masks(3), 1, scores=[np.array([1.0, 1.0, 2.0])])
    assert v == [FilterRef(0, 0)]
    v = select_victims("L1", _masks(2, 2), 1, scores=[np.array([4.0, 1.0]), np.array([1.0, 1.0])])
    assert v == [FilterRef(0, 1)]


def test_l1_respects_min_filters_per_layer():
    scores = [np.array([0.1, 0.2]), np.array([5.0, 6.0, 7.0])]
    v = select_victims("L1", _masks(2, 3), 2, scores=scores)
    assert v == [FilterRef(0, 0), FilterRef(1, 0)]
    with pytest.raises(PruningError, match="min_filters_per_layer"):
        select_victims("L1", _masks(2, 3), 4, scores=scores)


def test_l1_layer_scope_balances_layers():
    scores = [np.array([0.1, 0.2, 0.3, 0.4]), np.array([5.0, 6.0, 7.0, 8.0])]
    v = select_victims("L1", _masks(4, 4), 2, scores=scores, scope="layer")
    assert v == [FilterRef(0, 0), FilterRef(1, 0)]


def test_never_returns_masked_filter():
    masks = _masks(3)
    masks[0][0] = True
    v = select_victims("L1", masks, 1, scores=[np.array([0.0, 1.0, 2.0])])
    assert v == [FilterRef(0, 1)]


def test_mean_act_one_per_layer():
    scores = [np.array([3.0, 1.0, 2.0]), np.array([0.5, 0.2]), np.array([9.0])]
    v = select_victims("MeanAct", _masks(3, 2, 1), 0, scores=scores)
    assert v == [FilterRef(0, 1), FilterRef(1, 1)]


def test_random_is_seeded_and_valid():
    masks = _masks(4, 6, 8)
    masks[1][:3] = True
    a = select_victims("Random", masks, 6, rng=np.random.default_rng(7))
    b = select_victims("Random", masks, 6, rng=np.random.default_rng(7))
    assert a == b
    assert len(set(a)) == 6
    assert all(not masks[r.layer_index][r.filter_index] for r in a)


def test_random_draws_layer_then_filter():
    # 1-filter-room layer vs a big layer: layer-first drawing hits layer 0 about half the time
    hits = 0
    for seed in range(400):
        masks = _masks(2, 50)
        (v,) = select_victims("Random", masks, 1, rng=np.random.default_rng(seed))
        hits += v.layer_index == 0
    assert 150 < hits < 250


def test_selection_errors():
    with pytest.raises(PruningError, match="no unmasked"):
        select_victims("L1", [np.ones(2, dtype=bool)], 1, scores=[np.zeros(2)])
    with pytest.raises(ValueError):
        select_victims("L1", _masks(2), -1, scores=[np.zeros(2)])
    with pytest.raises(ValueError):
        select_victims("Random", _masks(2), 1)
    with pytest.raises(ValueError):
        select_victims("Bogus", _masks(2), 1)
    with pytest.raises(PruningError):
        select_victims("MeanAct", _masks(1, 1), 0, scores=[np.zeros(1), np.zeros(1)])


def test_accumulator_examples():
    acc = ActivationAccumulator([np.zeros(2)])
    accumulate_mean_activation(acc, [np.zeros((3, 2, 4, 4))])
    assert acc.sums[0].tolist() == [0.0, 0.0] and acc.images_seen == 3
    acc.reset()
    act = np.zeros((1, 2, 4, 4))
    act[:, 0] = 1.0
    accumulate_mean_activation(acc, [act])
    assert acc.sums[0].tolist() == [16.0, 0.0]


def test_accumulator_batches_equal_single_pass(rng):
    data = np.abs(rng.normal(size=(10, 3, 4, 4)))
    a, b = ActivationAccumulator([np.zeros(3)]), ActivationAccumulator([np.zeros(3)])
    accumulate_mean_activation(a, [data[:4]])
    accumulate_mean_activation(a, [data[4:]])
    accumulate_mean_activation(b, [data])
    np.testing.assert_allclose(a.sums[0], b.sums[0], rtol=1e-14)
    np.testing.assert_allclose(mean_activation_scores(a)[0], data.sum(axis=(0, 2, 3)) / 10, rtol=1e-14)


def test_mean_activation_scores():
    acc = ActivationAccumulator([np.array([10.0, 20.0])], images_seen=10)
    assert mean_activation_scores(acc)[0].tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        mean_activation_scores(ActivationAccumulator([np.zeros(2)]))
    with pytest.raises(Exception):
        accumulate_mean_activation(acc, [np.zeros((1, 3, 2, 2))])


def test_apply_mask_zeroes_and_rejects_double_mask(rng):
    net = tiny_net()
    total = net.total_filters()
    before = zero_filters_percentage(net)
    apply_mask(net, [FilterRef(1, 3)])
    assert zero_filters_percentage(net) == pytest.approx(before + 100 / total)
    s = net.conv_layers[1]
    assert s.filter_mask[3] and not s.weights[3].any() and s.bias[3] == 0
    out = net.forward(rng.normal(size=(2, 1, 8, 8)), train=True)
    assert not net.conv_activations[1][:, 3].any() and out.shape == (2, 3)
    with pytest.raises(MaskError):
        apply_mask(net, [FilterRef(1, 3)])
    with pytest.raises(IndexError):
        apply_mask(net, [FilterRef(5, 0)])


def test_zero_filters_percentage_counts():
    net = tiny_net(specs=({"type": "conv", "out": 40, "k": 1}, {"type": "linear"}), shape=(1, 2, 2))
    assert zero_filters_percentage(net) == 0.0
    apply_mask(net, [FilterRef(0, i) for i in range(8)])
    assert zero_filters_percentage(net) == 20.0
    net.conv_layers[0].weights[20] = 0.0  # spontaneously zero, not masked
    assert zero_filters_percentage(net) == 22.5


def test_criterion_names():
    assert Criterion("MeanAct") is Criterion.MEAN_ACT
