import numpy as np
import pytest

from pwtprune.criteria import ActivationAccumulator, accumulate_mean_activation, l1_norm_per_filter
from pwtprune.schedule import (
    Mode,
    ScheduleConfig,
    ScheduleState,
    epoch_end_hook,
    prt_prune_event,
    target_for_epoch,
)

from conftest import tiny_net
from oracles import pwt_masks_per_epoch


def net_with(*outs, seed=0):
    specs = [{"type": "conv", "out": o, "k": 1} for o in outs] + [{"type": "linear"}]
    return tiny_net(specs=specs, shape=(1, 2, 2), seed=seed)


def run_hooks(net, cfg, epochs=None, acc=None, rng=None):
    state = ScheduleState.start(cfg)
    masked = []
    for _ in range(epochs or cfg.total_epochs):
        epoch_end_hook(net, cfg, state, acc, rng)
        masked.append(sum(int(s.filter_mask.sum()) for s in net.conv_layers))
    return state, masked


def test_first_epoch_prunes_exactly_the_lowest_l1_filter():
    net = net_with(100)
    lowest = int(np.argmin(l1_norm_per_filter(net.conv_layers[0])))
    cfg = ScheduleConfig(mode="PWT", criterion="L1", rate_per_epoch=1.0, target_prune_perc=80.0, total_epochs=80)
    state, masked = run_hooks(net, cfg, epochs=1)
    assert masked == [1]
    assert np.flatnonzero(net.conv_layers[0].filter_mask).tolist() == [lowest]
    assert state.current_prune_perc == 1.0


@pytest.mark.parametrize("outs,rate,target,epochs,mod_k", [
    ((100,), 1.0, 80.0, 80, 1),
    ((10, 30), 5.0, 50.0, 10, 1),
    ((10, 30), 2.5, 25.0, 20, 2),
    ((8, 16, 16, 32), 1.25, 50.0, 40, 1),
    ((8, 16, 16, 32), 3.0, 30.0, 30, 3),
])
def test_pwt_matches_counting_oracle(outs, rate, target, epochs, mod_k):
    net = net_with(*outs)
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=rate, target_prune_perc=target, total_epochs=epochs, mod_k=mod_k)
    _, masked = run_hooks(net, cfg)
    assert masked == pwt_masks_per_epoch(sum(outs), 0.0, rate, target, epochs, mod_k)


def test_forty_filter_example_lands_one_filter_short_of_fifty():
    # 1 filter at epoch 1, then 2 per epoch: 19 of 40 after 10 epochs
    net = net_with(10, 30)
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=5.0, target_prune_perc=50.0, total_epochs=10)
    state, masked = run_hooks(net, cfg)
    assert masked[0] == 1 and np.all(np.diff(masked) == 2)
    assert state.current_prune_perc == pytest.approx(47.5)


def test_mode_none_changes_nothing():
    net = net_with(10)
    w = net.conv_layers[0].weights.copy()
    state, masked = run_hooks(net, ScheduleConfig(mode="None", total_epochs=5))
    assert masked == [0] * 5 and np.array_equal(w, net.conv_layers[0].weights)
    assert state.epoch == 5


def test_mod2_prunes_only_on_even_epochs():
    net = net_with(100)
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=1.0, target_prune_perc=5.0, total_epochs=10, mod_k=2)
    _, masked = run_hooks(net, cfg)
    changed = [e for e in range(1, 11) if masked[e - 1] != (masked[e - 2] if e > 1 else 0)]
    assert changed == [2, 4, 6, 8, 10]
    assert masked == [0, 1, 1, 2, 2, 3, 3, 4, 4, 5]


def test_advance_on_skip_reading():
    net = net_with(100)
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=1.0, target_prune_perc=10.0, total_epochs=10, mod_k=2,
                         advance_target_on_skip=True)
    _, masked = run_hooks(net, cfg)
    assert masked == pwt_masks_per_epoch(100, 0, 1.0, 10.0, 10, 2, advance_on_skip=True)
    assert masked[-1] == 10


def test_mod_k_and_mod_1_reach_same_saturated_level():
    finals = []
    for k in (1, 2):
        net = net_with(8, 16, 16, 32)
        cfg = ScheduleConfig(mode="PWT", rate_per_epoch=5.0, target_prune_perc=40.0, total_epochs=30, mod_k=k)
        finals.append(run_hooks(net, cfg)[0].current_prune_perc)
    assert finals[0] == finals[1]


def test_granularity_bound_when_rate_below_one_filter():
    net = net_with(8, 16, 16, 32)
    g = 100 / 72
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=1.25, target_prune_perc=50.0, total_epochs=40)
    state = ScheduleState.start(cfg)
    prev = 0.0
    for e in range(1, 41):
        epoch_end_hook(net, cfg, state)
        assert state.current_prune_perc >= prev
        assert abs(state.current_prune_perc - target_for_epoch(cfg, e)) <= g + 1e-9
        prev = state.current_prune_perc


def test_random_pwt_is_seeded():
    runs = []
    for _ in range(2):
        net = net_with(8, 16)
        cfg = ScheduleConfig(mode="PWT", criterion="Random", rate_per_epoch=10.0, target_prune_perc=60.0,
                             total_epochs=6)
        run_hooks(net, cfg, rng=np.random.default_rng(5))
        runs.append([s.filter_mask.copy() for s in net.conv_layers])
    assert all(np.array_equal(a, b) for a, b in zip(*runs))


def test_mean_act_one_per_layer_until_target(rng):
    net = net_with(4, 4)
    acc = ActivationAccumulator.for_network(net)
    cfg = ScheduleConfig(mode="PWT", criterion="MeanAct", rate_per_epoch=5.0, target_prune_perc=25.0,
                         total_epochs=10)
    state = ScheduleState.start(cfg)
    counts = []
    for _ in range(4):
        acc.reset()
        net.forward(rng.normal(size=(5, 1, 2, 2)), train=True)
        accumulate_mean_activation(acc, net.conv_activations)
        epoch_end_hook(net, cfg, state, acc)
        counts.append([int(s.filter_mask.sum()) for s in net.conv_layers])
    assert counts == [[1, 1], [1, 1], [1, 1], [1, 1]]
    with pytest.raises(ValueError):
        epoch_end_hook(net_with(4), ScheduleConfig(mode="PWT", criterion="MeanAct", rate_per_epoch=50.0,
                                                   target_prune_perc=50.0, total_epochs=2), ScheduleState(0.0))


def test_prt_lands_in_target_band():
    net = net_with(8, 16, 16, 32)
    cfg = ScheduleConfig(mode="PRT", target_prune_perc=80.0, prt_prune_epoch=55, total_epochs=80)
    state, masked = run_hooks(net, cfg)
    assert masked[:54] == [0] * 54
    assert len(set(masked[54:])) == 1
    assert 80.0 <= state.current_prune_perc < 80.0 + 100 / 72


def test_prt_zero_target_is_noop_and_below_current_errors():
    net = net_with(10)
    cfg = ScheduleConfig(mode="PRT", target_prune_perc=0.0, prt_prune_epoch=1, total_epochs=3)
    assert prt_prune_event(net, cfg).victims == []
    net.conv_layers[0].weights[:5] = 0
    with pytest.raises(ValueError, match="below"):
        prt_prune_event(net, ScheduleConfig(mode="PRT", target_prune_perc=20.0, prt_prune_epoch=1, total_epochs=3))


def test_target_for_epoch():
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=1.0, target_prune_perc=80.0, total_epochs=80)
    assert target_for_epoch(cfg, 80) == 80.0
    assert target_for_epoch(cfg, 30) == 30.0
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=0.9, target_prune_perc=99.0, total_epochs=200)
    assert target_for_epoch(cfg, 80) == pytest.approx(72.0)
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=5.0, target_prune_perc=50.0, total_epochs=30)
    assert target_for_epoch(cfg, 25) == 50.0
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=1.0, target_prune_perc=10.0, total_epochs=30, mod_k=3)
    assert target_for_epoch(cfg, 7) == 2.0


@pytest.mark.parametrize("kwargs,match", [
    (dict(mode="PWT", rate_per_epoch=1.0, target_prune_perc=80.0, total_epochs=40), "reaches only"),
    (dict(mode="PRT", target_prune_perc=50.0, total_epochs=10), "prt_prune_epoch"),
    (dict(mode="PRT", target_prune_perc=50.0, prt_prune_epoch=10, total_epochs=10), "prt_prune_epoch"),
    (dict(mode="PRT", criterion="Random", target_prune_perc=50.0, prt_prune_epoch=5, total_epochs=10), "L1"),
    (dict(target_prune_perc=100.0), "target"),
    (dict(rate_per_epoch=0.0), "rate"),
    (dict(mod_k=0), "mod_k"),
    (dict(mode="Sometimes"), "Sometimes"),
])
def test_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        ScheduleConfig(**kwargs)


def test_mode_enum():
    assert ScheduleConfig(mode="PWT", target_prune_perc=1.0, total_epochs=1).mode is Mode.PWT
